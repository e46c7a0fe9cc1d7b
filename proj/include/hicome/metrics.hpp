#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hicome/dataset.hpp"
#include "hicome/image.hpp"

namespace hicome::metrics {

inline constexpr int kThresholds = 256;

// Mean absolute difference.
double mae(const SaliencyMap& pred, const BinaryMask& gt);

struct FMeasureResult {
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
  std::array<double, kThresholds> f{};
  double f_max = 0.0;
  double f_mean = 0.0;
  bool empty_gt = false;  // F undefined; reported as 0 and flagged
};

// Threshold sweep t = k/255 with predicate pred >= t; beta^2 = 0.3.
FMeasureResult f_measure(const SaliencyMap& pred, const BinaryMask& gt);

struct EMeasureResult {
  std::array<double, kThresholds> e{};
  double e_max = 0.0;
  double e_mean = 0.0;
};

// Enhanced-alignment measure over the same threshold sweep. Degenerate
// ground truths use phi = 1-B (all-zero gt) and phi = B (all-one gt).
EMeasureResult e_measure(const SaliencyMap& pred, const BinaryMask& gt);

// Structural measure, alpha = 0.5. Degenerate ground truths score
// 1-mean(pred) (all-zero) and mean(pred) (all-one). Clamped to [0,1].
double s_measure(const SaliencyMap& pred, const BinaryMask& gt);

struct Scores {
  double smeasure = 0.0;
  double emax = 0.0;
  double emean = 0.0;
  double fmax = 0.0;
  double fmean = 0.0;
  double mae = 0.0;
};

struct GroupReport {
  Scores scores;
  int64_t n_images = 0;
  int64_t n_empty_gt = 0;
};

struct CurveReport {
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
  std::array<double, kThresholds> e{};
};

struct MetricReport {
  std::map<std::string, GroupReport> per_group;
  GroupReport aggregate;  // image-weighted mean over all images
  std::optional<CurveReport> curves;

  std::string to_json() const;
};

// Keys are "<group>/<stem>". Predictions are resized to the GT shape with
// bilinear interpolation before scoring. parallel toggles threading only;
// the report is bit-identical either way.
MetricReport evaluate_dataset(const std::map<std::string, SaliencyMap>& preds,
                              const data::GroupedDataset& ds, bool parallel,
                              bool with_curves = false);

}  // namespace hicome::metrics
