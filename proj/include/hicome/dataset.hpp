#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hicome/image.hpp"

namespace hicome::data {

struct Sample {
  std::string stem;
  RGBImage image;
  BinaryMask mask;
};

struct ImageGroup {
  std::string name;
  std::vector<Sample> samples;
};

struct GroupedDataset {
  std::vector<ImageGroup> groups;
  std::string root;  // source path or "synthetic"

  int64_t n_images() const {
    int64_t n = 0;
    for (const auto& g : groups) n += static_cast<int64_t>(g.samples.size());
    return n;
  }
  int64_t n_groups() const { return static_cast<int64_t>(groups.size()); }
};

struct DatasetStats {
  int64_t n_images = 0;
  int64_t n_groups = 0;
  double group_size_mean = 0.0;
  double group_size_std = 0.0;
  double res_h_mean = 0.0;
  double res_h_std = 0.0;
  double res_w_mean = 0.0;
  double res_w_std = 0.0;

  std::string to_json() const;
};

struct Finding {
  std::string kind;  // empty-mask | full-mask | shape-mismatch | duplicate-stem
  std::string group;
  std::string stem;
};

// Layout: <root>/images/<group>/<stem>.{png,jpg}, <root>/gt/<group>/<stem>.png.
// Masks binarized at 128/255, images normalized to [0,1]. Missing mask: error
// in strict mode, otherwise skip with a warning on stderr. Empty groups and
// unreadable files are errors.
GroupedDataset load_dataset(const std::string& root, bool strict);

void save_dataset(const GroupedDataset& ds, const std::string& root);

std::vector<Finding> validate_dataset(const GroupedDataset& ds);

// Population statistics (divisor n) over group sizes and image resolutions.
DatasetStats compute_stats(const GroupedDataset& ds);

struct SyntheticSpec {
  int n_groups = 4;
  int group_size = 8;
  int image_size = 64;
  int n_distractors = 1;
  uint64_t seed = 0;
};

// Each group gets a distinct (shape, color) target class; every image holds
// one target instance plus n_distractors instances of other groups' classes.
// Pure function of the spec (two calls agree byte for byte).
GroupedDataset generate_synthetic(const SyntheticSpec& spec);

int synthetic_class_capacity();

}  // namespace hicome::data
