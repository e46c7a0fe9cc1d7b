#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hicome/dataset.hpp"
#include "hicome/rng.hpp"
#include "hicome/tensor.hpp"

namespace hicome::batch {

enum class PaddingMode { Fixed, Adaptive, None };

enum class AugOp { HFlip, Color, Rotate };

struct BatchingConfig {
  int batch_size_per_group = 32;  // must be >= 2 and even (consensus halves)
  PaddingMode padding_mode = PaddingMode::Fixed;
  int n_negatives = 0;
  std::set<AugOp> augmentations;
  bool augment_base = true;  // apply configured augs to base samples too
  int resolution = 64;
  uint64_t seed = 0;

  void validate() const;
};

PaddingMode padding_mode_from_string(const std::string& s);
std::string to_string(PaddingMode m);
AugOp aug_op_from_string(const std::string& s);

// One group's model-ready rows.
struct Batch {
  Tensor images;                       // [N, S, S, 3]
  Tensor gts;                          // [N, S, S, 1] in {0,1}
  std::vector<uint8_t> negative_flags; // size N; true rows have all-zero gts

  int64_t rows() const { return images.empty() ? 0 : images.dim(0); }
  int64_t n_negatives() const {
    int64_t k = 0;
    for (auto f : negative_flags) k += f;
    return k;
  }
};

// Epoch pairing: a seeded permutation consumed in consecutive disjoint pairs;
// an odd leftover group is paired with a random earlier group.
std::vector<std::pair<int, int>> pair_groups(const data::GroupedDataset& ds, uint64_t seed,
                                             uint64_t epoch = 0);

// In-place augmentation of one sample with the configured ops.
void augment(RGBImage& image, BinaryMask& mask, const std::set<AugOp>& ops, Rng& rng);

std::vector<data::Sample> pad_group_fixed(const data::ImageGroup& group, int n,
                                          const std::set<AugOp>& aug, Rng& rng);

std::pair<std::vector<data::Sample>, std::vector<data::Sample>> pad_group_adaptive(
    const data::ImageGroup& a, const data::ImageGroup& b, const std::set<AugOp>& aug, Rng& rng);

struct TaggedSample {
  data::Sample sample;
  bool negative = false;
};

// Appends k off-group images with all-zero masks, then shuffles.
std::vector<TaggedSample> inject_negatives(std::vector<data::Sample> samples,
                                           const std::vector<const data::ImageGroup*>& other_groups,
                                           int k, Rng& rng);

// Full per-pair pipeline: resize -> base aug -> padding -> negatives -> tensors.
std::pair<Batch, Batch> make_training_batch(const data::GroupedDataset& ds, int group_a,
                                            int group_b, const BatchingConfig& cfg, Rng& rng);

// Single-group inference batch at the given resolution (no padding/negatives).
Batch make_inference_batch(const data::ImageGroup& group, int resolution);

}  // namespace hicome::batch
