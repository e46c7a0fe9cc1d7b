#include "hicome/batching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hicome::batch {

void BatchingConfig::validate() const {
  if (batch_size_per_group < 2 || batch_size_per_group % 2 != 0)
    throw std::invalid_argument("batch_size must be even and >= 2 (consensus halves each group)");
  if (n_negatives < 0) throw std::invalid_argument("n_negatives must be >= 0");
  if (resolution < 8) throw std::invalid_argument("resolution too small");
}

PaddingMode padding_mode_from_string(const std::string& s) {
  if (s == "fixed") return PaddingMode::Fixed;
  if (s == "adaptive") return PaddingMode::Adaptive;
  if (s == "none") return PaddingMode::None;
  throw std::invalid_argument("unknown padding_mode: " + s);
}

std::string to_string(PaddingMode m) {
  switch (m) {
    case PaddingMode::Fixed: return "fixed";
    case PaddingMode::Adaptive: return "adaptive";
    case PaddingMode::None: return "none";
  }
  return "?";
}

AugOp aug_op_from_string(const std::string& s) {
  if (s == "hflip") return AugOp::HFlip;
  if (s == "color") return AugOp::Color;
  if (s == "rotate") return AugOp::Rotate;
  throw std::invalid_argument("unknown augmentation: " + s);
}

namespace {

template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.below(i)]);
}

void color_jitter(RGBImage& img, Rng& rng) {
  const float fb = static_cast<float>(rng.uniform(0.75, 1.25));
  const float fc = static_cast<float>(rng.uniform(0.75, 1.25));
  const float fs = static_cast<float>(rng.uniform(0.75, 1.25));
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float r = img.at(y, x, 0) * fb;
      float g = img.at(y, x, 1) * fb;
      float b = img.at(y, x, 2) * fb;
      r = 0.5f + (r - 0.5f) * fc;
      g = 0.5f + (g - 0.5f) * fc;
      b = 0.5f + (b - 0.5f) * fc;
      const float gray = 0.299f * r + 0.587f * g + 0.114f * b;
      r = gray + (r - gray) * fs;
      g = gray + (g - gray) * fs;
      b = gray + (b - gray) * fs;
      img.at(y, x, 0) = std::min(1.0f, std::max(0.0f, r));
      img.at(y, x, 1) = std::min(1.0f, std::max(0.0f, g));
      img.at(y, x, 2) = std::min(1.0f, std::max(0.0f, b));
    }
}

}  // namespace

std::vector<std::pair<int, int>> pair_groups(const data::GroupedDataset& ds, uint64_t seed,
                                             uint64_t epoch) {
  const int n = static_cast<int>(ds.groups.size());
  if (n < 2) throw std::invalid_argument("pair_groups: need at least two groups");
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng(seed).fork(0x70616972, epoch);
  shuffle_vec(perm, rng);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i + 1 < n; i += 2) pairs.emplace_back(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(i + 1)]);
  if (n % 2 == 1) {
    const int leftover = perm.back();
    int other = leftover;
    while (other == leftover) other = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    pairs.emplace_back(leftover, other);
  }
  return pairs;
}

void augment(RGBImage& image, BinaryMask& mask, const std::set<AugOp>& ops, Rng& rng) {
  if (ops.count(AugOp::HFlip) && rng.uniform() < 0.5) hflip_inplace(image, mask);
  if (ops.count(AugOp::Color)) color_jitter(image, rng);
  if (ops.count(AugOp::Rotate)) {
    const double angle = rng.uniform(-15.0, 15.0);
    rotate_pair(image, mask, angle);
  }
}

std::vector<data::Sample> pad_group_fixed(const data::ImageGroup& group, int n,
                                          const std::set<AugOp>& aug, Rng& rng) {
  if (n < 1) throw std::invalid_argument("pad_group_fixed: n must be >= 1");
  if (group.samples.empty()) throw std::invalid_argument("pad_group_fixed: empty group");
  const int m = static_cast<int>(group.samples.size());
  std::vector<data::Sample> out;

  if (m >= n) {
    std::vector<int> idx(static_cast<size_t>(m));
    std::iota(idx.begin(), idx.end(), 0);
    shuffle_vec(idx, rng);
    for (int i = 0; i < n; ++i) out.push_back(group.samples[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    return out;
  }

  out = group.samples;
  for (int i = m; i < n; ++i) {
    data::Sample s = group.samples[rng.below(static_cast<uint64_t>(m))];
    augment(s.image, s.mask, aug, rng);
    out.push_back(std::move(s));
  }
  shuffle_vec(out, rng);
  return out;
}

std::pair<std::vector<data::Sample>, std::vector<data::Sample>> pad_group_adaptive(
    const data::ImageGroup& a, const data::ImageGroup& b, const std::set<AugOp>& aug, Rng& rng) {
  if (a.samples.empty() || b.samples.empty())
    throw std::invalid_argument("pad_group_adaptive: empty group");
  const int n = static_cast<int>(std::max(a.samples.size(), b.samples.size()));
  return {pad_group_fixed(a, n, aug, rng), pad_group_fixed(b, n, aug, rng)};
}

std::vector<TaggedSample> inject_negatives(std::vector<data::Sample> samples,
                                           const std::vector<const data::ImageGroup*>& other_groups,
                                           int k, Rng& rng) {
  std::vector<TaggedSample> out;
  out.reserve(samples.size() + static_cast<size_t>(std::max(0, k)));
  for (auto& s : samples) out.push_back({std::move(s), false});
  if (k > 0) {
    if (other_groups.empty())
      throw std::invalid_argument("inject_negatives: no other groups to draw from");
    for (int i = 0; i < k; ++i) {
      const auto* g = other_groups[rng.below(other_groups.size())];
      data::Sample s = g->samples[rng.below(g->samples.size())];
      s.mask = BinaryMask(s.image.h, s.image.w);  // all-zero ground truth
      out.push_back({std::move(s), true});
    }
    shuffle_vec(out, rng);
  }
  return out;
}

namespace {

Batch to_tensors(const std::vector<TaggedSample>& rows, int s) {
  const int64_t n = static_cast<int64_t>(rows.size());
  Batch b;
  b.images = Tensor({n, s, s, 3});
  b.gts = Tensor({n, s, s, 1});
  b.negative_flags.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<size_t>(i)];
    b.negative_flags[static_cast<size_t>(i)] = r.negative ? 1 : 0;
    const RGBImage img = resize_image(r.sample.image, s, s);
    const BinaryMask mask = r.negative ? BinaryMask(s, s) : resize_mask(r.sample.mask, s, s);
    std::copy(img.rgb.begin(), img.rgb.end(), b.images.data() + i * s * s * 3);
    float* gd = b.gts.data() + i * s * s;
    for (int64_t p = 0; p < s * s; ++p) gd[p] = mask.v[static_cast<size_t>(p)];
  }
  return b;
}

std::vector<TaggedSample> build_group_rows(const data::GroupedDataset& ds, int gi, int peer,
                                           const BatchingConfig& cfg, Rng& rng) {
  const auto& group = ds.groups[static_cast<size_t>(gi)];

  std::vector<data::Sample> base;
  switch (cfg.padding_mode) {
    case PaddingMode::Fixed:
      base = pad_group_fixed(group, cfg.batch_size_per_group, cfg.augmentations, rng);
      break;
    case PaddingMode::Adaptive: {
      const int n = static_cast<int>(
          std::max(group.samples.size(), ds.groups[static_cast<size_t>(peer)].samples.size()));
      base = pad_group_fixed(group, n, cfg.augmentations, rng);
      break;
    }
    case PaddingMode::None:
      base = group.samples;
      break;
  }

  if (cfg.augment_base && !cfg.augmentations.empty())
    for (auto& s : base) augment(s.image, s.mask, cfg.augmentations, rng);

  std::vector<const data::ImageGroup*> others;
  for (size_t j = 0; j < ds.groups.size(); ++j)
    if (static_cast<int>(j) != gi) others.push_back(&ds.groups[j]);

  return inject_negatives(std::move(base), others, cfg.n_negatives, rng);
}

}  // namespace

std::pair<Batch, Batch> make_training_batch(const data::GroupedDataset& ds, int group_a,
                                            int group_b, const BatchingConfig& cfg, Rng& rng) {
  cfg.validate();
  if (group_a < 0 || group_b < 0 || group_a >= static_cast<int>(ds.groups.size()) ||
      group_b >= static_cast<int>(ds.groups.size()))
    throw std::invalid_argument("make_training_batch: group index out of range");
  auto rows_a = build_group_rows(ds, group_a, group_b, cfg, rng);
  auto rows_b = build_group_rows(ds, group_b, group_a, cfg, rng);
  return {to_tensors(rows_a, cfg.resolution), to_tensors(rows_b, cfg.resolution)};
}

Batch make_inference_batch(const data::ImageGroup& group, int resolution) {
  if (group.samples.empty()) throw std::invalid_argument("make_inference_batch: empty group");
  std::vector<TaggedSample> rows;
  for (const auto& s : group.samples) rows.push_back({s, false});
  return to_tensors(rows, resolution);
}

}  // namespace hicome::batch
