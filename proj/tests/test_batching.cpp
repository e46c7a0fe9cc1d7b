#include <map>
#include <set>

#include "doctest.h"
#include "hicome/batching.hpp"
#include "hicome/dataset.hpp"

using namespace hicome;
using batch::AugOp;

namespace {
data::GroupedDataset toy_dataset(int groups, int size, uint64_t seed = 1) {
  return data::generate_synthetic({groups, size, 64, 1, seed});
}

bool batches_equal(const batch::Batch& a, const batch::Batch& b) {
  if (a.negative_flags != b.negative_flags) return false;
  if (!a.images.same_shape(b.images) || !a.gts.same_shape(b.gts)) return false;
  for (int64_t i = 0; i < a.images.numel(); ++i)
    if (a.images.at(i) != b.images.at(i)) return false;
  for (int64_t i = 0; i < a.gts.numel(); ++i)
    if (a.gts.at(i) != b.gts.at(i)) return false;
  return true;
}
}  // namespace

TEST_CASE("pair_groups covers all groups and is reproducible") {
  auto ds4 = toy_dataset(4, 2);
  auto pairs = batch::pair_groups(ds4, 42, 0);
  CHECK(pairs.size() == 2);
  std::set<int> used;
  for (auto [a, b] : pairs) {
    used.insert(a);
    used.insert(b);
    CHECK(a != b);
  }
  CHECK(used.size() == 4);

  CHECK(batch::pair_groups(ds4, 42, 0) == pairs);
  CHECK(batch::pair_groups(ds4, 42, 1) != pairs);  // epochs reshuffle

  auto ds3 = toy_dataset(3, 2);
  auto odd = batch::pair_groups(ds3, 7, 0);
  CHECK(odd.size() == 2);
  std::map<int, int> count;
  for (auto [a, b] : odd) {
    ++count[a];
    ++count[b];
  }
  CHECK(count.size() == 3);
  int twice = 0;
  for (auto [g, c] : count) twice += c == 2;
  CHECK(twice == 1);

  data::GroupedDataset single;
  single.groups.push_back(ds3.groups[0]);
  CHECK_THROWS(batch::pair_groups(single, 1, 0));
}

TEST_CASE("pad_group_fixed emits exactly n rows across size regimes") {
  auto ds = toy_dataset(2, 20, 3);
  const auto& g = ds.groups[0];
  Rng rng(5);

  auto padded = batch::pad_group_fixed(g, 32, {AugOp::HFlip}, rng);
  CHECK(padded.size() == 32);
  std::map<std::string, int> stems;
  for (const auto& s : padded) ++stems[s.stem];
  CHECK(stems.size() == 20);  // all originals present

  auto exact = batch::pad_group_fixed(g, 20, {}, rng);
  CHECK(exact.size() == 20);
  std::set<std::string> uniq;
  for (const auto& s : exact) uniq.insert(s.stem);
  CHECK(uniq.size() == 20);  // permutation, no duplicates

  auto subset = batch::pad_group_fixed(g, 8, {}, rng);
  CHECK(subset.size() == 8);
  uniq.clear();
  for (const auto& s : subset) uniq.insert(s.stem);
  CHECK(uniq.size() == 8);  // distinct originals
}

TEST_CASE("pad_group_adaptive equalizes to the larger size") {
  auto ds = toy_dataset(2, 9, 4);
  auto small = ds.groups[0];
  small.samples.resize(5);
  Rng rng(2);
  auto [a, b] = batch::pad_group_adaptive(small, ds.groups[1], {AugOp::HFlip}, rng);
  CHECK(a.size() == 9);
  CHECK(b.size() == 9);

  auto one = ds.groups[0];
  one.samples.resize(1);
  auto four = ds.groups[1];
  four.samples.resize(4);
  auto [c, d] = batch::pad_group_adaptive(one, four, {}, rng);
  CHECK(c.size() == 4);
  CHECK(d.size() == 4);
  int originals = 0;
  for (const auto& s : c) originals += s.stem == one.samples[0].stem;
  CHECK(originals == 4);  // 1 original + 3 copies of it
}

TEST_CASE("inject_negatives appends zero-GT rows from other groups") {
  auto ds = toy_dataset(3, 6, 8);
  std::vector<const data::ImageGroup*> others = {&ds.groups[1], &ds.groups[2]};
  Rng rng(3);

  auto out = batch::inject_negatives(ds.groups[0].samples, others, 4, rng);
  CHECK(out.size() == 10);
  int negs = 0;
  for (const auto& t : out) {
    if (t.negative) {
      ++negs;
      CHECK(t.sample.mask.foreground_count() == 0);
    } else {
      CHECK(t.sample.mask.foreground_count() > 0);
    }
  }
  CHECK(negs == 4);

  auto identity = batch::inject_negatives(ds.groups[0].samples, others, 0, rng);
  CHECK(identity.size() == 6);
  CHECK_THROWS(batch::inject_negatives(ds.groups[0].samples, {}, 1, rng));
}

TEST_CASE("augment: involution, mask immutability, zero-rotation") {
  auto ds = toy_dataset(2, 2, 12);
  auto sample = ds.groups[0].samples[0];

  auto flipped = sample;
  hflip_inplace(flipped.image, flipped.mask);
  auto twice = flipped;
  hflip_inplace(twice.image, twice.mask);
  CHECK(twice.image.rgb == sample.image.rgb);
  CHECK(twice.mask.v == sample.mask.v);

  Rng rng(1);
  auto colored = sample;
  batch::augment(colored.image, colored.mask, {AugOp::Color}, rng);
  CHECK(colored.mask.v == sample.mask.v);  // mask untouched byte-for-byte
  for (float v : colored.image.rgb) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  auto rotated = sample;
  rotate_pair(rotated.image, rotated.mask, 0.0);
  CHECK(rotated.mask.v == sample.mask.v);
  for (size_t i = 0; i < sample.image.rgb.size(); ++i)
    CHECK(rotated.image.rgb[i] == doctest::Approx(sample.image.rgb[i]).epsilon(1e-6));

  auto spun = sample;
  rotate_pair(spun.image, spun.mask, 12.5);
  for (uint8_t v : spun.mask.v) CHECK((v == 0 || v == 1));
}

TEST_CASE("make_training_batch composition and negative-row invariant") {
  auto ds = toy_dataset(3, 6, 21);
  batch::BatchingConfig cfg;
  cfg.batch_size_per_group = 8;
  cfg.n_negatives = 2;
  cfg.resolution = 32;
  Rng rng(9);
  auto [a, b] = batch::make_training_batch(ds, 0, 1, cfg, rng);
  CHECK(a.rows() == 10);
  CHECK(b.rows() == 10);
  CHECK(a.n_negatives() == 2);

  const int64_t hw = 32 * 32;
  for (int64_t i = 0; i < a.rows(); ++i) {
    double fg = 0;
    for (int64_t p = 0; p < hw; ++p) fg += a.gts.at(i * hw + p);
    if (a.negative_flags[static_cast<size_t>(i)])
      CHECK(fg == 0.0);
    else
      CHECK(fg > 0.0);  // synthetic masks survive the resize
  }

  // padding_mode none passes groups through unchanged
  batch::BatchingConfig none = cfg;
  none.padding_mode = batch::PaddingMode::None;
  none.n_negatives = 0;
  Rng rng2(9);
  auto [na, nb] = batch::make_training_batch(ds, 0, 1, none, rng2);
  CHECK(na.rows() == 6);
  CHECK(nb.rows() == 6);
}

TEST_CASE("fixed padding emits exactly N for sizes in [1, 3N]") {
  auto base = toy_dataset(2, 1, 2);
  const int n = 8;
  for (int size : {1, 3, 7, 8, 9, 16, 24}) {
    data::ImageGroup g = base.groups[0];
    while (static_cast<int>(g.samples.size()) < size) {
      auto s = g.samples[0];
      s.stem += "_" + std::to_string(g.samples.size());
      g.samples.push_back(std::move(s));
    }
    g.samples.resize(static_cast<size_t>(size));
    Rng rng(size);
    auto rows = batch::pad_group_fixed(g, n, {AugOp::HFlip, AugOp::Color}, rng);
    CHECK(static_cast<int>(rows.size()) == n);
  }
}

TEST_CASE("epoch replay is exact for a fixed seed") {
  auto ds = toy_dataset(4, 5, 33);
  batch::BatchingConfig cfg;
  cfg.batch_size_per_group = 6;
  cfg.n_negatives = 2;
  cfg.resolution = 32;
  cfg.augmentations = {AugOp::HFlip, AugOp::Color, AugOp::Rotate};

  auto run = [&]() {
    std::vector<batch::Batch> out;
    for (uint64_t epoch = 0; epoch < 2; ++epoch) {
      auto pairs = batch::pair_groups(ds, 77, epoch);
      for (size_t pi = 0; pi < pairs.size(); ++pi) {
        Rng rng = Rng(77).fork(epoch, pi);
        auto [a, b] = batch::make_training_batch(ds, pairs[pi].first, pairs[pi].second, cfg, rng);
        out.push_back(std::move(a));
        out.push_back(std::move(b));
      }
    }
    return out;
  };

  auto first = run();
  auto second = run();
  REQUIRE(first.size() == second.size());
  for (size_t i = 0; i < first.size(); ++i) CHECK(batches_equal(first[i], second[i]));
}
