#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hicome/autograd.hpp"
#include "hicome/batching.hpp"
#include "hicome/losses.hpp"
#include "hicome/nn.hpp"
#include "hicome/rng.hpp"

namespace hicome::model {

struct ModelConfig {
  std::array<int, 4> stage_channels = {32, 64, 128, 256};
  std::array<int, 4> patch_sizes = {4, 2, 2, 2};
  std::array<int, 4> sr_ratios = {8, 4, 2, 1};
  std::array<int, 3> si_ratios = {2, 2, 2};
  std::array<int, 4> n_heads = {1, 2, 4, 8};
  std::array<int, 4> depths = {2, 2, 2, 2};
  int resolution = 64;
  int consensus_dim = 128;
  int mlp_ratio = 4;

  void validate() const;
  // encoder grid sides: grid_i = grid_{i-1} / P_i with grid_{-1} = resolution
  std::array<int, 4> stage_grids() const;
  // decoder runs three stages at {g2, 2*g2, 4*g2}; channel widths halve
  std::array<int, 3> decoder_channels() const;
  std::array<int, 3> decoder_heads() const;
  std::array<int, 3> decoder_depths() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Stage features in token layout [N, g_i * g_i, C_i].
struct FeaturePyramid {
  std::array<ag::Var, 4> f;
  std::array<int, 4> grids{};
  int64_t rows = 0;
};

struct ConsensusSet {
  ag::Var fused_map;  // [N, g2*g2, consensus_dim]
  int grid = 0;
  std::pair<int64_t, int64_t> group_slices{0, 0};
  // unit vectors (f1_0, f1_1, f2_0, f2_1); empty unless requested
  std::vector<ag::Var> embeddings;
};

struct PredictionBatch {
  ag::Var maps;    // [N, S, S, 1] in [0,1]
  ag::Var logits;  // same shape, unbounded
};

struct InferenceCost {
  int64_t params = 0;
  int64_t macs = 0;  // one-image infer-mode forward
};

enum class Mode { Train, Infer };

// Parameter-free group affinity: channel-normalized pairwise similarity,
// per-position max over other images, spatial softmax per image. The
// attention broadcast is scaled so a uniform distribution modulates by 1.
struct AffinityResult {
  ag::Var modulated;      // [Ng, L, C]
  ag::Var consensus_vec;  // [C], unit norm
};
AffinityResult group_affinity(const ag::Var& feat, int n_images);

struct AttentionWeights {
  nn::Linear q, k, v, o;
  nn::Linear up;  // spatial increment projection; unused when si_ratio == 1
};

// Keys/values spatially incremented by si_ratio via a learned transposed
// projection before attention; si_ratio == 1 is plain multi-head attention.
ag::Var sia_attention(const ag::Var& tokens, const AttentionWeights& w, int heads, int si_ratio,
                      int64_t* kv_len_out = nullptr);

class Hicome {
 public:
  Hicome(const ModelConfig& cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // images: [N, S, S, 3]
  FeaturePyramid encode(const ag::Var& images) const;

  // group_sizes (n1, n2); n2 == 0 for single-group inference. negative_flags
  // mark zero-GT rows excluded from consensus pooling.
  ConsensusSet hcf(const FeaturePyramid& pyr, int64_t n_a, int64_t n_b, bool want_embeddings,
                   const std::vector<uint8_t>* negative_flags = nullptr) const;

  PredictionBatch decode(const ConsensusSet& cons, const FeaturePyramid& pyr) const;

  struct ForwardResult {
    PredictionBatch pred_a;
    PredictionBatch pred_b;  // undefined Vars in single-group inference
    std::optional<ConsensusSet> consensus;
  };
  ForwardResult forward(const batch::Batch& batch_a, const batch::Batch* batch_b, Mode mode) const;

  // Re-encodes images masked by the predictions (gradients flow through the
  // mask) and returns the per-half consensus embeddings. Weights are shared
  // with the first pass.
  loss::GroupHalfEmbeddings consensus_second_pass(const ag::Var& images, const PredictionBatch& preds,
                                                  int64_t n_a, int64_t n_b,
                                                  const std::vector<uint8_t>& negative_flags) const;

  static InferenceCost count_inference_cost(const ModelConfig& cfg, bool iaccl_enabled = false);

 private:
  struct BlockWeights {
    nn::LayerNorm ln1, ln2, ln3;
    AttentionWeights attn;       // SRA (encoder) or SIA (decoder)
    nn::Linear reduce;           // encoder K/V spatial reduction (sr > 1)
    nn::LayerNorm reduce_norm;
    AttentionWeights mha;
    nn::Linear ffn_in, ffn_out;
  };

  ag::Var run_encoder_block(const BlockWeights& b, const ag::Var& x, int grid, int heads,
                            int sr) const;
  ag::Var run_decoder_block(const BlockWeights& b, const ag::Var& x, int heads, int si) const;

  ModelConfig cfg_;
  nn::ParamStore params_;
  std::vector<nn::Linear> patch_embeds_;
  std::vector<nn::LayerNorm> patch_norms_;
  std::vector<std::vector<BlockWeights>> enc_blocks_;
  nn::Linear fusion_;
  std::array<nn::Linear, 3> laterals_;
  std::array<nn::Linear, 2> down_projs_;  // decoder channel halving at stages 2,3
  std::vector<std::vector<BlockWeights>> dec_blocks_;
  nn::Linear head_;
};

}  // namespace hicome::model
