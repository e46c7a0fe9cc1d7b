#include "hicome/model.hpp"

#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hicome::model {

using ag::Var;

// ----------------------------------------------------------------- config

void ModelConfig::validate() const {
  int prod = 1;
  for (int p : patch_sizes) {
    if (p < 1) throw std::invalid_argument("patch sizes must be >= 1");
    prod *= p;
  }
  if (resolution % prod != 0)
    throw std::invalid_argument("resolution must be divisible by the patch-size product");
  const auto grids = stage_grids();
  for (int i = 0; i < 4; ++i) {
    if (stage_channels[static_cast<size_t>(i)] < 1 || depths[static_cast<size_t>(i)] < 1)
      throw std::invalid_argument("stage channels and depths must be >= 1");
    if (stage_channels[static_cast<size_t>(i)] % n_heads[static_cast<size_t>(i)] != 0)
      throw std::invalid_argument("stage channels must divide by head count");
    if (sr_ratios[static_cast<size_t>(i)] < 1 || grids[static_cast<size_t>(i)] % sr_ratios[static_cast<size_t>(i)] != 0)
      throw std::invalid_argument("stage grid must divide by its spatial-reduction ratio");
  }
  for (int r : si_ratios)
    if (r < 1) throw std::invalid_argument("spatial-increment ratios must be >= 1");
  if (consensus_dim < 4 || consensus_dim % 4 != 0)
    throw std::invalid_argument("consensus_dim must be a positive multiple of 4");
  const auto dch = decoder_channels();
  const auto dh = decoder_heads();
  for (int k = 0; k < 3; ++k)
    if (dch[static_cast<size_t>(k)] % dh[static_cast<size_t>(k)] != 0)
      throw std::invalid_argument("decoder widths must divide by decoder head counts");
  if (mlp_ratio < 1) throw std::invalid_argument("mlp_ratio must be >= 1");
}

std::array<int, 4> ModelConfig::stage_grids() const {
  std::array<int, 4> g{};
  int cur = resolution;
  for (int i = 0; i < 4; ++i) {
    cur /= patch_sizes[static_cast<size_t>(i)];
    g[static_cast<size_t>(i)] = cur;
  }
  return g;
}

std::array<int, 3> ModelConfig::decoder_channels() const {
  return {consensus_dim, consensus_dim / 2, consensus_dim / 4};
}

std::array<int, 3> ModelConfig::decoder_heads() const {
  return {n_heads[2], n_heads[1], n_heads[0]};
}

std::array<int, 3> ModelConfig::decoder_depths() const {
  return {depths[2], depths[1], depths[0]};
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["stage_channels"] = stage_channels;
  j["patch_sizes"] = patch_sizes;
  j["sr_ratios"] = sr_ratios;
  j["si_ratios"] = si_ratios;
  j["n_heads"] = n_heads;
  j["depths"] = depths;
  j["resolution"] = resolution;
  j["consensus_dim"] = consensus_dim;
  j["mlp_ratio"] = mlp_ratio;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig cfg;
  if (j.contains("stage_channels")) cfg.stage_channels = j["stage_channels"];
  if (j.contains("patch_sizes")) cfg.patch_sizes = j["patch_sizes"];
  if (j.contains("sr_ratios")) cfg.sr_ratios = j["sr_ratios"];
  if (j.contains("si_ratios")) cfg.si_ratios = j["si_ratios"];
  if (j.contains("n_heads")) cfg.n_heads = j["n_heads"];
  if (j.contains("depths")) cfg.depths = j["depths"];
  if (j.contains("resolution")) cfg.resolution = j["resolution"];
  if (j.contains("consensus_dim")) cfg.consensus_dim = j["consensus_dim"];
  if (j.contains("mlp_ratio")) cfg.mlp_ratio = j["mlp_ratio"];
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------- free operations

AffinityResult group_affinity(const Var& feat, int n_images) {
  const auto& shape = feat.value().shape();
  if (shape.size() != 3 || shape[0] != n_images)
    throw std::invalid_argument("group_affinity: want [Ng, L, C]");
  if (n_images < 1) throw std::invalid_argument("group_affinity: empty group");
  if (n_images == 1)
    std::cerr << "warning: group_affinity on a single image; using self-affinity\n";
  const int64_t l = shape[1], c = shape[2];
  const int64_t p = n_images * l;

  Var flat = feat.reshape({p, c});
  Var unit = ag::l2_normalize_rows(flat);
  Var affinity = ag::bmm_nt(unit.reshape({1, p, c}), unit.reshape({1, p, c})).reshape({p, p});

  std::vector<int> owner(static_cast<size_t>(p));
  for (int64_t i = 0; i < p; ++i) owner[static_cast<size_t>(i)] = static_cast<int>(i / l);
  Var peak = ag::rowmax_other(affinity, owner);

  Var probs = ag::softmax_lastdim(peak.reshape({static_cast<int64_t>(n_images), l}));
  // scaled so that a spatially uniform distribution leaves features doubled
  // after the residual add
  Var attention = ag::scale(probs.reshape({p}), static_cast<float>(l));
  Var modulated = ag::add(ag::scale_rows(flat, attention), flat);

  Var pooled = ag::matmul(probs.reshape({1, p}), flat);
  Var consensus = ag::l2_normalize_rows(pooled).reshape({c});
  return {modulated.reshape({static_cast<int64_t>(n_images), l, c}), consensus};
}

ag::Var sia_attention(const Var& tokens, const AttentionWeights& w, int heads, int si_ratio,
                      int64_t* kv_len_out) {
  const auto& shape = tokens.value().shape();
  if (shape.size() != 3) throw std::invalid_argument("sia_attention: want [N, L, C]");
  const int64_t l = shape[1];
  const auto g = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(l))));
  if (g * g != l) throw std::invalid_argument("sia_attention: token count must be a square grid");
  if (si_ratio < 1) throw std::invalid_argument("sia_attention: ratio must be >= 1");

  Var q = w.q(tokens);
  Var src = tokens;
  if (si_ratio > 1) {
    // learned transposed projection: C -> r*r*C, scattered to the finer grid
    Var up = w.up(tokens);
    src = ag::pixel_shuffle(up, g, g, si_ratio);
  }
  if (kv_len_out) *kv_len_out = src.value().dim(1);
  Var k = w.k(src);
  Var v = w.v(src);
  return w.o(ag::multihead_attention(q, k, v, heads));
}

// ------------------------------------------------------------- construction

namespace {

AttentionWeights make_attention(nn::ParamStore& ps, const std::string& name, int64_t dim, Rng& rng,
                                bool with_up, int up_ratio) {
  AttentionWeights w;
  w.q = nn::Linear(ps, name + ".q", dim, dim, rng);
  w.k = nn::Linear(ps, name + ".k", dim, dim, rng);
  w.v = nn::Linear(ps, name + ".v", dim, dim, rng);
  w.o = nn::Linear(ps, name + ".o", dim, dim, rng);
  if (with_up && up_ratio > 1)
    w.up = nn::Linear(ps, name + ".up", dim, dim * up_ratio * up_ratio, rng);
  return w;
}

}  // namespace

Hicome::Hicome(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const auto& ch = cfg_.stage_channels;

  int prev = 3;
  for (int i = 0; i < 4; ++i) {
    const std::string stage = "enc.s" + std::to_string(i);
    const int p = cfg_.patch_sizes[static_cast<size_t>(i)];
    const int c = ch[static_cast<size_t>(i)];
    patch_embeds_.push_back(nn::Linear(params_, stage + ".patch", static_cast<int64_t>(p) * p * prev, c, rng));
    patch_norms_.push_back(nn::LayerNorm(params_, stage + ".patch_norm", c));
    std::vector<BlockWeights> blocks;
    for (int d = 0; d < cfg_.depths[static_cast<size_t>(i)]; ++d) {
      const std::string bn = stage + ".b" + std::to_string(d);
      BlockWeights b;
      b.ln1 = nn::LayerNorm(params_, bn + ".ln1", c);
      b.ln2 = nn::LayerNorm(params_, bn + ".ln2", c);
      b.ln3 = nn::LayerNorm(params_, bn + ".ln3", c);
      b.attn = make_attention(params_, bn + ".sra", c, rng, false, 1);
      const int sr = cfg_.sr_ratios[static_cast<size_t>(i)];
      if (sr > 1) {
        b.reduce = nn::Linear(params_, bn + ".reduce", static_cast<int64_t>(sr) * sr * c, c, rng);
        b.reduce_norm = nn::LayerNorm(params_, bn + ".reduce_norm", c);
      }
      b.mha = make_attention(params_, bn + ".mha", c, rng, false, 1);
      b.ffn_in = nn::Linear(params_, bn + ".ffn_in", c, static_cast<int64_t>(c) * cfg_.mlp_ratio, rng);
      b.ffn_out = nn::Linear(params_, bn + ".ffn_out", static_cast<int64_t>(c) * cfg_.mlp_ratio, c, rng);
      blocks.push_back(std::move(b));
    }
    enc_blocks_.push_back(std::move(blocks));
    prev = c;
  }

  const int64_t concat_ch = static_cast<int64_t>(ch[1]) + ch[2] + ch[3];
  fusion_ = nn::Linear(params_, "hcf.fusion", concat_ch, cfg_.consensus_dim, rng);

  const auto dch = cfg_.decoder_channels();
  const auto dheads = cfg_.decoder_heads();
  const auto ddepths = cfg_.decoder_depths();
  const std::array<int, 3> lat_src = {ch[2], ch[1], ch[0]};  // f3, f2, f1
  for (int k = 0; k < 3; ++k) {
    const std::string stage = "dec.s" + std::to_string(k);
    laterals_[static_cast<size_t>(k)] =
        nn::Linear(params_, stage + ".lateral", lat_src[static_cast<size_t>(k)], dch[static_cast<size_t>(k)], rng);
    if (k > 0)
      down_projs_[static_cast<size_t>(k - 1)] =
          nn::Linear(params_, stage + ".proj", dch[static_cast<size_t>(k - 1)], dch[static_cast<size_t>(k)], rng);
    std::vector<BlockWeights> blocks;
    for (int d = 0; d < ddepths[static_cast<size_t>(k)]; ++d) {
      const std::string bn = stage + ".b" + std::to_string(d);
      const int c = dch[static_cast<size_t>(k)];
      BlockWeights b;
      b.ln1 = nn::LayerNorm(params_, bn + ".ln1", c);
      b.ln2 = nn::LayerNorm(params_, bn + ".ln2", c);
      b.ln3 = nn::LayerNorm(params_, bn + ".ln3", c);
      b.attn = make_attention(params_, bn + ".sia", c, rng, true, cfg_.si_ratios[static_cast<size_t>(k)]);
      b.mha = make_attention(params_, bn + ".mha", c, rng, false, 1);
      b.ffn_in = nn::Linear(params_, bn + ".ffn_in", c, static_cast<int64_t>(c) * cfg_.mlp_ratio, rng);
      b.ffn_out = nn::Linear(params_, bn + ".ffn_out", static_cast<int64_t>(c) * cfg_.mlp_ratio, c, rng);
      (void)dheads;
      blocks.push_back(std::move(b));
    }
    dec_blocks_.push_back(std::move(blocks));
  }
  head_ = nn::Linear(params_, "dec.head", dch[2], 1, rng);
}

// ----------------------------------------------------------------- encoder

namespace {
Var tokens_to_grid(const Var& tokens, int grid) {
  const auto& s = tokens.value().shape();
  return tokens.reshape({s[0], grid, grid, s[2]});
}

Var grid_to_tokens(const Var& grid_t) {
  const auto& s = grid_t.value().shape();
  return grid_t.reshape({s[0], s[1] * s[2], s[3]});
}
}  // namespace

ag::Var Hicome::run_encoder_block(const BlockWeights& b, const Var& x, int grid, int heads,
                                  int sr) const {
  Var h = b.ln1(x);
  Var q = b.attn.q(h);
  Var kv_src = h;
  if (sr > 1) kv_src = b.reduce_norm(b.reduce(ag::patchify(tokens_to_grid(h, grid), sr)));
  Var attn_out = b.attn.o(
      ag::multihead_attention(q, b.attn.k(kv_src), b.attn.v(kv_src), heads));
  Var x1 = ag::add(x, attn_out);

  Var h2 = b.ln2(x1);
  Var mha_out = b.mha.o(
      ag::multihead_attention(b.mha.q(h2), b.mha.k(h2), b.mha.v(h2), heads));
  Var x2 = ag::add(x1, mha_out);

  Var h3 = b.ln3(x2);
  return ag::add(x2, b.ffn_out(ag::gelu(b.ffn_in(h3))));
}

ag::Var Hicome::run_decoder_block(const BlockWeights& b, const Var& x, int heads, int si) const {
  Var x1 = ag::add(x, sia_attention(b.ln1(x), b.attn, heads, si));
  Var h2 = b.ln2(x1);
  Var x2 = ag::add(
      x1, b.mha.o(ag::multihead_attention(b.mha.q(h2), b.mha.k(h2), b.mha.v(h2), heads)));
  Var h3 = b.ln3(x2);
  return ag::add(x2, b.ffn_out(ag::gelu(b.ffn_in(h3))));
}

FeaturePyramid Hicome::encode(const Var& images) const {
  const auto& s = images.value().shape();
  if (s.size() != 4 || s[3] != 3 || s[1] != cfg_.resolution || s[2] != cfg_.resolution)
    throw std::invalid_argument("encode: want [N, S, S, 3] at the configured resolution");
  if (s[0] < 1) throw std::invalid_argument("encode: empty batch");

  FeaturePyramid pyr;
  pyr.rows = s[0];
  const auto grids = cfg_.stage_grids();
  Var x = images;
  int cur_grid = cfg_.resolution;
  for (int i = 0; i < 4; ++i) {
    Var tokens = ag::patchify(x, cfg_.patch_sizes[static_cast<size_t>(i)]);
    tokens = patch_norms_[static_cast<size_t>(i)](patch_embeds_[static_cast<size_t>(i)](tokens));
    cur_grid = grids[static_cast<size_t>(i)];
    for (const auto& b : enc_blocks_[static_cast<size_t>(i)])
      tokens = run_encoder_block(b, tokens, cur_grid, cfg_.n_heads[static_cast<size_t>(i)],
                                 cfg_.sr_ratios[static_cast<size_t>(i)]);
    pyr.f[static_cast<size_t>(i)] = tokens;
    pyr.grids[static_cast<size_t>(i)] = cur_grid;
    x = tokens_to_grid(tokens, cur_grid);
  }
  return pyr;
}

// --------------------------------------------------------------------- HCF

ConsensusSet Hicome::hcf(const FeaturePyramid& pyr, int64_t n_a, int64_t n_b, bool want_embeddings,
                         const std::vector<uint8_t>* negative_flags) const {
  if (n_a < 1 || n_b < 0 || n_a + n_b != pyr.rows)
    throw std::invalid_argument("hcf: batch does not split into the stated groups");

  const int g2 = pyr.grids[1];
  std::vector<std::pair<int64_t, int64_t>> slices{{0, n_a}};
  if (n_b > 0) slices.emplace_back(n_a, n_b);

  std::vector<Var> fused_groups;
  for (auto [start, len] : slices) {
    std::vector<Var> scale_maps;
    for (int s = 1; s <= 3; ++s) {
      Var feat = ag::narrow0(pyr.f[static_cast<size_t>(s)], start, len);
      AffinityResult aff = group_affinity(feat, static_cast<int>(len));
      Var map = aff.modulated;
      if (pyr.grids[static_cast<size_t>(s)] != g2) {
        map = grid_to_tokens(
            ag::bilinear_resize(tokens_to_grid(map, pyr.grids[static_cast<size_t>(s)]), g2, g2));
      }
      scale_maps.push_back(map);
    }
    fused_groups.push_back(fusion_(ag::concat_lastdim(scale_maps)));
  }

  ConsensusSet cons;
  cons.fused_map = fused_groups.size() == 2 ? ag::concat0(fused_groups) : fused_groups[0];
  cons.grid = g2;
  cons.group_slices = {n_a, n_b};

  if (want_embeddings) {
    const int64_t l2 = static_cast<int64_t>(g2) * g2;
    const int64_t d = cfg_.consensus_dim;
    for (auto [start, len] : slices) {
      std::vector<int64_t> keep;
      for (int64_t i = 0; i < len; ++i) {
        const auto global = static_cast<size_t>(start + i);
        if (!negative_flags || global >= negative_flags->size() || !(*negative_flags)[global])
          keep.push_back(start + i);
      }
      if (keep.size() < 2)
        throw std::invalid_argument("hcf: need >= 2 non-negative rows per group for embeddings");
      const size_t half = keep.size() / 2;
      for (int hi = 0; hi < 2; ++hi) {
        std::vector<int64_t> rows(keep.begin() + (hi == 0 ? 0 : static_cast<int64_t>(half)),
                                  hi == 0 ? keep.begin() + static_cast<int64_t>(half) : keep.end());
        Var sel = ag::index_select0(cons.fused_map, rows);
        Var pooled = ag::col_mean(sel.reshape({static_cast<int64_t>(rows.size()) * l2, d}));
        cons.embeddings.push_back(ag::l2_normalize_rows(pooled.reshape({1, d})).reshape({d}));
      }
    }
  }
  return cons;
}

// ------------------------------------------------------------------ decoder

PredictionBatch Hicome::decode(const ConsensusSet& cons, const FeaturePyramid& pyr) const {
  if (cons.group_slices.first + cons.group_slices.second != pyr.rows)
    throw std::invalid_argument("decode: consensus and pyramid disagree on batch size");
  const auto dch = cfg_.decoder_channels();
  const auto dheads = cfg_.decoder_heads();
  const int64_t n = pyr.rows;

  Var d = cons.fused_map;
  int grid = cons.grid;
  for (int k = 0; k < 3; ++k) {
    if (k > 0) {
      d = down_projs_[static_cast<size_t>(k - 1)](d);
      d = grid_to_tokens(ag::bilinear_resize(tokens_to_grid(d, grid), grid * 2, grid * 2));
      grid *= 2;
    }
    const int lat_grid = pyr.grids[static_cast<size_t>(2 - k)];
    Var lat = laterals_[static_cast<size_t>(k)](pyr.f[static_cast<size_t>(2 - k)]);
    lat = grid_to_tokens(ag::bilinear_resize(tokens_to_grid(lat, lat_grid), grid, grid));
    d = ag::add(d, lat);
    for (const auto& b : dec_blocks_[static_cast<size_t>(k)])
      d = run_decoder_block(b, d, dheads[static_cast<size_t>(k)], cfg_.si_ratios[static_cast<size_t>(k)]);
    (void)dch;
  }

  Var logits_tok = head_(d);  // [N, L, 1]
  Var logits = ag::bilinear_resize(tokens_to_grid(logits_tok, grid), cfg_.resolution, cfg_.resolution);
  PredictionBatch out;
  out.logits = logits;
  out.maps = ag::sigmoid(logits);
  (void)n;
  return out;
}

// ------------------------------------------------------------------ forward

Hicome::ForwardResult Hicome::forward(const batch::Batch& batch_a, const batch::Batch* batch_b,
                                      Mode mode) const {
  if (batch_a.rows() < 1) throw std::invalid_argument("forward: empty batch");
  const int64_t n_a = batch_a.rows();
  const int64_t n_b = batch_b ? batch_b->rows() : 0;
  if (batch_b && n_b < 1) throw std::invalid_argument("forward: empty second batch");
  if (mode == Mode::Train && n_b == 0)
    throw std::invalid_argument("forward: training requires two groups");

  Var images_a = Var::leaf(batch_a.images);
  Var images = images_a;
  std::vector<uint8_t> flags = batch_a.negative_flags;
  if (batch_b) {
    images = ag::concat0({images_a, Var::leaf(batch_b->images)});
    flags.insert(flags.end(), batch_b->negative_flags.begin(), batch_b->negative_flags.end());
  }

  FeaturePyramid pyr = encode(images);
  const bool want_emb = mode == Mode::Train && n_b > 0;
  ConsensusSet cons = hcf(pyr, n_a, n_b, want_emb, &flags);
  PredictionBatch all = decode(cons, pyr);

  ForwardResult res;
  res.pred_a.maps = ag::narrow0(all.maps, 0, n_a);
  res.pred_a.logits = ag::narrow0(all.logits, 0, n_a);
  if (n_b > 0) {
    res.pred_b.maps = ag::narrow0(all.maps, n_a, n_b);
    res.pred_b.logits = ag::narrow0(all.logits, n_a, n_b);
  }
  if (mode == Mode::Train) res.consensus = std::move(cons);
  return res;
}

loss::GroupHalfEmbeddings Hicome::consensus_second_pass(
    const Var& images, const PredictionBatch& preds, int64_t n_a, int64_t n_b,
    const std::vector<uint8_t>& negative_flags) const {
  const auto& s = images.value().shape();
  const int64_t rows = s[0] * s[1] * s[2];
  Var flat_images = images.reshape({rows, 3});
  Var weights = preds.maps.reshape({rows});
  Var masked = ag::scale_rows(flat_images, weights).reshape(s);

  FeaturePyramid pyr = encode(masked);
  ConsensusSet cons = hcf(pyr, n_a, n_b, true, &negative_flags);
  return {cons.embeddings[0], cons.embeddings[1], cons.embeddings[2], cons.embeddings[3]};
}

// --------------------------------------------------------------------- cost

InferenceCost Hicome::count_inference_cost(const ModelConfig& cfg, bool iaccl_enabled) {
  (void)iaccl_enabled;  // training-only machinery adds no parameters and no
                        // inference compute by construction
  cfg.validate();
  InferenceCost cost;
  Hicome probe(cfg, 0);
  cost.params = probe.params().total_elements();

  const auto grids = cfg.stage_grids();
  const auto& ch = cfg.stage_channels;
  auto linear = [](int64_t tokens, int64_t in, int64_t out) { return tokens * in * out; };
  auto attention = [](int64_t lq, int64_t lk, int64_t c) { return 2 * lq * lk * c; };
  auto resize = [](int64_t tokens, int64_t c) { return 4 * tokens * c; };

  int64_t macs = 0;
  int prev = 3;
  for (int i = 0; i < 4; ++i) {
    const int64_t t = static_cast<int64_t>(grids[static_cast<size_t>(i)]) * grids[static_cast<size_t>(i)];
    const int64_t c = ch[static_cast<size_t>(i)];
    const int p = cfg.patch_sizes[static_cast<size_t>(i)];
    const int sr = cfg.sr_ratios[static_cast<size_t>(i)];
    macs += linear(t, static_cast<int64_t>(p) * p * prev, c);
    const int64_t t_kv = sr > 1 ? t / (static_cast<int64_t>(sr) * sr) : t;
    for (int d = 0; d < cfg.depths[static_cast<size_t>(i)]; ++d) {
      macs += linear(t, c, c);  // q
      if (sr > 1) macs += linear(t_kv, static_cast<int64_t>(sr) * sr * c, c);
      macs += 2 * linear(t_kv, c, c);        // k, v
      macs += attention(t, t_kv, c);
      macs += linear(t, c, c);               // out
      macs += 4 * linear(t, c, c) + attention(t, t, c);  // plain MHA sublayer
      macs += 2 * linear(t, c, static_cast<int64_t>(c) * cfg.mlp_ratio);  // ffn
    }
    prev = static_cast<int>(c);
  }

  // consensus extraction for a single-image group
  const int64_t l2 = static_cast<int64_t>(grids[1]) * grids[1];
  for (int s = 1; s <= 3; ++s) {
    const int64_t ls = static_cast<int64_t>(grids[static_cast<size_t>(s)]) * grids[static_cast<size_t>(s)];
    const int64_t c = ch[static_cast<size_t>(s)];
    macs += ls * ls * c;  // pairwise affinity
    macs += ls * c;       // attention-weighted pooling
    if (s > 1) macs += resize(l2, c);
  }
  macs += linear(l2, static_cast<int64_t>(ch[1]) + ch[2] + ch[3], cfg.consensus_dim);

  const auto dch = cfg.decoder_channels();
  const auto ddepths = cfg.decoder_depths();
  const std::array<int, 3> lat_src = {ch[2], ch[1], ch[0]};
  int64_t t = l2;
  for (int k = 0; k < 3; ++k) {
    const int64_t c = dch[static_cast<size_t>(k)];
    const int si = cfg.si_ratios[static_cast<size_t>(k)];
    if (k > 0) {
      macs += linear(t, dch[static_cast<size_t>(k - 1)], c);
      t *= 4;
      macs += resize(t, c);
    }
    const int64_t lat_tokens = static_cast<int64_t>(grids[static_cast<size_t>(2 - k)]) * grids[static_cast<size_t>(2 - k)];
    macs += linear(lat_tokens, lat_src[static_cast<size_t>(k)], c) + resize(t, c);
    const int64_t t_kv = si > 1 ? t * si * si : t;
    for (int d = 0; d < ddepths[static_cast<size_t>(k)]; ++d) {
      macs += linear(t, c, c);  // q
      if (si > 1) macs += linear(t, c, c * si * si);  // increment projection
      macs += 2 * linear(t_kv, c, c) + attention(t, t_kv, c) + linear(t, c, c);
      macs += 4 * linear(t, c, c) + attention(t, t, c);
      macs += 2 * linear(t, c, static_cast<int64_t>(c) * cfg.mlp_ratio);
    }
  }
  macs += linear(t, dch[2], 1);
  macs += resize(static_cast<int64_t>(cfg.resolution) * cfg.resolution, 1);

  cost.macs = macs;
  return cost;
}

}  // namespace hicome::model
