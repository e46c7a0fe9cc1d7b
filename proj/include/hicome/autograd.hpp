#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hicome/tensor.hpp"

namespace hicome::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

  Tensor& ensure_grad() {
    if (!has_grad) {
      grad = Tensor(value.shape());
      has_grad = true;
    }
    return grad;
  }
};

// Handle to a node in the dynamically built graph. Graphs are rebuilt every
// step; memory is reclaimed when the last handle to the root goes away.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var leaf(Tensor value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& value() { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  bool has_grad() const { return n_ && n_->has_grad; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  NodePtr node() const { return n_; }

  void zero_grad() {
    if (n_) {
      n_->has_grad = false;
      n_->grad = Tensor();
    }
  }

  float scalar() const { return n_->value.at(0); }

  Var reshape(std::vector<int64_t> shape) const;

 private:
  NodePtr n_;
};

// Runs reverse-mode accumulation from a scalar root (seed gradient 1).
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var log_op(const Var& a);
Var sqrt_op(const Var& a);
Var clamp(const Var& a, float lo, float hi);

// ---- broadcast ----
// x: [R, C] plus per-row scalar s: [R] -> x * s (rows scaled).
Var scale_rows(const Var& x, const Var& s);
// x: [..., C] + b: [C]
Var add_bias(const Var& x, const Var& b);

// ---- linear algebra ----
// a: [R, K] x b: [K, N] -> [R, N]  (2-D; callers reshape batches in)
Var matmul(const Var& a, const Var& b);
// a: [B, M, K] x b: [B, K, N] -> [B, M, N]
Var bmm(const Var& a, const Var& b);
// b transposed: a: [B, M, K] x b: [B, N, K] -> [B, M, N]
Var bmm_nt(const Var& a, const Var& b);

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var row_sum(const Var& a);   // [R, C] -> [R]
Var col_mean(const Var& a);  // [R, C] -> [C]

// ---- normalization / activation blocks ----
Var softmax_lastdim(const Var& a);
// x: [R, C], gain/bias: [C]; eps 1e-5
Var layer_norm(const Var& x, const Var& gain, const Var& bias);
Var l2_normalize_rows(const Var& x, float eps = 1e-12f);

// ---- shape / indexing ----
Var narrow0(const Var& x, int64_t start, int64_t len);
Var concat0(const std::vector<Var>& xs);
Var concat_lastdim(const std::vector<Var>& xs);
Var index_select0(const Var& x, std::vector<int64_t> idx);

// ---- spatial ----
// x: [N, H, W, C] -> [N, H2, W2, C], align_corners=false convention
Var bilinear_resize(const Var& x, int64_t h2, int64_t w2);
// x: [N, H, W, C] -> [N, (H/P)*(W/P), P*P*C]
Var patchify(const Var& x, int64_t p);
// x: [N, H*W, r*r*C] -> [N, (H*r)*(W*r), C]
Var pixel_shuffle(const Var& x, int64_t h, int64_t w, int64_t r);

// ---- attention ----
// q: [N, Lq, C], k/v: [N, Lk, C]; softmax(q k^T / sqrt(C/heads)) v per head.
Var multihead_attention(const Var& q, const Var& k, const Var& v, int heads);

// ---- group affinity support ----
// a: [P, P] pairwise affinity, owner[p] = image index of position p.
// out[p] = max over q with owner[q] != owner[p] of a[p][q];
// if only one image, max over q != p.
Var rowmax_other(const Var& a, const std::vector<int>& owner);

}  // namespace hicome::ag
