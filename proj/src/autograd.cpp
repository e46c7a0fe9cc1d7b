#include "hicome/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace hicome::ag {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;
using StrideT = Eigen::OuterStride<>;
using MapMS = Eigen::Map<MatRM, 0, StrideT>;
using MapCMS = Eigen::Map<const MatRM, 0, StrideT>;

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p && p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void accumulate(Node& p, const float* g, int64_t n) {
  Tensor& pg = p.ensure_grad();
  float* d = pg.data();
  for (int64_t i = 0; i < n; ++i) d[i] += g[i];
}

// elementwise helper: out = f(a), backward dx = dfdx(x, y) * dy
template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  const float* xd = x.data();
  float* yd = y.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = f(xd[i]);
  auto pa = a.node();
  return Var(make_node(std::move(y), {pa}, [pa, dfdx](Node& self) {
    if (!pa->requires_grad) return;
    Tensor& pg = pa->ensure_grad();
    const float* xd = pa->value.data();
    const float* yd = self.value.data();
    const float* gd = self.grad.data();
    float* out = pg.data();
    const int64_t n = self.value.numel();
    for (int64_t i = 0; i < n; ++i) out[i] += dfdx(xd[i], yd[i]) * gd[i];
  }));
}

}  // namespace

Var Var::reshape(std::vector<int64_t> shape) const {
  auto p = n_;
  Tensor v = p->value.reshape(std::move(shape));
  return Var(make_node(std::move(v), {p}, [p](Node& self) {
    if (p->requires_grad) accumulate(*p, self.grad.data(), self.grad.numel());
  }));
}

void backward(const Var& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.value().numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  Node* r = root.node().get();
  if (!r->requires_grad) return;

  // Iterative post-order DFS over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(r, 0);
  visited.insert(r);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  r->ensure_grad().fill(0.0f);
  r->grad.at(0) = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->has_grad && n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor y(a.value().shape());
  const int64_t n = y.numel();
  const float *ad = a.value().data(), *bd = b.value().data();
  float* yd = y.data();
  for (int64_t i = 0; i < n; ++i) yd[i] = ad[i] + bd[i];
  auto pa = a.node(), pb = b.node();
  return Var(make_node(std::move(y), {pa, pb}, [pa, pb](Node& self) {
    const int64_t n = self.grad.numel();
    if (pa->requires_grad) accumulate(*pa, self.grad.data(), n);
    if (pb->requires_grad) accumulate(*pb, self.grad.data(), n);
  }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor y(a.value().shape());
  const int64_t n = y.numel();
  const float *ad = a.value().data(), *bd = b.value().data();
  float* yd = y.data();
  for (int64_t i = 0; i < n; ++i) yd[i] = ad[i] - bd[i];
  auto pa = a.node(), pb = b.node();
  return Var(make_node(std::move(y), {pa, pb}, [pa, pb](Node& self) {
    const int64_t n = self.grad.numel();
    const float* g = self.grad.data();
    if (pa->requires_grad) accumulate(*pa, g, n);
    if (pb->requires_grad) {
      Tensor& pg = pb->ensure_grad();
      float* d = pg.data();
      for (int64_t i = 0; i < n; ++i) d[i] -= g[i];
    }
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor y(a.value().shape());
  const int64_t n = y.numel();
  const float *ad = a.value().data(), *bd = b.value().data();
  float* yd = y.data();
  for (int64_t i = 0; i < n; ++i) yd[i] = ad[i] * bd[i];
  auto pa = a.node(), pb = b.node();
  return Var(make_node(std::move(y), {pa, pb}, [pa, pb](Node& self) {
    const int64_t n = self.grad.numel();
    const float* g = self.grad.data();
    if (pa->requires_grad) {
      float* d = pa->ensure_grad().data();
      const float* o = pb->value.data();
      for (int64_t i = 0; i < n; ++i) d[i] += g[i] * o[i];
    }
    if (pb->requires_grad) {
      float* d = pb->ensure_grad().data();
      const float* o = pa->value.data();
      for (int64_t i = 0; i < n; ++i) d[i] += g[i] * o[i];
    }
  }));
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "div");
  Tensor y(a.value().shape());
  const int64_t n = y.numel();
  const float *ad = a.value().data(), *bd = b.value().data();
  float* yd = y.data();
  for (int64_t i = 0; i < n; ++i) yd[i] = ad[i] / bd[i];
  auto pa = a.node(), pb = b.node();
  return Var(make_node(std::move(y), {pa, pb}, [pa, pb](Node& self) {
    const int64_t n = self.grad.numel();
    const float* g = self.grad.data();
    const float* bv = pb->value.data();
    if (pa->requires_grad) {
      float* d = pa->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) d[i] += g[i] / bv[i];
    }
    if (pb->requires_grad) {
      float* d = pb->ensure_grad().data();
      const float* yv = self.value.data();
      for (int64_t i = 0; i < n; ++i) d[i] -= g[i] * yv[i] / bv[i];
    }
  }));
}

Var scale(const Var& a, float s) {
  return unary_op(a, [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Var add_scalar(const Var& a, float s) {
  return unary_op(a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Var relu(const Var& a) {
  return unary_op(a, [](float x) { return x > 0.0f ? x : 0.0f; },
                  [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Var gelu(const Var& a) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float c = 0.044715f;
  return unary_op(
      a,
      [](float x) {
        const float t = std::tanh(k * (x + c * x * x * x));
        return 0.5f * x * (1.0f + t);
      },
      [](float x, float) {
        const float u = k * (x + c * x * x * x);
        const float t = std::tanh(u);
        const float du = k * (1.0f + 3.0f * c * x * x);
        return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
      });
}

Var sigmoid(const Var& a) {
  return unary_op(a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
                  [](float, float y) { return y * (1.0f - y); });
}

Var log_op(const Var& a) {
  return unary_op(a, [](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; });
}

Var sqrt_op(const Var& a) {
  return unary_op(a, [](float x) { return std::sqrt(x); },
                  [](float, float y) { return 0.5f / y; });
}

Var clamp(const Var& a, float lo, float hi) {
  return unary_op(a, [lo, hi](float x) { return std::min(hi, std::max(lo, x)); },
                  [lo, hi](float x, float) { return (x >= lo && x <= hi) ? 1.0f : 0.0f; });
}

// ------------------------------------------------------------------ broadcast

Var scale_rows(const Var& x, const Var& s) {
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  if (xv.ndim() != 2 || sv.ndim() != 1 || xv.dim(0) != sv.dim(0))
    throw std::invalid_argument("scale_rows: want x [R,C], s [R]");
  const int64_t r = xv.dim(0), c = xv.dim(1);
  Tensor y(xv.shape());
  for (int64_t i = 0; i < r; ++i) {
    const float si = sv.at(i);
    const float* xr = xv.data() + i * c;
    float* yr = y.data() + i * c;
    for (int64_t j = 0; j < c; ++j) yr[j] = xr[j] * si;
  }
  auto px = x.node(), ps = s.node();
  return Var(make_node(std::move(y), {px, ps}, [px, ps, r, c](Node& self) {
    const float* g = self.grad.data();
    if (px->requires_grad) {
      float* d = px->ensure_grad().data();
      const float* sv = ps->value.data();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) d[i * c + j] += g[i * c + j] * sv[i];
    }
    if (ps->requires_grad) {
      float* d = ps->ensure_grad().data();
      const float* xv = px->value.data();
      for (int64_t i = 0; i < r; ++i) {
        float acc = 0.0f;
        for (int64_t j = 0; j < c; ++j) acc += g[i * c + j] * xv[i * c + j];
        d[i] += acc;
      }
    }
  }));
}

Var add_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  const int64_t c = bv.numel();
  if (xv.dim(-1) != c) throw std::invalid_argument("add_bias: last dim mismatch");
  const int64_t r = xv.numel() / c;
  Tensor y(xv.shape());
  for (int64_t i = 0; i < r; ++i) {
    const float* xr = xv.data() + i * c;
    float* yr = y.data() + i * c;
    const float* bd = bv.data();
    for (int64_t j = 0; j < c; ++j) yr[j] = xr[j] + bd[j];
  }
  auto px = x.node(), pb = b.node();
  return Var(make_node(std::move(y), {px, pb}, [px, pb, r, c](Node& self) {
    const float* g = self.grad.data();
    if (px->requires_grad) accumulate(*px, g, r * c);
    if (pb->requires_grad) {
      float* d = pb->ensure_grad().data();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) d[j] += g[i * c + j];
    }
  }));
}

// -------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
    throw std::invalid_argument("matmul: want [R,K]x[K,N]");
  const int64_t r = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor y({r, n});
  MapM(y.data(), r, n).noalias() = MapCM(av.data(), r, k) * MapCM(bv.data(), k, n);
  auto pa = a.node(), pb = b.node();
  return Var(make_node(std::move(y), {pa, pb}, [pa, pb, r, k, n](Node& self) {
    MapCM g(self.grad.data(), r, n);
    if (pa->requires_grad) {
      MapM da(pa->ensure_grad().data(), r, k);
      da.noalias() += g * MapCM(pb->value.data(), k, n).transpose();
    }
    if (pb->requires_grad) {
      MapM db(pb->ensure_grad().data(), k, n);
      db.noalias() += MapCM(pa->value.data(), r, k).transpose() * g;
    }
  }));
}

namespace {
Var bmm_impl(const Var& a, const Var& b, bool transpose_b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(0) != bv.dim(0))
    throw std::invalid_argument("bmm: want [B,M,K] and [B,K,N] (or [B,N,K])");
  const int64_t bs = av.dim(0), m = av.dim(1), k = av.dim(2);
  const int64_t n = transpose_b ? bv.dim(1) : bv.dim(2);
  if ((transpose_b ? bv.dim(2) : bv.dim(1)) != k) throw std::invalid_argument("bmm: K mismatch");
  Tensor y({bs, m, n});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < bs; ++i) {
    MapCM ai(av.data() + i * m * k, m, k);
    MapM yi(y.data() + i * m * n, m, n);
    if (transpose_b)
      yi.noalias() = ai * MapCM(bv.data() + i * n * k, n, k).transpose();
    else
      yi.noalias() = ai * MapCM(bv.data() + i * k * n, k, n);
  }
  auto pa = a.node(), pb = b.node();
  return Var(
      make_node(std::move(y), {pa, pb}, [pa, pb, bs, m, k, n, transpose_b](Node& self) {
        const bool ga = pa->requires_grad, gb = pb->requires_grad;
        if (ga) pa->ensure_grad();
        if (gb) pb->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < bs; ++i) {
          MapCM g(self.grad.data() + i * m * n, m, n);
          MapCM ai(pa->value.data() + i * m * k, m, k);
          if (transpose_b) {
            MapCM bi(pb->value.data() + i * n * k, n, k);
            if (ga) MapM(pa->grad.data() + i * m * k, m, k).noalias() += g * bi;
            if (gb) MapM(pb->grad.data() + i * n * k, n, k).noalias() += g.transpose() * ai;
          } else {
            MapCM bi(pb->value.data() + i * k * n, k, n);
            if (ga) MapM(pa->grad.data() + i * m * k, m, k).noalias() += g * bi.transpose();
            if (gb) MapM(pb->grad.data() + i * k * n, k, n).noalias() += ai.transpose() * g;
          }
        }
      }));
}
}  // namespace

Var bmm(const Var& a, const Var& b) { return bmm_impl(a, b, false); }
Var bmm_nt(const Var& a, const Var& b) { return bmm_impl(a, b, true); }

// ------------------------------------------------------------------ reductions

Var sum_all(const Var& a) {
  const Tensor& x = a.value();
  double acc = 0.0;
  const float* xd = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) acc += xd[i];
  Tensor y({1});
  y.at(0) = static_cast<float>(acc);
  auto pa = a.node();
  return Var(make_node(std::move(y), {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    const float g = self.grad.at(0);
    float* d = pa->ensure_grad().data();
    for (int64_t i = 0; i < pa->value.numel(); ++i) d[i] += g;
  }));
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0f / static_cast<float>(a.value().numel()));
}

Var row_sum(const Var& a) {
  const Tensor& x = a.value();
  if (x.ndim() != 2) throw std::invalid_argument("row_sum: want [R,C]");
  const int64_t r = x.dim(0), c = x.dim(1);
  Tensor y({r});
  for (int64_t i = 0; i < r; ++i) {
    double acc = 0.0;
    const float* xr = x.data() + i * c;
    for (int64_t j = 0; j < c; ++j) acc += xr[j];
    y.at(i) = static_cast<float>(acc);
  }
  auto pa = a.node();
  return Var(make_node(std::move(y), {pa}, [pa, r, c](Node& self) {
    if (!pa->requires_grad) return;
    float* d = pa->ensure_grad().data();
    const float* g = self.grad.data();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) d[i * c + j] += g[i];
  }));
}

Var col_mean(const Var& a) {
  const Tensor& x = a.value();
  if (x.ndim() != 2) throw std::invalid_argument("col_mean: want [R,C]");
  const int64_t r = x.dim(0), c = x.dim(1);
  Tensor y({c});
  std::vector<double> acc(static_cast<size_t>(c), 0.0);
  for (int64_t i = 0; i < r; ++i) {
    const float* xr = x.data() + i * c;
    for (int64_t j = 0; j < c; ++j) acc[static_cast<size_t>(j)] += xr[j];
  }
  for (int64_t j = 0; j < c; ++j) y.at(j) = static_cast<float>(acc[static_cast<size_t>(j)] / r);
  auto pa = a.node();
  return Var(make_node(std::move(y), {pa}, [pa, r, c](Node& self) {
    if (!pa->requires_grad) return;
    float* d = pa->ensure_grad().data();
    const float* g = self.grad.data();
    const float inv = 1.0f / static_cast<float>(r);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) d[i * c + j] += g[j] * inv;
  }));
}

// ------------------------------------------------------- normalization blocks

Var softmax_lastdim(const Var& a) {
  const Tensor& x = a.value();
  const int64_t c = x.dim(-1);
  const int64_t r = x.numel() / c;
  Tensor y(x.shape());
#pragma omp parallel for schedule(static) if (r > 64)
  for (int64_t i = 0; i < r; ++i) {
    Eigen::Map<const Eigen::ArrayXf> xr(x.data() + i * c, c);
    Eigen::Map<Eigen::ArrayXf> yr(y.data() + i * c, c);
    yr = (xr - xr.maxCoeff()).exp();
    yr *= 1.0f / yr.sum();
  }
  auto pa = a.node();
  return Var(make_node(std::move(y), {pa}, [pa, r, c](Node& self) {
    if (!pa->requires_grad) return;
    float* d = pa->ensure_grad().data();
    const float* g = self.grad.data();
    const float* yv = self.value.data();
#pragma omp parallel for schedule(static) if (r > 64)
    for (int64_t i = 0; i < r; ++i) {
      const float* gr = g + i * c;
      const float* yr = yv + i * c;
      float dot = 0.0f;
      for (int64_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      float* dr = d + i * c;
      for (int64_t j = 0; j < c; ++j) dr[j] += yr[j] * (gr[j] - dot);
    }
  }));
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
  constexpr float eps = 1e-5f;
  const Tensor& xv = x.value();
  const int64_t c = xv.dim(-1);
  const int64_t r = xv.numel() / c;
  if (gain.value().numel() != c || bias.value().numel() != c)
    throw std::invalid_argument("layer_norm: gain/bias size mismatch");
  Tensor y(xv.shape());
  auto xhat = std::make_shared<Tensor>(std::vector<int64_t>{r, c});
  auto inv_std = std::make_shared<Tensor>(std::vector<int64_t>{r});
  const float* gd = gain.value().data();
  const float* bd = bias.value().data();
#pragma omp parallel for schedule(static) if (r > 64)
  for (int64_t i = 0; i < r; ++i) {
    const float* xr = xv.data() + i * c;
    float mu = 0.0f;
    for (int64_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<float>(c);
    float var = 0.0f;
    for (int64_t j = 0; j < c; ++j) {
      const float d = xr[j] - mu;
      var += d * d;
    }
    var /= static_cast<float>(c);
    const float inv = 1.0f / std::sqrt(var + eps);
    inv_std->at(i) = inv;
    float* hr = xhat->data() + i * c;
    float* yr = y.data() + i * c;
    for (int64_t j = 0; j < c; ++j) {
      hr[j] = (xr[j] - mu) * inv;
      yr[j] = hr[j] * gd[j] + bd[j];
    }
  }
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  return Var(make_node(std::move(y), {px, pg, pb}, [px, pg, pb, xhat, inv_std, r, c](Node& self) {
    const float* g = self.grad.data();
    if (pg->requires_grad) {
      float* d = pg->ensure_grad().data();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) d[j] += g[i * c + j] * xhat->at(i * c + j);
    }
    if (pb->requires_grad) {
      float* d = pb->ensure_grad().data();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) d[j] += g[i * c + j];
    }
    if (px->requires_grad) {
      float* d = px->ensure_grad().data();
      const float* gd = pg->value.data();
#pragma omp parallel for schedule(static) if (r > 64)
      for (int64_t i = 0; i < r; ++i) {
        const float* gr = g + i * c;
        const float* hr = xhat->data() + i * c;
        float s1 = 0.0f, s2 = 0.0f;
        for (int64_t j = 0; j < c; ++j) {
          const float gg = gr[j] * gd[j];
          s1 += gg;
          s2 += gg * hr[j];
        }
        s1 /= static_cast<float>(c);
        s2 /= static_cast<float>(c);
        const float inv = inv_std->at(i);
        float* dr = d + i * c;
        for (int64_t j = 0; j < c; ++j)
          dr[j] += (gr[j] * gd[j] - s1 - hr[j] * s2) * inv;
      }
    }
  }));
}

Var l2_normalize_rows(const Var& x, float eps) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("l2_normalize_rows: want [R,C]");
  const int64_t r = xv.dim(0), c = xv.dim(1);
  Tensor y(xv.shape());
  auto norms = std::make_shared<Tensor>(std::vector<int64_t>{r});
  for (int64_t i = 0; i < r; ++i) {
    const float* xr = xv.data() + i * c;
    float s = 0.0f;
    for (int64_t j = 0; j < c; ++j) s += xr[j] * xr[j];
    const float nrm = std::sqrt(s + eps);
    norms->at(i) = nrm;
    float* yr = y.data() + i * c;
    for (int64_t j = 0; j < c; ++j) yr[j] = xr[j] / nrm;
  }
  auto px = x.node();
  return Var(make_node(std::move(y), {px}, [px, norms, r, c](Node& self) {
    if (!px->requires_grad) return;
    float* d = px->ensure_grad().data();
    const float* g = self.grad.data();
    const float* yv = self.value.data();
    for (int64_t i = 0; i < r; ++i) {
      const float* gr = g + i * c;
      const float* yr = yv + i * c;
      float dot = 0.0f;
      for (int64_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      const float inv = 1.0f / norms->at(i);
      float* dr = d + i * c;
      for (int64_t j = 0; j < c; ++j) dr[j] += (gr[j] - yr[j] * dot) * inv;
    }
  }));
}

// ------------------------------------------------------------ shape / indexing

Var narrow0(const Var& x, int64_t start, int64_t len) {
  const Tensor& xv = x.value();
  if (xv.ndim() < 1 || start < 0 || start + len > xv.dim(0))
    throw std::invalid_argument("narrow0: out of range");
  const int64_t inner = xv.numel() / xv.dim(0);
  std::vector<int64_t> shape = xv.shape();
  shape[0] = len;
  Tensor y(shape);
  std::memcpy(y.data(), xv.data() + start * inner, sizeof(float) * static_cast<size_t>(len * inner));
  auto px = x.node();
  return Var(make_node(std::move(y), {px}, [px, start, inner, len](Node& self) {
    if (!px->requires_grad) return;
    float* d = px->ensure_grad().data() + start * inner;
    const float* g = self.grad.data();
    for (int64_t i = 0; i < len * inner; ++i) d[i] += g[i];
  }));
}

Var concat0(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat0: empty input");
  std::vector<int64_t> shape = xs[0].value().shape();
  int64_t total = 0;
  for (const auto& v : xs) total += v.value().dim(0);
  shape[0] = total;
  Tensor y(shape);
  int64_t off = 0;
  for (const auto& v : xs) {
    std::memcpy(y.data() + off, v.value().data(), sizeof(float) * static_cast<size_t>(v.value().numel()));
    off += v.value().numel();
  }
  std::vector<NodePtr> parents;
  for (const auto& v : xs) parents.push_back(v.node());
  return Var(make_node(std::move(y), parents, [](Node& self) {
    int64_t off = 0;
    const float* g = self.grad.data();
    for (auto& p : self.parents) {
      const int64_t n = p->value.numel();
      if (p->requires_grad) {
        float* d = p->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) d[i] += g[off + i];
      }
      off += n;
    }
  }));
}

Var concat_lastdim(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_lastdim: empty input");
  const int64_t c0 = xs[0].value().dim(-1);
  const int64_t rows = xs[0].value().numel() / c0;
  int64_t ctot = 0;
  for (const auto& v : xs) {
    if (v.value().numel() / v.value().dim(-1) != rows)
      throw std::invalid_argument("concat_lastdim: leading dims mismatch");
    ctot += v.value().dim(-1);
  }
  std::vector<int64_t> shape = xs[0].value().shape();
  shape.back() = ctot;
  Tensor y(shape);
  int64_t coff = 0;
  for (const auto& v : xs) {
    const int64_t c = v.value().dim(-1);
    for (int64_t i = 0; i < rows; ++i)
      std::memcpy(y.data() + i * ctot + coff, v.value().data() + i * c,
                  sizeof(float) * static_cast<size_t>(c));
    coff += c;
  }
  std::vector<NodePtr> parents;
  for (const auto& v : xs) parents.push_back(v.node());
  return Var(make_node(std::move(y), parents, [rows, ctot](Node& self) {
    const float* g = self.grad.data();
    int64_t coff = 0;
    for (auto& p : self.parents) {
      const int64_t c = p->value.dim(-1);
      if (p->requires_grad) {
        float* d = p->ensure_grad().data();
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < c; ++j) d[i * c + j] += g[i * ctot + coff + j];
      }
      coff += c;
    }
  }));
}

Var index_select0(const Var& x, std::vector<int64_t> idx) {
  const Tensor& xv = x.value();
  const int64_t inner = xv.numel() / xv.dim(0);
  std::vector<int64_t> shape = xv.shape();
  shape[0] = static_cast<int64_t>(idx.size());
  Tensor y(shape);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= xv.dim(0)) throw std::invalid_argument("index_select0: bad index");
    std::memcpy(y.data() + static_cast<int64_t>(i) * inner, xv.data() + idx[i] * inner,
                sizeof(float) * static_cast<size_t>(inner));
  }
  auto px = x.node();
  auto ids = std::make_shared<std::vector<int64_t>>(std::move(idx));
  return Var(make_node(std::move(y), {px}, [px, ids, inner](Node& self) {
    if (!px->requires_grad) return;
    float* d = px->ensure_grad().data();
    const float* g = self.grad.data();
    for (size_t i = 0; i < ids->size(); ++i) {
      float* dst = d + (*ids)[i] * inner;
      const float* src = g + static_cast<int64_t>(i) * inner;
      for (int64_t j = 0; j < inner; ++j) dst[j] += src[j];
    }
  }));
}

// --------------------------------------------------------------------- spatial

namespace {
struct BilinearTap {
  int64_t i0, i1;
  float w0, w1;
};

std::vector<BilinearTap> bilinear_taps(int64_t src, int64_t dst) {
  std::vector<BilinearTap> taps(static_cast<size_t>(dst));
  const double r = static_cast<double>(src) / static_cast<double>(dst);
  for (int64_t i = 0; i < dst; ++i) {
    double pos = (static_cast<double>(i) + 0.5) * r - 0.5;
    pos = std::max(0.0, std::min(pos, static_cast<double>(src - 1)));
    const auto i0 = static_cast<int64_t>(std::floor(pos));
    const int64_t i1 = std::min(i0 + 1, src - 1);
    const auto f = static_cast<float>(pos - static_cast<double>(i0));
    taps[static_cast<size_t>(i)] = {i0, i1, 1.0f - f, f};
  }
  return taps;
}
}  // namespace

Var bilinear_resize(const Var& x, int64_t h2, int64_t w2) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("bilinear_resize: want [N,H,W,C]");
  const int64_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  const auto ty = bilinear_taps(h, h2);
  const auto tx = bilinear_taps(w, w2);
  Tensor y({n, h2, w2, c});
#pragma omp parallel for schedule(static) if (n > 1)
  for (int64_t b = 0; b < n; ++b) {
    const float* src = xv.data() + b * h * w * c;
    float* dst = y.data() + b * h2 * w2 * c;
    for (int64_t i = 0; i < h2; ++i) {
      const auto& yt = ty[static_cast<size_t>(i)];
      for (int64_t j = 0; j < w2; ++j) {
        const auto& xt = tx[static_cast<size_t>(j)];
        const float* p00 = src + (yt.i0 * w + xt.i0) * c;
        const float* p01 = src + (yt.i0 * w + xt.i1) * c;
        const float* p10 = src + (yt.i1 * w + xt.i0) * c;
        const float* p11 = src + (yt.i1 * w + xt.i1) * c;
        float* o = dst + (i * w2 + j) * c;
        for (int64_t ch = 0; ch < c; ++ch)
          o[ch] = yt.w0 * (xt.w0 * p00[ch] + xt.w1 * p01[ch]) +
                  yt.w1 * (xt.w0 * p10[ch] + xt.w1 * p11[ch]);
      }
    }
  }
  auto px = x.node();
  auto typ = std::make_shared<std::vector<BilinearTap>>(ty);
  auto txp = std::make_shared<std::vector<BilinearTap>>(tx);
  return Var(make_node(std::move(y), {px}, [px, typ, txp, n, h, w, c, h2, w2](Node& self) {
    if (!px->requires_grad) return;
    float* d = px->ensure_grad().data();
    const float* g = self.grad.data();
#pragma omp parallel for schedule(static) if (n > 1)
    for (int64_t b = 0; b < n; ++b) {
      float* dst = d + b * h * w * c;
      const float* src = g + b * h2 * w2 * c;
      for (int64_t i = 0; i < h2; ++i) {
        const auto& yt = (*typ)[static_cast<size_t>(i)];
        for (int64_t j = 0; j < w2; ++j) {
          const auto& xt = (*txp)[static_cast<size_t>(j)];
          const float* gr = src + (i * w2 + j) * c;
          float* p00 = dst + (yt.i0 * w + xt.i0) * c;
          float* p01 = dst + (yt.i0 * w + xt.i1) * c;
          float* p10 = dst + (yt.i1 * w + xt.i0) * c;
          float* p11 = dst + (yt.i1 * w + xt.i1) * c;
          for (int64_t ch = 0; ch < c; ++ch) {
            p00[ch] += yt.w0 * xt.w0 * gr[ch];
            p01[ch] += yt.w0 * xt.w1 * gr[ch];
            p10[ch] += yt.w1 * xt.w0 * gr[ch];
            p11[ch] += yt.w1 * xt.w1 * gr[ch];
          }
        }
      }
    }
  }));
}

Var patchify(const Var& x, int64_t p) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw std::invalid_argument("patchify: want [N,H,W,C]");
  const int64_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  if (h % p != 0 || w % p != 0)
    throw std::invalid_argument("patchify: spatial size not divisible by patch size");
  const int64_t gh = h / p, gw = w / p, pd = p * p * c;
  Tensor y({n, gh * gw, pd});
#pragma omp parallel for schedule(static) if (n > 1)
  for (int64_t b = 0; b < n; ++b) {
    const float* src = xv.data() + b * h * w * c;
    float* dst = y.data() + b * gh * gw * pd;
    for (int64_t py = 0; py < gh; ++py)
      for (int64_t px2 = 0; px2 < gw; ++px2) {
        float* o = dst + (py * gw + px2) * pd;
        for (int64_t dy = 0; dy < p; ++dy)
          std::memcpy(o + dy * p * c, src + ((py * p + dy) * w + px2 * p) * c,
                      sizeof(float) * static_cast<size_t>(p * c));
      }
  }
  auto pxn = x.node();
  return Var(make_node(std::move(y), {pxn}, [pxn, n, h, w, c, p](Node& self) {
    if (!pxn->requires_grad) return;
    const int64_t gh = h / p, gw = w / p, pd = p * p * c;
    float* d = pxn->ensure_grad().data();
    const float* g = self.grad.data();
    for (int64_t b = 0; b < n; ++b) {
      float* dst = d + b * h * w * c;
      const float* src = g + b * gh * gw * pd;
      for (int64_t py = 0; py < gh; ++py)
        for (int64_t px2 = 0; px2 < gw; ++px2) {
          const float* o = src + (py * gw + px2) * pd;
          for (int64_t dy = 0; dy < p; ++dy) {
            float* row = dst + ((py * p + dy) * w + px2 * p) * c;
            const float* gr = o + dy * p * c;
            for (int64_t i = 0; i < p * c; ++i) row[i] += gr[i];
          }
        }
    }
  }));
}

Var pixel_shuffle(const Var& x, int64_t h, int64_t w, int64_t r) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 3 || xv.dim(1) != h * w || xv.dim(2) % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: want [N,H*W,r*r*C]");
  const int64_t n = xv.dim(0), c = xv.dim(2) / (r * r);
  const int64_t w2 = w * r;
  Tensor y({n, h * r * w2, c});
  auto run = [&](const float* src, float* dst) {
    for (int64_t yy = 0; yy < h; ++yy)
      for (int64_t xx = 0; xx < w; ++xx) {
        const float* tok = src + (yy * w + xx) * r * r * c;
        for (int64_t ry = 0; ry < r; ++ry)
          for (int64_t rx = 0; rx < r; ++rx)
            std::memcpy(dst + ((yy * r + ry) * w2 + (xx * r + rx)) * c,
                        tok + (ry * r + rx) * c, sizeof(float) * static_cast<size_t>(c));
      }
  };
#pragma omp parallel for schedule(static) if (n > 1)
  for (int64_t b = 0; b < n; ++b)
    run(xv.data() + b * h * w * r * r * c, y.data() + b * h * r * w2 * c);
  auto px = x.node();
  return Var(make_node(std::move(y), {px}, [px, n, h, w, r, c](Node& self) {
    if (!px->requires_grad) return;
    const int64_t w2 = w * r;
    float* d = px->ensure_grad().data();
    const float* g = self.grad.data();
    for (int64_t b = 0; b < n; ++b) {
      float* dst = d + b * h * w * r * r * c;
      const float* src = g + b * h * r * w2 * c;
      for (int64_t yy = 0; yy < h; ++yy)
        for (int64_t xx = 0; xx < w; ++xx) {
          float* tok = dst + (yy * w + xx) * r * r * c;
          for (int64_t ry = 0; ry < r; ++ry)
            for (int64_t rx = 0; rx < r; ++rx) {
              const float* gr = src + ((yy * r + ry) * w2 + (xx * r + rx)) * c;
              float* t = tok + (ry * r + rx) * c;
              for (int64_t ch = 0; ch < c; ++ch) t[ch] += gr[ch];
            }
        }
    }
  }));
}

// ------------------------------------------------------------------- attention

Var multihead_attention(const Var& q, const Var& k, const Var& v, int heads) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.ndim() != 3 || kv.ndim() != 3 || vv.ndim() != 3)
    throw std::invalid_argument("multihead_attention: want [N,L,C]");
  const int64_t n = qv.dim(0), lq = qv.dim(1), c = qv.dim(2), lk = kv.dim(1);
  if (kv.dim(0) != n || vv.dim(0) != n || kv.dim(2) != c || vv.dim(2) != c || vv.dim(1) != lk)
    throw std::invalid_argument("multihead_attention: k/v shape mismatch");
  if (heads < 1 || c % heads != 0)
    throw std::invalid_argument("multihead_attention: heads must divide channels");
  const int64_t dh = c / heads;
  const float sc = 1.0f / std::sqrt(static_cast<float>(dh));

  Tensor y({n, lq, c});
  auto probs = std::make_shared<Tensor>(std::vector<int64_t>{n, static_cast<int64_t>(heads), lq, lk});
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t hh = 0; hh < heads; ++hh) {
      MapCMS qh(qv.data() + b * lq * c + hh * dh, lq, dh, StrideT(c));
      MapCMS kh(kv.data() + b * lk * c + hh * dh, lk, dh, StrideT(c));
      MapCMS vh(vv.data() + b * lk * c + hh * dh, lk, dh, StrideT(c));
      MapM p(probs->data() + ((b * heads + hh) * lq) * lk, lq, lk);
      p.noalias() = qh * kh.transpose() * sc;
      for (int64_t i = 0; i < lq; ++i) {
        Eigen::Map<Eigen::ArrayXf> row(p.data() + i * lk, lk);
        row = (row - row.maxCoeff()).exp();
        row *= 1.0f / row.sum();
      }
      MapMS yh(y.data() + b * lq * c + hh * dh, lq, dh, StrideT(c));
      yh.noalias() = p * vh;
    }

  auto pq = q.node(), pk = k.node(), pv = v.node();
  return Var(make_node(std::move(y), {pq, pk, pv},
                       [pq, pk, pv, probs, n, lq, lk, c, heads, dh, sc](Node& self) {
    const bool gq = pq->requires_grad, gk = pk->requires_grad, gv = pv->requires_grad;
    if (gq) pq->ensure_grad();
    if (gk) pk->ensure_grad();
    if (gv) pv->ensure_grad();
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t b = 0; b < n; ++b)
      for (int64_t hh = 0; hh < heads; ++hh) {
        MapCMS qh(pq->value.data() + b * lq * c + hh * dh, lq, dh, StrideT(c));
        MapCMS kh(pk->value.data() + b * lk * c + hh * dh, lk, dh, StrideT(c));
        MapCMS vh(pv->value.data() + b * lk * c + hh * dh, lk, dh, StrideT(c));
        MapCM p(probs->data() + ((b * heads + hh) * lq) * lk, lq, lk);
        MapCMS go(self.grad.data() + b * lq * c + hh * dh, lq, dh, StrideT(c));

        if (gv) {
          MapMS dvh(pv->grad.data() + b * lk * c + hh * dh, lk, dh, StrideT(c));
          dvh.noalias() += p.transpose() * go;
        }
        if (gq || gk) {
          MatRM dp = go * vh.transpose();  // [lq, lk]
          // softmax backward rows
          for (int64_t i = 0; i < lq; ++i) {
            const float* pr = p.data() + i * lk;
            float* dr = dp.data() + i * lk;
            float dot = 0.0f;
            for (int64_t j = 0; j < lk; ++j) dot += dr[j] * pr[j];
            for (int64_t j = 0; j < lk; ++j) dr[j] = pr[j] * (dr[j] - dot);
          }
          if (gq) {
            MapMS dqh(pq->grad.data() + b * lq * c + hh * dh, lq, dh, StrideT(c));
            dqh.noalias() += dp * kh * sc;
          }
          if (gk) {
            MapMS dkh(pk->grad.data() + b * lk * c + hh * dh, lk, dh, StrideT(c));
            dkh.noalias() += dp.transpose() * qh * sc;
          }
        }
      }
  }));
}

// ------------------------------------------------------------- group affinity

Var rowmax_other(const Var& a, const std::vector<int>& owner) {
  const Tensor& av = a.value();
  if (av.ndim() != 2 || av.dim(0) != av.dim(1) ||
      av.dim(0) != static_cast<int64_t>(owner.size()))
    throw std::invalid_argument("rowmax_other: want square [P,P] with owner per row");
  const int64_t p = av.dim(0);
  int n_images = 0;
  for (int o : owner) n_images = std::max(n_images, o + 1);
  const bool single = n_images <= 1;

  Tensor y({p});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(p));
  for (int64_t i = 0; i < p; ++i) {
    const float* row = av.data() + i * p;
    float best = -std::numeric_limits<float>::infinity();
    int64_t bj = -1;
    for (int64_t j = 0; j < p; ++j) {
      const bool allowed = single ? (j != i) : (owner[static_cast<size_t>(j)] != owner[static_cast<size_t>(i)]);
      if (allowed && row[j] > best) {
        best = row[j];
        bj = j;
      }
    }
    if (bj < 0) {  // single position total; degenerate but keep finite
      best = row[i];
      bj = i;
    }
    y.at(i) = best;
    (*argmax)[static_cast<size_t>(i)] = bj;
  }
  auto pa = a.node();
  return Var(make_node(std::move(y), {pa}, [pa, argmax, p](Node& self) {
    if (!pa->requires_grad) return;
    float* d = pa->ensure_grad().data();
    const float* g = self.grad.data();
    for (int64_t i = 0; i < p; ++i) d[i * p + (*argmax)[static_cast<size_t>(i)]] += g[i];
  }));
}

}  // namespace hicome::ag
