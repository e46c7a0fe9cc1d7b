#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hicome/autograd.hpp"
#include "hicome/rng.hpp"
#include "hicome/tensor.hpp"

namespace hicome::nn {

// Ordered name -> trainable leaf map shared by model, optimizer and
// checkpoints. Names are stable across runs for a given config.
class ParamStore {
 public:
  ag::Var add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate param " + name);
    ag::Var v = ag::Var::leaf(std::move(init), true);
    params_.emplace(name, v);
    return v;
  }

  ag::Var get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: missing param " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grads() {
    for (auto& [k, v] : params_) v.zero_grad();
  }

  size_t size() const { return params_.size(); }
  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.value().numel();
    return n;
  }

  std::map<std::string, ag::Var>& items() { return params_; }
  const std::map<std::string, ag::Var>& items() const { return params_; }

 private:
  std::map<std::string, ag::Var> params_;
};

inline Tensor trunc_normal_init(std::vector<int64_t> shape, Rng& rng, double sigma = 0.02) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t.at(i) = static_cast<float>(rng.truncated_normal(sigma));
  return t;
}

// Fully connected layer on the last dimension.
struct Linear {
  ag::Var weight;  // [in, out]
  ag::Var bias;    // [out]
  int64_t in = 0, out = 0;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int64_t in_dim, int64_t out_dim, Rng& rng)
      : in(in_dim), out(out_dim) {
    weight = ps.add(name + ".weight", trunc_normal_init({in_dim, out_dim}, rng));
    bias = ps.add(name + ".bias", Tensor({out_dim}));
  }

  ag::Var operator()(const ag::Var& x) const {
    const auto& shape = x.value().shape();
    const int64_t rows = x.value().numel() / in;
    ag::Var y = ag::matmul(x.reshape({rows, in}), weight);
    y = ag::add_bias(y, bias);
    std::vector<int64_t> out_shape = shape;
    out_shape.back() = out;
    return y.reshape(out_shape);
  }
};

struct LayerNorm {
  ag::Var gain;
  ag::Var bias;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int64_t dim) {
    gain = ps.add(name + ".gain", Tensor({dim}, 1.0f));
    bias = ps.add(name + ".bias", Tensor({dim}));
  }

  ag::Var operator()(const ag::Var& x) const { return ag::layer_norm(x, gain, bias); }
};

}  // namespace hicome::nn
