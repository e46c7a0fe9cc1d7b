#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hicome {

// Dense row-major float32 tensor with shared storage. Reshapes are free;
// all other ops copy. Mutating methods assume the caller owns the storage.
class Tensor {
 public:
  Tensor() : storage_(std::make_shared<std::vector<float>>()) {}

  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)),
        storage_(std::make_shared<std::vector<float>>(count(shape_), 0.0f)) {}

  Tensor(std::vector<int64_t> shape, float fill)
      : shape_(std::move(shape)),
        storage_(std::make_shared<std::vector<float>>(count(shape_), fill)) {}

  Tensor(std::vector<int64_t> shape, std::vector<float> data)
      : shape_(std::move(shape)),
        storage_(std::make_shared<std::vector<float>>(std::move(data))) {
    if (static_cast<int64_t>(storage_->size()) != count(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, float v) { return Tensor(std::move(shape), v); }

  int64_t numel() const { return static_cast<int64_t>(storage_->size()); }
  bool empty() const { return storage_->empty(); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }

  int64_t dim(int i) const {
    if (i < 0) i += ndim();
    return shape_.at(static_cast<size_t>(i));
  }

  float* data() { return storage_->data(); }
  const float* data() const { return storage_->data(); }
  float& at(int64_t i) { return (*storage_)[static_cast<size_t>(i)]; }
  float at(int64_t i) const { return (*storage_)[static_cast<size_t>(i)]; }

  // Shares storage; element count must match.
  Tensor reshape(std::vector<int64_t> shape) const {
    if (count(shape) != numel()) throw std::invalid_argument("Tensor::reshape: numel mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.storage_ = storage_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.storage_ = std::make_shared<std::vector<float>>(*storage_);
    return t;
  }

  void fill(float v) { std::fill(storage_->begin(), storage_->end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

 private:
  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  std::shared_ptr<std::vector<float>> storage_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
}

}  // namespace hicome
