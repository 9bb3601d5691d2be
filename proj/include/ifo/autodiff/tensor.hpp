#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ifo/error.hpp"

namespace ifo::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Tensor is a handle: copies share storage, the way framework tensors do, so
/// that parameters can be referenced from a network, a tape and an optimizer at
/// the same time. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = element_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (element_count(shape) != values.size()) {
      throw DimensionError("tensor shape " + to_string(shape) + " does not hold " +
                           std::to_string(values.size()) + " values");
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor shape " + to_string(shape) + " has a zero extent");
    }
    return Tensor(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(storage_); }

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t size() const { return storage_->data.size(); }

  std::span<double> data() { return storage_->data; }
  std::span<const double> data() const { return storage_->data; }

  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
    return storage_->data[0];
  }

  bool requires_grad() const noexcept { return storage_ && storage_->requires_grad; }
  void set_requires_grad(bool on) { storage_->requires_grad = on; }

  bool has_grad() const noexcept { return storage_ && !storage_->grad.empty(); }

  // Gradient buffer, allocated as zeros on first access.
  std::span<double> grad() {
    if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), 0.0);
    return storage_->grad;
  }
  std::span<const double> grad() const { return storage_->grad; }

  void zero_grad() {
    if (!storage_->grad.empty()) std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
  }

  Tensor clone() const {
    return Tensor(storage_->shape, storage_->data, storage_->requires_grad);
  }

  bool is_same(const Tensor& other) const noexcept { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  Tensor(Shape shape, std::vector<double> values, bool requires_grad)
      : storage_(std::make_shared<Storage>(
            Storage{std::move(shape), std::move(values), {}, requires_grad})) {}

  std::shared_ptr<Storage> storage_;
};

}  // namespace ifo::ad
