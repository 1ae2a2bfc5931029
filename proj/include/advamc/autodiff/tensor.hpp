#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "advamc/error.hpp"

namespace advamc::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

/// Dense row-major array. `grad` is empty until a backward pass reaches
/// this tensor as a leaf.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) throw ShapeError("data length does not match shape " + shape_str(shape));
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t dim(std::size_t k) const { return shape.at(k); }
  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad.assign(data.size(), T{0}); }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <class T>
TensorPtr<T> make_tensor(Shape shape, T fill = T{0}) {
  return std::make_shared<Tensor<T>>(std::move(shape), fill);
}

template <class T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>(std::move(shape), std::move(data));
  t->requires_grad = requires_grad;
  return t;
}

}  // namespace advamc::ad
