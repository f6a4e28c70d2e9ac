#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ps3/core/errors.hpp"

namespace ps3 {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor. Rank 0 (empty shape) holds a single scalar.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;

  Tensor() : values(1, T(0)) {}
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), values(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_size(shape)) {
      throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " +
                           shape_string(shape));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }

  T& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

  T item() const {
    if (values.size() != 1) throw DimensionError("item: tensor has " + std::to_string(size()) + " values");
    return values[0];
  }

  T* data() { return values.data(); }
  const T* data() const { return values.data(); }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> v(t.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<To>(t.values[i]);
  return Tensor<To>(t.shape, std::move(v));
}

}  // namespace ps3
