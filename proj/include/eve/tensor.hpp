#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace eve {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_count(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Dense row-major tensor of 64-bit reals. Most of the project only ever
// needs rank 2; scalars are stored as {1,1}.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), v(shape_count(shape), fill) {}
  Tensor(Shape s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
    if (v.size() != shape_count(shape))
      throw std::invalid_argument("Tensor: value count does not match shape");
  }

  static Tensor scalar(double x) { return Tensor({1, 1}, {x}); }
  static Tensor row(std::vector<double> vals) {
    auto n = vals.size();
    return Tensor({1, n}, std::move(vals));
  }

  std::size_t size() const { return v.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const;
};

std::string shape_str(const Shape& s);

}  // namespace eve
