#pragma once

#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace granet {

/// Dense row-major tensor of doubles. Grad storage lives on the tape, not here;
/// a Tensor held by a ParameterStore carries its accumulated gradient in `grad`
/// only between backward() and the optimizer step.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty unless tracked

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (size() != values.size())
      throw std::invalid_argument("Tensor: shape/value count mismatch");
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor row(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v) {
    return Tensor({r, c}, std::move(v));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("Tensor::matrix: ragged rows");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(v));
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ")";
    return os.str();
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

}  // namespace granet
