#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace xalign::num {

/// Immutable dense vector of finite doubles with dim >= 1.
class Vec64 {
 public:
  explicit Vec64(std::vector<double> data);
  Vec64(std::initializer_list<double> values);

  static Vec64 zeros(std::size_t dim);

  std::size_t dim() const noexcept { return data_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  operator std::span<const double>() const noexcept { return data_; }  // NOLINT

  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Vec64&) const = default;

 private:
  std::vector<double> data_;
};

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n);

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Value of a cosine plus whether either input had zero norm (value is then 0).
template <class S>
struct CosineT {
  S value;
  bool degenerate = false;
};
using Cosine = CosineT<double>;

double dot(std::span<const double> a, std::span<const double> b);
double l2norm(std::span<const double> a);
Cosine cosine(std::span<const double> a, std::span<const double> b);

// Max-subtracted softmax of lambda * x.
std::vector<double> softmax(std::span<const double> x, double lambda);
double log_sum_exp(std::span<const double> x);

inline double clamp_plus(double x) { return x > 0.0 ? x : 0.0; }

std::vector<double> weighted_sum(std::span<const double> weights,
                                 std::span<const Vec64> vectors);
std::vector<double> weighted_sum(std::span<const double> weights,
                                 std::span<const std::vector<double>> vectors);

// y = W x (+ b). W is row-major out x in, flattened.
std::vector<double> affine(std::span<const double> weight, std::span<const double> x,
                           std::span<const double> bias);
std::vector<double> linear(std::span<const double> weight, std::span<const double> x);

}  // namespace xalign::num
