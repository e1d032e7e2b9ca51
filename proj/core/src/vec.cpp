#include "xalign/numerics/vec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xalign/errors.hpp"

namespace xalign::num {
namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw UsageError(std::string(op) + ": dimension mismatch (" + std::to_string(a) +
                     " vs " + std::to_string(b) + ")");
  }
}

template <class V>
std::vector<double> weighted_sum_impl(std::span<const double> weights,
                                      std::span<const V> vectors) {
  if (weights.size() != vectors.size() || vectors.empty()) {
    throw UsageError("weighted_sum: weight count must match a nonempty vector set");
  }
  const std::size_t dim = vectors.front().size();
  std::vector<double> out(dim, 0.0);
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    require_same_dim(vectors[j].size(), dim, "weighted_sum");
    for (std::size_t c = 0; c < dim; ++c) out[c] += weights[j] * vectors[j][c];
  }
  return out;
}

}  // namespace

Vec64::Vec64(std::vector<double> data) : data_(std::move(data)) {
  if (data_.empty()) throw UsageError("Vec64: dimension must be positive");
  for (double v : data_) {
    if (!std::isfinite(v)) throw UsageError("Vec64: entries must be finite");
  }
}

Vec64::Vec64(std::initializer_list<double> values)
    : Vec64(std::vector<double>(values)) {}

Vec64 Vec64::zeros(std::size_t dim) { return Vec64(std::vector<double>(dim, 0.0)); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2norm(std::span<const double> a) {
  if (a.empty()) throw UsageError("l2norm: empty vector");
  double acc = 0.0;
  for (double v : a) acc += v * v;
  return std::sqrt(acc);
}

Cosine cosine(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "cosine");
  const double na = l2norm(a);
  const double nb = l2norm(b);
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  // Rounding can push |value| a hair past 1 for parallel inputs.
  return {std::clamp(dot(a, b) / (na * nb), -1.0, 1.0), false};
}

std::vector<double> softmax(std::span<const double> x, double lambda) {
  if (x.empty()) throw UsageError("softmax: empty input");
  if (!(lambda > 0.0)) throw UsageError("softmax: lambda must be positive");
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(lambda * (x[i] - m));
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw UsageError("log_sum_exp: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double v : x) total += std::exp(v - m);
  return m + std::log(total);
}

std::vector<double> weighted_sum(std::span<const double> weights,
                                 std::span<const Vec64> vectors) {
  return weighted_sum_impl(weights, vectors);
}

std::vector<double> weighted_sum(std::span<const double> weights,
                                 std::span<const std::vector<double>> vectors) {
  return weighted_sum_impl(weights, vectors);
}

std::vector<double> affine(std::span<const double> weight, std::span<const double> x,
                           std::span<const double> bias) {
  const std::size_t out_dim = bias.size();
  if (weight.size() != out_dim * x.size()) throw UsageError("affine: shape mismatch");
  std::vector<double> y(out_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    y[r] = bias[r] + dot(weight.subspan(r * x.size(), x.size()), x);
  }
  return y;
}

std::vector<double> linear(std::span<const double> weight, std::span<const double> x) {
  if (x.empty() || weight.size() % x.size() != 0) throw UsageError("linear: shape mismatch");
  const std::size_t out_dim = weight.size() / x.size();
  std::vector<double> y(out_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    y[r] = dot(weight.subspan(r * x.size(), x.size()), x);
  }
  return y;
}

}  // namespace xalign::num
