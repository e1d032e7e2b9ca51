#include "xalign/numerics/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "xalign/errors.hpp"

namespace xalign::num {
namespace {

Tape* common_tape(std::span<const Var> xs) {
  Tape* tape = nullptr;
  for (const Var& x : xs) {
    if (x.is_constant()) continue;
    if (tape == nullptr) {
      tape = x.tape();
    } else if (tape != x.tape()) {
      throw UsageError("operands recorded on different tapes");
    }
  }
  return tape;
}

Var make(double value, std::span<const Var> parents, std::span<const double> partials,
         bool singular = false) {
  Tape* tape = common_tape(parents);
  if (tape == nullptr) return Var(value);
  return tape->record(value, parents, partials, singular);
}

Var unary(double value, const Var& x, double partial, bool singular = false) {
  const std::array<Var, 1> p{x};
  const std::array<double, 1> d{partial};
  return make(value, p, d, singular);
}

Var binary(double value, const Var& a, double da, const Var& b, double db) {
  const std::array<Var, 2> p{a, b};
  const std::array<double, 2> d{da, db};
  return make(value, p, d);
}

std::vector<double> values(std::span<const Var> xs) {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [](const Var& v) { return v.value(); });
  return out;
}

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw UsageError(std::string(op) + ": dimension mismatch");
}

}  // namespace

Tape::Tape() { edge_begin_.push_back(0); }

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  edge_begin_.reserve(nodes + 1);
  singular_.reserve(nodes);
  parent_.reserve(edges);
  partial_.reserve(edges);
}

Var Tape::variable(double value) {
  const auto index = static_cast<std::uint32_t>(size());
  edge_begin_.push_back(static_cast<std::uint32_t>(parent_.size()));
  singular_.push_back(0);
  return Var(this, index, value);
}

VarVec Tape::variables(std::span<const double> vals) {
  VarVec out;
  out.reserve(vals.size());
  for (double v : vals) out.push_back(variable(v));
  return out;
}

Var Tape::record(double value, std::span<const Var> parents, std::span<const double> partials,
                 bool singular) {
  if (parents.size() != partials.size()) {
    throw UsageError("Tape::record: parent/partial count mismatch");
  }
  bool live = false;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const Var& p = parents[i];
    if (p.is_constant()) continue;
    if (p.tape() != this) throw UsageError("Tape::record: parent belongs to another tape");
    parent_.push_back(p.index());
    partial_.push_back(partials[i]);
    live = true;
  }
  if (!live) return Var(value);
  const auto index = static_cast<std::uint32_t>(size());
  edge_begin_.push_back(static_cast<std::uint32_t>(parent_.size()));
  singular_.push_back(singular ? 1 : 0);
  return Var(this, index, value);
}

Gradients Tape::backward(const Var& output) const {
  if (output.tape() != this || output.index() >= size()) {
    throw UsageError("backward: output is not recorded on this tape");
  }
  Gradients g;
  g.tape_ = this;
  g.adjoint_.assign(size(), 0.0);
  g.adjoint_[output.index()] = 1.0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    ++g.visits_;
    const double adj = g.adjoint_[i];
    if (adj == 0.0) continue;
    if (singular_[i] != 0) {
      throw SingularityError("backward: gradient requested through a singular point");
    }
    for (std::uint32_t e = edge_begin_[i]; e < edge_begin_[i + 1]; ++e) {
      g.adjoint_[parent_[e]] += adj * partial_[e];
    }
  }
  return g;
}

double Gradients::wrt(const Var& v) const {
  if (v.is_constant()) return 0.0;
  if (v.tape() != tape_) throw UsageError("Gradients::wrt: variable from another tape");
  return adjoint_[v.index()];
}

std::vector<double> Gradients::wrt(std::span<const Var> vs) const {
  std::vector<double> out;
  out.reserve(vs.size());
  for (const Var& v : vs) out.push_back(wrt(v));
  return out;
}

Var operator+(const Var& a, const Var& b) {
  return binary(a.value() + b.value(), a, 1.0, b, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  return binary(a.value() - b.value(), a, 1.0, b, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  return binary(a.value() * b.value(), a, b.value(), b, a.value());
}

Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return binary(q, a, 1.0 / b.value(), b, -q / b.value());
}

Var operator-(const Var& a) { return unary(-a.value(), a, -1.0); }

Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return unary(e, x, e);
}

Var log(const Var& x) {
  if (x.value() <= 0.0) {
    return unary(-std::numeric_limits<double>::infinity(), x, 0.0, /*singular=*/true);
  }
  return unary(std::log(x.value()), x, 1.0 / x.value());
}

Var sqrt(const Var& x) {
  const double r = std::sqrt(x.value());
  if (r == 0.0) return unary(0.0, x, 0.0, /*singular=*/true);
  return unary(r, x, 0.5 / r);
}

Var clamp_plus(const Var& x) {
  // Inactive inputs (including exactly 0) pass no gradient.
  if (x.value() > 0.0) return unary(x.value(), x, 1.0);
  return Var(0.0);
}

Var sum(std::span<const Var> x) {
  double acc = 0.0;
  for (const Var& v : x) acc += v.value();
  const std::vector<double> ones(x.size(), 1.0);
  return make(acc, x, ones);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  require_same_dim(a.size(), b.size(), "dot");
  const std::size_t d = a.size();
  std::vector<Var> parents;
  std::vector<double> partials;
  parents.reserve(2 * d);
  partials.reserve(2 * d);
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    acc += a[i].value() * b[i].value();
    parents.push_back(a[i]);
    partials.push_back(b[i].value());
    parents.push_back(b[i]);
    partials.push_back(a[i].value());
  }
  return make(acc, parents, partials);
}

Var l2norm(std::span<const Var> a) {
  if (a.empty()) throw UsageError("l2norm: empty vector");
  double acc = 0.0;
  for (const Var& v : a) acc += v.value() * v.value();
  const double n = std::sqrt(acc);
  std::vector<double> partials(a.size(), 0.0);
  if (n == 0.0) return make(0.0, a, partials, /*singular=*/true);
  for (std::size_t i = 0; i < a.size(); ++i) partials[i] = a[i].value() / n;
  return make(n, a, partials);
}

CosineT<Var> cosine(std::span<const Var> a, std::span<const Var> b) {
  require_same_dim(a.size(), b.size(), "cosine");
  const std::size_t d = a.size();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    ab += a[i].value() * b[i].value();
    aa += a[i].value() * a[i].value();
    bb += b[i].value() * b[i].value();
  }
  if (aa == 0.0 || bb == 0.0) return {Var(0.0), true};
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  const double c = ab / (na * nb);
  std::vector<Var> parents;
  std::vector<double> partials;
  parents.reserve(2 * d);
  partials.reserve(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    parents.push_back(a[i]);
    partials.push_back(b[i].value() / (na * nb) - c * a[i].value() / aa);
    parents.push_back(b[i]);
    partials.push_back(a[i].value() / (na * nb) - c * b[i].value() / bb);
  }
  return {make(c, parents, partials), false};
}

VarVec softmax(std::span<const Var> x, double lambda) {
  const std::vector<double> p = softmax(std::span<const double>(values(x)), lambda);
  const std::size_t n = x.size();
  VarVec out;
  out.reserve(n);
  std::vector<double> partials(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      partials[k] = lambda * p[j] * ((j == k ? 1.0 : 0.0) - p[k]);
    }
    out.push_back(make(p[j], x, partials));
  }
  return out;
}

Var log_sum_exp(std::span<const Var> x) {
  const std::vector<double> v = values(x);
  const double value = log_sum_exp(std::span<const double>(v));
  const std::vector<double> p = softmax(std::span<const double>(v), 1.0);
  return make(value, x, p);
}

VarVec weighted_sum(std::span<const Var> weights, std::span<const VarVec> vectors) {
  if (weights.size() != vectors.size() || vectors.empty()) {
    throw UsageError("weighted_sum: weight count must match a nonempty vector set");
  }
  const std::size_t dim = vectors.front().size();
  const std::size_t m = vectors.size();
  for (const VarVec& v : vectors) require_same_dim(v.size(), dim, "weighted_sum");
  VarVec out;
  out.reserve(dim);
  std::vector<Var> parents(2 * m);
  std::vector<double> partials(2 * m);
  for (std::size_t c = 0; c < dim; ++c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      acc += weights[j].value() * vectors[j][c].value();
      parents[2 * j] = weights[j];
      partials[2 * j] = vectors[j][c].value();
      parents[2 * j + 1] = vectors[j][c];
      partials[2 * j + 1] = weights[j].value();
    }
    out.push_back(make(acc, parents, partials));
  }
  return out;
}

VarVec affine(std::span<const Var> weight, std::span<const Var> x, std::span<const Var> bias) {
  const std::size_t out_dim = bias.size();
  const std::size_t in_dim = x.size();
  if (weight.size() != out_dim * in_dim) throw UsageError("affine: shape mismatch");
  VarVec y;
  y.reserve(out_dim);
  std::vector<Var> parents(2 * in_dim + 1);
  std::vector<double> partials(2 * in_dim + 1);
  for (std::size_t r = 0; r < out_dim; ++r) {
    double acc = bias[r].value();
    for (std::size_t c = 0; c < in_dim; ++c) {
      const Var& w = weight[r * in_dim + c];
      acc += w.value() * x[c].value();
      parents[2 * c] = w;
      partials[2 * c] = x[c].value();
      parents[2 * c + 1] = x[c];
      partials[2 * c + 1] = w.value();
    }
    parents[2 * in_dim] = bias[r];
    partials[2 * in_dim] = 1.0;
    y.push_back(make(acc, parents, partials));
  }
  return y;
}

VarVec linear(std::span<const Var> weight, std::span<const Var> x) {
  if (x.empty() || weight.size() % x.size() != 0) throw UsageError("linear: shape mismatch");
  const VarVec zero_bias(weight.size() / x.size(), Var(0.0));
  return affine(weight, x, zero_bias);
}

}  // namespace xalign::num
