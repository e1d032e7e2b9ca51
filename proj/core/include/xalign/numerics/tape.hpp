#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "xalign/numerics/vec.hpp"

namespace xalign::num {

class Tape;

// A scalar that is either a constant or a node on a Tape. Constants carry no
// tape and receive no gradient; doubles convert to constants implicitly so
// the same templated code runs on double and Var.
class Var {
 public:
  Var() = default;
  Var(double constant) noexcept : value_(constant) {}  // NOLINT(implicit)

  double value() const noexcept { return value_; }
  bool is_constant() const noexcept { return tape_ == nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::uint32_t index() const noexcept { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index, double value) noexcept
      : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  double value_ = 0.0;
};

using VarVec = std::vector<Var>;

inline double value_of(double x) noexcept { return x; }
inline double value_of(const Var& x) noexcept { return x.value(); }

class Gradients {
 public:
  /// d(output)/d(v). Zero for constants and nodes the output does not depend on.
  double wrt(const Var& v) const;
  std::vector<double> wrt(std::span<const Var> vs) const;

  std::span<const double> adjoints() const noexcept { return adjoint_; }
  /// Number of nodes processed by the reverse sweep.
  std::size_t visits() const noexcept { return visits_; }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<double> adjoint_;
  std::size_t visits_ = 0;
};

// Append-only Wengert list. Each node stores its parents and the local
// partial derivative along each edge; parents always precede the node.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(double value);
  VarVec variables(std::span<const double> values);

  // Constant parents are dropped. With no remaining parents the result is a
  // constant. A singular node raises SingularityError if the reverse sweep
  // reaches it with a nonzero adjoint.
  Var record(double value, std::span<const Var> parents, std::span<const double> partials,
             bool singular = false);

  std::size_t size() const noexcept { return edge_begin_.size() - 1; }
  std::size_t edge_count() const noexcept { return parent_.size(); }
  void reserve(std::size_t nodes, std::size_t edges);

  Gradients backward(const Var& output) const;

 private:
  std::vector<std::uint32_t> edge_begin_;
  std::vector<std::uint32_t> parent_;
  std::vector<double> partial_;
  std::vector<std::uint8_t> singular_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }

Var exp(const Var& x);
Var log(const Var& x);   // singular at x <= 0
Var sqrt(const Var& x);  // singular at x == 0
Var clamp_plus(const Var& x);

// Fused vector kernels: one node per scalar output.
Var sum(std::span<const Var> x);
Var dot(std::span<const Var> a, std::span<const Var> b);
Var l2norm(std::span<const Var> a);  // singular at the zero vector
CosineT<Var> cosine(std::span<const Var> a, std::span<const Var> b);
VarVec softmax(std::span<const Var> x, double lambda);
Var log_sum_exp(std::span<const Var> x);
VarVec weighted_sum(std::span<const Var> weights, std::span<const VarVec> vectors);
VarVec affine(std::span<const Var> weight, std::span<const Var> x, std::span<const Var> bias);
VarVec linear(std::span<const Var> weight, std::span<const Var> x);

}  // namespace xalign::num
