#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xalign/alignment.hpp"
#include "xalign/corpus.hpp"
#include "xalign/errors.hpp"
#include "xalign/numerics.hpp"

namespace xalign {

struct LossWeights {
  double mu = 4.0;       // CMPC weight
  double gamma = 0.1;    // cross-scale (ACSA) weight
  double eps_kl = 1e-8;  // guard added to the target distribution inside the KL log
  double lambda2 = 1.0;  // scale on the CMPM projection logits

  void validate() const;
};

template <class S>
struct LossReportT {
  S cmpm{};
  S cmpc{};
  S acsa_i2t{};
  S acsa_t2i{};
  S acsa{};
  S total{};
  std::size_t degenerate_rows = 0;  // ACSA rows/columns whose clamped scores were all zero
};
using LossReport = LossReportT<double>;

/// total = cmpm + mu * cmpc + gamma * (acsa_i2t + acsa_t2i).
template <class S>
LossReportT<S> compose_losses(S cmpm, S cmpc, S acsa_i2t, S acsa_t2i, const LossWeights& w) {
  LossReportT<S> r;
  r.cmpm = cmpm;
  r.cmpc = cmpc;
  r.acsa_i2t = acsa_i2t;
  r.acsa_t2i = acsa_t2i;
  r.acsa = acsa_i2t + acsa_t2i;
  r.total = cmpm + cmpc * w.mu + r.acsa * w.gamma;
  return r;
}

/// Identity classifier weights for CMPC: a dim x classes matrix, one column
/// per identity listed in `identities` (same order).
struct ClassWeights {
  std::vector<std::uint64_t> identities;
  num::Matrix weights;

  std::size_t index_of(std::uint64_t identity) const;  // UsageError if unknown
  std::vector<std::size_t> indices_of(std::span<const std::uint64_t> ids) const;
};

/// Image x text score matrices for a batch (row a = image a, column b = text b).
struct BatchScores {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> i2t;
  std::vector<double> t2i;
};

BatchScores score_batch(std::span<const ImageEntity> images, std::span<const TextEntity> texts,
                        const AttentionConfig& cfg);

template <class S>
struct AcsaTermsT {
  S i2t{};
  S t2i{};
  std::size_t degenerate_rows = 0;
};
using AcsaTerms = AcsaTermsT<double>;

namespace detail {

inline void require_positive_everywhere(const MatchLabels& labels) {
  for (std::size_t r = 0; r < labels.rows; ++r) {
    if (!labels.row_has_positive(r)) {
      throw LabelingError("batch row " + std::to_string(r) + " has no positive pair");
    }
  }
  const MatchLabels t = labels.transposed();
  for (std::size_t c = 0; c < t.rows; ++c) {
    if (!t.row_has_positive(c)) {
      throw LabelingError("batch column " + std::to_string(c) + " has no positive pair");
    }
  }
}

// sum_b p_b log(p_b / (q_b + eps)), with 0 log 0 = 0.
template <class S>
S kl_row(std::span<const S> p, std::span<const double> q, double eps) {
  using std::log;
  using num::log;
  S acc = S(0.0);
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (num::value_of(p[b]) == 0.0) continue;
    acc = acc + p[b] * log(p[b] / (q[b] + eps));
  }
  return acc;
}

template <class S, class V>
std::vector<S> normalized(const V& v) {
  auto n = num::l2norm(std::span<const S>(v));
  if (num::value_of(n) == 0.0) throw SingularityError("zero-norm embedding in a loss batch");
  std::vector<S> out(v.size());
  for (std::size_t c = 0; c < v.size(); ++c) out[c] = v[c] / n;
  return out;
}

// One direction of CMPM: queries scored against L2-normalized candidates.
template <class V, class S = num::scalar_of_t<V>>
S projection_matching(std::span<const V> queries, std::span<const V> candidates,
                      const MatchLabels& labels, double eps, double lambda2) {
  std::vector<std::vector<S>> unit;
  unit.reserve(candidates.size());
  for (const V& c : candidates) unit.push_back(normalized<S>(c));
  S total = S(0.0);
  std::vector<S> logits(candidates.size());
  for (std::size_t a = 0; a < queries.size(); ++a) {
    for (std::size_t b = 0; b < candidates.size(); ++b) {
      logits[b] = num::dot(std::span<const S>(queries[a]), std::span<const S>(unit[b])) * lambda2;
    }
    const std::vector<S> p = num::softmax(std::span<const S>(logits), 1.0);
    total = total + kl_row(std::span<const S>(p),
                           std::span<const double>(labels.q).subspan(a * labels.cols, labels.cols),
                           eps);
  }
  return total / static_cast<double>(queries.size());
}

// One direction of CMPC: x projected onto unit(partner), classified by
// column-normalized weights.
template <class V, class S = num::scalar_of_t<V>>
S projection_classification(std::span<const V> xs, std::span<const V> partners,
                            std::span<const std::size_t> classes,
                            std::span<const std::vector<S>> unit_columns) {
  S total = S(0.0);
  std::vector<S> logits(unit_columns.size());
  for (std::size_t a = 0; a < xs.size(); ++a) {
    const std::vector<S> u = normalized<S>(partners[a]);
    const S along = num::dot(std::span<const S>(xs[a]), std::span<const S>(u));
    for (std::size_t c = 0; c < unit_columns.size(); ++c) {
      logits[c] = along * num::dot(std::span<const S>(u), std::span<const S>(unit_columns[c]));
    }
    total = total + num::log_sum_exp(std::span<const S>(logits)) - logits[classes[a]];
  }
  return total / static_cast<double>(xs.size());
}

}  // namespace detail

/// CMPM summed over both directions. Rows of `labels` are images, columns texts.
template <class V, class S = num::scalar_of_t<V>>
S cmpm_loss_generic(std::span<const V> img, std::span<const V> txt, const MatchLabels& labels,
                    double eps_kl, double lambda2 = 1.0) {
  if (img.empty() || labels.rows != img.size() || labels.cols != txt.size()) {
    throw UsageError("cmpm_loss: batch and label shapes disagree");
  }
  detail::require_positive_everywhere(labels);
  return detail::projection_matching(img, txt, labels, eps_kl, lambda2) +
         detail::projection_matching(txt, img, labels.transposed(), eps_kl, lambda2);
}

/// CMPC over paired batches (img[a] with txt[a]), both directions summed.
/// `class_weights` is dim x n_classes, row-major.
template <class V, class S = num::scalar_of_t<V>>
S cmpc_loss_generic(std::span<const V> img, std::span<const V> txt,
                    std::span<const std::size_t> classes, std::span<const S> class_weights,
                    std::size_t n_classes) {
  if (img.empty() || img.size() != txt.size() || classes.size() != img.size()) {
    throw UsageError("cmpc_loss: batch sizes disagree");
  }
  const std::size_t d = img.front().size();
  if (n_classes == 0 || class_weights.size() != d * n_classes) {
    throw UsageError("cmpc_loss: class weight shape mismatch");
  }
  for (std::size_t c : classes) {
    if (c >= n_classes) throw UsageError("cmpc_loss: class index out of range");
  }
  std::vector<std::vector<S>> columns(n_classes, std::vector<S>(d));
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < n_classes; ++c) columns[c][r] = class_weights[r * n_classes + c];
  }
  std::vector<std::vector<S>> unit;
  unit.reserve(n_classes);
  for (const auto& col : columns) unit.push_back(detail::normalized<S>(col));
  return detail::projection_classification(img, txt, classes, std::span<const std::vector<S>>(unit)) +
         detail::projection_classification(txt, img, classes, std::span<const std::vector<S>>(unit));
}

/// KL matching over clamped cross-attention scores. Each image row of
/// `i2t` (and each text column of `t2i`) is normalized into a distribution
/// over candidates and compared with the label distribution. A row whose
/// clamped scores are all zero falls back to the uniform distribution.
template <class S>
AcsaTermsT<S> acsa_loss_generic(std::span<const S> i2t, std::span<const S> t2i,
                                const MatchLabels& labels, double eps_kl) {
  const std::size_t rows = labels.rows;
  const std::size_t cols = labels.cols;
  if (rows == 0 || cols == 0 || i2t.size() != rows * cols || t2i.size() != rows * cols) {
    throw UsageError("acsa_loss: score and label shapes disagree");
  }
  detail::require_positive_everywhere(labels);
  const MatchLabels by_text = labels.transposed();
  AcsaTermsT<S> out;

  auto direction = [&](std::size_t n_rows, std::size_t n_cols, auto score_at,
                       const MatchLabels& target) {
    S total = S(0.0);
    std::vector<S> clamped(n_cols);
    std::vector<S> p(n_cols);
    for (std::size_t a = 0; a < n_rows; ++a) {
      const auto q = std::span<const double>(target.q).subspan(a * n_cols, n_cols);
      S mass = S(0.0);
      for (std::size_t b = 0; b < n_cols; ++b) {
        clamped[b] = num::clamp_plus(score_at(a, b));
        mass = mass + clamped[b];
      }
      if (num::value_of(mass) == 0.0) {
        ++out.degenerate_rows;
        const std::vector<S> uniform(n_cols, S(1.0 / static_cast<double>(n_cols)));
        total = total + detail::kl_row(std::span<const S>(uniform), q, eps_kl);
        continue;
      }
      for (std::size_t b = 0; b < n_cols; ++b) p[b] = clamped[b] / (mass + eps_kl);
      total = total + detail::kl_row(std::span<const S>(p), q, eps_kl);
    }
    return total / static_cast<double>(n_rows);
  };

  out.i2t = direction(rows, cols, [&](std::size_t a, std::size_t b) { return i2t[a * cols + b]; },
                      labels);
  out.t2i = direction(cols, rows, [&](std::size_t b, std::size_t a) { return t2i[a * cols + b]; },
                      by_text);
  return out;
}

double cmpm_loss(std::span<const Vec64> img_globals, std::span<const Vec64> txt_globals,
                 const MatchLabels& labels, double eps_kl = 1e-8, double lambda2 = 1.0);

double cmpc_loss(std::span<const Vec64> img_globals, std::span<const Vec64> txt_globals,
                 std::span<const std::uint64_t> identities, const ClassWeights& class_weights);

AcsaTerms acsa_loss(const BatchScores& scores, const MatchLabels& labels, double eps_kl = 1e-8);

}  // namespace xalign
