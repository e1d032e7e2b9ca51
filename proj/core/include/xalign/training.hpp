#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "xalign/alignment.hpp"
#include "xalign/corpus.hpp"
#include "xalign/losses.hpp"
#include "xalign/numerics.hpp"
#include "xalign/partition.hpp"

namespace xalign {

/// Everything gradient descent updates: the per-region projections, the
/// CMPC classifier, and a dim x dim adapter applied to text globals and
/// phrases. Flattened order: projection (weights then bias, per region),
/// class weights, adapter.
struct TrainableParams {
  RegionProjection projection;
  ClassWeights classes;
  num::Matrix text_adapter;

  /// Identity projection and adapter, Gaussian class weights.
  static TrainableParams initial(std::size_t dim, std::span<const std::uint64_t> identities,
                                 std::uint64_t seed);

  std::size_t dim() const noexcept { return projection.dim; }
  std::size_t size() const noexcept;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

template <class S>
struct ParamViewT {
  RegionProjectionT<S> projection;
  std::vector<S> class_weights;  // dim x n_classes, row-major
  std::size_t n_classes = 0;
  std::vector<S> adapter;        // dim x dim, row-major
};

/// Reinterprets a flat parameter vector (double or Var) using `layout`'s shapes.
template <class S>
ParamViewT<S> view_params(const TrainableParams& layout, std::span<const S> flat) {
  if (flat.size() != layout.size()) throw UsageError("view_params: parameter count mismatch");
  const std::size_t d = layout.dim();
  ParamViewT<S> v;
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    std::vector<S> out(flat.begin() + static_cast<std::ptrdiff_t>(at),
                       flat.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    return out;
  };
  v.projection.dim = d;
  v.projection.enabled = true;
  for (std::size_t r = 0; r < kRegionCount; ++r) {
    v.projection.weight[r] = take(d * d);
    v.projection.bias[r] = take(d);
  }
  v.n_classes = layout.classes.weights.cols;
  v.class_weights = take(d * v.n_classes);
  v.adapter = take(d * d);
  return v;
}

/// A loss batch: images[a] and texts[a] share an identity.
struct Batch {
  std::vector<ImageEntity> images;
  std::vector<TextEntity> texts;
};

namespace detail {

template <class S>
std::vector<S> lift(const Vec64& v) {
  return std::vector<S>(v.begin(), v.end());
}

}  // namespace detail

/// The full objective on one batch, templated so the same code yields plain
/// values (double) or a recorded computation (Var).
template <class S>
LossReportT<S> batch_objective(const Batch& batch, const ParamViewT<S>& params,
                               std::span<const std::size_t> classes, const AttentionConfig& cfg,
                               const LossWeights& w) {
  const std::size_t n = batch.images.size();
  if (n == 0 || batch.texts.size() != n || classes.size() != n) {
    throw UsageError("batch_objective: images, texts and classes must pair up");
  }
  const MatchLabels labels = build_labels(batch.images, batch.texts);
  using Vec = std::vector<S>;

  std::vector<Vec> img_globals, txt_globals;
  std::vector<std::vector<Vec>> entities(n), phrases(n);
  for (std::size_t a = 0; a < n; ++a) {
    const ImageEntity& img = batch.images[a];
    img_globals.push_back(detail::lift<S>(img.global));
    auto regions = partition_regions<S>(std::span<const Vec64>(img.slices), params.projection);
    entities[a].push_back(img_globals.back());
    for (auto& r : regions) entities[a].push_back(std::move(r));

    const TextEntity& txt = batch.texts[a];
    const std::span<const S> adapter(params.adapter);
    txt_globals.push_back(num::linear(adapter, std::span<const S>(detail::lift<S>(txt.global))));
    for (const Vec64& p : txt.phrases) {
      phrases[a].push_back(num::linear(adapter, std::span<const S>(detail::lift<S>(p))));
    }
  }

  const S cmpm = cmpm_loss_generic(std::span<const Vec>(img_globals),
                                   std::span<const Vec>(txt_globals), labels, w.eps_kl, w.lambda2);
  const S cmpc = cmpc_loss_generic(std::span<const Vec>(img_globals),
                                   std::span<const Vec>(txt_globals), classes,
                                   std::span<const S>(params.class_weights), params.n_classes);

  std::vector<S> i2t(n * n), t2i(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const std::span<const Vec> ents(entities[a]);
      const std::span<const Vec> phr(phrases[b]);
      i2t[a * n + b] = image_to_text(ents, phr, cfg).score;
      t2i[a * n + b] = text_to_image(ents, phr, cfg).score;
    }
  }
  const auto acsa = acsa_loss_generic(std::span<const S>(i2t), std::span<const S>(t2i), labels,
                                      w.eps_kl);
  LossReportT<S> report = compose_losses(cmpm, cmpc, acsa.i2t, acsa.t2i, w);
  report.degenerate_rows = acsa.degenerate_rows;
  return report;
}

LossReport total_loss(const Batch& batch, const AttentionConfig& cfg, const LossWeights& w,
                      const TrainableParams& params);

struct LossGradient {
  LossReport report;
  std::vector<double> gradient;  // d total / d flattened params
  std::size_t tape_nodes = 0;
};

/// Records the objective on a tape and runs the reverse sweep.
LossGradient total_loss_gradient(const Batch& batch, const AttentionConfig& cfg,
                                 const LossWeights& w, const TrainableParams& params);

struct GradientCheck {
  std::size_t parameters = 0;
  double max_rel_error = 0.0;  // |analytic - fd| / max(1, |fd|)
  std::size_t worst_parameter = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the reverse-mode gradient with central differences (step h) for
/// every parameter.
GradientCheck check_gradients(const Batch& batch, const AttentionConfig& cfg, const LossWeights& w,
                              const TrainableParams& params, double h = 1e-5);

struct GradCheckCase {
  Batch batch;
  TrainableParams params;
};

/// Small seeded batch (N in [3, 6], dim in [4, 8]) with non-identity parameters.
GradCheckCase make_gradcheck_case(std::uint64_t seed);

struct ToyTrainingOptions {
  std::size_t epochs = 30;
  double lr = 0.05;
  LossWeights weights;
  AttentionConfig attention;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  double holdout_fraction = 0.5;  // share of identities kept out of training
  double beta = 0.5;              // fusion weight for held-out retrieval
  double clip_norm = 0.0;         // rescale gradients above this L2 norm; 0 disables
};

struct EpochMetrics {
  std::size_t epoch = 0;         // 0 is the state before any update
  double loss = 0.0;             // objective on the fixed full training batch
  double mean_batch_loss = 0.0;  // average over this epoch's update batches
  double top1 = 0.0;
  double top5 = 0.0;
  double top10 = 0.0;
};

struct ToyTrainingResult {
  TrainableParams params;
  std::vector<EpochMetrics> trace;
  std::vector<std::uint64_t> train_identities;
  std::vector<std::uint64_t> test_identities;
};

/// Plain gradient descent on TrainableParams over an identity-disjoint
/// split; held-out top-k is measured with score_corpus after each epoch.
/// Throws DivergenceError on a non-finite loss.
ToyTrainingResult train_toy(const Corpus& corpus, const ToyTrainingOptions& options);

/// Corpus as seen through trained parameters: texts pass through the adapter
/// and image regions are re-derived with the learned projection.
Corpus apply_params(const Corpus& corpus, const TrainableParams& params);

}  // namespace xalign
