#include "xalign/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "xalign/retrieval.hpp"

namespace xalign {
namespace {

std::vector<std::size_t> batch_classes(const Batch& batch, const TrainableParams& params) {
  return params.classes.indices_of(identities_of(std::span<const ImageEntity>(batch.images)));
}

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::vector<std::uint64_t> unique_identities(const Corpus& corpus) {
  std::vector<std::uint64_t> ids = identities_of(std::span<const TextEntity>(corpus.texts));
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

Corpus subset(const Corpus& corpus, const std::vector<std::uint64_t>& keep) {
  auto wanted = [&](std::uint64_t id) { return std::binary_search(keep.begin(), keep.end(), id); };
  Corpus out;
  out.manifest = corpus.manifest;
  for (const ImageEntity& img : corpus.images) {
    if (wanted(img.identity)) out.images.push_back(img);
  }
  for (const TextEntity& txt : corpus.texts) {
    if (wanted(txt.identity)) out.texts.push_back(txt);
  }
  return out;
}

TopKReport held_out_eval(const Corpus& test, const TrainableParams& params,
                         const ToyTrainingOptions& o) {
  const Corpus seen = apply_params(test, params);
  const SimilarityMatrix scores =
      score_corpus(seen.texts, seen.images, o.attention, o.beta);
  const MatchLabels labels = labels_from_identities(identities_of(std::span(seen.texts)),
                                                    identities_of(std::span(seen.images)));
  return topk_eval(scores, labels);
}

}  // namespace

TrainableParams TrainableParams::initial(std::size_t dim,
                                         std::span<const std::uint64_t> identities,
                                         std::uint64_t seed) {
  if (identities.empty()) throw UsageError("TrainableParams: need at least one identity");
  TrainableParams p;
  p.projection = identity_projection(dim, true);
  p.classes.identities.assign(identities.begin(), identities.end());
  p.classes.weights = num::Matrix(dim, identities.size());
  std::mt19937_64 rng(seed);
  p.classes.weights.data = gaussian(rng, dim * identities.size(), 1.0);
  p.text_adapter = num::Matrix::identity(dim);
  return p;
}

std::size_t TrainableParams::size() const noexcept {
  const std::size_t d = dim();
  return kRegionCount * (d * d + d) + classes.weights.data.size() + text_adapter.data.size();
}

std::vector<double> TrainableParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (std::size_t r = 0; r < kRegionCount; ++r) {
    flat.insert(flat.end(), projection.weight[r].begin(), projection.weight[r].end());
    flat.insert(flat.end(), projection.bias[r].begin(), projection.bias[r].end());
  }
  flat.insert(flat.end(), classes.weights.data.begin(), classes.weights.data.end());
  flat.insert(flat.end(), text_adapter.data.begin(), text_adapter.data.end());
  return flat;
}

void TrainableParams::assign(std::span<const double> flat) {
  const ParamViewT<double> v = view_params(*this, flat);
  projection.weight = v.projection.weight;
  projection.bias = v.projection.bias;
  projection.enabled = true;
  classes.weights.data = v.class_weights;
  text_adapter.data = v.adapter;
}

LossReport total_loss(const Batch& batch, const AttentionConfig& cfg, const LossWeights& w,
                      const TrainableParams& params) {
  cfg.validate();
  w.validate();
  const std::vector<double> flat = params.flatten();
  const auto view = view_params(params, std::span<const double>(flat));
  return batch_objective(batch, view, batch_classes(batch, params), cfg, w);
}

LossGradient total_loss_gradient(const Batch& batch, const AttentionConfig& cfg,
                                 const LossWeights& w, const TrainableParams& params) {
  cfg.validate();
  w.validate();
  num::Tape tape;
  const std::vector<double> flat = params.flatten();
  const num::VarVec leaves = tape.variables(flat);
  const auto view = view_params(params, std::span<const num::Var>(leaves));
  const auto taped = batch_objective(batch, view, batch_classes(batch, params), cfg, w);

  LossGradient out;
  out.report = LossReport{taped.cmpm.value(),     taped.cmpc.value(), taped.acsa_i2t.value(),
                          taped.acsa_t2i.value(), taped.acsa.value(), taped.total.value(),
                          taped.degenerate_rows};
  out.tape_nodes = tape.size();
  if (taped.total.is_constant()) {
    out.gradient.assign(flat.size(), 0.0);
  } else {
    out.gradient = tape.backward(taped.total).wrt(leaves);
  }
  return out;
}

GradientCheck check_gradients(const Batch& batch, const AttentionConfig& cfg, const LossWeights& w,
                              const TrainableParams& params, double h) {
  const LossGradient analytic = total_loss_gradient(batch, cfg, w, params);
  std::vector<double> flat = params.flatten();
  const std::vector<std::size_t> classes = batch_classes(batch, params);
  auto eval = [&](const std::vector<double>& x) {
    const auto view = view_params(params, std::span<const double>(x));
    return batch_objective(batch, view, classes, cfg, w).total;
  };

  GradientCheck check;
  check.parameters = flat.size();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + h;
    const double up = eval(flat);
    flat[i] = saved - h;
    const double down = eval(flat);
    flat[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic.gradient[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (err > check.max_rel_error || i == 0) {
      check.max_rel_error = err;
      check.worst_parameter = i;
      check.analytic = analytic.gradient[i];
      check.numeric = numeric;
    }
  }
  return check;
}

GradCheckCase make_gradcheck_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 6)(rng);
  const std::size_t dim = std::uniform_int_distribution<std::size_t>(4, 8)(rng);

  SyntheticOptions o;
  o.n_identities = 3;
  o.imgs_per_id = 2;
  o.txts_per_id = 2;
  o.dim = dim;
  o.sigma = 0.3;
  o.seed = seed;
  o.m_max = 4;
  o.min_phrases = 1;
  o.max_phrases = 4;
  o.map_strength = 0.3;
  const Corpus corpus = generate_synthetic(o).corpus;

  GradCheckCase c;
  std::uniform_int_distribution<std::size_t> pick_text(0, corpus.texts.size() - 1);
  for (std::size_t a = 0; a < n; ++a) {
    const TextEntity& txt = corpus.texts[pick_text(rng)];
    std::vector<const ImageEntity*> same;
    for (const ImageEntity& img : corpus.images) {
      if (img.identity == txt.identity) same.push_back(&img);
    }
    c.batch.texts.push_back(txt);
    c.batch.images.push_back(
        *same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng)]);
  }

  const std::vector<std::uint64_t> ids{0, 1, 2};
  c.params = TrainableParams::initial(dim, ids, seed + 1);
  std::vector<double> flat = c.params.flatten();
  const std::vector<double> noise = gaussian(rng, flat.size(), 0.2);
  const std::size_t class_begin = kRegionCount * (dim * dim + dim);
  const std::size_t class_end = class_begin + c.params.classes.weights.data.size();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (i < class_begin || i >= class_end) flat[i] += noise[i];
  }
  c.params.assign(flat);
  return c;
}

Corpus apply_params(const Corpus& corpus, const TrainableParams& params) {
  const std::size_t d = corpus.manifest.dim;
  if (params.dim() != d || params.text_adapter.rows != d) {
    throw UsageError("apply_params: parameter dimension does not match the corpus");
  }
  Corpus out = corpus;
  for (ImageEntity& img : out.images) img.derive_regions(params.projection);
  for (TextEntity& txt : out.texts) {
    txt.global = Vec64(num::linear(params.text_adapter.data, txt.global.values()));
    for (Vec64& p : txt.phrases) p = Vec64(num::linear(params.text_adapter.data, p.values()));
  }
  return out;
}

ToyTrainingResult train_toy(const Corpus& corpus, const ToyTrainingOptions& o) {
  o.attention.validate();
  o.weights.validate();
  if (o.batch_size < 1) throw UsageError("train_toy: batch size must be at least 1");
  if (!(o.holdout_fraction > 0.0 && o.holdout_fraction < 1.0)) {
    throw UsageError("train_toy: holdout fraction must lie in (0, 1)");
  }
  if (!std::isfinite(o.lr) || o.lr < 0.0) throw UsageError("train_toy: lr must be >= 0");
  if (!(o.clip_norm >= 0.0)) throw UsageError("train_toy: clip norm must be >= 0");

  std::vector<std::uint64_t> ids = unique_identities(corpus);
  if (ids.size() < 2) throw UsageError("train_toy: corpus needs at least 2 identities");
  std::mt19937_64 rng(o.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_test = static_cast<std::size_t>(std::lround(o.holdout_fraction * static_cast<double>(ids.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);

  ToyTrainingResult result;
  result.test_identities.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  result.train_identities.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
  std::sort(result.test_identities.begin(), result.test_identities.end());
  std::sort(result.train_identities.begin(), result.train_identities.end());

  const Corpus train = subset(corpus, result.train_identities);
  const Corpus test = subset(corpus, result.test_identities);

  std::map<std::uint64_t, std::vector<std::size_t>> images_of;
  for (std::size_t i = 0; i < train.images.size(); ++i) {
    images_of[train.images[i].identity].push_back(i);
  }
  for (const TextEntity& t : train.texts) {
    if (images_of[t.identity].empty()) {
      throw UsageError("train_toy: text '" + t.id + "' has no image of its identity");
    }
  }

  Batch full;
  for (std::size_t t = 0; t < train.texts.size(); ++t) {
    const auto& pool = images_of[train.texts[t].identity];
    full.texts.push_back(train.texts[t]);
    full.images.push_back(train.images[pool[t % pool.size()]]);
  }

  result.params = TrainableParams::initial(corpus.manifest.dim, result.train_identities, o.seed + 1);

  auto record = [&](std::size_t epoch, double mean_batch_loss) {
    const double loss = total_loss(full, o.attention, o.weights, result.params).total;
    if (!std::isfinite(loss)) throw DivergenceError(epoch, "non-finite training loss");
    const TopKReport topk = held_out_eval(test, result.params, o);
    result.trace.push_back(EpochMetrics{epoch, loss, mean_batch_loss, topk.at_k(1), topk.at_k(5),
                                        topk.at_k(10)});
  };
  record(0, 0.0);

  std::vector<std::size_t> order(train.texts.size());
  for (std::size_t epoch = 1; epoch <= o.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double batch_loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += o.batch_size) {
      Batch batch;
      const std::size_t last = std::min(order.size(), first + o.batch_size);
      for (std::size_t i = first; i < last; ++i) {
        const TextEntity& txt = train.texts[order[i]];
        const auto& pool = images_of[txt.identity];
        const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
        batch.texts.push_back(txt);
        batch.images.push_back(train.images[pool[pick]]);
      }
      const LossGradient g = total_loss_gradient(batch, o.attention, o.weights, result.params);
      if (!std::isfinite(g.report.total)) throw DivergenceError(epoch, "non-finite batch loss");
      batch_loss_sum += g.report.total;
      ++batches;
      if (o.lr == 0.0) continue;
      double step = o.lr;
      if (o.clip_norm > 0.0) {
        const double norm = num::l2norm(std::span<const double>(g.gradient));
        if (norm > o.clip_norm) step *= o.clip_norm / norm;
      }
      std::vector<double> flat = result.params.flatten();
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= step * g.gradient[i];
      for (double v : flat) {
        if (!std::isfinite(v)) throw DivergenceError(epoch, "non-finite parameter after update");
      }
      result.params.assign(flat);
    }
    record(epoch, batch_loss_sum / static_cast<double>(std::max<std::size_t>(1, batches)));
  }
  return result;
}

}  // namespace xalign
