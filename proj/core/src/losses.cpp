#include "xalign/losses.hpp"

#include <algorithm>

namespace xalign {

void LossWeights::validate() const {
  if (!(mu >= 0.0) || !(gamma >= 0.0)) throw UsageError("LossWeights: mu and gamma must be >= 0");
  if (!(eps_kl > 0.0 && eps_kl <= 1e-6)) throw UsageError("LossWeights: eps_kl must lie in (0, 1e-6]");
  if (!(lambda2 > 0.0)) throw UsageError("LossWeights: lambda2 must be positive");
}

std::size_t ClassWeights::index_of(std::uint64_t identity) const {
  auto it = std::find(identities.begin(), identities.end(), identity);
  if (it == identities.end()) {
    throw UsageError("unknown identity " + std::to_string(identity) + " for class weights");
  }
  return static_cast<std::size_t>(it - identities.begin());
}

std::vector<std::size_t> ClassWeights::indices_of(std::span<const std::uint64_t> ids) const {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (std::uint64_t id : ids) out.push_back(index_of(id));
  return out;
}

BatchScores score_batch(std::span<const ImageEntity> images, std::span<const TextEntity> texts,
                        const AttentionConfig& cfg) {
  BatchScores s;
  s.rows = images.size();
  s.cols = texts.size();
  s.i2t.resize(s.rows * s.cols);
  s.t2i.resize(s.rows * s.cols);
  for (std::size_t a = 0; a < s.rows; ++a) {
    for (std::size_t b = 0; b < s.cols; ++b) {
      const PairSimilarity p = score_pair(images[a], texts[b], cfg);
      s.i2t[a * s.cols + b] = p.i2t;
      s.t2i[a * s.cols + b] = p.t2i;
    }
  }
  return s;
}

double cmpm_loss(std::span<const Vec64> img_globals, std::span<const Vec64> txt_globals,
                 const MatchLabels& labels, double eps_kl, double lambda2) {
  return cmpm_loss_generic(img_globals, txt_globals, labels, eps_kl, lambda2);
}

double cmpc_loss(std::span<const Vec64> img_globals, std::span<const Vec64> txt_globals,
                 std::span<const std::uint64_t> identities, const ClassWeights& class_weights) {
  if (class_weights.weights.cols != class_weights.identities.size()) {
    throw UsageError("cmpc_loss: one weight column per identity required");
  }
  const std::vector<std::size_t> classes = class_weights.indices_of(identities);
  return cmpc_loss_generic(img_globals, txt_globals, std::span<const std::size_t>(classes),
                           std::span<const double>(class_weights.weights.data),
                           class_weights.weights.cols);
}

AcsaTerms acsa_loss(const BatchScores& scores, const MatchLabels& labels, double eps_kl) {
  if (scores.rows != labels.rows || scores.cols != labels.cols) {
    throw UsageError("acsa_loss: score and label shapes disagree");
  }
  return acsa_loss_generic(std::span<const double>(scores.i2t), std::span<const double>(scores.t2i),
                           labels, eps_kl);
}

}  // namespace xalign
