#include "xalign/alignment.hpp"

#include <string>

namespace xalign {
namespace {

void check_pair(const ImageEntity& img, const TextEntity& txt) {
  if (img.entities.size() != kEntityCount) {
    throw UsageError("image '" + img.id + "' does not carry 5 visual entities");
  }
  if (txt.phrases.empty()) throw UsageError("text '" + txt.id + "' has no phrases");
  if (img.dim() != txt.dim()) {
    throw UsageError("image '" + img.id + "' and text '" + txt.id + "' differ in dimension");
  }
}

}  // namespace

void AttentionConfig::validate() const {
  if (!(lambda1 > 0.0) || !(lambda1_prime > 0.0)) {
    throw UsageError("AttentionConfig: inverse temperatures must be positive");
  }
  if (!(eps_norm > 0.0 && eps_norm <= 1e-6)) {
    throw UsageError("AttentionConfig: eps_norm must lie in (0, 1e-6]");
  }
}

num::Cosine raw_similarity(const Vec64& entity, const Vec64& phrase) {
  return num::cosine(entity, phrase);
}

DirectionalScore<double> score_i2t(const ImageEntity& img, const TextEntity& txt,
                                   const AttentionConfig& cfg) {
  cfg.validate();
  check_pair(img, txt);
  return image_to_text(std::span<const Vec64>(img.entities), std::span<const Vec64>(txt.phrases),
                       cfg);
}

DirectionalScore<double> score_t2i(const ImageEntity& img, const TextEntity& txt,
                                   const AttentionConfig& cfg) {
  cfg.validate();
  check_pair(img, txt);
  return text_to_image(std::span<const Vec64>(img.entities), std::span<const Vec64>(txt.phrases),
                       cfg);
}

PairSimilarity score_pair(const ImageEntity& img, const TextEntity& txt,
                          const AttentionConfig& cfg) {
  auto forward = score_i2t(img, txt, cfg);
  auto backward = score_t2i(img, txt, cfg);
  return PairSimilarity{forward.score, backward.score, std::move(forward.terms),
                        std::move(backward.terms), forward.degenerate + backward.degenerate};
}

}  // namespace xalign
