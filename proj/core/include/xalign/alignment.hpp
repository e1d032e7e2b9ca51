#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "xalign/corpus.hpp"
#include "xalign/errors.hpp"
#include "xalign/numerics.hpp"

namespace xalign {

struct AttentionConfig {
  double lambda1 = 20.0;        // image -> text softmax inverse temperature
  double lambda1_prime = 20.0;  // text -> image
  double eps_norm = 1e-12;      // guard inside the clamped-similarity normalizer

  void validate() const;
};

/// One direction of cross-attention: the averaged score and the per-entity
/// (image->text) or per-phrase (text->image) terms it averages.
template <class S>
struct DirectionalScore {
  S score{};
  std::vector<S> terms;
  std::size_t degenerate = 0;  // cosines that hit a zero vector
};

struct PairSimilarity {
  double i2t = 0.0;
  double t2i = 0.0;
  std::vector<double> entity_terms;
  std::vector<double> phrase_terms;
  std::size_t degenerate = 0;
};

namespace detail {

template <class V, class S = num::scalar_of_t<V>>
std::vector<S> clamped_similarities(std::span<const V> entities, std::span<const V> phrases,
                                    std::size_t& degenerate) {
  if (entities.empty() || phrases.empty()) {
    throw UsageError("cross-attention needs at least one entity and one phrase");
  }
  const std::size_t m = phrases.size();
  std::vector<S> s(entities.size() * m);
  for (std::size_t i = 0; i < entities.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      auto c = num::cosine(entities[i], phrases[j]);
      degenerate += c.degenerate ? 1 : 0;
      s[i * m + j] = num::clamp_plus(c.value);
    }
  }
  return s;
}

}  // namespace detail

/// Image -> text score. For each visual entity v_i the clamped cosines to the
/// phrases are normalized across entities, softmaxed over phrases with
/// lambda1, used to pool a text vector T_i, and scored as cos(v_i, T_i).
template <class V, class S = num::scalar_of_t<V>>
DirectionalScore<S> image_to_text(std::span<const V> entities, std::span<const V> phrases,
                                  const AttentionConfig& cfg) {
  using std::sqrt;
  using num::sqrt;
  DirectionalScore<S> out;
  const std::size_t k = entities.size();
  const std::size_t m = phrases.size();
  const std::vector<S> s = detail::clamped_similarities(entities, phrases, out.degenerate);

  std::vector<S> col_norm(m);
  for (std::size_t j = 0; j < m; ++j) {
    S acc = S(cfg.eps_norm);
    for (std::size_t i = 0; i < k; ++i) acc = acc + s[i * m + j] * s[i * m + j];
    col_norm[j] = sqrt(acc);
  }

  S total = S(0.0);
  out.terms.reserve(k);
  std::vector<S> logits(m);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < m; ++j) logits[j] = s[i * m + j] / col_norm[j];
    const std::vector<S> alpha = num::softmax(std::span<const S>(logits), cfg.lambda1);
    const std::vector<S> attended = num::weighted_sum(std::span<const S>(alpha), phrases);
    auto c = num::cosine(entities[i], attended);
    out.degenerate += c.degenerate ? 1 : 0;
    out.terms.push_back(c.value);
    total = total + c.value;
  }
  out.score = total / static_cast<double>(k);
  return out;
}

/// Text -> image score, the mirror of image_to_text: clamped cosines are
/// normalized across phrases, softmaxed over entities with lambda1_prime, and
/// each phrase is scored against its attended visual vector.
template <class V, class S = num::scalar_of_t<V>>
DirectionalScore<S> text_to_image(std::span<const V> entities, std::span<const V> phrases,
                                  const AttentionConfig& cfg) {
  using std::sqrt;
  using num::sqrt;
  DirectionalScore<S> out;
  const std::size_t k = entities.size();
  const std::size_t m = phrases.size();
  const std::vector<S> s = detail::clamped_similarities(entities, phrases, out.degenerate);

  std::vector<S> row_norm(k);
  for (std::size_t i = 0; i < k; ++i) {
    S acc = S(cfg.eps_norm);
    for (std::size_t j = 0; j < m; ++j) acc = acc + s[i * m + j] * s[i * m + j];
    row_norm[i] = sqrt(acc);
  }

  S total = S(0.0);
  out.terms.reserve(m);
  std::vector<S> logits(k);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < k; ++i) logits[i] = s[i * m + j] / row_norm[i];
    const std::vector<S> alpha = num::softmax(std::span<const S>(logits), cfg.lambda1_prime);
    const std::vector<S> attended = num::weighted_sum(std::span<const S>(alpha), entities);
    auto c = num::cosine(phrases[j], attended);
    out.degenerate += c.degenerate ? 1 : 0;
    out.terms.push_back(c.value);
    total = total + c.value;
  }
  out.score = total / static_cast<double>(m);
  return out;
}

/// Cosine between one visual entity and one phrase.
num::Cosine raw_similarity(const Vec64& entity, const Vec64& phrase);

DirectionalScore<double> score_i2t(const ImageEntity& img, const TextEntity& txt,
                                   const AttentionConfig& cfg = {});
DirectionalScore<double> score_t2i(const ImageEntity& img, const TextEntity& txt,
                                   const AttentionConfig& cfg = {});
PairSimilarity score_pair(const ImageEntity& img, const TextEntity& txt,
                          const AttentionConfig& cfg = {});

}  // namespace xalign
