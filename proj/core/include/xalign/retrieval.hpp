#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xalign/alignment.hpp"
#include "xalign/corpus.hpp"

namespace xalign {

enum class ScoreDirection { kImageToText, kTextToImage, kFused, kImage };

std::string_view to_string(ScoreDirection d);
ScoreDirection parse_direction(std::string_view s);

/// Query x gallery score table, row-major.
struct SimilarityMatrix {
  ScoreDirection direction = ScoreDirection::kFused;
  std::vector<std::string> query_ids;
  std::vector<std::string> gallery_ids;
  std::vector<double> scores;

  std::size_t rows() const noexcept { return query_ids.size(); }
  std::size_t cols() const noexcept { return gallery_ids.size(); }
  double at(std::size_t q, std::size_t g) const { return scores[q * cols() + g]; }
  std::span<const double> row(std::size_t q) const {
    return std::span<const double>(scores).subspan(q * cols(), cols());
  }

  void validate() const;  // UsageError on shape mismatch or non-finite entries
};

inline constexpr std::array<std::size_t, 3> kDefaultKs{1, 5, 10};

/// Texts rank the image gallery: beta * S(I, T) + (1 - beta) * S'(I, T).
/// Rows are filled in parallel; `threads == 0` uses the hardware concurrency.
SimilarityMatrix score_corpus(std::span<const TextEntity> queries,
                              std::span<const ImageEntity> gallery, const AttentionConfig& cfg = {},
                              double beta = 0.5, unsigned threads = 0);

/// Gallery indices ordered by descending score, ties by ascending index.
std::vector<std::size_t> ranking(std::span<const double> scores);

/// Same, with ties broken by ascending `tie_key` and then index.
std::vector<std::size_t> ranking(std::span<const double> scores,
                                 std::span<const std::size_t> tie_key);

/// Position of each gallery id in ascending id order; the tie key used by
/// topk_eval and rerank.
std::vector<std::size_t> gallery_id_order(const SimilarityMatrix& m);

struct TopKReport {
  std::vector<std::size_t> ks;
  std::vector<double> accuracy;         // parallel to ks
  std::vector<std::size_t> first_rank;  // 1-based; 0 for excluded queries
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // queries with no positive in the gallery

  double at_k(std::size_t k) const;  // UsageError if k was not evaluated
};

/// Ties rank by ascending gallery id.
/// `labels` is query x gallery (use MatchLabels::transposed() on image x text labels).
TopKReport topk_eval(const SimilarityMatrix& scores, const MatchLabels& labels,
                     std::span<const std::size_t> ks = kDefaultKs);

/// Gallery x gallery cosine matrix of image global embeddings.
SimilarityMatrix image_similarity(std::span<const ImageEntity> gallery);

struct RerankResult {
  SimilarityMatrix scores;
  std::size_t neighborhood = 0;  // j actually used
  bool clamped = false;          // requested j exceeded the gallery size
};

/// refined(q, g) = (1 - w) * S(q, g) + w * mean over the top-j gallery items
/// g' of q of S_gg(g, g').
RerankResult rerank(const SimilarityMatrix& query_gallery, const SimilarityMatrix& gallery_gallery,
                    std::size_t j, double w);

/// One "query_id<TAB>gallery_id<TAB>score" line per entry after a
/// "# direction=<name>" header. Scores keep full round-trip precision.
void write_similarity_table(std::ostream& out, const SimilarityMatrix& m);
SimilarityMatrix read_similarity_table(std::istream& in);

}  // namespace xalign
