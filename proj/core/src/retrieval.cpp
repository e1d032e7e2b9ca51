#include "xalign/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <thread>
#include <unordered_map>

#include "xalign/errors.hpp"

namespace xalign {

std::string_view to_string(ScoreDirection d) {
  switch (d) {
    case ScoreDirection::kImageToText: return "i2t";
    case ScoreDirection::kTextToImage: return "t2i";
    case ScoreDirection::kFused: return "fused";
    case ScoreDirection::kImage: return "image";
  }
  return "fused";
}

ScoreDirection parse_direction(std::string_view s) {
  if (s == "i2t") return ScoreDirection::kImageToText;
  if (s == "t2i") return ScoreDirection::kTextToImage;
  if (s == "fused") return ScoreDirection::kFused;
  if (s == "image") return ScoreDirection::kImage;
  throw UsageError("unknown score direction '" + std::string(s) + "'");
}

void SimilarityMatrix::validate() const {
  if (scores.size() != rows() * cols()) throw UsageError("SimilarityMatrix: shape mismatch");
  for (double s : scores) {
    if (!std::isfinite(s)) throw UsageError("SimilarityMatrix: non-finite score");
  }
}

SimilarityMatrix score_corpus(std::span<const TextEntity> queries,
                              std::span<const ImageEntity> gallery, const AttentionConfig& cfg,
                              double beta, unsigned threads) {
  if (queries.empty() || gallery.empty()) throw UsageError("score_corpus: empty query or gallery");
  if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("score_corpus: beta must lie in [0, 1]");
  cfg.validate();

  SimilarityMatrix m;
  m.direction = beta == 1.0   ? ScoreDirection::kImageToText
                : beta == 0.0 ? ScoreDirection::kTextToImage
                              : ScoreDirection::kFused;
  for (const TextEntity& t : queries) m.query_ids.push_back(t.id);
  for (const ImageEntity& g : gallery) m.gallery_ids.push_back(g.id);
  m.scores.resize(queries.size() * gallery.size());

  auto fill_rows = [&](std::size_t first, std::size_t last) {
    for (std::size_t q = first; q < last; ++q) {
      for (std::size_t g = 0; g < gallery.size(); ++g) {
        double s = 0.0;
        if (beta > 0.0) s += beta * score_i2t(gallery[g], queries[q], cfg).score;
        if (beta < 1.0) s += (1.0 - beta) * score_t2i(gallery[g], queries[q], cfg).score;
        m.scores[q * gallery.size() + g] = s;
      }
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(threads, queries.size());
  if (workers <= 1) {
    fill_rows(0, queries.size());
    return m;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (queries.size() + workers - 1) / workers;
  for (std::size_t first = 0; first < queries.size(); first += chunk) {
    pool.emplace_back(fill_rows, first, std::min(queries.size(), first + chunk));
  }
  pool.clear();  // joins
  return m;
}

std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> ranking(std::span<const double> scores,
                                 std::span<const std::size_t> tie_key) {
  if (tie_key.size() != scores.size()) throw UsageError("ranking: tie key size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return tie_key[a] != tie_key[b] ? tie_key[a] < tie_key[b] : a < b;
  });
  return order;
}

std::vector<std::size_t> gallery_id_order(const SimilarityMatrix& m) {
  std::vector<std::size_t> by_id(m.cols());
  std::iota(by_id.begin(), by_id.end(), 0);
  std::stable_sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) {
    return m.gallery_ids[a] < m.gallery_ids[b];
  });
  std::vector<std::size_t> key(m.cols());
  for (std::size_t r = 0; r < by_id.size(); ++r) key[by_id[r]] = r;
  return key;
}

double TopKReport::at_k(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return accuracy[i];
  }
  throw UsageError("top-" + std::to_string(k) + " was not evaluated");
}

TopKReport topk_eval(const SimilarityMatrix& scores, const MatchLabels& labels,
                     std::span<const std::size_t> ks) {
  if (labels.rows != scores.rows() || labels.cols != scores.cols()) {
    throw UsageError("topk_eval: labels do not match the score matrix shape");
  }
  TopKReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.accuracy.assign(ks.size(), 0.0);
  report.first_rank.assign(scores.rows(), 0);
  std::vector<std::size_t> hits(ks.size(), 0);
  const std::vector<std::size_t> tie_key = gallery_id_order(scores);
  for (std::size_t q = 0; q < scores.rows(); ++q) {
    if (!labels.row_has_positive(q)) {
      ++report.excluded;
      continue;
    }
    ++report.evaluated;
    const auto order = ranking(scores.row(q), tie_key);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (labels.positive(q, order[pos])) {
        report.first_rank[q] = pos + 1;
        break;
      }
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (report.first_rank[q] <= ks[i]) ++hits[i];
    }
  }
  if (report.evaluated > 0) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      report.accuracy[i] = static_cast<double>(hits[i]) / static_cast<double>(report.evaluated);
    }
  }
  return report;
}

SimilarityMatrix image_similarity(std::span<const ImageEntity> gallery) {
  SimilarityMatrix m;
  m.direction = ScoreDirection::kImage;
  for (const ImageEntity& g : gallery) m.gallery_ids.push_back(g.id);
  m.query_ids = m.gallery_ids;
  const std::size_t n = gallery.size();
  m.scores.resize(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const double c = num::cosine(gallery[a].global, gallery[b].global).value;
      m.scores[a * n + b] = c;
      m.scores[b * n + a] = c;
    }
  }
  return m;
}

RerankResult rerank(const SimilarityMatrix& qg, const SimilarityMatrix& gg, std::size_t j,
                    double w) {
  const std::size_t n = qg.cols();
  if (gg.rows() != n || gg.cols() != n) {
    throw UsageError("rerank: gallery matrix must be square over the query matrix's gallery");
  }
  if (j < 1) throw UsageError("rerank: neighborhood size must be at least 1");
  if (!(w >= 0.0 && w <= 1.0)) throw UsageError("rerank: fusion weight must lie in [0, 1]");

  RerankResult out;
  out.clamped = j > n;
  out.neighborhood = std::min(j, n);
  out.scores = qg;
  const std::vector<std::size_t> tie_key = gallery_id_order(qg);
  for (std::size_t q = 0; q < qg.rows(); ++q) {
    const auto order = ranking(qg.row(q), tie_key);
    for (std::size_t g = 0; g < n; ++g) {
      double neighborhood = 0.0;
      for (std::size_t i = 0; i < out.neighborhood; ++i) neighborhood += gg.at(g, order[i]);
      neighborhood /= static_cast<double>(out.neighborhood);
      out.scores.scores[q * n + g] = (1.0 - w) * qg.at(q, g) + w * neighborhood;
    }
  }
  return out;
}

void write_similarity_table(std::ostream& out, const SimilarityMatrix& m) {
  m.validate();
  out << "# direction=" << to_string(m.direction) << '\n';
  char buf[32];
  for (std::size_t q = 0; q < m.rows(); ++q) {
    for (std::size_t g = 0; g < m.cols(); ++g) {
      auto res = std::to_chars(buf, buf + sizeof(buf), m.at(q, g));
      out << m.query_ids[q] << '\t' << m.gallery_ids[g] << '\t'
          << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
    }
  }
}

SimilarityMatrix read_similarity_table(std::istream& in) {
  SimilarityMatrix m;
  std::unordered_map<std::string, std::size_t> query_index, gallery_index;
  struct Entry {
    std::size_t q, g;
    double score;
  };
  std::vector<Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string key = "# direction=";
      if (line.rfind(key, 0) == 0) {
        try {
          m.direction = parse_direction(line.substr(key.size()));
        } catch (const UsageError& e) {
          throw FormatError(where, e.what());
        }
        have_header = true;
      }
      continue;
    }
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) throw FormatError(where, "expected three tab-separated fields");
    const std::string qid = line.substr(0, tab1);
    const std::string gid = line.substr(tab1 + 1, tab2 - tab1 - 1);
    const std::string value = line.substr(tab2 + 1);
    double score = 0.0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), score);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(score)) {
      throw FormatError(where, "invalid score '" + value + "'");
    }
    auto [qi, q_new] = query_index.try_emplace(qid, m.query_ids.size());
    if (q_new) m.query_ids.push_back(qid);
    auto [gi, g_new] = gallery_index.try_emplace(gid, m.gallery_ids.size());
    if (g_new) m.gallery_ids.push_back(gid);
    entries.push_back({qi->second, gi->second, score});
  }
  if (!have_header) throw FormatError("line 1", "missing '# direction=' header");
  const std::size_t rows = m.query_ids.size();
  const std::size_t cols = m.gallery_ids.size();
  if (entries.size() != rows * cols) {
    throw FormatError("table", "expected a complete " + std::to_string(rows) + "x" +
                                   std::to_string(cols) + " grid, got " +
                                   std::to_string(entries.size()) + " entries");
  }
  m.scores.assign(rows * cols, 0.0);
  std::vector<std::uint8_t> seen(rows * cols, 0);
  for (const Entry& e : entries) {
    if (seen[e.q * cols + e.g]++ != 0) {
      throw FormatError(m.query_ids[e.q], "duplicate entry for gallery '" + m.gallery_ids[e.g] + "'");
    }
    m.scores[e.q * cols + e.g] = e.score;
  }
  return m;
}

}  // namespace xalign
