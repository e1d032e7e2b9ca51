// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "xalign/alignment.hpp"
#include "xalign/corpus.hpp"
#include "xalign/errors.hpp"
#include "xalign/losses.hpp"
#include "xalign/retrieval.hpp"
#include "xalign/training.hpp"

using namespace xalign;
using num::Vec64;
using Json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Attention scores against the direct evaluator.
Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(2, 16), phrases(1, 10);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = dim(rng);
    const auto img = fixtures::random_image(rng, d);
    const auto txt = fixtures::random_text(rng, d, phrases(rng));
    const AttentionConfig cfg;
    const auto s = score_pair(img, txt, cfg);
    const auto ents = fixtures::oracle_entities(img);
    const auto phr = fixtures::to_mat(txt.phrases);
    worst = std::max(worst, std::abs(s.i2t - oracle::i2t(ents, phr, cfg.lambda1, cfg.eps_norm)));
    worst = std::max(worst, std::abs(s.t2i - oracle::t2i(ents, phr, cfg.lambda1_prime, cfg.eps_norm)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0, "max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.3f", secs) + " s"};
}

// 2. The two-dimensional worked instance.
Outcome worked_instance() {
  const std::vector<Vec64> e{Vec64{1, 0}};
  const std::vector<Vec64> p{Vec64{1, 0}, Vec64{0, 1}};
  AttentionConfig cfg;
  cfg.lambda1 = 1.0;
  cfg.lambda1_prime = 1.0;
  const double i2t = image_to_text(std::span<const Vec64>(e), std::span<const Vec64>(p), cfg).score;
  const double t2i = text_to_image(std::span<const Vec64>(e), std::span<const Vec64>(p), cfg).score;
  const bool ok = std::abs(i2t - 0.93851) <= 1e-5 && std::abs(t2i - 0.5) <= 1e-5;
  return {ok, "i2t " + fmt("%.10f", i2t) + ", t2i " + fmt("%.10f", t2i)};
}

// 3. Analytic gradients of the full objective against central differences.
Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t params = 0;
  bool shapes = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = make_gradcheck_case(seed);
    shapes = shapes && c.batch.images.size() <= 6 && c.params.dim() <= 8;
    const auto check = check_gradients(c.batch, AttentionConfig{}, LossWeights{}, c.params, 1e-5);
    worst = std::max(worst, check.max_rel_error);
    params += check.parameters;
  }
  const double secs = seconds_since(t0);
  return {shapes && worst <= 1e-4 && secs < 30.0,
          std::to_string(params) + " parameters, max rel error " + fmt("%.3g", worst) + ", " +
              fmt("%.2f", secs) + " s"};
}

// 4. Losses vanish at their targets, the scripted ACSA case, and the composition identity.
Outcome loss_sanity() {
  const double eps = 1e-8;
  double worst_zero = 0.0;

  // A single pair and a batch of identical pairs both put p exactly on q.
  for (std::size_t n : {1u, 4u}) {
    const std::vector<std::uint64_t> ids(n, 7);
    const std::vector<Vec64> v(n, Vec64{0.3, -0.2, 0.9});
    worst_zero = std::max(worst_zero, std::abs(cmpm_loss(v, v, labels_from_identities(ids, ids), eps)));
  }
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint64_t> id(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5;
    std::vector<std::uint64_t> ids(n);
    for (auto& v : ids) v = id(rng);
    const auto labels = labels_from_identities(ids, ids);
    const auto by_text = labels.transposed();
    BatchScores s{n, n, labels.q, std::vector<double>(n * n)};
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) s.t2i[a * n + b] = by_text.q_at(b, a);
    const auto t = acsa_loss(s, labels, eps);
    worst_zero = std::max({worst_zero, std::abs(t.i2t), std::abs(t.t2i)});
  }

  const std::vector<std::uint64_t> pair{1, 2};
  const auto ones = acsa_loss(BatchScores{2, 2, {1, 1, 1, 1}, {1, 1, 1, 1}}, labels_from_identities(pair, pair), eps);
  const double ones_err = std::max(std::abs(ones.i2t - 8.517193138830272), std::abs(ones.t2i - 8.517193138830272));

  double worst_compose = 0.0;
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int draw = 0; draw < 1000; ++draw) {
    LossWeights w;
    w.mu = u(rng);
    w.gamma = u(rng);
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const auto r = compose_losses(a, b, c, d, w);
    worst_compose = std::max(worst_compose, std::abs(r.total - (a + w.mu * b + w.gamma * (c + d))));
  }

  const bool ok = worst_zero <= 10 * eps && ones_err <= 1e-6 && worst_compose <= 1e-12;
  return {ok, "p==q max " + fmt("%.3g", worst_zero) + ", all-ones err " + fmt("%.3g", ones_err) +
                  ", composition err " + fmt("%.3g", worst_compose)};
}

// 5. Top-k against brute force, monotone in k, invariant to increasing maps.
Outcome retrieval_correctness() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::uint64_t> cls(0, 39);
  std::uniform_int_distribution<int> coarse(0, 30);
  std::vector<std::size_t> ks(200);
  std::iota(ks.begin(), ks.end(), std::size_t{1});
  std::size_t mismatches = 0, monotone_breaks = 0, transform_breaks = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SimilarityMatrix m;
    for (int q = 0; q < 50; ++q) m.query_ids.push_back("q" + std::to_string(q));
    for (int g = 0; g < 200; ++g) m.gallery_ids.push_back("g" + std::to_string(1000 + g));
    m.scores.resize(50 * 200);
    for (double& v : m.scores) v = trial % 2 == 0 ? coarse(rng) / 30.0 : std::normal_distribution<double>()(rng);
    std::vector<std::uint64_t> qi(50), gi(200);
    for (auto& v : qi) v = cls(rng);
    for (auto& v : gi) v = cls(rng);
    const auto labels = labels_from_identities(qi, gi);
    const auto r = topk_eval(m, labels, ks);

    std::vector<std::size_t> hits(ks.size(), 0);
    std::size_t evaluated = 0;
    for (std::size_t q = 0; q < 50; ++q) {
      std::vector<bool> pos(200);
      for (std::size_t g = 0; g < 200; ++g) pos[g] = labels.positive(q, g);
      const std::vector<double> row(m.scores.begin() + q * 200, m.scores.begin() + (q + 1) * 200);
      const std::size_t rank = oracle::first_positive_rank(row, pos, m.gallery_ids);
      if (rank != r.first_rank[q]) ++mismatches;
      if (rank == 0) continue;
      ++evaluated;
      for (std::size_t i = 0; i < ks.size(); ++i) hits[i] += rank <= ks[i] ? 1 : 0;
    }
    if (evaluated != r.evaluated) ++mismatches;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (r.accuracy[i] != static_cast<double>(hits[i]) / static_cast<double>(evaluated)) ++mismatches;
      if (i > 0 && r.accuracy[i] < r.accuracy[i - 1]) ++monotone_breaks;
    }

    auto mapped = m;
    for (double& v : mapped.scores) v = std::atan(2.0 * v) * 5.0 + 1.0;
    const auto rm = topk_eval(mapped, labels, ks);
    if (rm.accuracy != r.accuracy || rm.first_rank != r.first_rank) ++transform_breaks;
  }
  return {mismatches == 0 && monotone_breaks == 0 && transform_breaks == 0,
          std::to_string(mismatches) + " oracle mismatches, " + std::to_string(monotone_breaks) +
              " monotonicity breaks, " + std::to_string(transform_breaks) + " transform breaks"};
}

SyntheticOptions training_corpus(std::uint64_t seed) {
  SyntheticOptions o;
  o.n_identities = 20;
  o.imgs_per_id = 5;
  o.txts_per_id = 4;
  o.dim = 32;
  o.sigma = 0.05;
  o.map_strength = 2.0;
  o.seed = seed;
  return o;
}

ToyTrainingOptions training_options(std::uint64_t seed, double gamma) {
  ToyTrainingOptions t;
  t.epochs = 30;
  t.lr = 0.1;
  t.clip_norm = 5.0;
  t.batch_size = 16;
  t.seed = seed;
  t.weights.gamma = gamma;
  return t;
}

// 6. Held-out top-1 after training on the structured corpus.
Outcome desk_scale() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = generate_synthetic(training_corpus(1)).corpus;
  const auto r = train_toy(corpus, training_options(1, 0.1));
  const double secs = seconds_since(t0);
  const double top1 = r.trace.back().top1;
  return {top1 >= 0.95 && secs < 120.0,
          "top-1 " + fmt("%.3f", r.trace.front().top1) + " -> " + fmt("%.3f", top1) + " after " +
              std::to_string(r.trace.back().epoch) + " epochs, " + fmt("%.1f", secs) + " s"};
}

// 7. The cross-scale term helps on average.
Outcome ablation_direction() {
  double with = 0.0, without = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto corpus = generate_synthetic(training_corpus(seed)).corpus;
    with += train_toy(corpus, training_options(seed, 0.1)).trace.back().top1 / 5.0;
    without += train_toy(corpus, training_options(seed, 0.0)).trace.back().top1 / 5.0;
  }
  return {with >= without, "mean top-1 gamma=0.1 " + fmt("%.3f", with) + " vs gamma=0 " + fmt("%.3f", without)};
}

// 8. Neighborhood re-ranking does not hurt top-1 on clustered galleries.
Outcome rerank_direction() {
  double base = 0.0, refined = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticOptions o;
    o.imgs_per_id = 5;
    o.txts_per_id = 2;
    o.dim = 32;
    o.map_strength = 2.0;
    o.seed = seed;
    const auto corpus = generate_synthetic(o).corpus;
    const auto scores = score_corpus(corpus.texts, corpus.images);
    const auto labels = build_labels(corpus.images, corpus.texts).transposed();
    const auto rr = rerank(scores, image_similarity(corpus.images), 5, 0.3);
    base += topk_eval(scores, labels).at_k(1) / 5.0;
    refined += topk_eval(rr.scores, labels).at_k(1) / 5.0;
  }
  return {refined >= base, "mean top-1 w=0.3 " + fmt("%.3f", refined) + " vs w=0 " + fmt("%.3f", base)};
}

bool same_bits(const Vec64& a, const Vec64& b) {
  return a.dim() == b.dim() && std::memcmp(a.data().data(), b.data().data(), a.dim() * sizeof(double)) == 0;
}

// 9. Save/load is bit-exact and corrupted records are rejected by id.
Outcome format_round_trip() {
  std::size_t mismatched = 0, accepted = 0, misattributed = 0, mutations = 0;
  std::mt19937_64 rng(9);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticOptions o;
    o.n_identities = 6;
    o.imgs_per_id = 2;
    o.txts_per_id = 2;
    o.dim = 12;
    o.sigma = 0.5;
    o.seed = seed;
    const auto corpus = generate_synthetic(o).corpus;
    std::stringstream buf;
    write_corpus(buf, corpus);
    const std::string text = buf.str();
    const auto back = read_corpus(buf);
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
      bool ok = same_bits(corpus.images[i].global, back.images[i].global) && corpus.images[i].id == back.images[i].id;
      for (std::size_t s = 0; s < 6; ++s) ok = ok && same_bits(corpus.images[i].slices[s], back.images[i].slices[s]);
      mismatched += ok ? 0 : 1;
    }
    for (std::size_t t = 0; t < corpus.texts.size(); ++t) {
      bool ok = same_bits(corpus.texts[t].global, back.texts[t].global) &&
                corpus.texts[t].phrases.size() == back.texts[t].phrases.size();
      for (std::size_t j = 0; ok && j < corpus.texts[t].phrases.size(); ++j)
        ok = same_bits(corpus.texts[t].phrases[j], back.texts[t].phrases[j]);
      mismatched += ok ? 0 : 1;
    }

    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    for (std::size_t li = 1; li < lines.size(); ++li) {
      const Json original = Json::parse(lines[li]);
      const std::string id = original["id"];
      const char* group = original["type"] == "image" ? "slices" : "phrases";
      const std::vector<std::function<void(Json&)>> edits{
          [](Json& r) { r["global"].erase(0); },
          [&](Json& r) { r["global"][rng() % r["global"].size()] = "x"; },
          [](Json& r) { r["identity"] = -3; },
          [&](Json& r) { r[group][rng() % r[group].size()].push_back(1.0); },
          [&](Json& r) { r.erase(group); },
      };
      for (const auto& edit : edits) {
        ++mutations;
        Json r = original;
        edit(r);
        auto mutated = lines;
        mutated[li] = r.dump();
        std::string joined;
        for (const auto& l : mutated) joined += l + "\n";
        std::istringstream bad(joined);
        try {
          read_corpus(bad);
          ++accepted;
        } catch (const FormatError& e) {
          misattributed += e.record_id() == id ? 0 : 1;
        }
      }
    }
  }
  return {mismatched == 0 && accepted == 0 && misattributed == 0,
          std::to_string(mismatched) + " inexact records, " + std::to_string(mutations) + " mutations, " +
              std::to_string(accepted) + " accepted, " + std::to_string(misattributed) + " misattributed"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"oracle-equivalence", oracle_equivalence}, {"worked-instance", worked_instance},
      {"gradient-suite", gradient_suite},         {"loss-sanity", loss_sanity},
      {"retrieval-correctness", retrieval_correctness}, {"desk-scale-learning", desk_scale},
      {"ablation-direction", ablation_direction}, {"rerank-direction", rerank_direction},
      {"format-round-trip", format_round_trip},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
