// xalign command-line front end.
//
// Reports are one `name=value` per line; --pretty adds aligned tables.
// Exit codes: 0 success, 1 failed verification, 2 input error.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "xalign/alignment.hpp"
#include "xalign/corpus.hpp"
#include "xalign/errors.hpp"
#include "xalign/losses.hpp"
#include "xalign/retrieval.hpp"
#include "xalign/training.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitInput = 2;

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void emit(const std::string& name, double v) { std::cout << name << '=' << fmt(v) << '\n'; }
void emit(const std::string& name, std::size_t v) { std::cout << name << '=' << v << '\n'; }
void emit(const std::string& name, const std::string& v) { std::cout << name << '=' << v << '\n'; }

struct CommonFlags {
  std::string corpus;
  std::string scores;
  std::string out;
  double beta = 0.5;
  unsigned threads = 0;
  bool pretty = false;
  xalign::AttentionConfig attention;
  xalign::LossWeights weights;
  std::vector<std::size_t> ks{1, 5, 10};
};

void add_attention(CLI::App* app, CommonFlags& f) {
  app->add_option("--lambda1", f.attention.lambda1, "Image-to-text inverse temperature");
  app->add_option("--lambda1-prime", f.attention.lambda1_prime, "Text-to-image inverse temperature");
  app->add_option("--eps-norm", f.attention.eps_norm, "Guard in the attention normalizer");
}

void add_weights(CLI::App* app, CommonFlags& f) {
  app->add_option("--mu", f.weights.mu, "CMPC weight");
  app->add_option("--gamma", f.weights.gamma, "Cross-scale loss weight");
  app->add_option("--eps-kl", f.weights.eps_kl, "KL guard");
  app->add_option("--lambda2", f.weights.lambda2, "CMPM logit scale");
}

xalign::MatchLabels query_labels(const xalign::Corpus& c) {
  return xalign::labels_from_identities(xalign::identities_of(std::span(c.texts)),
                                        xalign::identities_of(std::span(c.images)));
}

xalign::SimilarityMatrix read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw xalign::UsageError("cannot open score table '" + path + "'");
  return xalign::read_similarity_table(in);
}

// Labels for a score table whose rows and columns name corpus texts and images.
xalign::MatchLabels table_labels(const xalign::SimilarityMatrix& m, const xalign::Corpus& c) {
  std::unordered_map<std::string, std::uint64_t> text_id, image_id;
  for (const auto& t : c.texts) text_id.emplace(t.id, t.identity);
  for (const auto& i : c.images) image_id.emplace(i.id, i.identity);
  std::vector<std::uint64_t> rows, cols;
  for (const auto& q : m.query_ids) {
    auto it = text_id.find(q);
    if (it == text_id.end()) throw xalign::FormatError(q, "query id not found in corpus texts");
    rows.push_back(it->second);
  }
  for (const auto& g : m.gallery_ids) {
    auto it = image_id.find(g);
    if (it == image_id.end()) throw xalign::FormatError(g, "gallery id not found in corpus images");
    cols.push_back(it->second);
  }
  return xalign::labels_from_identities(rows, cols);
}

xalign::SimilarityMatrix scores_for(const CommonFlags& f, const xalign::Corpus& c) {
  if (!f.scores.empty()) return read_scores(f.scores);
  return xalign::score_corpus(c.texts, c.images, f.attention, f.beta, f.threads);
}

void emit_topk(const xalign::TopKReport& r, const std::string& prefix = "") {
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    emit(prefix + "top" + std::to_string(r.ks[i]), r.accuracy[i]);
  }
  emit(prefix + "evaluated", r.evaluated);
  emit(prefix + "excluded", r.excluded);
}

void pretty_topk(const xalign::TopKReport& r, const std::string& title) {
  std::printf("\n%-12s", title.c_str());
  for (std::size_t k : r.ks) std::printf("  top-%-4zu", k);
  std::printf("\n%-12s", "");
  for (double a : r.accuracy) std::printf("  %7.2f%%", 100.0 * a);
  std::printf("\n");
}

int run_gen(const xalign::SyntheticOptions& o, const std::string& out) {
  const auto synth = xalign::generate_synthetic(o);
  if (out.empty() || out == "-") {
    xalign::write_corpus(std::cout, synth.corpus);
  } else {
    xalign::save_corpus(out, synth.corpus);
    emit("images", synth.corpus.images.size());
    emit("texts", synth.corpus.texts.size());
    emit("dim", synth.corpus.manifest.dim);
    emit("out", out);
  }
  return kExitOk;
}

int run_score(const CommonFlags& f) {
  const auto corpus = xalign::load_corpus(f.corpus);
  const auto m = xalign::score_corpus(corpus.texts, corpus.images, f.attention, f.beta, f.threads);
  if (f.out.empty() || f.out == "-") {
    xalign::write_similarity_table(std::cout, m);
    return kExitOk;
  }
  std::ofstream out(f.out, std::ios::binary);
  if (!out) throw xalign::UsageError("cannot write '" + f.out + "'");
  xalign::write_similarity_table(out, m);
  emit("direction", std::string(xalign::to_string(m.direction)));
  emit("queries", m.rows());
  emit("gallery", m.cols());
  emit("out", f.out);
  return kExitOk;
}

int run_eval(const CommonFlags& f) {
  const auto corpus = xalign::load_corpus(f.corpus);
  const auto m = scores_for(f, corpus);
  const auto labels = f.scores.empty() ? query_labels(corpus) : table_labels(m, corpus);
  const auto report = xalign::topk_eval(m, labels, f.ks);
  emit("direction", std::string(xalign::to_string(m.direction)));
  emit_topk(report);
  if (f.pretty) pretty_topk(report, "retrieval");
  return kExitOk;
}

int run_rerank(const CommonFlags& f, std::size_t j, double w) {
  const auto corpus = xalign::load_corpus(f.corpus);
  const auto m = scores_for(f, corpus);
  const auto labels = f.scores.empty() ? query_labels(corpus) : table_labels(m, corpus);

  std::unordered_map<std::string, std::size_t> image_at;
  for (std::size_t i = 0; i < corpus.images.size(); ++i) image_at.emplace(corpus.images[i].id, i);
  std::vector<xalign::ImageEntity> gallery;
  for (const auto& g : m.gallery_ids) gallery.push_back(corpus.images[image_at.at(g)]);
  const auto gg = xalign::image_similarity(gallery);

  const auto result = xalign::rerank(m, gg, j, w);
  const auto before = xalign::topk_eval(m, labels, f.ks);
  const auto after = xalign::topk_eval(result.scores, labels, f.ks);
  emit("j", result.neighborhood);
  emit("w", w);
  if (result.clamped) emit("j_clamped", std::size_t{1});
  emit_topk(before, "base_");
  emit_topk(after, "rerank_");
  if (!f.out.empty()) {
    std::ofstream out(f.out, std::ios::binary);
    if (!out) throw xalign::UsageError("cannot write '" + f.out + "'");
    xalign::write_similarity_table(out, result.scores);
  }
  if (f.pretty) {
    pretty_topk(before, "base");
    pretty_topk(after, "reranked");
  }
  return kExitOk;
}

int run_train(const CommonFlags& f, xalign::ToyTrainingOptions o, bool trace) {
  const auto corpus = xalign::load_corpus(f.corpus);
  o.attention = f.attention;
  o.weights = f.weights;
  o.beta = f.beta;
  const auto result = xalign::train_toy(corpus, o);
  const auto& first = result.trace.front();
  const auto& last = result.trace.back();
  emit("train_identities", result.train_identities.size());
  emit("test_identities", result.test_identities.size());
  emit("epochs", last.epoch);
  emit("initial_loss", first.loss);
  emit("final_loss", last.loss);
  emit("initial_top1", first.top1);
  emit("top1", last.top1);
  emit("top5", last.top5);
  emit("top10", last.top10);
  if (trace) {
    for (const auto& e : result.trace) {
      const std::string p = "epoch" + std::to_string(e.epoch) + "_";
      emit(p + "loss", e.loss);
      emit(p + "top1", e.top1);
    }
  }
  if (f.pretty) {
    std::printf("\n%6s  %12s  %12s  %7s  %7s  %7s\n", "epoch", "loss", "batch_loss", "top1",
                "top5", "top10");
    for (const auto& e : result.trace) {
      std::printf("%6zu  %12.6f  %12.6f  %6.2f%%  %6.2f%%  %6.2f%%\n", e.epoch, e.loss,
                  e.mean_batch_loss, 100 * e.top1, 100 * e.top5, 100 * e.top10);
    }
  }
  return kExitOk;
}

int run_gradcheck(const CommonFlags& f, std::size_t seeds, std::uint64_t first_seed, double tol,
                  double h) {
  double worst = 0.0;
  std::size_t worst_seed = first_seed;
  std::size_t parameters = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = first_seed + s;
    const auto c = xalign::make_gradcheck_case(seed);
    const auto check = xalign::check_gradients(c.batch, f.attention, f.weights, c.params, h);
    parameters += check.parameters;
    if (f.pretty) {
      std::printf("seed %-6llu params %-6zu max_rel_error %.3e\n",
                  static_cast<unsigned long long>(seed), check.parameters, check.max_rel_error);
    }
    if (s == 0 || check.max_rel_error > worst) {
      worst = check.max_rel_error;
      worst_seed = seed;
    }
  }
  emit("seeds", seeds);
  emit("parameters", parameters);
  emit("max_rel_error", worst);
  emit("worst_seed", worst_seed);
  emit("tolerance", tol);
  const bool pass = worst <= tol;
  emit("status", std::string(pass ? "pass" : "fail"));
  return pass ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-scale text/image alignment toolkit"};
  app.require_subcommand(1);
  CommonFlags f;

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic identity corpus");
  xalign::SyntheticOptions so;
  std::string gen_out;
  gen->add_option("--identities", so.n_identities, "Number of identities")->check(CLI::PositiveNumber);
  gen->add_option("--imgs", so.imgs_per_id, "Images per identity")->check(CLI::PositiveNumber);
  gen->add_option("--txts", so.txts_per_id, "Texts per identity")->check(CLI::PositiveNumber);
  gen->add_option("--dim", so.dim, "Embedding dimension (>= 4)")->check(CLI::Range(std::size_t{4}, std::size_t{1} << 20));
  gen->add_option("--sigma", so.sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", so.seed, "Random seed");
  gen->add_option("--m-max", so.m_max, "Maximum phrases per text");
  gen->add_option("--min-phrases", so.min_phrases, "Minimum phrases drawn per text");
  gen->add_option("--max-phrases", so.max_phrases, "Maximum phrases drawn per text");
  gen->add_option("--map-strength", so.map_strength, "Distance of the text map from identity");
  gen->add_option("--out,-o", gen_out, "Output path ('-' for stdout)");

  auto* score = app.add_subcommand("score", "Score every text against every image");
  score->add_option("--corpus,-c", f.corpus, "Corpus file")->required();
  score->add_option("--out,-o", f.out, "Score table path ('-' for stdout)");

  auto* eval = app.add_subcommand("eval", "Top-k retrieval accuracy");
  eval->add_option("--corpus,-c", f.corpus, "Corpus file")->required();
  eval->add_option("--scores", f.scores, "Precomputed score table");
  eval->add_option("--ks", f.ks, "Cutoffs")->delimiter(',');

  auto* rr = app.add_subcommand("rerank", "Neighborhood re-ranking of text-to-image scores");
  std::size_t j = 5;
  double w = 0.3;
  rr->add_option("--corpus,-c", f.corpus, "Corpus file")->required();
  rr->add_option("--scores", f.scores, "Precomputed score table");
  rr->add_option("--j", j, "Neighborhood size")->check(CLI::PositiveNumber);
  rr->add_option("--w", w, "Neighborhood weight")->check(CLI::Range(0.0, 1.0));
  rr->add_option("--ks", f.ks, "Cutoffs")->delimiter(',');
  rr->add_option("--out,-o", f.out, "Write the reranked score table");

  auto* train = app.add_subcommand("train-toy", "Gradient descent on a corpus, held-out eval");
  xalign::ToyTrainingOptions to;
  bool trace = false;
  train->add_option("--corpus,-c", f.corpus, "Corpus file")->required();
  train->add_option("--epochs", to.epochs, "Epochs");
  train->add_option("--lr", to.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  train->add_option("--batch", to.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--holdout", to.holdout_fraction, "Share of identities held out");
  train->add_option("--seed", to.seed, "Random seed");
  train->add_option("--clip", to.clip_norm, "Gradient norm clip (0 disables)")->check(CLI::NonNegativeNumber);
  train->add_flag("--trace", trace, "Print per-epoch metrics");
  add_weights(train, f);

  auto* grad = app.add_subcommand("gradcheck", "Compare gradients with finite differences");
  std::size_t seeds = 20;
  std::uint64_t first_seed = 0;
  double tol = 1e-4;
  double h = 1e-5;
  grad->add_option("--seeds", seeds, "Number of seeded batches")->check(CLI::PositiveNumber);
  grad->add_option("--first-seed", first_seed, "First seed");
  grad->add_option("--tol", tol, "Relative error tolerance");
  grad->add_option("--fd-step", h, "Finite-difference step");
  add_weights(grad, f);

  for (auto* sub : {score, eval, rr, train, grad}) add_attention(sub, f);
  for (auto* sub : {score, eval, rr, train}) {
    sub->add_option("--beta", f.beta, "Fusion weight on image-to-text")->check(CLI::Range(0.0, 1.0));
  }
  for (auto* sub : {score, eval, rr}) sub->add_option("--threads", f.threads, "Scoring threads");
  for (auto* sub : {eval, rr, train, grad}) sub->add_flag("--pretty", f.pretty, "Human-readable tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    f.attention.validate();
    f.weights.validate();
    if (gen->parsed()) return run_gen(so, gen_out);
    if (score->parsed()) return run_score(f);
    if (eval->parsed()) return run_eval(f);
    if (rr->parsed()) return run_rerank(f, j, w);
    if (train->parsed()) return run_train(f, to, trace);
    if (grad->parsed()) return run_gradcheck(f, seeds, first_seed, tol, h);
  } catch (const xalign::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitInput;
  } catch (const xalign::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitInput;
  } catch (const xalign::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
