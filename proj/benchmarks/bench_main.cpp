#include <benchmark/benchmark.h>

#include "xalign/alignment.hpp"
#include "xalign/corpus.hpp"
#include "xalign/retrieval.hpp"
#include "xalign/training.hpp"

using namespace xalign;

namespace {

Corpus corpus_of(std::size_t identities, std::size_t dim) {
  SyntheticOptions o;
  o.n_identities = identities;
  o.dim = dim;
  o.seed = 11;
  return generate_synthetic(o).corpus;
}

}  // namespace

static void BM_ScorePair(benchmark::State& state) {
  const auto c = corpus_of(2, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(score_pair(c.images[0], c.texts[0]));
}
BENCHMARK(BM_ScorePair)->Arg(64)->Arg(256)->Arg(768);

static void BM_ScoreCorpus(benchmark::State& state) {
  const auto c = corpus_of(static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(score_corpus(c.texts, c.images));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(c.texts.size() * c.images.size()));
}
BENCHMARK(BM_ScoreCorpus)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_TotalLossGradient(benchmark::State& state) {
  const auto g = make_gradcheck_case(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(total_loss_gradient(g.batch, AttentionConfig{}, LossWeights{}, g.params));
  }
}
BENCHMARK(BM_TotalLossGradient)->Arg(0)->Arg(7);

BENCHMARK_MAIN();
