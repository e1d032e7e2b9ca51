#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "xalign/corpus.hpp"
#include "xalign/errors.hpp"

namespace xalign {
namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian(Rng& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  for (double& x : v) x = scale * n(rng);
  return v;
}

Vec64 noisy(const std::vector<double>& base, double sigma, Rng& rng) {
  std::vector<double> v = base;
  if (sigma > 0.0) {
    std::normal_distribution<double> n(0.0, sigma);
    for (double& x : v) x += n(rng);
  }
  return Vec64(std::move(v));
}

// Orthonormalizes the columns of I + strength * G / sqrt(d).
num::Matrix random_orthogonal(std::size_t d, double strength, Rng& rng) {
  num::Matrix m = num::Matrix::identity(d);
  if (strength != 0.0) {
    const auto g = gaussian(rng, d * d, strength / std::sqrt(static_cast<double>(d)));
    for (std::size_t i = 0; i < d * d; ++i) m.data[i] += g[i];
  }
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t prev = 0; prev < c; ++prev) {
      double proj = 0.0;
      for (std::size_t r = 0; r < d; ++r) proj += m.at(r, c) * m.at(r, prev);
      for (std::size_t r = 0; r < d; ++r) m.at(r, c) -= proj * m.at(r, prev);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d; ++r) norm += m.at(r, c) * m.at(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < d; ++r) m.at(r, c) /= norm;
  }
  return m;
}

std::vector<double> map_through(const num::Matrix& m, const std::vector<double>& x) {
  return num::linear(m.data, x);
}

std::string entity_id(const char* prefix, std::size_t identity, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%05zu_%02zu", prefix, identity, index);
  return buf;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  if (o.n_identities < 1 || o.imgs_per_id < 1 || o.txts_per_id < 1) {
    throw UsageError("generate_synthetic: counts must be at least 1");
  }
  if (o.dim < 4) throw UsageError("generate_synthetic: dim must be at least 4");
  if (!(o.sigma >= 0.0)) throw UsageError("generate_synthetic: sigma must be non-negative");
  if (o.m_max < 1 || o.min_phrases < 1 || o.min_phrases > o.max_phrases) {
    throw UsageError("generate_synthetic: invalid phrase count range");
  }
  if (!(o.global_phrase_fraction >= 0.0 && o.global_phrase_fraction <= 1.0)) {
    throw UsageError("generate_synthetic: global_phrase_fraction must be in [0, 1]");
  }

  Rng rng(o.seed);
  const std::size_t d = o.dim;
  SyntheticCorpus out;
  out.text_map = random_orthogonal(d, o.map_strength, rng);
  out.corpus.manifest = CorpusManifest{d, kRegionCount, o.m_max, kCorpusFormatVersion};

  const std::size_t lo = std::min(o.min_phrases, o.m_max);
  const std::size_t hi = std::min(o.max_phrases, o.m_max);
  std::uniform_int_distribution<std::size_t> phrase_count(lo, hi);
  std::uniform_int_distribution<std::size_t> region_pick(0, kRegionCount - 1);
  std::bernoulli_distribution global_scope(o.global_phrase_fraction);

  for (std::size_t p = 0; p < o.n_identities; ++p) {
    const auto prototype = gaussian(rng, d);
    std::array<std::vector<double>, kRegionCount> parts;
    for (auto& part : parts) part = gaussian(rng, d);

    // Band layout: head, head/upper seam, upper, lower, lower, foot.
    std::vector<double> seam(d);
    for (std::size_t c = 0; c < d; ++c) seam[c] = 0.5 * (parts[0][c] + parts[1][c]);
    const std::array<const std::vector<double>*, kSliceCount> bands{
        &parts[0], &seam, &parts[1], &parts[2], &parts[2], &parts[3]};

    for (std::size_t i = 0; i < o.imgs_per_id; ++i) {
      Vec64 global = noisy(prototype, o.sigma, rng);
      std::vector<Vec64> slices;
      slices.reserve(kSliceCount);
      for (const auto* band : bands) slices.push_back(noisy(*band, o.sigma, rng));
      out.corpus.images.push_back(
          ImageEntity::make(entity_id("img", p, i), p, std::move(global), std::move(slices)));
    }

    const auto mapped_prototype = map_through(out.text_map, prototype);
    std::array<std::vector<double>, kRegionCount> mapped_parts;
    for (std::size_t r = 0; r < kRegionCount; ++r) mapped_parts[r] = map_through(out.text_map, parts[r]);

    for (std::size_t t = 0; t < o.txts_per_id; ++t) {
      Vec64 global = noisy(mapped_prototype, o.sigma, rng);
      const std::size_t count = phrase_count(rng);
      std::vector<Vec64> phrases;
      phrases.reserve(count);
      for (std::size_t j = 0; j < count; ++j) {
        if (global_scope(rng)) {
          phrases.push_back(noisy(mapped_prototype, o.sigma, rng));
        } else {
          phrases.push_back(noisy(mapped_parts[region_pick(rng)], o.sigma, rng));
        }
      }
      out.corpus.texts.push_back(
          TextEntity{entity_id("txt", p, t), p, std::move(global), std::move(phrases)});
    }
  }
  return out;
}

}  // namespace xalign
