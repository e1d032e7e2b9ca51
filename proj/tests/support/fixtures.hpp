#pragma once

#include <random>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "xalign/corpus.hpp"

namespace fixtures {

inline oracle::Vec random_vec(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  oracle::Vec v(d);
  for (double& x : v) x = n(rng);
  return v;
}

inline oracle::Vec to_vec(const xalign::Vec64& v) { return {v.begin(), v.end()}; }

inline oracle::Mat to_mat(const std::vector<xalign::Vec64>& vs) {
  oracle::Mat m;
  for (const auto& v : vs) m.push_back(to_vec(v));
  return m;
}

inline xalign::ImageEntity random_image(std::mt19937_64& rng, std::size_t d, std::string id = "img",
                                        std::uint64_t identity = 0) {
  std::vector<xalign::Vec64> slices;
  for (int s = 0; s < 6; ++s) slices.emplace_back(random_vec(rng, d));
  return xalign::ImageEntity::make(std::move(id), identity, xalign::Vec64(random_vec(rng, d)),
                                   std::move(slices));
}

inline xalign::TextEntity random_text(std::mt19937_64& rng, std::size_t d, std::size_t m,
                                      std::string id = "txt", std::uint64_t identity = 0) {
  xalign::TextEntity t{std::move(id), identity, xalign::Vec64(random_vec(rng, d)), {}};
  for (std::size_t j = 0; j < m; ++j) t.phrases.emplace_back(random_vec(rng, d));
  return t;
}

// Oracle view of an image's visual entities, built from its raw slices.
inline oracle::Mat oracle_entities(const xalign::ImageEntity& img) {
  return oracle::entities(to_vec(img.global), to_mat(img.slices));
}

}  // namespace fixtures
