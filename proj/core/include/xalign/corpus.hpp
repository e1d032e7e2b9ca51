#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xalign/numerics.hpp"
#include "xalign/partition.hpp"

namespace xalign {

using num::Vec64;

inline constexpr int kCorpusFormatVersion = 1;
inline constexpr std::size_t kDefaultMaxPhrases = 10;

struct CorpusManifest {
  std::size_t dim = 0;
  std::size_t k = kRegionCount;
  std::size_t m_max = kDefaultMaxPhrases;
  int version = kCorpusFormatVersion;

  void validate() const;  // throws FormatError
};

/// One gallery image. `regions` are derived from `slices`; `entities` is
/// [global, head, upper, lower, foot], the visual side of cross-attention.
struct ImageEntity {
  std::string id;
  std::uint64_t identity = 0;
  Vec64 global;
  std::vector<Vec64> slices;
  std::vector<Vec64> regions;
  std::vector<Vec64> entities;

  static ImageEntity make(std::string id, std::uint64_t identity, Vec64 global,
                          std::vector<Vec64> slices,
                          const RegionProjection* projection = nullptr);

  // Recomputes regions and entities from the stored slices.
  void derive_regions(const RegionProjection& projection);
  std::size_t dim() const noexcept { return global.dim(); }
};

struct TextEntity {
  std::string id;
  std::uint64_t identity = 0;
  Vec64 global;
  std::vector<Vec64> phrases;

  std::size_t dim() const noexcept { return global.dim(); }
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<ImageEntity> images;
  std::vector<TextEntity> texts;
};

/// Line-delimited JSON: a manifest record first, then image and text records.
Corpus read_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

// Checks every entity against the manifest; throws FormatError naming the record.
void validate_corpus(const Corpus& corpus);

/// Binary match matrix y (rows x cols) and its row-normalized form q.
/// Rows with no positive have an all-zero q row.
struct MatchLabels {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> y;
  std::vector<double> q;

  bool positive(std::size_t r, std::size_t c) const { return y[r * cols + c] != 0; }
  double q_at(std::size_t r, std::size_t c) const { return q[r * cols + c]; }
  bool row_has_positive(std::size_t r) const;

  MatchLabels transposed() const;
};

MatchLabels labels_from_identities(std::span<const std::uint64_t> row_identities,
                                   std::span<const std::uint64_t> col_identities);

/// Image x text labels for a loss batch. Throws LabelingError if an image row
/// has no positive text.
MatchLabels build_labels(std::span<const ImageEntity> images, std::span<const TextEntity> texts);

std::vector<std::uint64_t> identities_of(std::span<const ImageEntity> images);
std::vector<std::uint64_t> identities_of(std::span<const TextEntity> texts);

struct SyntheticOptions {
  std::size_t n_identities = 20;
  std::size_t imgs_per_id = 5;
  std::size_t txts_per_id = 2;
  std::size_t dim = 768;
  double sigma = 0.05;
  std::uint64_t seed = 0;
  std::size_t m_max = kDefaultMaxPhrases;
  std::size_t min_phrases = 2;
  std::size_t max_phrases = 6;
  double global_phrase_fraction = 0.3;
  // 0 keeps the text map at identity; larger values rotate it further away.
  double map_strength = 1.0;
};

struct SyntheticCorpus {
  Corpus corpus;
  // Ground-truth orthogonal map from visual space to text space.
  num::Matrix text_map;
};

/// Identity prototypes with four region sub-prototypes. Images carry the
/// prototype and band-replicated region prototypes; texts carry their images
/// through `text_map`, with phrases drawn from regions or (about 30%) the
/// whole prototype. Deterministic for a given seed.
SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

}  // namespace xalign
