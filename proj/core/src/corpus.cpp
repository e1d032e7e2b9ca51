#include "xalign/corpus.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "xalign/errors.hpp"

namespace xalign {
namespace {

using Json = nlohmann::ordered_json;

std::string line_ref(std::size_t line) { return "line " + std::to_string(line); }

std::string record_name(const Json& record, std::size_t line) {
  auto it = record.find("id");
  if (it != record.end() && it->is_string() && !it->get<std::string>().empty()) {
    return it->get<std::string>();
  }
  return line_ref(line);
}

const Json& field(const Json& record, const char* name, const std::string& who) {
  auto it = record.find(name);
  if (it == record.end()) throw FormatError(who, std::string("missing field '") + name + "'");
  return *it;
}

std::uint64_t read_count(const Json& j, const char* name, const std::string& who) {
  if (!j.is_number_unsigned()) {
    throw FormatError(who, std::string("field '") + name + "' must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

Vec64 read_vector(const Json& j, std::size_t dim, const std::string& who, const std::string& what) {
  if (!j.is_array()) throw FormatError(who, what + " must be an array");
  if (j.size() != dim) {
    throw FormatError(who, what + " has dimension " + std::to_string(j.size()) + ", manifest dim is " +
                               std::to_string(dim));
  }
  std::vector<double> data;
  data.reserve(dim);
  for (const Json& v : j) {
    if (!v.is_number()) throw FormatError(who, what + " contains a non-numeric entry");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw FormatError(who, what + " contains a non-finite entry");
    data.push_back(x);
  }
  return Vec64(std::move(data));
}

std::vector<Vec64> read_vectors(const Json& j, std::size_t dim, const std::string& who,
                                const std::string& what) {
  if (!j.is_array()) throw FormatError(who, what + " must be an array of vectors");
  std::vector<Vec64> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(read_vector(j[i], dim, who, what + "[" + std::to_string(i) + "]"));
  }
  return out;
}

CorpusManifest read_manifest(const Json& record, std::size_t line) {
  const std::string who = line_ref(line);
  if (!record.is_object() || !record.contains("type") || record["type"] != "manifest") {
    throw FormatError(who, "first record must be a manifest");
  }
  CorpusManifest m;
  m.dim = read_count(field(record, "dim", who), "dim", who);
  m.k = read_count(field(record, "k", who), "k", who);
  m.m_max = read_count(field(record, "m_max", who), "m_max", who);
  m.version = static_cast<int>(read_count(field(record, "version", who), "version", who));
  m.validate();
  return m;
}

std::string read_id(const Json& record, std::size_t line) {
  const Json& id = field(record, "id", line_ref(line));
  if (!id.is_string() || id.get<std::string>().empty()) {
    throw FormatError(line_ref(line), "field 'id' must be a nonempty string");
  }
  return id.get<std::string>();
}

Json vector_json(const Vec64& v) { return Json(v.data()); }

Json vectors_json(const std::vector<Vec64>& vs) {
  Json arr = Json::array();
  for (const Vec64& v : vs) arr.push_back(vector_json(v));
  return arr;
}

void check_dim(const Vec64& v, std::size_t dim, const std::string& who, const std::string& what) {
  if (v.dim() != dim) {
    throw FormatError(who, what + " has dimension " + std::to_string(v.dim()) +
                               ", manifest dim is " + std::to_string(dim));
  }
}

}  // namespace

void CorpusManifest::validate() const {
  const std::string who = "manifest";
  if (dim < 2) throw FormatError(who, "dim must be at least 2");
  if (k != kRegionCount) throw FormatError(who, "k must be 4");
  if (m_max < 1) throw FormatError(who, "m_max must be at least 1");
  if (version != kCorpusFormatVersion) {
    throw FormatError(who, "unsupported format version " + std::to_string(version));
  }
}

ImageEntity ImageEntity::make(std::string id, std::uint64_t identity, Vec64 global,
                              std::vector<Vec64> slices, const RegionProjection* projection) {
  if (slices.size() != kSliceCount) {
    throw UsageError("image '" + id + "': expected 6 slices, got " + std::to_string(slices.size()));
  }
  ImageEntity img{std::move(id), identity, std::move(global), std::move(slices), {}, {}};
  if (projection != nullptr) {
    img.derive_regions(*projection);
  } else {
    img.derive_regions(RegionProjection{img.global.dim(), false, {}, {}});
  }
  return img;
}

void ImageEntity::derive_regions(const RegionProjection& projection) {
  for (const Vec64& s : slices) {
    if (s.dim() != global.dim()) throw UsageError("image '" + id + "': slice dimension mismatch");
  }
  auto r = partition(slices, projection);
  regions.assign(r.begin(), r.end());
  entities.clear();
  entities.reserve(kEntityCount);
  entities.push_back(global);
  entities.insert(entities.end(), regions.begin(), regions.end());
}

void validate_corpus(const Corpus& corpus) {
  const CorpusManifest& m = corpus.manifest;
  m.validate();
  std::unordered_set<std::string> image_ids, text_ids;
  for (const ImageEntity& img : corpus.images) {
    if (img.id.empty()) throw FormatError("<unnamed image>", "empty id");
    if (!image_ids.insert(img.id).second) throw FormatError(img.id, "duplicate image id");
    check_dim(img.global, m.dim, img.id, "global");
    if (img.slices.size() != kSliceCount) {
      throw FormatError(img.id, "expected 6 slices, got " + std::to_string(img.slices.size()));
    }
    for (std::size_t i = 0; i < img.slices.size(); ++i) {
      check_dim(img.slices[i], m.dim, img.id, "slices[" + std::to_string(i) + "]");
    }
    if (img.regions.size() != kRegionCount || img.entities.size() != kEntityCount) {
      throw FormatError(img.id, "regions were not derived");
    }
  }
  for (const TextEntity& txt : corpus.texts) {
    if (txt.id.empty()) throw FormatError("<unnamed text>", "empty id");
    if (!text_ids.insert(txt.id).second) throw FormatError(txt.id, "duplicate text id");
    check_dim(txt.global, m.dim, txt.id, "global");
    if (txt.phrases.empty() || txt.phrases.size() > m.m_max) {
      throw FormatError(txt.id, "phrase count " + std::to_string(txt.phrases.size()) +
                                    " outside [1, " + std::to_string(m.m_max) + "]");
    }
    for (std::size_t i = 0; i < txt.phrases.size(); ++i) {
      check_dim(txt.phrases[i], m.dim, txt.id, "phrases[" + std::to_string(i) + "]");
    }
  }
}

Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  bool have_manifest = false;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json record;
    try {
      record = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw FormatError(line_ref(line), std::string("invalid JSON: ") + e.what());
    }
    if (!have_manifest) {
      corpus.manifest = read_manifest(record, line);
      have_manifest = true;
      continue;
    }
    if (!record.is_object()) throw FormatError(line_ref(line), "record must be an object");
    const std::string who = record_name(record, line);
    const Json& type = field(record, "type", who);
    const std::size_t dim = corpus.manifest.dim;
    if (type == "image") {
      std::string id = read_id(record, line);
      const auto identity = read_count(field(record, "identity", who), "identity", who);
      Vec64 global = read_vector(field(record, "global", who), dim, who, "global");
      std::vector<Vec64> slices = read_vectors(field(record, "slices", who), dim, who, "slices");
      if (slices.size() != kSliceCount) {
        throw FormatError(who, "expected 6 slices, got " + std::to_string(slices.size()));
      }
      corpus.images.push_back(
          ImageEntity::make(std::move(id), identity, std::move(global), std::move(slices)));
    } else if (type == "text") {
      std::string id = read_id(record, line);
      const auto identity = read_count(field(record, "identity", who), "identity", who);
      Vec64 global = read_vector(field(record, "global", who), dim, who, "global");
      std::vector<Vec64> phrases = read_vectors(field(record, "phrases", who), dim, who, "phrases");
      corpus.texts.push_back(TextEntity{std::move(id), identity, std::move(global), std::move(phrases)});
    } else if (type == "manifest") {
      throw FormatError(who, "duplicate manifest");
    } else {
      throw FormatError(who, "unknown record type");
    }
  }
  if (!have_manifest) throw FormatError(line_ref(1), "missing manifest");
  validate_corpus(corpus);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open corpus file");
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  validate_corpus(corpus);
  const CorpusManifest& m = corpus.manifest;
  Json manifest;
  manifest["type"] = "manifest";
  manifest["dim"] = m.dim;
  manifest["k"] = m.k;
  manifest["m_max"] = m.m_max;
  manifest["version"] = m.version;
  out << manifest.dump() << '\n';
  for (const ImageEntity& img : corpus.images) {
    Json r;
    r["type"] = "image";
    r["id"] = img.id;
    r["identity"] = img.identity;
    r["global"] = vector_json(img.global);
    r["slices"] = vectors_json(img.slices);
    out << r.dump() << '\n';
  }
  for (const TextEntity& txt : corpus.texts) {
    Json r;
    r["type"] = "text";
    r["id"] = txt.id;
    r["identity"] = txt.identity;
    r["global"] = vector_json(txt.global);
    r["phrases"] = vectors_json(txt.phrases);
    out << r.dump() << '\n';
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  write_corpus(out, corpus);
  if (!out) throw UsageError("failed writing '" + path.string() + "'");
}

bool MatchLabels::row_has_positive(std::size_t r) const {
  for (std::size_t c = 0; c < cols; ++c) {
    if (positive(r, c)) return true;
  }
  return false;
}

MatchLabels MatchLabels::transposed() const {
  MatchLabels t;
  t.rows = cols;
  t.cols = rows;
  t.y.resize(y.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t.y[c * rows + r] = y[r * cols + c];
  }
  t.q.assign(y.size(), 0.0);
  for (std::size_t r = 0; r < t.rows; ++r) {
    std::size_t count = 0;
    for (std::size_t c = 0; c < t.cols; ++c) count += t.positive(r, c) ? 1 : 0;
    if (count == 0) continue;
    for (std::size_t c = 0; c < t.cols; ++c) {
      if (t.positive(r, c)) t.q[r * t.cols + c] = 1.0 / static_cast<double>(count);
    }
  }
  return t;
}

MatchLabels labels_from_identities(std::span<const std::uint64_t> row_identities,
                                   std::span<const std::uint64_t> col_identities) {
  MatchLabels l;
  l.rows = row_identities.size();
  l.cols = col_identities.size();
  l.y.assign(l.rows * l.cols, 0);
  l.q.assign(l.rows * l.cols, 0.0);
  for (std::size_t r = 0; r < l.rows; ++r) {
    std::size_t count = 0;
    for (std::size_t c = 0; c < l.cols; ++c) {
      if (row_identities[r] == col_identities[c]) {
        l.y[r * l.cols + c] = 1;
        ++count;
      }
    }
    for (std::size_t c = 0; c < l.cols && count > 0; ++c) {
      if (l.positive(r, c)) l.q[r * l.cols + c] = 1.0 / static_cast<double>(count);
    }
  }
  return l;
}

MatchLabels build_labels(std::span<const ImageEntity> images, std::span<const TextEntity> texts) {
  if (images.empty() || texts.empty()) throw UsageError("build_labels: empty batch");
  const auto img_ids = identities_of(images);
  const auto txt_ids = identities_of(texts);
  MatchLabels l = labels_from_identities(img_ids, txt_ids);
  for (std::size_t r = 0; r < l.rows; ++r) {
    if (!l.row_has_positive(r)) {
      throw LabelingError("image '" + images[r].id + "' has no positive text in the batch");
    }
  }
  return l;
}

std::vector<std::uint64_t> identities_of(std::span<const ImageEntity> images) {
  std::vector<std::uint64_t> ids;
  ids.reserve(images.size());
  for (const ImageEntity& img : images) ids.push_back(img.identity);
  return ids;
}

std::vector<std::uint64_t> identities_of(std::span<const TextEntity> texts) {
  std::vector<std::uint64_t> ids;
  ids.reserve(texts.size());
  for (const TextEntity& txt : texts) ids.push_back(txt.identity);
  return ids;
}

}  // namespace xalign
