#include "fshal/feature_store.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "binary_io.hpp"
#include "fshal/error.hpp"

namespace fshal {
namespace {

using detail::ByteReader;
using detail::ByteWriter;
using detail::slurp;

constexpr std::array<char, 4> kFeatureMagic{'F', 'S', 'H', 'B'};
constexpr std::array<char, 4> kSemanticMagic{'F', 'S', 'S', 'B'};
constexpr std::array<char, 4> kMapMagic{'F', 'S', 'A', 'M'};

void check_version(ByteReader& r) {
  const std::uint32_t version = r.u32("format version");
  if (version != kFormatVersion) {
    throw Error(ErrorCode::unsupported_version, "format version " + std::to_string(version) +
                                                    ", expected " + std::to_string(kFormatVersion));
  }
}

bool same_bits(const float* a, const float* b, std::size_t n) {
  return n == 0 || std::memcmp(a, b, n * sizeof(float)) == 0;
}

bool same_matrix(const FeatureMatrix& a, const FeatureMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         same_bits(a.data(), b.data(), static_cast<std::size_t>(a.size()));
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::invalid_bank, what); }

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::base: return "base";
    case Split::validation: return "validation";
    case Split::novel: return "novel";
  }
  return "unknown";
}

const ClassFeatures* FeatureBank::find(std::string_view id) const {
  for (const auto& c : classes) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::vector<std::size_t> FeatureBank::split_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].split == split) out.push_back(i);
  }
  return out;
}

const Eigen::VectorXf* SemanticBank::find(std::string_view id) const {
  auto it = entries.find(id);
  return it == entries.end() ? nullptr : &it->second;
}

bool operator==(const FeatureBank& a, const FeatureBank& b) {
  if (a.dim != b.dim || a.classes.size() != b.classes.size()) return false;
  for (std::size_t i = 0; i < a.classes.size(); ++i) {
    const auto& x = a.classes[i];
    const auto& y = b.classes[i];
    if (x.id != y.id || x.split != y.split || !same_matrix(x.features, y.features)) return false;
  }
  return true;
}

bool operator==(const SemanticBank& a, const SemanticBank& b) {
  if (a.dim != b.dim || a.entries.size() != b.entries.size()) return false;
  for (auto ia = a.entries.begin(), ib = b.entries.begin(); ia != a.entries.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.size() != ib->second.size()) return false;
    if (!same_bits(ia->second.data(), ib->second.data(), static_cast<std::size_t>(ia->second.size()))) return false;
  }
  return true;
}

bool operator==(const ActivationMapSet& a, const ActivationMapSet& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& x = a.entries[i];
    const auto& y = b.entries[i];
    if (x.sample_id != y.sample_id || x.class_id != y.class_id || !same_matrix(x.values, y.values)) return false;
  }
  return true;
}

void validate(const FeatureBank& bank) {
  if (bank.dim == 0) invalid("feature dimension must be positive");
  std::set<std::string, std::less<>> seen;
  for (const auto& c : bank.classes) {
    if (c.id.empty()) invalid("empty class id");
    if (!seen.insert(c.id).second) invalid("duplicate class id '" + c.id + "'");
    if (static_cast<std::uint8_t>(c.split) > 2) invalid("class '" + c.id + "' has an unknown split");
    if (c.features.rows() < 1) invalid("class '" + c.id + "' has no samples");
    if (c.features.cols() != static_cast<Eigen::Index>(bank.dim)) {
      invalid("class '" + c.id + "' rows have " + std::to_string(c.features.cols()) + " entries, expected " +
              std::to_string(bank.dim));
    }
    for (Eigen::Index r = 0; r < c.features.rows(); ++r) {
      for (Eigen::Index j = 0; j < c.features.cols(); ++j) {
        const float v = c.features(r, j);
        if (!std::isfinite(v)) {
          invalid("class '" + c.id + "' row " + std::to_string(r) + " has a non-finite value");
        }
        if (v < 0.0f) invalid("class '" + c.id + "' row " + std::to_string(r) + " has a negative value");
      }
    }
  }
}

void validate(const SemanticBank& bank) {
  if (bank.dim == 0) invalid("semantic dimension must be positive");
  for (const auto& [id, v] : bank.entries) {
    if (id.empty()) invalid("empty class id");
    if (v.size() != static_cast<Eigen::Index>(bank.dim)) {
      invalid("semantic vector for '" + id + "' has length " + std::to_string(v.size()) + ", expected " +
              std::to_string(bank.dim));
    }
    if (!v.allFinite()) invalid("semantic vector for '" + id + "' has a non-finite value");
  }
}

void validate(const ActivationMapSet& maps) {
  for (const auto& e : maps.entries) {
    const std::string where = "(" + e.sample_id + ", " + e.class_id + ")";
    if (e.values.rows() < 1 || e.values.cols() < 1) invalid("activation map " + where + " is empty");
    for (Eigen::Index i = 0; i < e.values.size(); ++i) {
      const float v = e.values.data()[i];
      if (!(v >= 0.0f && v <= 1.0f)) invalid("activation map " + where + " has a value outside [0, 1]");
    }
  }
}

void write_bank(const FeatureBank& bank, const std::filesystem::path& path) {
  validate(bank);
  ByteWriter w;
  w.magic(kFeatureMagic);
  w.u32(kFormatVersion);
  w.u32(bank.dim);
  w.u32(static_cast<std::uint32_t>(bank.classes.size()));
  for (const auto& c : bank.classes) {
    w.str(c.id);
    w.u8(static_cast<std::uint8_t>(c.split));
    w.u32(static_cast<std::uint32_t>(c.features.rows()));
    w.floats(c.features.data(), static_cast<std::size_t>(c.features.size()));
  }
  w.flush_to(path);
}

void write_bank(const SemanticBank& bank, const std::filesystem::path& path) {
  validate(bank);
  ByteWriter w;
  w.magic(kSemanticMagic);
  w.u32(kFormatVersion);
  w.u32(bank.dim);
  w.u32(static_cast<std::uint32_t>(bank.entries.size()));
  for (const auto& [id, v] : bank.entries) {
    w.str(id);
    w.floats(v.data(), static_cast<std::size_t>(v.size()));
  }
  w.flush_to(path);
}

void write_bank(const ActivationMapSet& maps, const std::filesystem::path& path) {
  validate(maps);
  ByteWriter w;
  w.magic(kMapMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(maps.entries.size()));
  for (const auto& e : maps.entries) {
    w.str(e.sample_id);
    w.str(e.class_id);
    w.u32(static_cast<std::uint32_t>(e.values.rows()));
    w.u32(static_cast<std::uint32_t>(e.values.cols()));
    w.floats(e.values.data(), static_cast<std::size_t>(e.values.size()));
  }
  w.flush_to(path);
}

FeatureBank load_feature_bank(const std::filesystem::path& path) {
  ByteReader r(slurp(path));
  r.expect_magic(kFeatureMagic);
  check_version(r);
  FeatureBank bank;
  bank.dim = r.u32("dimension");
  if (bank.dim == 0) invalid("feature dimension must be positive");
  const std::uint32_t count = r.u32("class count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ClassFeatures c;
    c.id = r.str("class id");
    const std::uint8_t split = r.u8("split");
    if (split > 2) invalid("class '" + c.id + "' has unknown split code " + std::to_string(split));
    c.split = static_cast<Split>(split);
    const std::uint32_t n = r.u32("sample count");
    const std::size_t need = static_cast<std::size_t>(n) * bank.dim;
    r.require(need * 4, ("features of class '" + c.id + "'").c_str());
    c.features.resize(n, bank.dim);
    r.floats(c.features.data(), need, ("features of class '" + c.id + "'").c_str());
    bank.classes.push_back(std::move(c));
  }
  r.expect_end();
  validate(bank);
  return bank;
}

SemanticBank load_semantic_bank(const std::filesystem::path& path) {
  ByteReader r(slurp(path));
  r.expect_magic(kSemanticMagic);
  check_version(r);
  SemanticBank bank;
  bank.dim = r.u32("dimension");
  if (bank.dim == 0) invalid("semantic dimension must be positive");
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.str("class id");
    r.require(static_cast<std::size_t>(bank.dim) * 4, "semantic vector");
    Eigen::VectorXf v(bank.dim);
    r.floats(v.data(), bank.dim, ("semantic vector of '" + id + "'").c_str());
    if (!bank.entries.emplace(id, std::move(v)).second) invalid("duplicate class id '" + id + "'");
  }
  r.expect_end();
  validate(bank);
  return bank;
}

ActivationMapSet load_activation_maps(const std::filesystem::path& path) {
  ByteReader r(slurp(path));
  r.expect_magic(kMapMagic);
  check_version(r);
  ActivationMapSet maps;
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ActivationMap e;
    e.sample_id = r.str("sample id");
    e.class_id = r.str("class id");
    const std::uint32_t h = r.u32("map height");
    const std::uint32_t w = r.u32("map width");
    r.require(static_cast<std::size_t>(h) * w * 4, "activation map values");
    e.values.resize(h, w);
    r.floats(e.values.data(), static_cast<std::size_t>(h) * w, "activation map values");
    maps.entries.push_back(std::move(e));
  }
  r.expect_end();
  validate(maps);
  return maps;
}

AnyBank load_bank(const std::filesystem::path& path) {
  std::array<char, 4> magic{};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
    in.read(magic.data(), 4);
    if (in.gcount() != 4) throw Error(ErrorCode::unrecognized_format, "file shorter than magic");
  }
  if (magic == kFeatureMagic) return load_feature_bank(path);
  if (magic == kSemanticMagic) return load_semantic_bank(path);
  if (magic == kMapMagic) return load_activation_maps(path);
  throw Error(ErrorCode::unrecognized_format, "unknown magic in '" + path.string() + "'");
}

bool ValidationReport::mentions(std::string_view class_id) const {
  for (const auto& i : issues) {
    if (i.class_id == class_id) return true;
  }
  return false;
}

bool ValidationReport::has(ValidationIssue::Kind kind) const {
  for (const auto& i : issues) {
    if (i.kind == kind) return true;
  }
  return false;
}

ValidationReport validate_pair(const FeatureBank& features, const SemanticBank& semantics) {
  using Kind = ValidationIssue::Kind;
  ValidationReport report;
  auto add = [&](Kind kind, std::string id, std::string msg) {
    report.issues.push_back({kind, std::move(id), std::move(msg)});
  };

  for (const auto& [id, v] : semantics.entries) {
    if (v.size() != static_cast<Eigen::Index>(semantics.dim)) {
      add(Kind::dimension_mismatch, id,
          "dimension mismatch: semantic vector has length " + std::to_string(v.size()) + ", bank declares " +
              std::to_string(semantics.dim));
    } else if (!v.allFinite()) {
      add(Kind::non_finite, id, "semantic vector has a non-finite value");
    }
  }

  for (const auto& c : features.classes) {
    if (semantics.find(c.id) == nullptr) {
      add(Kind::missing_semantic, c.id, "class '" + c.id + "' has no semantic vector");
    }
    if (c.features.cols() != static_cast<Eigen::Index>(features.dim)) {
      add(Kind::dimension_mismatch, c.id,
          "dimension mismatch: rows have " + std::to_string(c.features.cols()) + " entries, bank declares " +
              std::to_string(features.dim));
      continue;
    }
    bool negative = false;
    bool non_finite = false;
    for (Eigen::Index i = 0; i < c.features.size(); ++i) {
      const float v = c.features.data()[i];
      if (!std::isfinite(v)) non_finite = true;
      else if (v < 0.0f) negative = true;
    }
    if (negative) add(Kind::negative_feature, c.id, "class '" + c.id + "' has negative feature values");
    if (non_finite) add(Kind::non_finite, c.id, "class '" + c.id + "' has non-finite feature values");
  }
  return report;
}

}  // namespace fshal
