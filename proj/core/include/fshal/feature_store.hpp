#pragma once

// On-disk data model for visual features, class semantic embeddings and
// optional spatial activation maps.
//
// All three formats share the same framing: a 4-byte magic, a u32 format
// version, then little-endian payload. Strings are a u32 byte length followed
// by UTF-8 bytes; reals are IEEE-754 binary32.
//
//   FSHB  version d n_classes { id split:u8 n_c f32[n_c*d] }*
//   FSSB  version m n_entries { id f32[m] }*
//   FSAM  version n_entries   { sample_id class_id H W f32[H*W] }*

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace fshal {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint32_t kFormatVersion = 1;

enum class Split : std::uint8_t { base = 0, validation = 1, novel = 2 };

std::string_view to_string(Split split);

struct ClassFeatures {
  std::string id;
  Split split = Split::base;
  FeatureMatrix features;  // n_c x dim
};

struct FeatureBank {
  std::uint32_t dim = 0;
  std::vector<ClassFeatures> classes;

  const ClassFeatures* find(std::string_view id) const;
  // Positions in `classes` belonging to `split`, in file order.
  std::vector<std::size_t> split_indices(Split split) const;
};

struct SemanticBank {
  std::uint32_t dim = 0;
  std::map<std::string, Eigen::VectorXf, std::less<>> entries;

  const Eigen::VectorXf* find(std::string_view id) const;
};

struct ActivationMap {
  std::string sample_id;
  std::string class_id;
  FeatureMatrix values;  // H x W, entries in [0, 1]
};

struct ActivationMapSet {
  std::vector<ActivationMap> entries;
};

// Bit-level equality on every payload value.
bool operator==(const FeatureBank& a, const FeatureBank& b);
bool operator==(const SemanticBank& a, const SemanticBank& b);
bool operator==(const ActivationMapSet& a, const ActivationMapSet& b);

// Throw Error{invalid_bank} naming the first violated invariant.
void validate(const FeatureBank& bank);
void validate(const SemanticBank& bank);
void validate(const ActivationMapSet& maps);

void write_bank(const FeatureBank& bank, const std::filesystem::path& path);
void write_bank(const SemanticBank& bank, const std::filesystem::path& path);
void write_bank(const ActivationMapSet& maps, const std::filesystem::path& path);

FeatureBank load_feature_bank(const std::filesystem::path& path);
SemanticBank load_semantic_bank(const std::filesystem::path& path);
ActivationMapSet load_activation_maps(const std::filesystem::path& path);

using AnyBank = std::variant<FeatureBank, SemanticBank, ActivationMapSet>;

// Dispatches on the magic bytes.
AnyBank load_bank(const std::filesystem::path& path);

struct ValidationIssue {
  enum class Kind { missing_semantic, dimension_mismatch, negative_feature, non_finite };
  Kind kind;
  std::string class_id;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool empty() const { return issues.empty(); }
  bool mentions(std::string_view class_id) const;
  bool has(ValidationIssue::Kind kind) const;
};

// Joint consistency of a feature bank and its semantic companion. Problems
// are collected rather than thrown.
ValidationReport validate_pair(const FeatureBank& features, const SemanticBank& semantics);

}  // namespace fshal
