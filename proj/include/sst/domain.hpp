/* Copyright 2026 The SST Parsing Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sst/tensor.hpp"

namespace sst {

/// Raised for malformed domain / link files and violated domain invariants.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kIgnoreLabel = 255;

using Rgb = std::array<std::uint8_t, 3>;

/// H×W raster of 8-bit labels, row-major.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

/// A labeling system: ordered category names (0 = background), the
/// intra-domain spatial adjacency prior and a render palette.
/// Immutable once constructed.
class LabelDomain {
 public:
  /// Builds a domain from an edge list; symmetry and the diagonal are added.
  static LabelDomain from_edges(std::string id, std::vector<std::string> names,
                                const std::vector<std::pair<int, int>>& edges,
                                std::vector<Rgb> palette);
  /// Builds a domain from a full Z×Z 0/1 matrix, which must already satisfy
  /// every invariant.
  static LabelDomain from_matrix(std::string id, std::vector<std::string> names,
                                 std::vector<std::uint8_t> intra, std::vector<Rgb> palette);

  const std::string& id() const { return id_; }
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }
  bool adjacent(int a, int b) const { return intra_[static_cast<std::size_t>(a) * size() + b] != 0; }
  const std::vector<Rgb>& palette() const { return palette_; }
  int index_of(const std::string& name) const;

  /// M_intra as a float Z×Z tensor.
  Tensor intra_mask() const;

  nlohmann::json to_json() const;
  bool operator==(const LabelDomain&) const = default;

 private:
  LabelDomain() = default;
  void validate() const;

  std::string id_;
  std::vector<std::string> names_;
  std::vector<std::uint8_t> intra_;
  std::vector<Rgb> palette_;
};

/// Directed link src → dst with the static similarity matrix (Z_dst × Z_src)
/// and, when dst coarsens src, the fine-index → coarse-index map.
class CrossLink {
 public:
  static CrossLink from_coarsening(const LabelDomain& src, const LabelDomain& dst,
                                   std::vector<int> coarsening);
  static CrossLink from_matrix(const LabelDomain& src, const LabelDomain& dst, Tensor matrix);

  const std::string& src_id() const { return src_id_; }
  const std::string& dst_id() const { return dst_id_; }
  const Tensor& static_matrix() const { return matrix_; }
  const std::optional<std::vector<int>>& coarsening() const { return coarsening_; }

  nlohmann::json to_json() const;
  bool operator==(const CrossLink&) const = default;

 private:
  CrossLink() = default;
  void validate() const;

  std::string src_id_;
  std::string dst_id_;
  Tensor matrix_;
  std::optional<std::vector<int>> coarsening_;
};

LabelDomain load_domain(const std::filesystem::path& path);
LabelDomain domain_from_json(const nlohmann::json& j);

/// Loads a link file; `src` and `dst` must be the domains it names.
CrossLink load_link(const std::filesystem::path& path, const LabelDomain& src,
                    const LabelDomain& dst);
CrossLink link_from_json(const nlohmann::json& j, const LabelDomain& src, const LabelDomain& dst);

/// M[c][f] = 1 iff coarsening[f] == c. Throws listing every unmapped source
/// index when the map is not total over [0, z_src).
Tensor derive_static_from_hierarchy(const std::vector<int>& coarsening, int z_src, int z_dst);

/// Pointwise application of a coarsening map. Ignore-pixels (255) pass through.
LabelMap coarsen_labels(const LabelMap& labels, const std::vector<int>& coarsening);

/// Collection of domains and links. Immutable after construction.
class DomainRegistry {
 public:
  DomainRegistry() = default;
  DomainRegistry(std::vector<LabelDomain> domains, std::vector<CrossLink> links);

  /// Reads every `*.domain.json` and `*.link.json` in a directory.
  static DomainRegistry load_directory(const std::filesystem::path& dir);

  const LabelDomain& domain(const std::string& id) const;
  bool has_domain(const std::string& id) const;
  const std::vector<LabelDomain>& domains() const { return domains_; }
  const std::vector<CrossLink>& links() const { return links_; }

  /// Static similarity matrix for mapping src → dst (Z_dst × Z_src). Uses a
  /// direct link when one exists, otherwise the transpose of the reverse link.
  Tensor static_matrix(const std::string& src, const std::string& dst) const;

  /// Coarsening map src → dst, composed along links when needed.
  std::optional<std::vector<int>> coarsening(const std::string& src, const std::string& dst) const;

  /// FNV-1a hash of the canonical JSON form, as 16 hex digits.
  std::string hash() const;
  nlohmann::json to_json() const;

 private:
  const CrossLink* find_link(const std::string& src, const std::string& dst) const;

  std::vector<LabelDomain> domains_;
  std::vector<CrossLink> links_;
};

/// The shipped synthetic ladder: coarse (Z=5), mid (Z=8), fine (Z=12).
const DomainRegistry& builtin_registry();

namespace synthetic {
inline constexpr const char* kCoarse = "coarse";
inline constexpr const char* kMid = "mid";
inline constexpr const char* kFine = "fine";

enum FineLabel : std::uint8_t {
  kBackground = 0,
  kHat,
  kHair,
  kFace,
  kTorso,
  kLeftUpperArm,
  kRightUpperArm,
  kLeftLowerArm,
  kRightLowerArm,
  kLeftLeg,
  kRightLeg,
  kShoes,
  kFineCount
};
}  // namespace synthetic

}  // namespace sst
