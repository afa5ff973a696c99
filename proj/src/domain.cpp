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

#include "sst/domain.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace sst {
namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError("parse error in " + path.string() + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw DomainError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("field '") + key + "' has the wrong type: " + e.what());
  }
}

std::vector<Rgb> parse_palette(const json& j, int z) {
  auto raw = field<std::vector<std::vector<int>>>(j, "palette");
  if (static_cast<int>(raw.size()) != z) {
    throw DomainError("field 'palette': expected " + std::to_string(z) + " entries, got " +
                      std::to_string(raw.size()));
  }
  std::vector<Rgb> palette;
  for (const auto& c : raw) {
    if (c.size() != 3) throw DomainError("field 'palette': entries must be [r,g,b]");
    Rgb rgb{};
    for (int k = 0; k < 3; ++k) {
      if (c[k] < 0 || c[k] > 255) throw DomainError("field 'palette': channel outside 0..255");
      rgb[k] = static_cast<std::uint8_t>(c[k]);
    }
    palette.push_back(rgb);
  }
  return palette;
}

}  // namespace

LabelDomain LabelDomain::from_edges(std::string id, std::vector<std::string> names,
                                    const std::vector<std::pair<int, int>>& edges,
                                    std::vector<Rgb> palette) {
  const int z = static_cast<int>(names.size());
  std::vector<std::uint8_t> intra(static_cast<std::size_t>(z) * z, 0);
  for (int i = 0; i < z; ++i) intra[static_cast<std::size_t>(i) * z + i] = 1;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= z || b >= z) {
      throw DomainError("field 'intra_edges': index pair [" + std::to_string(a) + "," +
                        std::to_string(b) + "] outside 0.." + std::to_string(z - 1));
    }
    intra[static_cast<std::size_t>(a) * z + b] = 1;
    intra[static_cast<std::size_t>(b) * z + a] = 1;
  }
  return from_matrix(std::move(id), std::move(names), std::move(intra), std::move(palette));
}

LabelDomain LabelDomain::from_matrix(std::string id, std::vector<std::string> names,
                                     std::vector<std::uint8_t> intra, std::vector<Rgb> palette) {
  LabelDomain d;
  d.id_ = std::move(id);
  d.names_ = std::move(names);
  d.intra_ = std::move(intra);
  d.palette_ = std::move(palette);
  d.validate();
  return d;
}

void LabelDomain::validate() const {
  const int z = size();
  if (id_.empty()) throw DomainError("field 'id': empty domain id");
  if (z <= 0) throw DomainError("field 'names': domain must have at least one category");
  if (intra_.size() != static_cast<std::size_t>(z) * z) {
    throw DomainError("field 'intra': M_intra must be " + std::to_string(z) + "x" +
                      std::to_string(z));
  }
  if (static_cast<int>(palette_.size()) != z) {
    throw DomainError("field 'palette': expected " + std::to_string(z) + " entries");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (!seen.insert(n).second) throw DomainError("field 'names': duplicate category '" + n + "'");
  }
  for (int i = 0; i < z; ++i) {
    for (int j = 0; j < z; ++j) {
      const auto v = intra_[static_cast<std::size_t>(i) * z + j];
      const std::string at = "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
      if (v > 1) throw DomainError("field 'intra': M_intra" + at + " is not binary");
      if (v != intra_[static_cast<std::size_t>(j) * z + i]) {
        throw DomainError("field 'intra': M_intra is not symmetric at " + at);
      }
      if (i == j && v != 1) throw DomainError("field 'intra': diagonal M_intra" + at + " must be 1");
      if (i == 0 && v != 1) {
        throw DomainError("field 'intra': background row must be all ones, M_intra" + at + " is 0");
      }
    }
  }
}

int LabelDomain::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DomainError("domain '" + id_ + "' has no category '" + name + "'");
  return static_cast<int>(it - names_.begin());
}

Tensor LabelDomain::intra_mask() const {
  const int z = size();
  Tensor m({z, z});
  for (std::size_t i = 0; i < intra_.size(); ++i) m[i] = intra_[i];
  return m;
}

json LabelDomain::to_json() const {
  const int z = size();
  json edges = json::array();
  for (int i = 0; i < z; ++i) {
    for (int j = i + 1; j < z; ++j) {
      if (adjacent(i, j)) edges.push_back({i, j});
    }
  }
  json palette = json::array();
  for (const auto& c : palette_) palette.push_back({c[0], c[1], c[2]});
  return json{{"id", id_}, {"names", names_}, {"intra_edges", edges}, {"palette", palette}};
}

LabelDomain domain_from_json(const json& j) {
  auto id = field<std::string>(j, "id");
  auto names = field<std::vector<std::string>>(j, "names");
  const int z = static_cast<int>(names.size());
  for (const char* key : {"Z", "z"}) {
    if (j.contains(key) && field<int>(j, key) != z) {
      throw DomainError(std::string("field '") + key + "': declares Z=" +
                        std::to_string(field<int>(j, key)) + " but 'names' has " +
                        std::to_string(z) + " entries");
    }
  }
  auto palette = parse_palette(j, z);
  if (j.contains("intra_matrix")) {
    auto rows = field<std::vector<std::vector<int>>>(j, "intra_matrix");
    if (static_cast<int>(rows.size()) != z) {
      throw DomainError("field 'intra_matrix': expected " + std::to_string(z) + " rows, got " +
                        std::to_string(rows.size()));
    }
    std::vector<std::uint8_t> intra;
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != z) {
        throw DomainError("field 'intra_matrix': expected " + std::to_string(z) + " columns");
      }
      for (int v : r) {
        if (v != 0 && v != 1) throw DomainError("field 'intra_matrix': entries must be 0 or 1");
        intra.push_back(static_cast<std::uint8_t>(v));
      }
    }
    return LabelDomain::from_matrix(std::move(id), std::move(names), std::move(intra),
                                    std::move(palette));
  }
  auto raw = field<std::vector<std::vector<int>>>(j, "intra_edges");
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : raw) {
    if (e.size() != 2) throw DomainError("field 'intra_edges': entries must be [i,j] pairs");
    edges.emplace_back(e[0], e[1]);
  }
  return LabelDomain::from_edges(std::move(id), std::move(names), edges, std::move(palette));
}

LabelDomain load_domain(const std::filesystem::path& path) {
  try {
    return domain_from_json(read_json_file(path));
  } catch (const DomainError& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

Tensor derive_static_from_hierarchy(const std::vector<int>& coarsening, int z_src, int z_dst) {
  std::vector<int> unmapped;
  for (int f = 0; f < z_src; ++f) {
    if (f >= static_cast<int>(coarsening.size()) || coarsening[f] < 0 || coarsening[f] >= z_dst) {
      unmapped.push_back(f);
    }
  }
  if (!unmapped.empty()) {
    std::ostringstream os;
    os << "coarsening map is not total; unmapped source indices:";
    for (int f : unmapped) os << ' ' << f;
    throw DomainError(os.str());
  }
  if (static_cast<int>(coarsening.size()) != z_src) {
    throw DomainError("coarsening map has " + std::to_string(coarsening.size()) +
                      " entries for Z_src=" + std::to_string(z_src));
  }
  Tensor m({z_dst, z_src}, 0.0f);
  for (int f = 0; f < z_src; ++f) m.at(coarsening[f], f) = 1.0f;
  return m;
}

LabelMap coarsen_labels(const LabelMap& labels, const std::vector<int>& coarsening) {
  LabelMap out(labels.height, labels.width);
  const int n = static_cast<int>(coarsening.size());
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const int v = labels.at(y, x);
      if (v == kIgnoreLabel) {
        out.at(y, x) = kIgnoreLabel;
        continue;
      }
      if (v >= n || coarsening[v] < 0) {
        throw DomainError("coarsen_labels: label " + std::to_string(v) + " at (" +
                          std::to_string(y) + ", " + std::to_string(x) +
                          ") is outside the coarsening map");
      }
      out.at(y, x) = static_cast<std::uint8_t>(coarsening[v]);
    }
  }
  return out;
}

CrossLink CrossLink::from_coarsening(const LabelDomain& src, const LabelDomain& dst,
                                     std::vector<int> coarsening) {
  CrossLink l;
  l.src_id_ = src.id();
  l.dst_id_ = dst.id();
  l.matrix_ = derive_static_from_hierarchy(coarsening, src.size(), dst.size());
  l.coarsening_ = std::move(coarsening);
  l.validate();
  return l;
}

CrossLink CrossLink::from_matrix(const LabelDomain& src, const LabelDomain& dst, Tensor matrix) {
  CrossLink l;
  l.src_id_ = src.id();
  l.dst_id_ = dst.id();
  if (matrix.shape() != Shape{dst.size(), src.size()}) {
    throw DomainError("field 'matrix': expected shape (Z_dst, Z_src) = " +
                      shape_str({dst.size(), src.size()}) + ", got " + shape_str(matrix.shape()));
  }
  l.matrix_ = std::move(matrix);
  l.validate();
  return l;
}

void CrossLink::validate() const {
  const int zd = matrix_.dim(0), zs = matrix_.dim(1);
  for (int r = 0; r < zd; ++r) {
    bool nonzero = false;
    for (int c = 0; c < zs; ++c) {
      const float v = matrix_.at(r, c);
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw DomainError("field 'matrix': entry [" + std::to_string(r) + "][" +
                          std::to_string(c) + "] outside [0,1]");
      }
      nonzero = nonzero || v != 0.0f;
    }
    if (!nonzero) throw DomainError("field 'matrix': row " + std::to_string(r) + " is all zero");
  }
  if (coarsening_) {
    if ((*coarsening_)[0] != 0) throw DomainError("field 'coarsening': background must map to 0");
  }
}

json CrossLink::to_json() const {
  json j{{"src", src_id_}, {"dst", dst_id_}};
  if (coarsening_) {
    j["coarsening"] = *coarsening_;
  } else {
    j["matrix"] = std::vector<float>(matrix_.storage().begin(), matrix_.storage().end());
  }
  return j;
}

CrossLink link_from_json(const json& j, const LabelDomain& src, const LabelDomain& dst) {
  if (field<std::string>(j, "src") != src.id() || field<std::string>(j, "dst") != dst.id()) {
    throw DomainError("link endpoints do not match the supplied domains");
  }
  if (j.contains("coarsening")) {
    return CrossLink::from_coarsening(src, dst, field<std::vector<int>>(j, "coarsening"));
  }
  auto values = field<std::vector<float>>(j, "matrix");
  const std::size_t expected = static_cast<std::size_t>(dst.size()) * src.size();
  if (values.size() != expected) {
    throw DomainError("field 'matrix': expected " + std::to_string(expected) +
                      " values (Z_dst x Z_src = " + std::to_string(dst.size()) + " x " +
                      std::to_string(src.size()) + "), got " + std::to_string(values.size()));
  }
  return CrossLink::from_matrix(src, dst, Tensor({dst.size(), src.size()}, std::move(values)));
}

CrossLink load_link(const std::filesystem::path& path, const LabelDomain& src,
                    const LabelDomain& dst) {
  try {
    return link_from_json(read_json_file(path), src, dst);
  } catch (const DomainError& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

DomainRegistry::DomainRegistry(std::vector<LabelDomain> domains, std::vector<CrossLink> links)
    : domains_(std::move(domains)), links_(std::move(links)) {
  std::set<std::string> ids;
  for (const auto& d : domains_) {
    if (!ids.insert(d.id()).second) throw DomainError("duplicate domain id '" + d.id() + "'");
  }
  for (const auto& l : links_) {
    if (!ids.count(l.src_id()) || !ids.count(l.dst_id())) {
      throw DomainError("link " + l.src_id() + "->" + l.dst_id() + " names an unknown domain");
    }
  }
}

DomainRegistry DomainRegistry::load_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> domain_files, link_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.ends_with(".domain.json")) domain_files.push_back(entry.path());
    if (name.ends_with(".link.json")) link_files.push_back(entry.path());
  }
  std::sort(domain_files.begin(), domain_files.end());
  std::sort(link_files.begin(), link_files.end());
  std::vector<LabelDomain> domains;
  for (const auto& p : domain_files) domains.push_back(load_domain(p));
  DomainRegistry partial(domains, {});
  std::vector<CrossLink> links;
  for (const auto& p : link_files) {
    const json j = read_json_file(p);
    const auto& src = partial.domain(field<std::string>(j, "src"));
    const auto& dst = partial.domain(field<std::string>(j, "dst"));
    links.push_back(load_link(p, src, dst));
  }
  return DomainRegistry(std::move(domains), std::move(links));
}

bool DomainRegistry::has_domain(const std::string& id) const {
  return std::any_of(domains_.begin(), domains_.end(), [&](const auto& d) { return d.id() == id; });
}

const LabelDomain& DomainRegistry::domain(const std::string& id) const {
  for (const auto& d : domains_) {
    if (d.id() == id) return d;
  }
  throw DomainError("unknown domain '" + id + "'");
}

const CrossLink* DomainRegistry::find_link(const std::string& src, const std::string& dst) const {
  for (const auto& l : links_) {
    if (l.src_id() == src && l.dst_id() == dst) return &l;
  }
  return nullptr;
}

Tensor DomainRegistry::static_matrix(const std::string& src, const std::string& dst) const {
  if (src == dst) {
    const int z = domain(src).size();
    Tensor eye({z, z}, 0.0f);
    for (int i = 0; i < z; ++i) eye.at(i, i) = 1.0f;
    return eye;
  }
  if (const auto* l = find_link(src, dst)) return l->static_matrix();
  if (const auto* l = find_link(dst, src)) {
    const Tensor& m = l->static_matrix();
    Tensor t({m.dim(1), m.dim(0)});
    for (int r = 0; r < m.dim(0); ++r) {
      for (int c = 0; c < m.dim(1); ++c) t.at(c, r) = m.at(r, c);
    }
    return t;
  }
  throw DomainError("no cross-domain link between '" + src + "' and '" + dst + "'");
}

std::optional<std::vector<int>> DomainRegistry::coarsening(const std::string& src,
                                                           const std::string& dst) const {
  if (src == dst) {
    std::vector<int> id(domain(src).size());
    for (std::size_t i = 0; i < id.size(); ++i) id[i] = static_cast<int>(i);
    return id;
  }
  if (const auto* l = find_link(src, dst); l && l->coarsening()) return l->coarsening();
  // One level of composition through an intermediate domain.
  for (const auto& l : links_) {
    if (l.src_id() != src || !l.coarsening()) continue;
    const auto* next = find_link(l.dst_id(), dst);
    if (!next || !next->coarsening()) continue;
    std::vector<int> composed;
    for (int c : *l.coarsening()) composed.push_back((*next->coarsening())[c]);
    return composed;
  }
  return std::nullopt;
}

json DomainRegistry::to_json() const {
  json doms = json::array();
  for (const auto& d : domains_) doms.push_back(d.to_json());
  json links = json::array();
  for (const auto& l : links_) links.push_back(l.to_json());
  auto by = [](const char* a, const char* b) {
    return [=](const json& x, const json& y) {
      return std::tie(x[a], x[b]) < std::tie(y[a], y[b]);
    };
  };
  std::sort(doms.begin(), doms.end(), by("id", "id"));
  std::sort(links.begin(), links.end(), by("src", "dst"));
  return json{{"domains", doms}, {"links", links}};
}

std::string DomainRegistry::hash() const {
  const std::string canonical = to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const DomainRegistry& builtin_registry() {
  static const DomainRegistry registry = [] {
    using E = std::vector<std::pair<int, int>>;
    // Adjacency measured on rendered figures (see the synthgen tests).
    auto fine = LabelDomain::from_edges(
        synthetic::kFine,
        {"background", "hat", "hair", "face", "torso", "left-upper-arm", "right-upper-arm",
         "left-lower-arm", "right-lower-arm", "left-leg", "right-leg", "shoes"},
        E{{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {0, 6}, {0, 7}, {0, 8}, {0, 9}, {0, 10}, {0, 11},
          {1, 2}, {2, 3}, {2, 4}, {2, 5}, {2, 6}, {3, 4}, {4, 5}, {4, 6}, {4, 9}, {4, 10},
          {5, 7}, {6, 8}, {9, 11}, {10, 11}},
        {Rgb{0, 0, 0}, Rgb{230, 25, 75}, Rgb{128, 64, 0}, Rgb{255, 200, 150}, Rgb{60, 180, 75},
         Rgb{0, 130, 200}, Rgb{245, 130, 48}, Rgb{145, 30, 180}, Rgb{70, 240, 240},
         Rgb{240, 50, 230}, Rgb{210, 245, 60}, Rgb{128, 128, 128}});
    auto mid = LabelDomain::from_edges(
        synthetic::kMid,
        {"background", "hair", "face", "torso", "upper-arms", "lower-arms", "legs", "shoes"},
        E{{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {0, 6}, {0, 7},
          {1, 2}, {1, 3}, {1, 4}, {2, 3}, {3, 4}, {3, 6}, {4, 5}, {6, 7}},
        {Rgb{0, 0, 0}, Rgb{128, 64, 0}, Rgb{255, 200, 150}, Rgb{60, 180, 75}, Rgb{0, 130, 200},
         Rgb{145, 30, 180}, Rgb{240, 50, 230}, Rgb{128, 128, 128}});
    auto coarse = LabelDomain::from_edges(
        synthetic::kCoarse, {"background", "head", "torso", "arms", "legs"},
        E{{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {2, 3}, {2, 4}},
        {Rgb{0, 0, 0}, Rgb{255, 200, 150}, Rgb{60, 180, 75}, Rgb{0, 130, 200},
         Rgb{240, 50, 230}});
    std::vector<CrossLink> links{
        CrossLink::from_coarsening(fine, mid, {0, 1, 1, 2, 3, 4, 4, 5, 5, 6, 6, 7}),
        CrossLink::from_coarsening(fine, coarse, {0, 1, 1, 1, 2, 3, 3, 3, 3, 4, 4, 4}),
        CrossLink::from_coarsening(mid, coarse, {0, 1, 1, 2, 3, 3, 4, 4}),
    };
    return DomainRegistry({coarse, mid, fine}, std::move(links));
  }();
  return registry;
}

}  // namespace sst
