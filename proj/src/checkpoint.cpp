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

#include "sst/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace sst {
namespace {

namespace fs = std::filesystem;

constexpr const char* kFormat = "sst-checkpoint-v1";

void put_le(std::vector<char>& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

NetConfig Checkpoint::net() const {
  if (!metadata.contains("net")) throw CheckpointError("checkpoint metadata has no 'net' entry");
  return NetConfig::from_json(metadata.at("net"));
}

std::vector<std::string> Checkpoint::head_domains() const {
  std::vector<std::string> out;
  if (metadata.contains("domains")) out = metadata.at("domains").get<std::vector<std::string>>();
  return out;
}

std::string Checkpoint::registry_hash() const {
  return metadata.value("registry_hash", std::string());
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  std::vector<const Parameter*> order;
  for (const auto& p : ckpt.params.all()) order.push_back(&p);
  std::sort(order.begin(), order.end(),
            [](const Parameter* a, const Parameter* b) { return a->name < b->name; });

  nlohmann::json tensors = nlohmann::json::object();
  std::vector<char> blob;
  for (const Parameter* p : order) {
    const std::size_t offset = blob.size();
    for (float v : p->value.values()) put_le(blob, v);
    tensors[p->name] = {{"shape", p->value.shape()},
                        {"offset", offset},
                        {"bytes", blob.size() - offset},
                        {"tag", p->tag}};
  }
  nlohmann::json manifest = {{"format", kFormat}, {"metadata", ckpt.metadata}, {"tensors", tensors}};

  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
  }
  std::ofstream out(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError("cannot write " + (dir / "tensors.bin").string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw CheckpointError("cannot open checkpoint manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", std::string()) != kFormat) {
    throw CheckpointError(manifest_path.string() + ": not an " + std::string(kFormat) + " manifest");
  }

  std::ifstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw CheckpointError("cannot open " + (dir / "tensors.bin").string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  ckpt.metadata = manifest.at("metadata");
  std::size_t expected_offset = 0;
  for (const auto& [name, entry] : manifest.at("tensors").items()) {
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t bytes = entry.at("bytes").get<std::size_t>();
    if (bytes != shape_numel(shape) * 4 || offset != expected_offset ||
        offset + bytes > blob.size()) {
      throw CheckpointError("tensor '" + name + "': inconsistent offset/length in " +
                            manifest_path.string());
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = get_le(blob.data() + offset + 4 * i);
    ckpt.params.add(name, entry.at("tag").get<std::string>(), std::move(t));
    expected_offset = offset + bytes;
  }
  if (expected_offset != blob.size()) {
    throw CheckpointError("tensors.bin has " + std::to_string(blob.size() - expected_offset) +
                          " trailing bytes");
  }
  return ckpt;
}

Checkpoint filter_checkpoint(const Checkpoint& ckpt,
                             const std::function<bool(const Parameter&)>& keep) {
  Checkpoint out;
  out.metadata = ckpt.metadata;
  for (const auto& p : ckpt.params.all()) {
    if (keep(p)) out.params.add(p.name, p.tag, p.value);
  }
  return out;
}

std::uintmax_t checkpoint_size(const fs::path& dir) {
  return fs::file_size(dir / "manifest.json") + fs::file_size(dir / "tensors.bin");
}

}  // namespace sst
