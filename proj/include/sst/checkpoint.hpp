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

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sst/params.hpp"
#include "sst/parsenet.hpp"

namespace sst {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named, tagged parameters plus run metadata. On disk: a directory with
/// `manifest.json` and `tensors.bin` (little-endian float32, tensors
/// concatenated in manifest order, which is ascending by name).
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  ParamStore params;

  NetConfig net() const;
  /// Domains with a prediction head, in metadata order.
  std::vector<std::string> head_domains() const;
  std::string registry_hash() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Copy holding only the parameters accepted by `keep`, same metadata.
Checkpoint filter_checkpoint(const Checkpoint& ckpt,
                             const std::function<bool(const Parameter&)>& keep);

/// Total bytes of `manifest.json` and `tensors.bin`.
std::uintmax_t checkpoint_size(const std::filesystem::path& dir);

}  // namespace sst
