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

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sst/domain.hpp"
#include "sst/image_io.hpp"

namespace sst {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

/// Articulated 2-D figure. "Left" limbs are the ones at smaller x.
/// All coordinates are integer pixels; rendering is pure integer arithmetic.
struct FigureSkeleton {
  int height = 0;
  int width = 0;

  Point head;
  int head_radius = 0;
  Point neck;    // torso top centre
  Point pelvis;  // torso bottom centre
  int torso_half_width = 0;

  Point left_shoulder, right_shoulder;
  Point left_elbow, right_elbow;
  Point left_wrist, right_wrist;
  Point left_hip, right_hip;
  Point left_knee, right_knee;
  Point left_ankle, right_ankle;
  Point left_toe, right_toe;

  int arm_radius = 0;
  int leg_radius = 0;
  int shoe_radius = 0;

  bool hat = false;
  int hair_length = 0;  // 0 short, 1 long

  std::uint64_t noise_seed = 0;

  /// Named joints, in a fixed order.
  std::vector<std::pair<std::string, Point>> joints() const;
  bool operator==(const FigureSkeleton&) const = default;
};

/// Image plus one label raster per carried domain.
struct SegSample {
  Image image;
  std::map<std::string, LabelMap> labels;
  std::vector<std::string> domain_ids;
};

inline constexpr int kMinCanvas = 32;

FigureSkeleton sample_figure(std::uint64_t seed, int height, int width);

/// Draws the fine raster (back to front: legs, torso, arms, head, hair,
/// hat), colours it with the root domain palette plus seeded noise, and
/// derives every other requested domain with coarsen_labels. `domain_ids`
/// must start with the fine (root) domain.
SegSample rasterize(const FigureSkeleton& figure, const DomainRegistry& registry,
                    const std::vector<std::string>& domain_ids);

/// Fine-label raster only (no image, no noise).
LabelMap render_fine_labels(const FigureSkeleton& figure);

struct GenerationConfig {
  std::filesystem::path out_dir;
  int count = 0;
  std::uint64_t seed = 0;
  int height = 48;
  int width = 48;
  double split = 0.8;  // train fraction
  std::vector<std::string> domains{synthetic::kFine, synthetic::kMid, synthetic::kCoarse};

  nlohmann::json to_json() const;
};

struct ManifestEntry {
  std::string id;
  std::string image;
  std::map<std::string, std::string> labels;  // domain id -> relative path
  std::string split;
};

struct DatasetManifest {
  std::filesystem::path root;
  nlohmann::json config;
  std::vector<std::string> domains;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Number of training samples for `count` samples at train fraction `split`.
int train_count(int count, double split);

DatasetManifest generate_dataset(const GenerationConfig& cfg,
                                 const DomainRegistry& registry = builtin_registry());

DatasetManifest load_manifest(const std::filesystem::path& dir);

/// Reads the image and the requested domain raster of one entry.
struct LoadedSample {
  Image image;
  LabelMap labels;
};
LoadedSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                         const std::string& domain);

}  // namespace sst
