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
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sst/autograd.hpp"
#include "sst/domain.hpp"
#include "sst/image_io.hpp"

namespace sst {

/// Channel layout of the parsing network. `widths` are the encoder widths at
/// strides 1, 2, 4, 8, 16; every decoder output has `feature_dim` channels.
struct NetConfig {
  int feature_dim = 64;
  std::array<int, 5> widths{8, 16, 32, 48, 64};

  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Graph-level pyramid for a batch of N images of size H x W:
/// h1 [N,H/16,W/16,D], h2 [N,H/8,W/8,D], h3 [N,H/4,W/4,D], f [N,H,W,D].
struct PyramidVars {
  Var h1, h2, h3, f;
  const Var& scale(int l) const;  // l in {1,2,3}
};

/// Value-level pyramid of a single image (leading batch axis dropped).
struct FeaturePyramid {
  Tensor h1, h2, h3, f;
};

/// Spatial reduction factor of pyramid scale l: 16, 8, 4.
int scale_factor(int l);

std::string head_weight_name(const std::string& domain);
std::string head_bias_name(const std::string& domain);
std::string head_tag(const std::string& domain);

void init_core_params(ParamStore& store, const NetConfig& cfg, std::mt19937_64& rng);
void init_head_params(ParamStore& store, const std::string& domain, int num_classes,
                      int feature_dim, std::mt19937_64& rng);

/// Packs images into an [N,H,W,3] tensor scaled to [0,1].
Tensor image_batch(const std::vector<const Image*>& images);

/// Throws ShapeError unless height and width are positive multiples of 16.
void check_input_size(int height, int width);

PyramidVars forward(Binder& params, Var images, const NetConfig& cfg);
FeaturePyramid forward(const Tensor& image, ParamStore& params, const NetConfig& cfg);

/// Per-pixel 1x1 head: features [P,D] -> logits [P,Z].
Var predict(Var features, Var weight, Var bias);
Var predict(Binder& params, Var features, const std::string& domain);
/// features [H,W,D] -> logits [H,W,Z].
Tensor predict(const Tensor& features, const Tensor& weight, const Tensor& bias);

/// Pixel-mean cross-entropy of logits [sum of H*W, Z] against the rasters,
/// stacked in order. Out-of-range labels raise DomainError with the image
/// index and coordinate; an all-ignored input logs a warning and yields 0.
Var seg_loss(Var logits, const std::vector<const LabelMap*>& labels);
/// logits [H,W,Z] against one raster.
float seg_loss(const Tensor& logits, const LabelMap& labels);

}  // namespace sst
