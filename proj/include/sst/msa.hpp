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

#include <random>
#include <vector>

#include "sst/autograd.hpp"
#include "sst/domain.hpp"

namespace sst {

/// One-hot split of a downsampled label raster. `assignment` holds the
/// category of each cell (row-major), or -1 for ignored cells.
struct RegionMasks {
  int height = 0;
  int width = 0;
  int num_categories = 0;
  int factor = 1;
  std::vector<int> assignment;
  std::vector<bool> presence;

  bool mask(int z, int y, int x) const {
    return assignment[static_cast<std::size_t>(y) * width + x] == z;
  }
};

/// Pooled category features of one scale. Rows of absent categories are zero.
struct CategoryFeatures {
  Tensor s;  // [Z, D]
  std::vector<bool> presence;
  int scale = 0;
};

inline constexpr const char* kMsaWeight = "msa.ws";

void init_msa_params(ParamStore& store, int feature_dim, std::mt19937_64& rng);

/// Nearest-neighbour (top-left of each factor x factor block) downsampling
/// followed by a one-hot split into `num_categories` masks.
RegionMasks region_masks_by_factor(const LabelMap& labels, int factor, int num_categories);
/// Masks for pyramid scale l (factor 16, 8, 4 for l = 1, 2, 3).
RegionMasks region_masks(const LabelMap& labels, int scale, int num_categories);

/// features [h*w, D] of one image -> [Z, D]:
/// concat(avg over region, max over region) . W_s, zero for empty regions.
Var aggregate(Var features, const RegionMasks& masks, Var ws);
/// features [h, w, D].
CategoryFeatures aggregate(const Tensor& features, const RegionMasks& masks, const Tensor& ws,
                           int scale = 0);

}  // namespace sst
