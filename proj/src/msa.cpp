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

#include "sst/msa.hpp"

#include <cmath>

#include "sst/parsenet.hpp"

namespace sst {

void init_msa_params(ParamStore& store, int feature_dim, std::mt19937_64& rng) {
  const float stddev = 1.0f / std::sqrt(static_cast<float>(2 * feature_dim));
  store.add(kMsaWeight, "msa", random_normal({2 * feature_dim, feature_dim}, stddev, rng));
}

RegionMasks region_masks_by_factor(const LabelMap& labels, int factor, int num_categories) {
  if (factor <= 0 || labels.height % factor != 0 || labels.width % factor != 0) {
    throw ShapeError("region_masks: raster " + std::to_string(labels.height) + "x" +
                     std::to_string(labels.width) + " is not divisible by " +
                     std::to_string(factor));
  }
  RegionMasks m;
  m.height = labels.height / factor;
  m.width = labels.width / factor;
  m.num_categories = num_categories;
  m.factor = factor;
  m.assignment.assign(static_cast<std::size_t>(m.height) * m.width, -1);
  m.presence.assign(num_categories, false);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const int v = labels.at(y * factor, x * factor);
      if (v == kIgnoreLabel) continue;
      if (v >= num_categories) {
        throw DomainError("region_masks: label " + std::to_string(v) + " >= Z=" +
                          std::to_string(num_categories) + " at (y=" +
                          std::to_string(y * factor) + ", x=" + std::to_string(x * factor) + ")");
      }
      m.assignment[static_cast<std::size_t>(y) * m.width + x] = v;
      m.presence[v] = true;
    }
  }
  return m;
}

RegionMasks region_masks(const LabelMap& labels, int scale, int num_categories) {
  return region_masks_by_factor(labels, scale_factor(scale), num_categories);
}

Var aggregate(Var features, const RegionMasks& masks, Var ws) {
  const Shape& fs = features.shape();
  const std::size_t cells = masks.assignment.size();
  if (fs.size() != 2 || static_cast<std::size_t>(fs[0]) != cells) {
    throw ShapeError("aggregate: features " + shape_str(fs) + " do not match " +
                     std::to_string(masks.height) + "x" + std::to_string(masks.width) +
                     " masks");
  }
  const Shape& w = ws.shape();
  if (w.size() != 2 || w[0] != 2 * fs[1]) {
    throw ShapeError("aggregate: W_s " + shape_str(w) + " does not accept 2D=" +
                     std::to_string(2 * fs[1]) + " inputs");
  }
  return ops::matmul(ops::category_pool(features, masks.assignment, masks.num_categories), ws);
}

CategoryFeatures aggregate(const Tensor& features, const RegionMasks& masks, const Tensor& ws,
                           int scale) {
  if (features.rank() != 3 || features.dim(0) != masks.height ||
      features.dim(1) != masks.width) {
    throw ShapeError("aggregate: features " + shape_str(features.shape()) + " vs masks " +
                     std::to_string(masks.height) + "x" + std::to_string(masks.width));
  }
  Graph g;
  const int d = features.dim(2);
  Var s = aggregate(g.constant(features.reshaped({masks.height * masks.width, d})), masks,
                    g.constant(ws));
  return {s.value(), masks.presence, scale};
}

}  // namespace sst
