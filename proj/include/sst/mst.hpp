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
#include <string>
#include <utility>
#include <vector>

#include "sst/autograd.hpp"
#include "sst/msa.hpp"

namespace sst {

/// Unordered domain pair, stored in configuration order (coarser first).
struct DomainPair {
  std::string a;
  std::string b;
  std::string id() const { return a + "-" + b; }
  bool operator==(const DomainPair&) const = default;
};

std::string mst_tag(const DomainPair& pair);
/// Parameter name of SM layer `layer` (0..3) for the direction src -> dst.
/// `which` is one of "q", "k", "v" and, for layer >= 1, "wsrc", "wdst".
std::string sm_param_name(const DomainPair& pair, const std::string& src, const std::string& dst,
                          int layer, const char* which);

/// Both directions, layers 0..3, all projections D x D.
void init_mst_params(ParamStore& store, const DomainPair& pair, int feature_dim,
                     std::mt19937_64& rng);

/// softmax(Q_dst K_src^T / sqrt(D)) .* M_static . V_src with
/// Q_dst = X0_dst Wq, K_src = X0_src Wk, V_src = X0_src Wv. No residual.
Var static_map(Var x0_src, Var x0_dst, const Tensor& m_static, Var wq, Var wk, Var wv);
Var static_map(Binder& params, const DomainPair& pair, const std::string& src,
               const std::string& dst, Var x0_src, Var x0_dst, const Tensor& m_static);
Tensor static_map(const Tensor& x0_src, const Tensor& x0_dst, const Tensor& m_static,
                  const Tensor& wq, const Tensor& wk, const Tensor& wv);

/// M_dyn = (S_dst W_dst)(S_src W_src)^T, shape [Z_dst, Z_src].
Var dynamic_adjacency(Var s_src, Var s_dst, Var w_src, Var w_dst);
Tensor dynamic_adjacency(const Tensor& s_src, const Tensor& s_dst, const Tensor& w_src,
                         const Tensor& w_dst);

/// softmax(Q_dst K_src^T / sqrt(D)) .* M_dyn . V_src at one scale.
Var dynamic_map(Var x_src, Var x_dst, Var s_src, Var s_dst, Var wq, Var wk, Var wv, Var w_src,
                Var w_dst);
Var dynamic_map(Binder& params, const DomainPair& pair, const std::string& src,
                const std::string& dst, int layer, Var x_src, Var x_dst, Var s_src, Var s_dst);

/// Value-level projection set of one SM layer and direction.
struct SmProjections {
  Tensor q, k, v, w_src, w_dst;
};
/// Throws std::invalid_argument when the scale of either S differs from `layer`.
Tensor dynamic_map(const Tensor& x_src, const Tensor& x_dst, const CategoryFeatures& s_src,
                   const CategoryFeatures& s_dst, int layer, const SmProjections& params);

/// mean_z1 (1 - cos(X0_1, m21)) + mean_z2 (1 - cos(X0_2, m12)).
Var scr_dataset(Var x0_1, Var x0_2, Var mapped_2to1, Var mapped_1to2);
float scr_dataset(const Tensor& x0_1, const Tensor& x0_2, const Tensor& mapped_2to1,
                  const Tensor& mapped_1to2);

/// Sum over the scales of the symmetric cosine terms.
Var scr_image(const std::vector<Var>& x_1, const std::vector<Var>& x_2,
              const std::vector<Var>& mapped_2to1, const std::vector<Var>& mapped_1to2);
float scr_image(const std::vector<Tensor>& x_1, const std::vector<Tensor>& x_2,
                const std::vector<Tensor>& mapped_2to1, const std::vector<Tensor>& mapped_1to2);

}  // namespace sst
