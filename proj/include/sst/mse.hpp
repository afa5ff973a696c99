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
#include <vector>

#include "sst/autograd.hpp"
#include "sst/domain.hpp"

namespace sst {

inline constexpr int kNumScales = 3;

std::string mse_tag(const std::string& domain);
std::string embedding_name(const std::string& domain);
/// Name of a projection of SP layer `layer` (1..3); `which` is "q", "k" or "v".
std::string sp_param_name(const std::string& domain, int layer, const char* which);

/// X_0 ~ N(0, 0.02^2) of shape [Z, D] plus three layers of D x D projections.
void init_mse_params(ParamStore& store, const std::string& domain, int num_classes,
                     int feature_dim, std::mt19937_64& rng);

/// X_l = (softmax(Q K^T / sqrt(D)) .* M_intra) V + X_prev with Q = X_prev Wq,
/// K = S Wk, V = S Wv. Rows are not renormalized after masking.
/// Throws std::runtime_error naming `layer` on a non-finite result.
Var sp_layer(Var x_prev, Var s, const Tensor& m_intra, Var wq, Var wk, Var wv, int layer);
Var sp_layer(Binder& params, const std::string& domain, int layer, Var x_prev, Var s,
             const Tensor& m_intra);
Tensor sp_layer(const Tensor& x_prev, const Tensor& s, const Tensor& m_intra, const Tensor& wq,
                const Tensor& wk, const Tensor& wv, int layer = 1);

/// Effective attention softmax(Q K^T / sqrt(D)) .* M_intra of one SP layer.
Tensor sp_attention(const Tensor& x_prev, const Tensor& s, const Tensor& m_intra,
                    const Tensor& wq, const Tensor& wk);

/// A_aux = F X_L^T: features [P, D], embeddings [Z, D] -> [P, Z].
Var aux_logits(Var features, Var x_last);
/// features [H, W, D] -> [H, W, Z].
Tensor aux_logits(const Tensor& features, const Tensor& x_last);

/// Same contract as seg_loss.
Var aux_loss(Var aux_logits, const std::vector<const LabelMap*>& labels);
float aux_loss(const Tensor& aux_logits, const LabelMap& labels);

}  // namespace sst
