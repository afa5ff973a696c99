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

#include "sst/mse.hpp"

#include <cmath>
#include <stdexcept>

#include "sst/parsenet.hpp"

namespace sst {
namespace {

Var masked_attention(Var x_prev, Var s, const Tensor& m_intra, Var wq, Var wk) {
  const int z = x_prev.shape()[0];
  const int d = x_prev.shape()[1];
  if (s.shape().size() != 2 || s.shape()[1] != d) {
    throw ShapeError("sp_layer: S " + shape_str(s.shape()) + " vs X " + shape_str(x_prev.shape()));
  }
  require_shape(m_intra, {z, s.shape()[0]}, "sp_layer M_intra");
  Var q = ops::matmul(x_prev, wq);
  Var k = ops::matmul(s, wk);
  Var a = ops::softmax_rows(ops::scale(ops::matmul_nt(q, k), 1.0f / std::sqrt(static_cast<float>(d))));
  return ops::mul(a, x_prev.graph->constant(m_intra));
}

}  // namespace

std::string mse_tag(const std::string& domain) { return "mse:" + domain; }
std::string embedding_name(const std::string& domain) { return "mse." + domain + ".x0"; }
std::string sp_param_name(const std::string& domain, int layer, const char* which) {
  return "mse." + domain + ".sp" + std::to_string(layer) + "." + which;
}

void init_mse_params(ParamStore& store, const std::string& domain, int num_classes,
                     int feature_dim, std::mt19937_64& rng) {
  const std::string tag = mse_tag(domain);
  store.add(embedding_name(domain), tag, random_normal({num_classes, feature_dim}, 0.02f, rng));
  const float stddev = 1.0f / std::sqrt(static_cast<float>(feature_dim));
  for (int l = 1; l <= kNumScales; ++l) {
    for (const char* w : {"q", "k", "v"}) {
      store.add(sp_param_name(domain, l, w), tag,
                random_normal({feature_dim, feature_dim}, stddev, rng));
    }
  }
}

Var sp_layer(Var x_prev, Var s, const Tensor& m_intra, Var wq, Var wk, Var wv, int layer) {
  if (x_prev.shape().size() != 2) {
    throw ShapeError("sp_layer " + std::to_string(layer) + ": X " + shape_str(x_prev.shape()));
  }
  Var attn = masked_attention(x_prev, s, m_intra, wq, wk);
  Var out = ops::add(ops::matmul(attn, ops::matmul(s, wv)), x_prev);
  if (!out.value().all_finite()) {
    throw std::runtime_error("sp_layer " + std::to_string(layer) + ": non-finite output");
  }
  return out;
}

Var sp_layer(Binder& p, const std::string& domain, int layer, Var x_prev, Var s,
             const Tensor& m_intra) {
  return sp_layer(x_prev, s, m_intra, p(sp_param_name(domain, layer, "q")),
                  p(sp_param_name(domain, layer, "k")), p(sp_param_name(domain, layer, "v")),
                  layer);
}

Tensor sp_layer(const Tensor& x_prev, const Tensor& s, const Tensor& m_intra, const Tensor& wq,
                const Tensor& wk, const Tensor& wv, int layer) {
  Graph g;
  return sp_layer(g.constant(x_prev), g.constant(s), m_intra, g.constant(wq), g.constant(wk),
                  g.constant(wv), layer)
      .value();
}

Tensor sp_attention(const Tensor& x_prev, const Tensor& s, const Tensor& m_intra,
                    const Tensor& wq, const Tensor& wk) {
  Graph g;
  return masked_attention(g.constant(x_prev), g.constant(s), m_intra, g.constant(wq),
                          g.constant(wk))
      .value();
}

Var aux_logits(Var features, Var x_last) {
  const Shape& fs = features.shape();
  const Shape& xs = x_last.shape();
  if (fs.size() != 2 || xs.size() != 2 || fs[1] != xs[1]) {
    throw ShapeError("aux_logits: features " + shape_str(fs) + " vs embeddings " + shape_str(xs));
  }
  return ops::matmul_nt(features, x_last);
}

Tensor aux_logits(const Tensor& features, const Tensor& x_last) {
  if (features.rank() != 3) {
    throw ShapeError("aux_logits: expected features [H,W,D], got " + shape_str(features.shape()));
  }
  const int h = features.dim(0), w = features.dim(1), d = features.dim(2);
  Graph g;
  Var out = aux_logits(g.constant(features.reshaped({h * w, d})), g.constant(x_last));
  return out.value().reshaped({h, w, out.shape()[1]});
}

Var aux_loss(Var logits, const std::vector<const LabelMap*>& labels) {
  return seg_loss(logits, labels);
}

float aux_loss(const Tensor& logits, const LabelMap& labels) { return seg_loss(logits, labels); }

}  // namespace sst
