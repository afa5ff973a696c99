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

#include "sst/mst.hpp"

#include <cmath>
#include <stdexcept>

namespace sst {
namespace {

Var attend(Var x_src, Var x_dst, Var mask, Var wq, Var wk, Var wv) {
  const int d = x_src.shape()[1];
  Var q = ops::matmul(x_dst, wq);
  Var k = ops::matmul(x_src, wk);
  Var a = ops::softmax_rows(ops::scale(ops::matmul_nt(q, k), 1.0f / std::sqrt(static_cast<float>(d))));
  return ops::matmul(ops::mul(a, mask), ops::matmul(x_src, wv));
}

void check_pair_shapes(const Var& x_src, const Var& x_dst, const char* what) {
  const Shape& s = x_src.shape();
  const Shape& t = x_dst.shape();
  if (s.size() != 2 || t.size() != 2 || s[1] != t[1]) {
    throw ShapeError(std::string(what) + ": source " + shape_str(s) + " vs target " + shape_str(t));
  }
}

Var symmetric_cosine(Var x1, Var x2, Var m21, Var m12) {
  require_shape(m21.value(), x1.shape(), "SCR mapped 2->1");
  require_shape(m12.value(), x2.shape(), "SCR mapped 1->2");
  return ops::add(ops::cosine_distance_rows(x1, m21), ops::cosine_distance_rows(x2, m12));
}

}  // namespace

std::string mst_tag(const DomainPair& pair) { return "mst:" + pair.id(); }

std::string sm_param_name(const DomainPair& pair, const std::string& src, const std::string& dst,
                          int layer, const char* which) {
  return "mst." + pair.id() + "." + src + ">" + dst + ".sm" + std::to_string(layer) + "." + which;
}

void init_mst_params(ParamStore& store, const DomainPair& pair, int feature_dim,
                     std::mt19937_64& rng) {
  const float stddev = 1.0f / std::sqrt(static_cast<float>(feature_dim));
  const std::string tag = mst_tag(pair);
  for (const auto& [src, dst] : {std::pair{pair.a, pair.b}, std::pair{pair.b, pair.a}}) {
    for (int l = 0; l <= 3; ++l) {
      for (const char* w : {"q", "k", "v", "wsrc", "wdst"}) {
        if (l == 0 && std::string(w).starts_with("w")) continue;
        store.add(sm_param_name(pair, src, dst, l, w), tag,
                  random_normal({feature_dim, feature_dim}, stddev, rng));
      }
    }
  }
}

Var static_map(Var x0_src, Var x0_dst, const Tensor& m_static, Var wq, Var wk, Var wv) {
  check_pair_shapes(x0_src, x0_dst, "static_map");
  const int z_dst = x0_dst.shape()[0], z_src = x0_src.shape()[0];
  if (m_static.shape() != Shape{z_dst, z_src}) {
    throw ShapeError("static_map: M_static has shape " + shape_str(m_static.shape()) +
                     ", expected (Z_dst, Z_src) = " + shape_str({z_dst, z_src}));
  }
  return attend(x0_src, x0_dst, x0_src.graph->constant(m_static), wq, wk, wv);
}

Var static_map(Binder& p, const DomainPair& pair, const std::string& src, const std::string& dst,
               Var x0_src, Var x0_dst, const Tensor& m_static) {
  return static_map(x0_src, x0_dst, m_static, p(sm_param_name(pair, src, dst, 0, "q")),
                    p(sm_param_name(pair, src, dst, 0, "k")),
                    p(sm_param_name(pair, src, dst, 0, "v")));
}

Tensor static_map(const Tensor& x0_src, const Tensor& x0_dst, const Tensor& m_static,
                  const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  Graph g;
  return static_map(g.constant(x0_src), g.constant(x0_dst), m_static, g.constant(wq),
                    g.constant(wk), g.constant(wv))
      .value();
}

Var dynamic_adjacency(Var s_src, Var s_dst, Var w_src, Var w_dst) {
  return ops::matmul_nt(ops::matmul(s_dst, w_dst), ops::matmul(s_src, w_src));
}

Tensor dynamic_adjacency(const Tensor& s_src, const Tensor& s_dst, const Tensor& w_src,
                         const Tensor& w_dst) {
  Graph g;
  return dynamic_adjacency(g.constant(s_src), g.constant(s_dst), g.constant(w_src),
                           g.constant(w_dst))
      .value();
}

Var dynamic_map(Var x_src, Var x_dst, Var s_src, Var s_dst, Var wq, Var wk, Var wv, Var w_src,
                Var w_dst) {
  check_pair_shapes(x_src, x_dst, "dynamic_map");
  if (s_src.shape()[0] != x_src.shape()[0] || s_dst.shape()[0] != x_dst.shape()[0]) {
    throw ShapeError("dynamic_map: S " + shape_str(s_src.shape()) + "/" +
                     shape_str(s_dst.shape()) + " vs X " + shape_str(x_src.shape()) + "/" +
                     shape_str(x_dst.shape()));
  }
  return attend(x_src, x_dst, dynamic_adjacency(s_src, s_dst, w_src, w_dst), wq, wk, wv);
}

Var dynamic_map(Binder& p, const DomainPair& pair, const std::string& src, const std::string& dst,
                int layer, Var x_src, Var x_dst, Var s_src, Var s_dst) {
  if (layer < 1 || layer > 3) {
    throw std::invalid_argument("dynamic_map: layer must be 1..3, got " + std::to_string(layer));
  }
  auto w = [&](const char* which) { return p(sm_param_name(pair, src, dst, layer, which)); };
  return dynamic_map(x_src, x_dst, s_src, s_dst, w("q"), w("k"), w("v"), w("wsrc"), w("wdst"));
}

Tensor dynamic_map(const Tensor& x_src, const Tensor& x_dst, const CategoryFeatures& s_src,
                   const CategoryFeatures& s_dst, int layer, const SmProjections& prm) {
  if (s_src.scale != layer || s_dst.scale != layer) {
    throw std::invalid_argument("dynamic_map: category features of scales " +
                                std::to_string(s_src.scale) + "/" + std::to_string(s_dst.scale) +
                                " used with layer " + std::to_string(layer));
  }
  Graph g;
  return dynamic_map(g.constant(x_src), g.constant(x_dst), g.constant(s_src.s),
                     g.constant(s_dst.s), g.constant(prm.q), g.constant(prm.k), g.constant(prm.v),
                     g.constant(prm.w_src), g.constant(prm.w_dst))
      .value();
}

Var scr_dataset(Var x0_1, Var x0_2, Var mapped_2to1, Var mapped_1to2) {
  return symmetric_cosine(x0_1, x0_2, mapped_2to1, mapped_1to2);
}

float scr_dataset(const Tensor& x0_1, const Tensor& x0_2, const Tensor& mapped_2to1,
                  const Tensor& mapped_1to2) {
  Graph g;
  return scr_dataset(g.constant(x0_1), g.constant(x0_2), g.constant(mapped_2to1),
                     g.constant(mapped_1to2))
      .value()[0];
}

Var scr_image(const std::vector<Var>& x_1, const std::vector<Var>& x_2,
              const std::vector<Var>& mapped_2to1, const std::vector<Var>& mapped_1to2) {
  const std::size_t n = x_1.size();
  if (n == 0 || x_2.size() != n || mapped_2to1.size() != n || mapped_1to2.size() != n) {
    throw std::invalid_argument("scr_image: need the same nonzero number of scales per input");
  }
  Var total = symmetric_cosine(x_1[0], x_2[0], mapped_2to1[0], mapped_1to2[0]);
  for (std::size_t l = 1; l < n; ++l) {
    total = ops::add(total, symmetric_cosine(x_1[l], x_2[l], mapped_2to1[l], mapped_1to2[l]));
  }
  return total;
}

float scr_image(const std::vector<Tensor>& x_1, const std::vector<Tensor>& x_2,
                const std::vector<Tensor>& mapped_2to1, const std::vector<Tensor>& mapped_1to2) {
  Graph g;
  auto lift = [&g](const std::vector<Tensor>& ts) {
    std::vector<Var> out;
    for (const auto& t : ts) out.push_back(g.constant(t));
    return out;
  };
  return scr_image(lift(x_1), lift(x_2), lift(mapped_2to1), lift(mapped_1to2)).value()[0];
}

}  // namespace sst
