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
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <span>
#include <vector>

#include "sst/params.hpp"
#include "sst/tensor.hpp"

namespace sst {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph != nullptr; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the
/// creation order is already a topological order for backward().
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Var constant(Tensor value);
  /// Leaf reading `p.value`; backward() accumulates into `p.grad`.
  Var param(Parameter& p);

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated (zeroed) on first use.
  Tensor& grad(int id);

  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 for a scalar root and propagates.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable references while the tape grows
};

/// Binds named parameters of a store into a graph, once per graph. With
/// `trainable == false` the values enter as constants (frozen pipeline).
class Binder {
 public:
  Binder(Graph& graph, ParamStore& store, bool trainable = true)
      : graph_(&graph), store_(&store), trainable_(trainable) {}

  Var operator()(const std::string& name);
  Graph& graph() const { return *graph_; }
  const ParamStore& store() const { return *store_; }
  bool trainable() const { return trainable_; }

 private:
  Graph* graph_;
  ParamStore* store_;
  bool trainable_;
  std::unordered_map<std::string, Var> bound_;
};

/// Differentiable operations. Matrices are row-major [rows, cols];
/// feature maps are NHWC.
namespace ops {

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise, same shape
Var add_row(Var a, Var bias);  // [m,n] + [n]
Var scale(Var a, float s);
Var relu(Var a);
Var reshape(Var a, Shape shape);
Var sum(Var a);               // -> scalar
Var softmax_rows(Var a);

/// 2-D convolution over NHWC input. `weight` is [k*k*Cin, Cout] in
/// (ky, kx, cin) row order, `bias` is [Cout].
Var conv2d(Var x, Var weight, Var bias, int kernel, int stride, int pad);
Var upsample2x(Var x);
/// Rows [start, start+count) along axis 0.
Var slice0(Var x, int start, int count);
Var concat0(const std::vector<Var>& parts);

/// Mean over non-ignored rows of -log softmax(logits)[label]. Rows whose
/// label equals `ignore_index` are skipped; an all-ignored input gives 0.
Var cross_entropy(Var logits, std::span<const std::uint8_t> labels, int ignore_index = 255);

/// Category-aware pooling of features [P, D] by a per-row category
/// assignment (-1 = unassigned). Output [Z, 2D]: average | element-wise max.
/// Rows of empty categories are zero.
Var category_pool(Var features, std::span<const int> assignment, int num_categories);

/// mean_z (1 - cos(a_z, b_z)) over rows; norms are floored at `floor`.
Var cosine_distance_rows(Var a, Var b, float floor = 1e-8f);

}  // namespace ops
}  // namespace sst
