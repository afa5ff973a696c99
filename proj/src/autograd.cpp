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

#include "sst/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "sst/log.hpp"

namespace sst {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

CMapR cmap(const Tensor& t, int rows, int cols) { return CMapR(t.data(), rows, cols); }
MapR map(Tensor& t, int rows, int cols) { return MapR(t.data(), rows, cols); }

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
  }
}

bool any_requires_grad(std::initializer_list<Var> vars) {
  for (const auto& v : vars) {
    if (v.graph->requires_grad(v.id)) return true;
  }
  return false;
}

}  // namespace

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.numel() != n.value.numel() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape(), 0.0f);
  }
  return n.grad;
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.graph != this) throw std::logic_error("operand belongs to a different graph");
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var root) {
  if (root.graph != this) throw std::logic_error("backward root belongs to a different graph");
  if (nodes_[root.id].value.numel() != 1) {
    throw ShapeError("backward requires a scalar root, got shape " +
                     shape_str(nodes_[root.id].value.shape()));
  }
  if (!nodes_[root.id].requires_grad) return;
  grad(root.id)[0] = 1.0f;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.numel() == 0) continue;
    if (n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.param && n.grad.numel() != 0) {
      float* dst = n.param->grad.data();
      const float* src = n.grad.data();
      for (std::size_t k = 0; k < n.grad.numel(); ++k) dst[k] += src[k];
    }
  }
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Parameter& p = store_->get(name);
  Var v = trainable_ ? graph_->param(p) : graph_->constant(p.value);
  bound_.emplace(name, v);
  return v;
}

namespace ops {

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()));
  }
  Tensor out({m, n});
  map(out, m, n).noalias() = cmap(av, m, k) * cmap(bv, k, n);
  return a.graph->record(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, int self) {
    const Tensor& dc = g.grad(self);
    if (g.requires_grad(a.id)) {
      map(g.grad(a.id), m, k).noalias() += cmap(dc, m, n) * cmap(g.value(b.id), k, n).transpose();
    }
    if (g.requires_grad(b.id)) {
      map(g.grad(b.id), k, n).noalias() += cmap(g.value(a.id), m, k).transpose() * cmap(dc, m, n);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul_nt");
  require_rank(bv, 2, "matmul_nt");
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  if (bv.dim(1) != k) {
    throw ShapeError("matmul_nt: feature dimensions differ: " + shape_str(av.shape()) + " vs " +
                     shape_str(bv.shape()));
  }
  Tensor out({m, n});
  map(out, m, n).noalias() = cmap(av, m, k) * cmap(bv, n, k).transpose();
  return a.graph->record(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, int self) {
    const Tensor& dc = g.grad(self);
    if (g.requires_grad(a.id)) {
      map(g.grad(a.id), m, k).noalias() += cmap(dc, m, n) * cmap(g.value(b.id), n, k);
    }
    if (g.requires_grad(b.id)) {
      map(g.grad(b.id), n, k).noalias() += cmap(dc, m, n).transpose() * cmap(g.value(a.id), m, k);
    }
  });
}

Var add(Var a, Var b) {
  require_shape(b.value(), a.shape(), "add");
  Tensor out = a.value();
  const float* bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    for (Var v : {a, b}) {
      if (!g.requires_grad(v.id)) continue;
      Tensor& gv = g.grad(v.id);
      for (std::size_t i = 0; i < d.numel(); ++i) gv[i] += d[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_shape(b.value(), a.shape(), "sub");
  Tensor out = a.value();
  const float* bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    if (g.requires_grad(a.id)) {
      Tensor& ga = g.grad(a.id);
      for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += d[i];
    }
    if (g.requires_grad(b.id)) {
      Tensor& gb = g.grad(b.id);
      for (std::size_t i = 0; i < d.numel(); ++i) gb[i] -= d[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_shape(b.value(), a.shape(), "mul");
  Tensor out = a.value();
  const float* bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    if (g.requires_grad(a.id)) {
      Tensor& ga = g.grad(a.id);
      const Tensor& bv = g.value(b.id);
      for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += d[i] * bv[i];
    }
    if (g.requires_grad(b.id)) {
      Tensor& gb = g.grad(b.id);
      const Tensor& av = g.value(a.id);
      for (std::size_t i = 0; i < d.numel(); ++i) gb[i] += d[i] * av[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  const Tensor& av = a.value();
  require_rank(av, 2, "add_row");
  const int m = av.dim(0), n = av.dim(1);
  require_shape(bias.value(), {n}, "add_row bias");
  Tensor out = av;
  const float* bv = bias.value().data();
  for (int r = 0; r < m; ++r) {
    float* row = out.data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) row[c] += bv[c];
  }
  return a.graph->record(std::move(out), {a, bias}, [a, bias, m, n](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    if (g.requires_grad(a.id)) {
      Tensor& ga = g.grad(a.id);
      for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += d[i];
    }
    if (g.requires_grad(bias.id)) {
      Tensor& gb = g.grad(bias.id);
      for (int r = 0; r < m; ++r) {
        const float* row = d.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) gb[c] += row[c];
      }
    }
  });
}

Var scale(Var a, float s) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v *= s;
  return a.graph->record(std::move(out), {a}, [a, s](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& ga = g.grad(a.id);
    for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += s * d[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v = v > 0.0f ? v : 0.0f;
  return a.graph->record(std::move(out), {a}, [a](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& ga = g.grad(a.id);
    for (std::size_t i = 0; i < d.numel(); ++i) {
      if (y[i] > 0.0f) ga[i] += d[i];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph->record(std::move(out), {a}, [a](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& ga = g.grad(a.id);
    for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += d[i];
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (float v : a.value().values()) acc += v;
  Tensor out({}, static_cast<float>(acc));
  return a.graph->record(std::move(out), {a}, [a](Graph& g, int self) {
    const float d = g.grad(self)[0];
    Tensor& ga = g.grad(a.id);
    for (auto& v : ga.storage()) v += d;
  });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  require_rank(av, 2, "softmax_rows");
  const int m = av.dim(0), n = av.dim(1);
  Tensor out({m, n});
  for (int r = 0; r < m; ++r) {
    const float* x = av.data() + static_cast<std::size_t>(r) * n;
    float* y = out.data() + static_cast<std::size_t>(r) * n;
    float mx = -std::numeric_limits<float>::infinity();
    for (int c = 0; c < n; ++c) mx = std::max(mx, x[c]);
    double total = 0.0;
    for (int c = 0; c < n; ++c) {
      y[c] = std::exp(x[c] - mx);
      total += y[c];
    }
    for (int c = 0; c < n; ++c) y[c] = static_cast<float>(y[c] / total);
  }
  return a.graph->record(std::move(out), {a}, [a, m, n](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& ga = g.grad(a.id);
    for (int r = 0; r < m; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * n;
      double dot = 0.0;
      for (int c = 0; c < n; ++c) dot += static_cast<double>(d[off + c]) * y[off + c];
      for (int c = 0; c < n; ++c) {
        ga[off + c] += y[off + c] * static_cast<float>(d[off + c] - dot);
      }
    }
  });
}

Var conv2d(Var x, Var weight, Var bias, int kernel, int stride, int pad) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "conv2d");
  const int N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), C = xv.dim(3);
  const int K = kernel * kernel * C;
  const Tensor& wv = weight.value();
  require_rank(wv, 2, "conv2d weight");
  if (wv.dim(0) != K) {
    throw ShapeError("conv2d: weight rows " + std::to_string(wv.dim(0)) + " != k*k*Cin = " +
                     std::to_string(K));
  }
  const int O = wv.dim(1);
  require_shape(bias.value(), {O}, "conv2d bias");
  const int Ho = (H + 2 * pad - kernel) / stride + 1;
  const int Wo = (W + 2 * pad - kernel) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: input too small for kernel");
  const int rows = N * Ho * Wo;
  const bool pointwise = kernel == 1 && stride == 1 && pad == 0;

  auto cols = std::make_shared<Tensor>();
  if (!pointwise) {
    *cols = Tensor({rows, K}, 0.0f);
    float* cp = cols->data();
    for (int n = 0; n < N; ++n) {
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          float* row = cp + (static_cast<std::size_t>(n * Ho + oy) * Wo + ox) * K;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              const float* src = xv.data() + (static_cast<std::size_t>(n * H + iy) * W + ix) * C;
              std::copy(src, src + C, row + (ky * kernel + kx) * C);
            }
          }
        }
      }
    }
  }
  const Tensor& cref = pointwise ? xv : *cols;
  Tensor out({N, Ho, Wo, O});
  auto om = map(out, rows, O);
  om.noalias() = cmap(cref, rows, K) * cmap(wv, K, O);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.value().data(), O);

  if (!any_requires_grad({x, weight, bias})) cols.reset();
  return x.graph->record(
      std::move(out), {x, weight, bias},
      [=](Graph& g, int self) {
        const Tensor& d = g.grad(self);
        auto dm = cmap(d, rows, O);
        const Tensor& colv = pointwise ? g.value(x.id) : *cols;
        if (g.requires_grad(weight.id)) {
          map(g.grad(weight.id), K, O).noalias() += cmap(colv, rows, K).transpose() * dm;
        }
        if (g.requires_grad(bias.id)) {
          Eigen::Map<Eigen::RowVectorXf>(g.grad(bias.id).data(), O) += dm.colwise().sum();
        }
        if (!g.requires_grad(x.id)) return;
        if (pointwise) {
          map(g.grad(x.id), rows, K).noalias() += dm * cmap(g.value(weight.id), K, O).transpose();
          return;
        }
        Tensor dcols({rows, K});
        map(dcols, rows, K).noalias() = dm * cmap(g.value(weight.id), K, O).transpose();
        Tensor& gx = g.grad(x.id);
        for (int n = 0; n < N; ++n) {
          for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
              const float* row =
                  dcols.data() + (static_cast<std::size_t>(n * Ho + oy) * Wo + ox) * K;
              for (int ky = 0; ky < kernel; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < kernel; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= W) continue;
                  float* dst = gx.data() + (static_cast<std::size_t>(n * H + iy) * W + ix) * C;
                  const float* src = row + (ky * kernel + kx) * C;
                  for (int c = 0; c < C; ++c) dst[c] += src[c];
                }
              }
            }
          }
        }
      });
}

Var upsample2x(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "upsample2x");
  const int N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), C = xv.dim(3);
  Tensor out({N, 2 * H, 2 * W, C});
  for (int n = 0; n < N; ++n) {
    for (int y = 0; y < 2 * H; ++y) {
      for (int xx = 0; xx < 2 * W; ++xx) {
        const float* src = xv.data() + (static_cast<std::size_t>(n * H + y / 2) * W + xx / 2) * C;
        float* dst = out.data() + (static_cast<std::size_t>(n * 2 * H + y) * 2 * W + xx) * C;
        std::copy(src, src + C, dst);
      }
    }
  }
  return x.graph->record(std::move(out), {x}, [x, N, H, W, C](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& gx = g.grad(x.id);
    for (int n = 0; n < N; ++n) {
      for (int y = 0; y < 2 * H; ++y) {
        for (int xx = 0; xx < 2 * W; ++xx) {
          const float* src = d.data() + (static_cast<std::size_t>(n * 2 * H + y) * 2 * W + xx) * C;
          float* dst = gx.data() + (static_cast<std::size_t>(n * H + y / 2) * W + xx / 2) * C;
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  });
}

Var slice0(Var x, int start, int count) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1 || start < 0 || count < 0 || start + count > xv.dim(0)) {
    throw ShapeError("slice0: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of bounds for shape " +
                     shape_str(xv.shape()));
  }
  Shape shape = xv.shape();
  shape[0] = count;
  const std::size_t stride = xv.numel() / std::max(1, xv.dim(0));
  std::vector<float> data(xv.data() + start * stride, xv.data() + (start + count) * stride);
  Tensor out(shape, std::move(data));
  return x.graph->record(std::move(out), {x}, [x, start, stride](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& gx = g.grad(x.id);
    float* dst = gx.data() + start * stride;
    for (std::size_t i = 0; i < d.numel(); ++i) dst[i] += d[i];
  });
}

Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat0: no inputs");
  Shape shape = parts.front().shape();
  int total = 0;
  std::vector<float> data;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ShapeError("concat0: incompatible shapes " + shape_str(shape) + " and " + shape_str(s));
    }
    total += s[0];
    data.insert(data.end(), p.value().data(), p.value().data() + p.value().numel());
  }
  shape[0] = total;
  return parts.front().graph->record(Tensor(shape, std::move(data)), parts,
                                     [parts](Graph& g, int self) {
                                       const Tensor& d = g.grad(self);
                                       std::size_t off = 0;
                                       for (const auto& p : parts) {
                                         const std::size_t n = g.value(p.id).numel();
                                         if (g.requires_grad(p.id)) {
                                           Tensor& gp = g.grad(p.id);
                                           for (std::size_t i = 0; i < n; ++i) gp[i] += d[off + i];
                                         }
                                         off += n;
                                       }
                                     });
}

Var cross_entropy(Var logits, std::span<const std::uint8_t> labels, int ignore_index) {
  const Tensor& lv = logits.value();
  require_rank(lv, 2, "cross_entropy");
  const int P = lv.dim(0), Z = lv.dim(1);
  if (static_cast<int>(labels.size()) != P) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(P) + " logit rows");
  }
  double total = 0.0;
  int count = 0;
  for (int p = 0; p < P; ++p) {
    const int y = labels[p];
    if (y == ignore_index) continue;
    if (y >= Z) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " >= Z=" +
                              std::to_string(Z) + " at row " + std::to_string(p));
    }
    const float* a = lv.data() + static_cast<std::size_t>(p) * Z;
    const float mx = *std::max_element(a, a + Z);
    double s = 0.0;
    for (int z = 0; z < Z; ++z) s += std::exp(static_cast<double>(a[z]) - mx);
    total += std::log(s) + mx - a[y];
    ++count;
  }
  Tensor out({}, count ? static_cast<float>(total / count) : 0.0f);
  std::vector<std::uint8_t> keep(labels.begin(), labels.end());
  return logits.graph->record(
      std::move(out), {logits},
      [logits, keep = std::move(keep), P, Z, count, ignore_index](Graph& g, int self) {
        if (count == 0) return;
        const float scale = g.grad(self)[0] / static_cast<float>(count);
        const Tensor& lv = g.value(logits.id);
        Tensor& gl = g.grad(logits.id);
        for (int p = 0; p < P; ++p) {
          const int y = keep[p];
          if (y == ignore_index) continue;
          const float* a = lv.data() + static_cast<std::size_t>(p) * Z;
          float* ga = gl.data() + static_cast<std::size_t>(p) * Z;
          const float mx = *std::max_element(a, a + Z);
          double s = 0.0;
          for (int z = 0; z < Z; ++z) s += std::exp(static_cast<double>(a[z]) - mx);
          for (int z = 0; z < Z; ++z) {
            const double prob = std::exp(static_cast<double>(a[z]) - mx) / s;
            ga[z] += scale * static_cast<float>(prob - (z == y ? 1.0 : 0.0));
          }
        }
      });
}

Var category_pool(Var features, std::span<const int> assignment, int num_categories) {
  const Tensor& fv = features.value();
  require_rank(fv, 2, "category_pool");
  const int P = fv.dim(0), D = fv.dim(1), Z = num_categories;
  if (static_cast<int>(assignment.size()) != P) {
    throw ShapeError("category_pool: mask has " + std::to_string(assignment.size()) +
                     " positions, features have " + std::to_string(P));
  }
  std::vector<int> counts(Z, 0);
  std::vector<int> argmax(static_cast<std::size_t>(Z) * D, -1);
  std::vector<double> sums(static_cast<std::size_t>(Z) * D, 0.0);
  for (int p = 0; p < P; ++p) {
    const int z = assignment[p];
    if (z < 0) continue;
    if (z >= Z) throw std::out_of_range("category_pool: category index out of range");
    ++counts[z];
    const float* f = fv.data() + static_cast<std::size_t>(p) * D;
    for (int d = 0; d < D; ++d) {
      const std::size_t k = static_cast<std::size_t>(z) * D + d;
      sums[k] += f[d];
      if (argmax[k] < 0 || f[d] > fv[static_cast<std::size_t>(argmax[k]) * D + d]) argmax[k] = p;
    }
  }
  Tensor out({Z, 2 * D}, 0.0f);
  for (int z = 0; z < Z; ++z) {
    if (!counts[z]) continue;
    for (int d = 0; d < D; ++d) {
      const std::size_t k = static_cast<std::size_t>(z) * D + d;
      out.at(z, d) = static_cast<float>(sums[k] / counts[z]);
      out.at(z, D + d) = fv[static_cast<std::size_t>(argmax[k]) * D + d];
    }
  }
  std::vector<int> assign(assignment.begin(), assignment.end());
  return features.graph->record(
      std::move(out), {features},
      [features, assign = std::move(assign), counts = std::move(counts),
       argmax = std::move(argmax), P, D, Z](Graph& g, int self) {
        const Tensor& d = g.grad(self);
        Tensor& gf = g.grad(features.id);
        for (int p = 0; p < P; ++p) {
          const int z = assign[p];
          if (z < 0) continue;
          const float inv = 1.0f / static_cast<float>(counts[z]);
          for (int c = 0; c < D; ++c) gf[static_cast<std::size_t>(p) * D + c] += d.at(z, c) * inv;
        }
        for (int z = 0; z < Z; ++z) {
          if (!counts[z]) continue;
          for (int c = 0; c < D; ++c) {
            const int p = argmax[static_cast<std::size_t>(z) * D + c];
            gf[static_cast<std::size_t>(p) * D + c] += d.at(z, D + c);
          }
        }
      });
}

Var cosine_distance_rows(Var a, Var b, float floor) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "cosine_distance_rows");
  require_shape(bv, av.shape(), "cosine_distance_rows");
  const int Z = av.dim(0), D = av.dim(1);
  std::vector<double> na(Z), nb(Z), cs(Z);
  bool floored = false;
  double total = 0.0;
  for (int z = 0; z < Z; ++z) {
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (int d = 0; d < D; ++d) {
      const double x = av.at(z, d), y = bv.at(z, d);
      dot += x * y;
      sa += x * x;
      sb += y * y;
    }
    na[z] = std::sqrt(sa);
    nb[z] = std::sqrt(sb);
    if (na[z] < floor || nb[z] < floor) floored = true;
    na[z] = std::max(na[z], static_cast<double>(floor));
    nb[z] = std::max(nb[z], static_cast<double>(floor));
    cs[z] = dot / (na[z] * nb[z]);
    total += 1.0 - cs[z];
  }
  if (floored) {
    log_warning_once("cosine-floor", "cosine distance: zero-norm row, norm floored at 1e-8 (reported once)");
  }
  Tensor out({}, static_cast<float>(total / Z));
  return a.graph->record(
      std::move(out), {a, b},
      [a, b, Z, D, floor, na = std::move(na), nb = std::move(nb), cs = std::move(cs)](Graph& g,
                                                                                     int self) {
        const double scale = -static_cast<double>(g.grad(self)[0]) / Z;
        const Tensor& av = g.value(a.id);
        const Tensor& bv = g.value(b.id);
        const bool ga_on = g.requires_grad(a.id), gb_on = g.requires_grad(b.id);
        for (int z = 0; z < Z; ++z) {
          const double inv = 1.0 / (na[z] * nb[z]);
          const bool a_live = na[z] > floor, b_live = nb[z] > floor;
          for (int d = 0; d < D; ++d) {
            const double x = av.at(z, d), y = bv.at(z, d);
            if (ga_on) {
              double dx = y * inv - (a_live ? cs[z] * x / (na[z] * na[z]) : 0.0);
              g.grad(a.id).at(z, d) += static_cast<float>(scale * dx);
            }
            if (gb_on) {
              double dy = x * inv - (b_live ? cs[z] * y / (nb[z] * nb[z]) : 0.0);
              g.grad(b.id).at(z, d) += static_cast<float>(scale * dy);
            }
          }
        }
      });
}

}  // namespace ops
}  // namespace sst
