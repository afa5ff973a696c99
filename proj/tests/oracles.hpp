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

// Straight-loop double-precision references for the vectorized kernels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sst/domain.hpp"
#include "sst/tensor.hpp"

namespace sst::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat from(const Tensor& t) {
  const int r = t.dim(0), c = static_cast<int>(t.numel()) / r;
  Mat m(r, std::vector<double>(c));
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m[i][j] = t[static_cast<std::size_t>(i) * c + j];
  }
  return m;
}

inline Mat zeros(int r, int c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out = zeros(static_cast<int>(a.size()), static_cast<int>(b[0].size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
    }
  }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out = zeros(static_cast<int>(a[0].size()), static_cast<int>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
  }
  return out;
}

inline double max_abs_diff(const Tensor& t, const Mat& m) {
  const std::size_t c = m[0].size();
  if (t.numel() != m.size() * c) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      worst = std::max(worst, std::abs(static_cast<double>(t[i * c + j]) - m[i][j]));
    }
  }
  return worst;
}

/// softmax(q k^T / sqrt(D)) masked elementwise, times v.
inline Mat masked_attention(const Mat& q, const Mat& k, const Mat& v, const Mat& mask) {
  const std::size_t zq = q.size(), zk = k.size(), d = q[0].size();
  Mat out = zeros(static_cast<int>(zq), static_cast<int>(v[0].size()));
  for (std::size_t i = 0; i < zq; ++i) {
    std::vector<double> s(zk);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < zk; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
      s[j] = dot / std::sqrt(static_cast<double>(d));
      top = std::max(top, s[j]);
    }
    double den = 0;
    for (double& x : s) den += (x = std::exp(x - top));
    for (std::size_t j = 0; j < zk; ++j) {
      const double w = s[j] / den * mask[i][j];
      for (std::size_t c = 0; c < v[0].size(); ++c) out[i][c] += w * v[j][c];
    }
  }
  return out;
}

/// Category pooling over a factor-downsampled raster, then the 2D -> D fusion.
inline Mat msa(const Tensor& features, const LabelMap& labels, int factor, int z, const Tensor& ws) {
  const int h = features.dim(0), w = features.dim(1), d = features.dim(2);
  Mat w_s = from(ws);
  Mat out = zeros(z, d);
  for (int cat = 0; cat < z; ++cat) {
    std::vector<double> sum(d, 0.0), mx(d, -std::numeric_limits<double>::infinity());
    int count = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (labels.at(y * factor, x * factor) != cat) continue;
        ++count;
        for (int c = 0; c < d; ++c) {
          const double v = features[(static_cast<std::size_t>(y) * w + x) * d + c];
          sum[c] += v;
          mx[c] = std::max(mx[c], v);
        }
      }
    }
    if (count == 0) continue;
    for (int o = 0; o < d; ++o) {
      double acc = 0;
      for (int c = 0; c < d; ++c) acc += sum[c] / count * w_s[c][o] + mx[c] * w_s[d + c][o];
      out[cat][o] = acc;
    }
  }
  return out;
}

inline Mat sp_layer(const Tensor& x_prev, const Tensor& s, const Tensor& m_intra, const Tensor& wq,
                    const Tensor& wk, const Tensor& wv) {
  const Mat x = from(x_prev), sm = from(s);
  Mat out = masked_attention(matmul(x, from(wq)), matmul(sm, from(wk)), matmul(sm, from(wv)),
                             from(m_intra));
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t c = 0; c < out[0].size(); ++c) out[i][c] += x[i][c];
  }
  return out;
}

inline Mat static_map(const Tensor& x0_src, const Tensor& x0_dst, const Tensor& m, const Tensor& wq,
                      const Tensor& wk, const Tensor& wv) {
  const Mat src = from(x0_src);
  return masked_attention(matmul(from(x0_dst), from(wq)), matmul(src, from(wk)),
                          matmul(src, from(wv)), from(m));
}

inline Mat dynamic_adjacency(const Tensor& s_src, const Tensor& s_dst, const Tensor& w_src,
                             const Tensor& w_dst) {
  return matmul(matmul(from(s_dst), from(w_dst)), transpose(matmul(from(s_src), from(w_src))));
}

inline Mat dynamic_map(const Tensor& x_src, const Tensor& x_dst, const Tensor& s_src,
                       const Tensor& s_dst, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                       const Tensor& w_src, const Tensor& w_dst) {
  const Mat src = from(x_src);
  return masked_attention(matmul(from(x_dst), from(wq)), matmul(src, from(wk)),
                          matmul(src, from(wv)), dynamic_adjacency(s_src, s_dst, w_src, w_dst));
}

/// features [H, W, D] -> [H*W, Z].
inline Mat aux_logits(const Tensor& features, const Tensor& x_last) {
  const int p = features.dim(0) * features.dim(1), d = features.dim(2), z = x_last.dim(0);
  Mat out = zeros(p, z);
  for (int i = 0; i < p; ++i) {
    for (int k = 0; k < z; ++k) {
      for (int c = 0; c < d; ++c) {
        out[i][k] += static_cast<double>(features[static_cast<std::size_t>(i) * d + c]) * x_last.at(k, c);
      }
    }
  }
  return out;
}

inline double mean_cosine_distance(const Mat& a, const Mat& b) {
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < a[0].size(); ++c) {
      dot += a[i][c] * b[i][c];
      na += a[i][c] * a[i][c];
      nb += b[i][c] * b[i][c];
    }
    total += 1.0 - dot / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
  }
  return total / static_cast<double>(a.size());
}

inline double scr_dataset(const Tensor& x0_1, const Tensor& x0_2, const Tensor& m21, const Tensor& m12) {
  return mean_cosine_distance(from(x0_1), from(m21)) + mean_cosine_distance(from(x0_2), from(m12));
}

inline double scr_image(const std::vector<Tensor>& x1, const std::vector<Tensor>& x2,
                        const std::vector<Tensor>& m21, const std::vector<Tensor>& m12) {
  double total = 0;
  for (std::size_t l = 0; l < x1.size(); ++l) total += scr_dataset(x1[l], x2[l], m21[l], m12[l]);
  return total;
}

/// Pixel-mean cross-entropy over non-ignored pixels; logits [P, Z].
inline double cross_entropy(const Tensor& logits, const std::vector<std::uint8_t>& labels) {
  const int p = logits.dim(0), z = logits.dim(1);
  double total = 0;
  int count = 0;
  for (int i = 0; i < p; ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    double top = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < z; ++k) top = std::max(top, static_cast<double>(logits.at(i, k)));
    double den = 0;
    for (int k = 0; k < z; ++k) den += std::exp(logits.at(i, k) - top);
    total += std::log(den) + top - logits.at(i, labels[i]);
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

}  // namespace sst::oracle
