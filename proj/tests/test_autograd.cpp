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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <random>

#include "sst/autograd.hpp"
#include "sst/log.hpp"
#include "test_util.hpp"

namespace sst {
namespace {

using testing::check_gradients;
using testing::uniform;

constexpr double kGradTol = 1e-3;

TEST(Tensor, ShapeAndReshape) {
  Tensor t({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(-1), 3);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, StorageIsAligned) {
  for (int n : {1, 3, 17, 1000}) {
    Tensor t({n}, 0.0f);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.data()) % kTensorAlignment, 0u);
    Tensor r = t.reshaped({n, 1});
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(r.data()) % kTensorAlignment, 0u);
  }
}

TEST(Autograd, MatmulMatchesLoop) {
  std::mt19937_64 rng(1);
  Tensor a = uniform({3, 4}, rng), b = uniform({4, 5}, rng);
  Graph g;
  Tensor c = ops::matmul(g.constant(a), g.constant(b)).value();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-5);
    }
  }
  Tensor ct = ops::matmul_nt(g.constant(a), g.constant(uniform({5, 4}, rng))).value();
  EXPECT_EQ(ct.shape(), (Shape{3, 5}));
}

TEST(Autograd, TapeReferencesSurviveGrowth) {
  Graph g;
  Var a = g.constant(Tensor({2, 2}, 1.0f));
  const Shape& s = a.shape();
  for (int i = 0; i < 1000; ++i) g.constant(Tensor({1}, 0.0f));
  EXPECT_EQ(s, (Shape{2, 2}));
}

TEST(Autograd, ElementwiseGradients) {
  std::mt19937_64 rng(2);
  ParamStore s;
  s.add("a", "t", uniform({3, 4}, rng));
  s.add("b", "t", uniform({3, 4}, rng));
  s.add("bias", "t", uniform({4}, rng));
  auto r = check_gradients(s, [](Binder& p) {
    Var x = ops::mul(ops::add(p("a"), p("b")), ops::sub(p("a"), ops::scale(p("b"), 0.5f)));
    return ops::sum(ops::relu(ops::add_row(x, p("bias"))));
  });
  EXPECT_LT(r.rel_error, kGradTol) << r.worst;
}

TEST(Autograd, SoftmaxCrossEntropyGradients) {
  std::mt19937_64 rng(3);
  ParamStore s;
  s.add("w", "t", uniform({4, 3}, rng));
  Tensor x = uniform({6, 4}, rng);
  std::vector<std::uint8_t> labels{0, 2, 255, 1, 1, 0};
  auto r = check_gradients(s, [&](Binder& p) {
    Var logits = ops::matmul(p.graph().constant(x), p("w"));
    Var soft = ops::softmax_rows(logits);
    return ops::add(ops::cross_entropy(logits, labels), ops::sum(ops::mul(soft, soft)));
  });
  EXPECT_LT(r.rel_error, kGradTol) << r.worst;
}

TEST(Autograd, ConvolutionGradients) {
  std::mt19937_64 rng(4);
  ParamStore s;
  s.add("x", "t", uniform({2, 4, 4, 2}, rng));
  s.add("w3", "t", uniform({3 * 3 * 2, 3}, rng, -0.5f, 0.5f));
  s.add("b3", "t", uniform({3}, rng));
  s.add("w1", "t", uniform({3, 2}, rng));
  s.add("b1", "t", uniform({2}, rng));
  Tensor probe = uniform({2, 4, 4, 2}, rng);
  auto r = check_gradients(s, [&](Binder& p) {
    Var y = ops::conv2d(p("x"), p("w3"), p("b3"), 3, 2, 1);      // 2x2
    Var z = ops::conv2d(ops::upsample2x(y), p("w1"), p("b1"), 1, 1, 0);  // 4x4
    return ops::sum(ops::mul(z, p.graph().constant(probe)));
  });
  EXPECT_LT(r.rel_error, kGradTol) << r.worst;
}

TEST(Autograd, ConvolutionMatchesDirectLoop) {
  std::mt19937_64 rng(5);
  const int n = 1, h = 5, w = 6, cin = 2, cout = 3, k = 3, pad = 1, stride = 2;
  Tensor x = uniform({n, h, w, cin}, rng), wt = uniform({k * k * cin, cout}, rng), b = uniform({cout}, rng);
  Graph g;
  Tensor y = ops::conv2d(g.constant(x), g.constant(wt), g.constant(b), k, stride, pad).value();
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
  ASSERT_EQ(y.shape(), (Shape{n, ho, wo, cout}));
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      for (int co = 0; co < cout; ++co) {
        double acc = b[co];
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            for (int ci = 0; ci < cin; ++ci) {
              acc += x[(iy * w + ix) * cin + ci] * wt.at((ky * k + kx) * cin + ci, co);
            }
          }
        }
        EXPECT_NEAR(y[(oy * wo + ox) * cout + co], acc, 1e-5);
      }
    }
  }
}

TEST(Autograd, SliceConcatReshapeGradients) {
  std::mt19937_64 rng(6);
  ParamStore s;
  s.add("x", "t", uniform({4, 3}, rng));
  Tensor probe = uniform({5, 3}, rng);
  auto r = check_gradients(s, [&](Binder& p) {
    Var a = ops::slice0(p("x"), 1, 2);
    Var b = ops::slice0(p("x"), 0, 3);
    Var c = ops::concat0({a, b});
    return ops::sum(ops::mul(ops::reshape(ops::reshape(c, {15}), {5, 3}), p.graph().constant(probe)));
  });
  EXPECT_LT(r.rel_error, kGradTol) << r.worst;
}

TEST(Autograd, CategoryPoolGradientsAndEmptyRows) {
  std::mt19937_64 rng(7);
  ParamStore s;
  s.add("f", "t", uniform({6, 3}, rng));
  std::vector<int> assign{0, 2, 2, -1, 0, 2};
  Tensor probe = uniform({4, 6}, rng);
  {
    Graph g;
    Tensor out = ops::category_pool(g.constant(s.get("f").value), assign, 4).value();
    for (int c = 0; c < 6; ++c) {
      EXPECT_EQ(out.at(1, c), 0.0f);
      EXPECT_EQ(out.at(3, c), 0.0f);
    }
  }
  auto r = check_gradients(s, [&](Binder& p) {
    return ops::sum(ops::mul(ops::category_pool(p("f"), assign, 4), p.graph().constant(probe)));
  });
  EXPECT_LT(r.rel_error, kGradTol) << r.worst;
}

TEST(Autograd, CosineDistanceGradientsAndFloorWarning) {
  std::mt19937_64 rng(8);
  ParamStore s;
  s.add("a", "t", uniform({3, 4}, rng));
  s.add("b", "t", uniform({3, 4}, rng));
  auto r = check_gradients(s, [](Binder& p) { return ops::cosine_distance_rows(p("a"), p("b")); });
  EXPECT_LT(r.rel_error, kGradTol) << r.worst;

  const auto before = warning_count();
  Graph g;
  Tensor zero({2, 4}, 0.0f);
  float v = ops::cosine_distance_rows(g.constant(uniform({2, 4}, rng)), g.constant(zero)).value()[0];
  EXPECT_FLOAT_EQ(v, 1.0f);
  EXPECT_GT(warning_count(), before);
}

TEST(Autograd, CrossEntropyRejectsOutOfRangeLabel) {
  Graph g;
  std::vector<std::uint8_t> labels{0, 7};
  EXPECT_THROW(ops::cross_entropy(g.constant(Tensor({2, 3}, 0.0f)), labels), std::out_of_range);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore s;
  auto& p = s.add("w", "t", Tensor({2}, 0.0f));
  p.grad[0] = 3.0f;
  p.grad[1] = -0.5f;
  Adam adam;
  adam.step(s, 0.1f);
  EXPECT_NEAR(p.value[0], -0.1f, 1e-6);
  EXPECT_NEAR(p.value[1], 0.1f, 1e-6);
}

}  // namespace
}  // namespace sst
