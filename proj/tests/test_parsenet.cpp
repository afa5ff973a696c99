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
#include <random>

#include "oracles.hpp"
#include "sst/log.hpp"
#include "sst/msa.hpp"
#include "sst/mse.hpp"
#include "sst/mst.hpp"
#include "sst/parsenet.hpp"
#include "test_util.hpp"

namespace sst {
namespace {

using testing::uniform;

ParamStore core_store(const NetConfig& cfg, std::uint64_t seed) {
  ParamStore s;
  std::mt19937_64 rng(seed);
  init_core_params(s, cfg, rng);
  return s;
}

TEST(Parsenet, PyramidShapes) {
  NetConfig cfg;
  ParamStore s = core_store(cfg, 1);
  std::mt19937_64 rng(2);
  FeaturePyramid p = forward(uniform({48, 48, 3}, rng, 0.0f, 1.0f), s, cfg);
  EXPECT_EQ(p.h1.shape(), (Shape{3, 3, 64}));
  EXPECT_EQ(p.h2.shape(), (Shape{6, 6, 64}));
  EXPECT_EQ(p.h3.shape(), (Shape{12, 12, 64}));
  EXPECT_EQ(p.f.shape(), (Shape{48, 48, 64}));
  EXPECT_EQ(scale_factor(1), 16);
  EXPECT_EQ(scale_factor(3), 4);
}

TEST(Parsenet, RejectsIndivisibleInput) {
  NetConfig cfg;
  ParamStore s = core_store(cfg, 1);
  EXPECT_THROW(forward(Tensor({50, 50, 3}), s, cfg), ShapeError);
  EXPECT_THROW(check_input_size(0, 16), ShapeError);
  EXPECT_NO_THROW(check_input_size(32, 64));
}

TEST(Parsenet, ForwardIsDeterministic) {
  NetConfig cfg{16, {4, 8, 8, 16, 16}};
  ParamStore s = core_store(cfg, 3);
  std::mt19937_64 rng(4);
  Tensor img = uniform({32, 32, 3}, rng, 0.0f, 1.0f);
  EXPECT_EQ(forward(img, s, cfg).f, forward(img, s, cfg).f);
}

TEST(Parsenet, ForwardIndependentOfAuxiliaryModules) {
  NetConfig cfg{16, {4, 8, 8, 16, 16}};
  ParamStore bare = core_store(cfg, 5);
  ParamStore full = core_store(cfg, 5);
  std::mt19937_64 rng(6);
  init_msa_params(full, cfg.feature_dim, rng);
  init_mse_params(full, "coarse", 5, cfg.feature_dim, rng);
  init_mse_params(full, "fine", 12, cfg.feature_dim, rng);
  init_mst_params(full, {"coarse", "fine"}, cfg.feature_dim, rng);
  Tensor img = uniform({32, 48, 3}, rng, 0.0f, 1.0f);
  FeaturePyramid a = forward(img, bare, cfg), b = forward(img, full, cfg);
  EXPECT_EQ(a.h1, b.h1);
  EXPECT_EQ(a.h2, b.h2);
  EXPECT_EQ(a.h3, b.h3);
  EXPECT_EQ(a.f, b.f);
}

TEST(Parsenet, ConfigValidation) {
  NetConfig cfg;
  EXPECT_EQ(NetConfig::from_json(cfg.to_json()), cfg);
  NetConfig bad = cfg;
  bad.feature_dim = 0;
  EXPECT_THROW(bad.validate(), std::exception);
}

TEST(Parsenet, PredictMatchesLoop) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor f = uniform({2, 2, 4}, rng), w = uniform({4, 3}, rng), b = uniform({3}, rng);
    Tensor out = predict(f, w, b);
    ASSERT_EQ(out.shape(), (Shape{2, 2, 3}));
    for (int p = 0; p < 4; ++p) {
      for (int z = 0; z < 3; ++z) {
        double acc = b[z];
        for (int c = 0; c < 4; ++c) acc += f[p * 4 + c] * w.at(c, z);
        EXPECT_NEAR(out[p * 3 + z], acc, 1e-6);
      }
    }
  }
}

TEST(Parsenet, PredictLinearityAndIdentity) {
  std::mt19937_64 rng(8);
  Tensor w = uniform({4, 3}, rng), zero_b({3}, 0.0f);
  EXPECT_EQ(predict(Tensor({2, 2, 4}, 0.0f), w, zero_b), Tensor({2, 2, 3}, 0.0f));
  Tensor f = uniform({3, 2, 4}, rng);
  EXPECT_EQ(predict(f, testing::identity(4), Tensor({4}, 0.0f)), f);

  Tensor f1 = uniform({2, 2, 4}, rng), f2 = uniform({2, 2, 4}, rng);
  const float a = 0.7f, c = -1.3f;
  Tensor mix(f1.shape());
  for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] = a * f1[i] + c * f2[i];
  Tensor lhs = predict(mix, w, zero_b), p1 = predict(f1, w, zero_b), p2 = predict(f2, w, zero_b);
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], a * p1[i] + c * p2[i], 1e-5);
  EXPECT_THROW(predict(f1, uniform({5, 3}, rng), zero_b), ShapeError);
}

TEST(Parsenet, SegLossClosedForms) {
  LabelMap one(1, 1, 0);
  Tensor logits = Tensor({1, 1, 2}, std::vector<float>{10.0f, 0.0f});
  EXPECT_NEAR(seg_loss(logits, one), std::log1p(std::exp(-10.0)), 1e-7);

  LabelMap four(2, 2);
  four.data = {0, 1, 2, 3};
  EXPECT_NEAR(seg_loss(Tensor({2, 2, 4}, 0.3f), four), std::log(4.0), 1e-6);

  const auto before = warning_count();
  EXPECT_EQ(seg_loss(Tensor({2, 2, 4}, 0.3f), LabelMap(2, 2, kIgnoreLabel)), 0.0f);
  EXPECT_GT(warning_count(), before);
}

TEST(Parsenet, SegLossMatchesOracleAndReportsBadLabels) {
  std::mt19937_64 rng(9);
  LabelMap l = testing::random_labels(4, 4, 5, rng, 0.2);
  Tensor logits = uniform({4, 4, 5}, rng, -3.0f, 3.0f);
  EXPECT_NEAR(seg_loss(logits, l), oracle::cross_entropy(logits.reshaped({16, 5}), l.data), 1e-5);

  LabelMap bad(2, 2, 0);
  bad.at(1, 0) = 6;
  try {
    seg_loss(Tensor({2, 2, 5}), bad);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("(y=1, x=0)"), std::string::npos) << e.what();
  }
}

TEST(Parsenet, SegLossGradient) {
  std::mt19937_64 rng(10);
  ParamStore s;
  s.add("a", "t", uniform({4, 3}, rng, -2.0f, 2.0f));
  LabelMap l(2, 2);
  l.data = {0, 2, 1, 2};
  auto r = testing::check_gradients(s, [&](Binder& p) { return seg_loss(p("a"), {&l}); });
  EXPECT_LT(r.rel_error, 1e-3) << r.worst;
}

TEST(Parsenet, NetworkGradient) {
  NetConfig cfg{4, {2, 2, 3, 3, 4}};
  ParamStore s = core_store(cfg, 11);
  std::mt19937_64 rng(12);
  init_head_params(s, "d", 3, cfg.feature_dim, rng);
  Tensor img = uniform({1, 16, 16, 3}, rng, 0.0f, 1.0f);
  LabelMap l = testing::random_labels(16, 16, 3, rng);
  auto r = testing::check_gradients(s, [&](Binder& p) {
    PyramidVars pyr = forward(p, p.graph().constant(img), cfg);
    Var f = ops::reshape(pyr.f, {256, cfg.feature_dim});
    return seg_loss(predict(p, f, "d"), {&l});
  }, 1e-2f);
  EXPECT_LT(r.rel_error, 2e-2) << r.worst;
}

}  // namespace
}  // namespace sst
