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

#include <cstring>
#include <map>
#include <random>

#include "fixtures.hpp"
#include "sst/checkpoint.hpp"
#include "sst/evalkit.hpp"
#include "sst/log.hpp"
#include "test_util.hpp"

namespace sst {
namespace {

using testing::TempDir;

LabelMap raster(int h, int w, std::vector<std::uint8_t> v) {
  LabelMap l(h, w);
  l.data = std::move(v);
  return l;
}

TEST(Confusion, DocumentedExample) {
  ConfusionMatrix cm = confusion(raster(2, 2, {0, 1, 1, 1}), raster(2, 2, {0, 1, 0, 1}), 2);
  EXPECT_EQ(cm.counts, (std::vector<std::int64_t>{1, 1, 0, 2}));
  auto iou = per_class_iou(cm);
  EXPECT_DOUBLE_EQ(*iou[0], 0.5);
  EXPECT_DOUBLE_EQ(*iou[1], 2.0 / 3.0);
  EXPECT_NEAR(miou(cm), 0.5833333333333334, 1e-9);
  EXPECT_NEAR(mean_acc(cm), 0.75, 1e-9);
}

TEST(Confusion, PerfectIgnoredAndAbsent) {
  LabelMap l = raster(1, 4, {0, 1, 2, 1});
  ConfusionMatrix perfect = confusion(l, l, 4);
  for (int g = 0; g < 4; ++g) {
    for (int p = 0; p < 4; ++p) {
      if (g != p) EXPECT_EQ(perfect.at(g, p), 0);
    }
  }
  EXPECT_FALSE(per_class_iou(perfect)[3].has_value());
  EXPECT_DOUBLE_EQ(miou(perfect), 1.0);

  EXPECT_EQ(confusion(l, LabelMap(1, 4, kIgnoreLabel), 4).total(), 0);
  const auto before = warning_count();
  EXPECT_EQ(miou(ConfusionMatrix(3)), 0.0);
  EXPECT_GT(warning_count(), before);

  try {
    confusion(raster(1, 2, {0, 5}), raster(1, 2, {0, 1}), 3);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("x=1"), std::string::npos) << e.what();
  }
}

TEST(Confusion, MatchesPixelBruteForce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int z = 2 + trial % 6, h = 3 + trial % 5, w = 4 + trial % 3;
    LabelMap gt = testing::random_labels(h, w, z, rng, 0.15);
    LabelMap pred = testing::random_labels(h, w, z, rng);
    ConfusionMatrix cm = confusion(pred, gt, z);
    double iou_sum = 0, acc_sum = 0;
    int iou_n = 0, acc_n = 0;
    for (int c = 0; c < z; ++c) {
      std::int64_t inter = 0, uni = 0, gt_c = 0;
      for (std::size_t i = 0; i < gt.data.size(); ++i) {
        if (gt.data[i] == kIgnoreLabel) continue;
        const bool g = gt.data[i] == c, p = pred.data[i] == c;
        inter += g && p;
        uni += g || p;
        gt_c += g;
      }
      auto iou = per_class_iou(cm)[c];
      ASSERT_EQ(iou.has_value(), uni > 0);
      if (uni > 0) {
        EXPECT_EQ(*iou, static_cast<double>(inter) / static_cast<double>(uni));
        iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
        ++iou_n;
      }
      if (gt_c > 0) {
        acc_sum += static_cast<double>(inter) / static_cast<double>(gt_c);
        ++acc_n;
      }
    }
    EXPECT_EQ(miou(cm), iou_sum / iou_n);
    EXPECT_EQ(mean_acc(cm), acc_sum / acc_n);
  }
}

TEST(MetricsReportTest, JsonRoundTrip) {
  ConfusionMatrix cm = confusion(raster(2, 2, {0, 1, 1, 1}), raster(2, 2, {0, 1, 0, 1}), 3);
  MetricsReport r = MetricsReport::from_confusion(cm, {{"domain", "x"}});
  nlohmann::json j = r.to_json();
  EXPECT_TRUE(j["per_class_iou"][2].is_null());
  EXPECT_EQ(j["pixel_count"], 4);
  EXPECT_EQ(MetricsReport::from_json(j), r);
  EXPECT_EQ(MetricsReport::from_json(nlohmann::json::parse(j.dump())), r);
}

class ExportTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto data = testing::tiny_data(2, 21);
    UniversalTrainer t(testing::tiny_config(), builtin_registry());
    t.step(testing::batches_of(data, 2), 1e-3);
    full_ = new Checkpoint(t.checkpoint(1));
  }
  static void TearDownTestSuite() {
    delete full_;
    full_ = nullptr;
  }
  static Checkpoint* full_;
};
Checkpoint* ExportTest::full_ = nullptr;

TEST_F(ExportTest, RemovesAuxiliaryModulesAndKeepsLogits) {
  Checkpoint lean = export_inference(*full_, {"coarse", "mid", "fine"});
  for (const auto& p : lean.params.all()) {
    EXPECT_TRUE(p.tag == "core" || p.tag.rfind("head:", 0) == 0) << p.name;
  }
  EXPECT_TRUE(lean.metadata["inference_only"].get<bool>());
  TempDir t;
  save_checkpoint(*full_, t / "full");
  save_checkpoint(lean, t / "lean");
  EXPECT_LT(checkpoint_size(t / "lean"), checkpoint_size(t / "full"));

  Checkpoint reloaded = load_checkpoint(t / "lean");
  std::mt19937_64 rng(5);
  std::vector<Image> images;
  for (int i = 0; i < 4; ++i) {
    Image img(32, 48);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng());
    images.push_back(std::move(img));
  }
  std::vector<const Image*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  for (const auto& d : testing::kDomains) {
    Tensor a = head_logits(*full_, d, ptrs), b = head_logits(reloaded, d, ptrs);
    ASSERT_EQ(a.shape(), b.shape());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)), 0) << d;
  }
}

TEST_F(ExportTest, ReExportIsIdempotentAndUnknownDomainFails) {
  Checkpoint once = export_inference(*full_, {"coarse"});
  Checkpoint twice = export_inference(once, {"coarse"});
  TempDir t;
  save_checkpoint(once, t / "a");
  save_checkpoint(twice, t / "b");
  EXPECT_EQ(testing::read_tree(t / "a"), testing::read_tree(t / "b"));
  EXPECT_EQ(once.head_domains(), (std::vector<std::string>{"coarse"}));
  EXPECT_THROW(export_inference(*full_, {"coarse", "nope"}), DomainError);
  EXPECT_THROW(export_inference(once, {"fine"}), DomainError);
}

TEST_F(ExportTest, EvaluateReportsConfig) {
  auto data = testing::tiny_data(2, 31);
  MetricsReport r = evaluate(*full_, data[0], {{"split", "test"}});
  EXPECT_EQ(r.config["domain"], "coarse");
  EXPECT_EQ(r.config["split"], "test");
  EXPECT_EQ(r.pixel_count, 2 * 32 * 32);
  EXPECT_EQ(static_cast<int>(r.per_class_iou.size()), 5);
}

TEST(Render, ConstantDistinctAndInvertible) {
  const auto& palette = builtin_registry().domain("fine").palette();
  Image c = render(LabelMap(2, 3, 4), palette);
  for (int i = 0; i < 6; ++i) {
    for (int k = 0; k < 3; ++k) EXPECT_EQ(c.rgb[i * 3 + k], palette[4][k]);
  }
  std::mt19937_64 rng(2);
  LabelMap l = testing::random_labels(6, 7, static_cast<int>(palette.size()), rng);
  LabelMap other = l;
  other.data[0] = static_cast<std::uint8_t>((other.data[0] + 1) % palette.size());
  Image img = render(l, palette);
  EXPECT_NE(img.rgb, render(other, palette).rgb);
  std::map<Rgb, int> inverse;
  for (std::size_t z = 0; z < palette.size(); ++z) inverse[palette[z]] = static_cast<int>(z);
  ASSERT_EQ(inverse.size(), palette.size());
  for (std::size_t i = 0; i < l.data.size(); ++i) {
    Rgb px{img.rgb[i * 3], img.rgb[i * 3 + 1], img.rgb[i * 3 + 2]};
    EXPECT_EQ(inverse.at(px), l.data[i]);
  }
  Image ign = render(LabelMap(1, 1, kIgnoreLabel), palette);
  EXPECT_EQ(ign.rgb, (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(Ablation, SixCumulativeRows) {
  TrainConfig base = testing::tiny_config();
  auto rows = ablation_configs(base);
  ASSERT_EQ(rows.size(), 6u);
  const auto& r1 = rows[0].second;
  EXPECT_EQ(r1.aux_loss, AuxMode::kOff);
  EXPECT_FALSE(r1.scr_dataset || r1.scr_image);
  EXPECT_EQ(rows[1].second.aux_loss, AuxMode::kUnmasked);
  EXPECT_EQ(rows[2].second.aux_loss, AuxMode::kMasked);
  EXPECT_TRUE(rows[3].second.scr_dataset && !rows[3].second.scr_image);
  EXPECT_TRUE(!rows[4].second.scr_dataset && rows[4].second.scr_image);
  const auto& r6 = rows[5].second;
  EXPECT_TRUE(r6.aux_loss == AuxMode::kMasked && r6.scr_dataset && r6.scr_image);
}

}  // namespace
}  // namespace sst
