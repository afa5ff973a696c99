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

#include <algorithm>
#include <set>

#include "sst/synthgen.hpp"
#include "test_util.hpp"

namespace sst {
namespace {

using testing::TempDir;

int foreground_components(const LabelMap& l) {
  std::vector<int> seen(l.data.size(), 0);
  int comps = 0;
  for (int start = 0; start < static_cast<int>(l.data.size()); ++start) {
    if (l.data[start] == 0 || seen[start]) continue;
    ++comps;
    std::vector<int> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / l.width, x = p % l.width;
      const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= l.height || nx[k] < 0 || nx[k] >= l.width) continue;
        const int q = ny[k] * l.width + nx[k];
        if (l.data[q] != 0 && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      }
    }
  }
  return comps;
}

TEST(Synthgen, SampleFigureIsDeterministic) {
  EXPECT_EQ(sample_figure(7, 64, 64), sample_figure(7, 64, 64));
  EXPECT_NE(sample_figure(7, 64, 64).joints(), sample_figure(8, 64, 64).joints());
  EXPECT_THROW(sample_figure(1, 16, 16), SynthError);
  EXPECT_THROW(sample_figure(1, 31, 64), SynthError);
}

TEST(Synthgen, SkeletonInvariants) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto f = sample_figure(s, 48, 48);
    for (const auto& [name, p] : f.joints()) {
      EXPECT_GE(p.x, 2) << name;
      EXPECT_GE(p.y, 2) << name;
      EXPECT_LT(p.x, 46) << name;
      EXPECT_LT(p.y, 46) << name;
    }
    EXPECT_GE(f.head_radius, 1);
    EXPECT_GE(f.torso_half_width, 1);
    EXPECT_EQ(foreground_components(render_fine_labels(f)), 1) << "seed " << s;
  }
}

TEST(Synthgen, HatFlagControlsHatLabel) {
  int with = 0, without = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto f = sample_figure(s, 48, 48);
    const auto l = render_fine_labels(f);
    const bool has_hat =
        std::find(l.data.begin(), l.data.end(), synthetic::kHat) != l.data.end();
    if (f.hat) {
      ++with;
    } else {
      ++without;
      EXPECT_FALSE(has_hat) << "seed " << s;
    }
  }
  EXPECT_GT(with, 0);
  EXPECT_GT(without, 0);
}

TEST(Synthgen, RasterizeConsistency) {
  const auto& reg = builtin_registry();
  const std::vector<std::string> ids{synthetic::kFine, synthetic::kMid, synthetic::kCoarse};
  const auto fc = *reg.coarsening("fine", "coarse");
  const auto fm = *reg.coarsening("fine", "mid");
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto f = sample_figure(s, 48, 64);
    SegSample a = rasterize(f, reg, ids);
    EXPECT_EQ(a.image.height, 48);
    EXPECT_EQ(a.image.width, 64);
    EXPECT_EQ(a.labels.at("fine"), render_fine_labels(f));
    EXPECT_EQ(a.labels.at("coarse"), coarsen_labels(a.labels.at("fine"), fc));
    EXPECT_EQ(a.labels.at("mid"), coarsen_labels(a.labels.at("fine"), fm));
    SegSample b = rasterize(f, reg, ids);
    EXPECT_EQ(a.image.rgb, b.image.rgb);
  }
  EXPECT_THROW(rasterize(sample_figure(0, 48, 48), reg, {"coarse", "fine"}), SynthError);
  EXPECT_THROW(rasterize(sample_figure(0, 48, 48), reg, {}), SynthError);
}

TEST(Synthgen, LabelCoverage) {
  const auto& reg = builtin_registry();
  std::vector<int> present(synthetic::kFineCount, 0);
  std::map<std::string, std::set<int>> per_domain;
  const std::vector<std::string> ids{synthetic::kFine, synthetic::kMid, synthetic::kCoarse};
  for (std::uint64_t s = 0; s < 100; ++s) {
    SegSample sample = rasterize(sample_figure(5000 + s, 48, 48), reg, ids);
    std::set<int> labels(sample.labels.at("fine").data.begin(), sample.labels.at("fine").data.end());
    for (int v : labels) ++present[v];
    for (const auto& id : ids) {
      for (auto v : sample.labels.at(id).data) per_domain[id].insert(v);
    }
  }
  for (int z = 1; z < synthetic::kFineCount; ++z) {
    EXPECT_GE(present[z], 30) << reg.domain("fine").names()[z];
  }
  for (const auto& id : ids) EXPECT_EQ(static_cast<int>(per_domain[id].size()), reg.domain(id).size());
}

TEST(Synthgen, DatasetSplitAndDeterminism) {
  EXPECT_EQ(train_count(300, 0.8), 240);
  TempDir a, b;
  GenerationConfig cfg;
  cfg.count = 10;
  cfg.seed = 3;
  cfg.out_dir = a / "d";
  generate_dataset(cfg);
  cfg.out_dir = b / "d";
  generate_dataset(cfg);
  EXPECT_EQ(testing::read_tree(a / "d"), testing::read_tree(b / "d"));

  auto m = load_manifest(a / "d");
  EXPECT_EQ(m.split("train").size(), 8u);
  EXPECT_EQ(m.split("test").size(), 2u);
  const auto& reg = builtin_registry();
  const auto fc = *reg.coarsening("fine", "coarse");
  for (const auto& e : m.entries) {
    auto fine = load_sample(m, e, "fine");
    auto coarse = load_sample(m, e, "coarse");
    EXPECT_EQ(fine.labels.height, fine.image.height);
    EXPECT_EQ(coarse.labels, coarsen_labels(fine.labels, fc));
    for (auto v : coarse.labels.data) EXPECT_LT(v, 5);
  }
  EXPECT_THROW(load_sample(m, m.entries[0], "nope"), std::exception);
}

TEST(Synthgen, GenerationErrors) {
  TempDir t;
  GenerationConfig cfg;
  cfg.out_dir = t / "x";
  cfg.count = 0;
  EXPECT_THROW(generate_dataset(cfg), SynthError);
  cfg.count = 2;
  cfg.height = 40;
  EXPECT_THROW(generate_dataset(cfg), SynthError);
  EXPECT_THROW(load_manifest(t / "missing"), SynthError);
}

}  // namespace
}  // namespace sst
