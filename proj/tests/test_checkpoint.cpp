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

#include <fstream>
#include <random>

#include "sst/checkpoint.hpp"
#include "test_util.hpp"

namespace sst {
namespace {

using testing::TempDir;

Checkpoint sample_checkpoint() {
  std::mt19937_64 rng(1);
  Checkpoint c;
  c.params.add("core.b", "core", testing::uniform({3, 4}, rng));
  c.params.add("head.x.w", "head:x", testing::uniform({4, 2}, rng));
  c.params.add("a.scalar", "misc", Tensor({1}, 0.1f));
  c.metadata = {{"regime", "universal"}, {"domains", {"x"}}, {"net", NetConfig{}.to_json()}};
  return c;
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir t;
  Checkpoint c = sample_checkpoint();
  save_checkpoint(c, t / "a");
  Checkpoint back = load_checkpoint(t / "a");
  save_checkpoint(back, t / "b");
  EXPECT_EQ(testing::read_tree(t / "a"), testing::read_tree(t / "b"));
  for (const auto& p : c.params.all()) {
    EXPECT_EQ(back.params.get(p.name).value, p.value);
    EXPECT_EQ(back.params.get(p.name).tag, p.tag);
  }
  EXPECT_EQ(back.metadata, c.metadata);
  EXPECT_EQ(back.head_domains(), (std::vector<std::string>{"x"}));
  EXPECT_GT(checkpoint_size(t / "a"), 0u);
}

TEST(Checkpoint, FilterKeepsSelectedTensors) {
  Checkpoint c = sample_checkpoint();
  Checkpoint f = filter_checkpoint(c, [](const Parameter& p) { return p.tag == "core"; });
  EXPECT_EQ(f.params.size(), 1u);
  EXPECT_TRUE(f.params.contains("core.b"));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir t;
  save_checkpoint(sample_checkpoint(), t / "c");
  EXPECT_THROW(load_checkpoint(t / "missing"), CheckpointError);
  {
    std::ofstream(t / "c" / "tensors.bin", std::ios::binary | std::ios::app) << "x";
  }
  EXPECT_THROW(load_checkpoint(t / "c"), CheckpointError);
  save_checkpoint(sample_checkpoint(), t / "d");
  std::filesystem::resize_file(t / "d" / "tensors.bin", 8);
  EXPECT_THROW(load_checkpoint(t / "d"), CheckpointError);
  std::ofstream(t / "d" / "manifest.json") << "{\"format\": \"other\"}";
  EXPECT_THROW(load_checkpoint(t / "d"), CheckpointError);
}

}  // namespace
}  // namespace sst
