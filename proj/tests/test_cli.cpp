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
#include <sstream>

#include "sst/cli.hpp"
#include "sst/trainer.hpp"
#include "test_util.hpp"

namespace sst {
namespace {

using testing::TempDir;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json error_line(const Result& r) {
  std::istringstream in(r.err);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return nlohmann::json::parse(last);
}

TEST(Cli, HelpNamesEveryConfigField) {
  Result r = run({"train-universal", "--help"});
  ASSERT_EQ(r.code, kExitOk);
  const nlohmann::json cfg = TrainConfig().to_json();
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    const std::string key = it.key();
    if (it->is_object()) {
      for (auto sub = it->begin(); sub != it->end(); ++sub) {
        EXPECT_NE(r.out.find(key + "." + sub.key()), std::string::npos) << key << "." << sub.key();
      }
    } else {
      EXPECT_NE(r.out.find("config: " + key), std::string::npos) << key;
    }
  }
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, UsageErrorsExitTwoWithJson) {
  Result none = run({});
  EXPECT_EQ(none.code, kExitUsage);
  EXPECT_EQ(error_line(none)["error"], "usage");
  Result bad = run({"gen-data", "--out", "x", "--count", "3", "--bogus"});
  EXPECT_EQ(bad.code, kExitUsage);
  TempDir t;
  Result missing = run({"eval", "--ckpt", (t / "nope").string(), "--data", t.path().string(),
                        "--domain", "coarse", "--out", (t / "r.json").string()});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_TRUE(error_line(missing).contains("message"));
  Result canvas = run({"gen-data", "--out", (t / "g").string(), "--count", "2", "--canvas", "40x48"});
  EXPECT_EQ(canvas.code, kExitUsage);
}

TEST(Cli, GenDataIsByteIdentical) {
  TempDir t;
  for (const char* d : {"a", "b"}) {
    Result r = run({"gen-data", "--out", (t / d).string(), "--count", "6", "--seed", "4", "--canvas", "32x32"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  EXPECT_EQ(testing::read_tree(t / "a"), testing::read_tree(t / "b"));
}

TEST(Cli, TrainEvalExportRoundTrip) {
  TempDir t;
  ASSERT_EQ(run({"gen-data", "--out", (t / "data").string(), "--count", "6", "--seed", "1",
                 "--canvas", "32x32"}).code,
            kExitOk);
  const std::vector<std::string> common{"--data", (t / "data").string(), "--epochs", "1", "--batch", "2",
                                        "--feature-dim", "8", "--widths", "4", "4", "8", "8", "8"};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), common.begin(), common.end());
    return head;
  };
  Result off = run(with({"train-universal", "--out", (t / "off").string(), "--sst", "off"}));
  ASSERT_EQ(off.code, kExitOk) << off.err;
  std::ifstream log(t / "off" / "train_log.jsonl");
  std::string line;
  int epochs = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    if (j["event"] != "epoch") continue;
    ++epochs;
    for (auto it = j["loss"].begin(); it != j["loss"].end(); ++it) {
      EXPECT_EQ(it.key().rfind("seg:", 0), 0u) << it.key();
    }
  }
  EXPECT_EQ(epochs, 1);

  Result on = run(with({"train-universal", "--out", (t / "on").string()}));
  ASSERT_EQ(on.code, kExitOk) << on.err;
  ASSERT_EQ(run({"export", "--ckpt", (t / "on").string(), "--domains", "coarse,fine", "--out",
                 (t / "lean").string()}).code,
            kExitOk);
  for (const char* ck : {"on", "lean"}) {
    Result e = run({"eval", "--ckpt", (t / ck).string(), "--data", (t / "data").string(), "--domain",
                    "coarse", "--out", (t / (std::string(ck) + ".json")).string()});
    ASSERT_EQ(e.code, kExitOk) << e.err;
  }
  auto a = nlohmann::json::parse(testing::read_file(t / "on.json"));
  auto b = nlohmann::json::parse(testing::read_file(t / "lean.json"));
  EXPECT_EQ(a["confusion"], b["confusion"]);
  EXPECT_EQ(a["miou"], b["miou"]);

  Result unknown = run({"export", "--ckpt", (t / "on").string(), "--domains", "nope", "--out",
                        (t / "x").string()});
  EXPECT_EQ(unknown.code, kExitUsage);
}

}  // namespace
}  // namespace sst
