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

// Small in-memory corpora and configurations shared by the trainer-level tests.

#include <string>
#include <vector>

#include "sst/synthgen.hpp"
#include "sst/trainer.hpp"

namespace sst::testing {

inline const std::vector<std::string> kDomains{"coarse", "mid", "fine"};

inline TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.domains = kDomains;
  cfg.net = NetConfig{8, {4, 4, 8, 8, 8}};
  cfg.batch_per_domain = 2;
  cfg.epochs = 2;
  cfg.seed = 11;
  return cfg;
}

inline std::vector<DomainSamples> tiny_data(int per_domain, std::uint64_t seed) {
  const auto& reg = builtin_registry();
  std::vector<DomainSamples> out;
  for (std::size_t k = 0; k < kDomains.size(); ++k) {
    DomainSamples ds{kDomains[k], {}};
    for (int i = 0; i < per_domain; ++i) {
      SegSample s = rasterize(sample_figure(seed + 100 * k + i, 32, 32), reg, {"fine", "mid", "coarse"});
      ds.samples.push_back({s.image, s.labels.at(kDomains[k])});
    }
    out.push_back(std::move(ds));
  }
  return out;
}

inline std::vector<Batch> batches_of(const std::vector<DomainSamples>& data, int n) {
  std::vector<Batch> out;
  for (const auto& d : data) {
    Batch b{d.domain, {}, {}};
    for (int i = 0; i < n; ++i) {
      b.images.push_back(&d.samples[i].image);
      b.labels.push_back(&d.samples[i].labels);
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline Batch batch_of(const DomainSamples& d, int n) {
  Batch b{d.domain, {}, {}};
  for (int i = 0; i < n; ++i) {
    b.images.push_back(&d.samples[i].image);
    b.labels.push_back(&d.samples[i].labels);
  }
  return b;
}

}  // namespace sst::testing
