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
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "sst/tensor.hpp"

namespace sst {

/// A named trainable tensor. `tag` identifies the owning component
/// (core, head:<domain>, msa, mse:<domain>, mst:<pair>).
struct Parameter {
  std::string name;
  std::string tag;
  Tensor value;
  Tensor grad;
};

/// Insertion-ordered parameter container. References returned by add()
/// stay valid for the lifetime of the store.
class ParamStore {
 public:
  Parameter& add(std::string name, std::string tag, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Parameter* find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }

  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Normal(0, stddev) initialized tensor.
Tensor random_normal(const Shape& shape, float stddev, std::mt19937_64& rng);

/// He-style initialization for a fan-in of `fan_in`.
Tensor he_normal(const Shape& shape, int fan_in, std::mt19937_64& rng);

struct AdamOptions {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adaptive-moment optimizer over a subset of a ParamStore.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Applies one update to every parameter in `params` with a gradient.
  void step(ParamStore& params, float lr);
  std::int64_t steps() const { return step_; }

 private:
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace sst
