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

#include "sst/params.hpp"

#include <cmath>
#include <stdexcept>

namespace sst {

Parameter& ParamStore::add(std::string name, std::string tag, Tensor init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  Tensor grad(init.shape(), 0.0f);
  params_.push_back(Parameter{std::move(name), std::move(tag), std::move(init), std::move(grad)});
  return params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0f);
}

Tensor random_normal(const Shape& shape, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  Tensor t(shape);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

Tensor he_normal(const Shape& shape, int fan_in, std::mt19937_64& rng) {
  return random_normal(shape, std::sqrt(2.0f / static_cast<float>(fan_in)), rng);
}

void Adam::step(ParamStore& params, float lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(options_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(options_.beta2), static_cast<double>(step_));
  const float step_size = static_cast<float>(lr * std::sqrt(bc2) / bc1);
  for (auto& p : params.all()) {
    auto& mom = moments_[p.name];
    const std::size_t n = p.value.numel();
    if (mom.m.size() != n) {
      mom.m.assign(n, 0.0f);
      mom.v.assign(n, 0.0f);
    }
    float* w = p.value.data();
    const float* g = p.grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      mom.m[i] = options_.beta1 * mom.m[i] + (1.0f - options_.beta1) * g[i];
      mom.v[i] = options_.beta2 * mom.v[i] + (1.0f - options_.beta2) * g[i] * g[i];
      w[i] -= step_size * mom.m[i] / (std::sqrt(mom.v[i]) + options_.eps);
    }
  }
}

}  // namespace sst
