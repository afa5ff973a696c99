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
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sst/checkpoint.hpp"
#include "sst/domain.hpp"
#include "sst/mst.hpp"
#include "sst/params.hpp"
#include "sst/parsenet.hpp"
#include "sst/synthgen.hpp"

namespace sst {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PairStrategy { kFull, kProgressive };
enum class AuxMode { kOff, kUnmasked, kMasked };

std::string to_string(PairStrategy s);
std::string to_string(AuxMode m);
PairStrategy parse_strategy(const std::string& s);
AuxMode parse_aux_mode(const std::string& s);

struct AugmentConfig {
  bool flip = false;        // random horizontal flip (left/right classes swapped)
  bool scale_crop = false;  // random rescale in [0.5, 2] then crop/pad to the canvas

  bool any() const { return flip || scale_crop; }
};

struct TrainConfig {
  double alpha = 10.0;
  double beta = 1.0;
  double lambda = 5.0;
  int epochs = 60;
  double base_lr = 1e-4;
  int lr_drop_epoch = 0;  // 0 selects ceil(5/6 * epochs)
  double lr_drop_factor = 0.1;
  int batch_per_domain = 4;
  std::uint64_t seed = 0;
  PairStrategy strategy = PairStrategy::kFull;
  std::vector<std::string> domains;  // coarsest first
  AuxMode aux_loss = AuxMode::kMasked;
  bool scr_dataset = true;
  bool scr_image = true;
  NetConfig net;
  AugmentConfig augment;

  int drop_epoch() const;
  bool any_scr() const { return scr_dataset || scr_image; }
  /// Whether MSA and MSE are part of the training pipeline.
  bool uses_mse() const { return aux_loss != AuxMode::kOff || scr_image; }
  bool uses_embeddings() const { return uses_mse() || scr_dataset; }
  /// on: masked aux loss and both SCR terms; off: all three disabled.
  void set_sst(bool on);

  /// Throws ConfigError on violated invariants (checked against `registry`
  /// when given).
  void validate(const DomainRegistry* registry = nullptr) const;
  /// Resolved form (the drop epoch is written out explicitly).
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

std::vector<DomainPair> build_pairs(const std::vector<std::string>& domains,
                                    PairStrategy strategy);

double lr_schedule(int epoch, const TrainConfig& cfg);

/// One domain's sub-batch. Pointers must outlive the step.
struct Batch {
  std::string domain;
  std::vector<const Image*> images;
  std::vector<const LabelMap*> labels;
};

/// Named, unweighted loss components (in a fixed order) and the weighted total.
struct LossReport {
  std::vector<std::pair<std::string, double>> components;
  double total = 0.0;

  bool has(const std::string& name) const;
  double get(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Training samples of one domain.
struct DomainSamples {
  std::string domain;
  std::vector<LoadedSample> samples;
};

/// Loads one split of a dataset directory for `domain`.
DomainSamples load_split(const DatasetManifest& manifest, const std::string& domain,
                         const std::string& split);

/// Universal multi-domain model: shared core, one head per domain, and the
/// MSA/MSE/MST modules enabled by the configuration.
class UniversalTrainer {
 public:
  UniversalTrainer(TrainConfig cfg, const DomainRegistry& registry);

  /// Loss on a batch without updating anything, with the toggles of `cfg`
  /// (modules absent from the model may not be enabled).
  LossReport evaluate(const std::vector<Batch>& batches, const TrainConfig& cfg);
  LossReport evaluate(const std::vector<Batch>& batches) { return evaluate(batches, cfg_); }
  /// Forward, backward and one optimizer update at learning rate `lr`.
  LossReport step(const std::vector<Batch>& batches, double lr);

  Checkpoint checkpoint(int epoch, const std::string& regime = "universal") const;
  ParamStore& params() { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<DomainPair>& pairs() const { return pairs_; }

 private:
  LossReport run(const std::vector<Batch>& batches, const TrainConfig& cfg, bool update,
                 double lr);

  TrainConfig cfg_;
  const DomainRegistry* registry_;
  std::vector<DomainPair> pairs_;
  ParamStore params_;
  Adam adam_;
};

/// Dedicated step 2: a frozen source pipeline (teacher) and a target network
/// (student) initialized from the teacher's core.
class TransferTrainer {
 public:
  TransferTrainer(const Checkpoint& pretrained, std::string source, std::string target,
                  TrainConfig cfg, const DomainRegistry& registry);

  LossReport step(const Batch& source, const Batch& target, double lr);
  LossReport evaluate(const Batch& source, const Batch& target);

  Checkpoint checkpoint(int epoch) const;
  const ParamStore& teacher_params() const { return teacher_; }
  ParamStore& params() { return student_; }

 private:
  LossReport run(const Batch& source, const Batch& target, bool update, double lr);

  TrainConfig cfg_;
  const DomainRegistry* registry_;
  std::string source_;
  std::string target_;
  DomainPair pair_;
  AuxMode teacher_aux_;
  NetConfig teacher_net_;
  ParamStore teacher_;
  ParamStore student_;
  Adam adam_;
};

/// Seeded per-epoch batch order for one domain: `steps` batches of `batch`
/// sample indices, cycling through a fresh permutation each pass.
std::vector<std::vector<int>> epoch_batches(int num_samples, int batch, int steps,
                                            std::uint64_t seed, int epoch, int stream);

/// Random subset of `n` indices of size round(frac * n) (at least 1), sorted.
std::vector<int> retain_subset(int n, double frac, std::uint64_t seed);

/// Universal training over the given per-domain samples (ordered like
/// cfg.domains). Writes a JSON-lines log when `log` is non-null.
Checkpoint train_universal(const TrainConfig& cfg, const std::vector<DomainSamples>& data,
                           const DomainRegistry& registry, std::ostream* log = nullptr);

/// Dedicated step 1: alpha * seg + beta * aux on the source domain(s).
Checkpoint dedicated_pretrain(const TrainConfig& cfg, const std::vector<DomainSamples>& data,
                              const DomainRegistry& registry, std::ostream* log = nullptr);

/// Dedicated step 2. `retain_frac` selects a seeded subset of the target
/// training samples. Refuses a checkpoint built against another registry.
Checkpoint dedicated_transfer(const Checkpoint& pretrained, const DomainSamples& source,
                              const DomainSamples& target, const TrainConfig& cfg,
                              const DomainRegistry& registry, double retain_frac = 1.0,
                              std::ostream* log = nullptr);

}  // namespace sst
