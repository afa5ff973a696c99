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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sst/checkpoint.hpp"
#include "sst/domain.hpp"
#include "sst/image_io.hpp"
#include "sst/trainer.hpp"

namespace sst {

/// counts[g * z + p]: pixels with ground truth g predicted as p.
struct ConfusionMatrix {
  int z = 0;
  std::vector<std::int64_t> counts;

  explicit ConfusionMatrix(int num_classes = 0)
      : z(num_classes), counts(static_cast<std::size_t>(num_classes) * num_classes, 0) {}
  std::int64_t at(int g, int p) const { return counts[static_cast<std::size_t>(g) * z + p]; }
  std::int64_t& at(int g, int p) { return counts[static_cast<std::size_t>(g) * z + p]; }
  std::int64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Ignore-labelled ground-truth pixels are skipped. Predictions >= Z raise
/// DomainError with the coordinate.
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes);
void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt);

/// nullopt for classes with zero union (IoU) or zero ground-truth row (accuracy).
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);
std::vector<std::optional<double>> per_class_acc(const ConfusionMatrix& cm);
double miou(const ConfusionMatrix& cm);
double mean_acc(const ConfusionMatrix& cm);

struct MetricsReport {
  std::vector<std::optional<double>> per_class_iou;
  double miou = 0.0;
  std::vector<std::optional<double>> per_class_acc;
  double mean_acc = 0.0;
  std::int64_t pixel_count = 0;
  ConfusionMatrix confusion;
  nlohmann::json config = nlohmann::json::object();

  static MetricsReport from_confusion(const ConfusionMatrix& cm, nlohmann::json config = {});
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  bool operator==(const MetricsReport&) const = default;
};

/// Head logits [N, H, W, Z] of a batch of images.
Tensor head_logits(const Checkpoint& ckpt, const std::string& domain,
                   const std::vector<const Image*>& images);
/// Argmax labels (lowest index wins ties).
std::vector<LabelMap> predict_labels(const Checkpoint& ckpt, const std::string& domain,
                                     const std::vector<const Image*>& images);

MetricsReport evaluate(const Checkpoint& ckpt, const DomainSamples& samples,
                       nlohmann::json config = {});

/// Keeps core and the heads of `domains`; verifies bitwise-equal head logits
/// on 20 seeded inputs before returning.
Checkpoint export_inference(const Checkpoint& ckpt, const std::vector<std::string>& domains);

/// Colours labels with `palette`; ignore pixels (and labels beyond the
/// palette) are black.
Image render(const LabelMap& labels, const std::vector<Rgb>& palette);

/// One configuration of the component ablation grid.
struct AblationRow {
  int row = 0;
  std::string name;
  TrainConfig config;
  std::vector<std::pair<std::string, MetricsReport>> reports;  // per domain
  LossReport final_loss;
  std::vector<std::string> logged_components;

  double mean_miou() const;
};

/// The six configurations: baseline, +aux unmasked, +aux masked,
/// +scr_dataset, +scr_image, +both (all with masked aux from row 3 on).
std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base);

/// Trains and evaluates every configuration. Per-row JSON-lines logs are
/// written to `log_dir` when it is non-empty.
std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<DomainSamples>& train,
                                const std::vector<DomainSamples>& test,
                                const DomainRegistry& registry,
                                const std::string& log_dir = {});

nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace sst
