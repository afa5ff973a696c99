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

#include "sst/evalkit.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "sst/log.hpp"

namespace sst {
namespace {

using nlohmann::json;

constexpr int kEvalChunk = 8;
constexpr int kVerifyInputs = 20;
constexpr int kVerifySize = 48;
constexpr std::uint64_t kVerifySeed = 0x5eed0f1e7ull;

json optional_array(const std::vector<std::optional<double>>& v) {
  json out = json::array();
  for (const auto& x : v) out.push_back(x ? json(*x) : json(nullptr));
  return out;
}

std::vector<std::optional<double>> optional_vector(const json& j) {
  std::vector<std::optional<double>> out;
  for (const auto& x : j) out.push_back(x.is_null() ? std::nullopt : std::optional(x.get<double>()));
  return out;
}

double mean_of(const std::vector<std::optional<double>>& v, const char* what) {
  double sum = 0.0;
  int n = 0;
  for (const auto& x : v) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  if (n == 0) {
    log_warning(std::string(what) + ": confusion matrix is empty; defined as 0");
    return 0.0;
  }
  return sum / n;
}

}  // namespace

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.z != z) throw ShapeError("confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("confusion: prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " vs ground truth " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      const int g = gt.at(y, x);
      if (g == kIgnoreLabel) continue;
      const int p = pred.at(y, x);
      if (p >= cm.z) {
        throw DomainError("prediction " + std::to_string(p) + " >= Z=" + std::to_string(cm.z) +
                          " at (y=" + std::to_string(y) + ", x=" + std::to_string(x) + ")");
      }
      if (g >= cm.z) {
        throw DomainError("ground truth " + std::to_string(g) + " >= Z=" + std::to_string(cm.z) +
                          " at (y=" + std::to_string(y) + ", x=" + std::to_string(x) + ")");
      }
      ++cm.at(g, p);
    }
  }
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  accumulate(cm, pred, gt);
  return cm;
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.z);
  for (int c = 0; c < cm.z; ++c) {
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < cm.z; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::int64_t uni = row + col - cm.at(c, c);
    if (uni > 0) out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(uni);
  }
  return out;
}

std::vector<std::optional<double>> per_class_acc(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.z);
  for (int c = 0; c < cm.z; ++c) {
    std::int64_t row = 0;
    for (int k = 0; k < cm.z; ++k) row += cm.at(c, k);
    if (row > 0) out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
  }
  return out;
}

double miou(const ConfusionMatrix& cm) { return mean_of(per_class_iou(cm), "mIoU"); }
double mean_acc(const ConfusionMatrix& cm) { return mean_of(per_class_acc(cm), "mean accuracy"); }

MetricsReport MetricsReport::from_confusion(const ConfusionMatrix& cm, json config) {
  MetricsReport r;
  r.per_class_iou = sst::per_class_iou(cm);
  r.per_class_acc = sst::per_class_acc(cm);
  r.miou = mean_of(r.per_class_iou, "mIoU");
  r.mean_acc = mean_of(r.per_class_acc, "mean accuracy");
  r.pixel_count = cm.total();
  r.confusion = cm;
  r.config = config.is_null() ? json::object() : std::move(config);
  return r;
}

json MetricsReport::to_json() const {
  json rows = json::array();
  for (int g = 0; g < confusion.z; ++g) {
    json row = json::array();
    for (int p = 0; p < confusion.z; ++p) row.push_back(confusion.at(g, p));
    rows.push_back(row);
  }
  return {{"per_class_iou", optional_array(per_class_iou)},
          {"miou", miou},
          {"per_class_acc", optional_array(per_class_acc)},
          {"mean_acc", mean_acc},
          {"pixel_count", pixel_count},
          {"confusion", rows},
          {"config", config}};
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport r;
  r.per_class_iou = optional_vector(j.at("per_class_iou"));
  r.miou = j.at("miou").get<double>();
  r.per_class_acc = optional_vector(j.at("per_class_acc"));
  r.mean_acc = j.at("mean_acc").get<double>();
  r.pixel_count = j.value("pixel_count", std::int64_t{0});
  const json& rows = j.at("confusion");
  r.confusion = ConfusionMatrix(static_cast<int>(rows.size()));
  for (int g = 0; g < r.confusion.z; ++g) {
    for (int p = 0; p < r.confusion.z; ++p) r.confusion.at(g, p) = rows[g][p].get<std::int64_t>();
  }
  r.config = j.value("config", json::object());
  return r;
}

Tensor head_logits(const Checkpoint& ckpt, const std::string& domain,
                   const std::vector<const Image*>& images) {
  const auto heads = ckpt.head_domains();
  if (std::find(heads.begin(), heads.end(), domain) == heads.end()) {
    throw DomainError("checkpoint has no head for domain '" + domain + "'");
  }
  // Evaluation never writes parameters; the binder only reads them.
  ParamStore& params = const_cast<ParamStore&>(ckpt.params);
  const NetConfig net = ckpt.net();
  Graph g;
  Binder p(g, params, false);
  PyramidVars pyr = forward(p, g.constant(image_batch(images)), net);
  const Shape& fs = pyr.f.shape();
  Var logits = predict(p, ops::reshape(pyr.f, {fs[0] * fs[1] * fs[2], fs[3]}), domain);
  return logits.value().reshaped({fs[0], fs[1], fs[2], logits.shape()[1]});
}

std::vector<LabelMap> predict_labels(const Checkpoint& ckpt, const std::string& domain,
                                     const std::vector<const Image*>& images) {
  std::vector<LabelMap> out;
  for (std::size_t start = 0; start < images.size(); start += kEvalChunk) {
    const std::size_t end = std::min(images.size(), start + kEvalChunk);
    std::vector<const Image*> chunk(images.begin() + start, images.begin() + end);
    const Tensor logits = head_logits(ckpt, domain, chunk);
    const int n = logits.dim(0), h = logits.dim(1), w = logits.dim(2), z = logits.dim(3);
    const float* a = logits.data();
    for (int i = 0; i < n; ++i) {
      LabelMap m(h, w);
      for (int k = 0; k < h * w; ++k, a += z) {
        m.data[k] = static_cast<std::uint8_t>(std::max_element(a, a + z) - a);
      }
      out.push_back(std::move(m));
    }
  }
  return out;
}

MetricsReport evaluate(const Checkpoint& ckpt, const DomainSamples& samples, json config) {
  const int z = ckpt.params.get(head_bias_name(samples.domain)).value.dim(0);
  std::vector<const Image*> images;
  for (const auto& s : samples.samples) images.push_back(&s.image);
  const auto preds = predict_labels(ckpt, samples.domain, images);
  ConfusionMatrix cm(z);
  for (std::size_t i = 0; i < preds.size(); ++i) accumulate(cm, preds[i], samples.samples[i].labels);
  if (config.is_null()) config = json::object();
  config["domain"] = samples.domain;
  config["samples"] = samples.samples.size();
  if (ckpt.metadata.contains("config")) config["train_config"] = ckpt.metadata.at("config");
  return MetricsReport::from_confusion(cm, std::move(config));
}

Checkpoint export_inference(const Checkpoint& ckpt, const std::vector<std::string>& domains) {
  if (domains.empty()) throw DomainError("export needs at least one domain");
  const auto heads = ckpt.head_domains();
  for (const auto& d : domains) {
    if (std::find(heads.begin(), heads.end(), d) == heads.end() ||
        !ckpt.params.contains(head_weight_name(d))) {
      throw DomainError("checkpoint has no head for domain '" + d + "'");
    }
  }
  Checkpoint out = filter_checkpoint(ckpt, [&](const Parameter& p) {
    if (p.tag == "core") return true;
    for (const auto& d : domains) {
      if (p.tag == head_tag(d)) return true;
    }
    return false;
  });
  out.metadata["domains"] = domains;
  out.metadata["inference_only"] = true;

  std::mt19937_64 rng(kVerifySeed);
  std::vector<Image> inputs(kVerifyInputs);
  for (auto& img : inputs) {
    img.height = kVerifySize;
    img.width = kVerifySize;
    img.rgb.resize(static_cast<std::size_t>(kVerifySize) * kVerifySize * 3);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng() >> 56);
  }
  for (const auto& d : domains) {
    for (int i = 0; i < kVerifyInputs; ++i) {
      const Tensor a = head_logits(ckpt, d, {&inputs[i]});
      const Tensor b = head_logits(out, d, {&inputs[i]});
      for (std::size_t k = 0; k < a.numel(); ++k) {
        if (std::memcmp(a.data() + k, b.data() + k, sizeof(float)) != 0) {
          const int z = a.dim(3);
          const int pix = static_cast<int>(k) / z;
          throw std::runtime_error("export verification failed: head '" + d + "' input " +
                                   std::to_string(i) + " pixel (y=" +
                                   std::to_string(pix / kVerifySize) + ", x=" +
                                   std::to_string(pix % kVerifySize) + ") class " +
                                   std::to_string(k % z));
        }
      }
    }
  }
  return out;
}

Image render(const LabelMap& labels, const std::vector<Rgb>& palette) {
  Image img;
  img.height = labels.height;
  img.width = labels.width;
  img.rgb.assign(static_cast<std::size_t>(labels.height) * labels.width * 3, 0);
  for (std::size_t k = 0; k < labels.data.size(); ++k) {
    const int v = labels.data[k];
    if (v == kIgnoreLabel || v >= static_cast<int>(palette.size())) continue;
    for (int c = 0; c < 3; ++c) img.rgb[k * 3 + c] = palette[v][c];
  }
  return img;
}

double AblationRow::mean_miou() const {
  if (reports.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [d, r] : reports) s += r.miou;
  return s / static_cast<double>(reports.size());
}

std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base) {
  auto make = [&](AuxMode aux, bool scr_d, bool scr_i) {
    TrainConfig c = base;
    c.aux_loss = aux;
    c.scr_dataset = scr_d;
    c.scr_image = scr_i;
    return c;
  };
  return {{"multi-datasets", make(AuxMode::kOff, false, false)},
          {"+aux (no mask)", make(AuxMode::kUnmasked, false, false)},
          {"+aux (M_intra)", make(AuxMode::kMasked, false, false)},
          {"+aux +scr_dataset", make(AuxMode::kMasked, true, false)},
          {"+aux +scr_image", make(AuxMode::kMasked, false, true)},
          {"+aux +scr_dataset +scr_image", make(AuxMode::kMasked, true, true)}};
}

std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<DomainSamples>& train,
                                const std::vector<DomainSamples>& test,
                                const DomainRegistry& registry, const std::string& log_dir) {
  std::vector<AblationRow> rows;
  int index = 0;
  for (auto& [name, cfg] : ablation_configs(base)) {
    AblationRow row;
    row.row = ++index;
    row.name = name;
    row.config = cfg;
    std::ostringstream log;
    Checkpoint ckpt = train_universal(cfg, train, registry, &log);
    if (!log_dir.empty()) {
      std::filesystem::create_directories(log_dir);
      std::ofstream f(std::filesystem::path(log_dir) / ("row" + std::to_string(row.row) + ".jsonl"));
      f << log.str();
    }
    std::istringstream lines(log.str());
    std::string line, last;
    while (std::getline(lines, line)) {
      if (!line.empty()) last = line;
    }
    const json final_epoch = json::parse(last);
    for (const auto& [k, v] : final_epoch.at("loss").items()) {
      row.final_loss.components.emplace_back(k, v.get<double>());
      row.logged_components.push_back(k);
    }
    row.final_loss.total = final_epoch.at("total").get<double>();
    for (const auto& d : cfg.domains) {
      for (const auto& t : test) {
        if (t.domain == d) row.reports.emplace_back(d, evaluate(ckpt, t, {{"ablation_row", row.row}}));
      }
    }
    log_info("ablation row " + std::to_string(row.row) + " (" + name + "): mean mIoU " +
             std::to_string(row.mean_miou()));
    rows.push_back(std::move(row));
  }
  return rows;
}

json ablation_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json miou = json::object();
    json reports = json::object();
    for (const auto& [d, m] : r.reports) {
      miou[d] = m.miou;
      reports[d] = m.to_json();
    }
    out.push_back({{"row", r.row},
                   {"name", r.name},
                   {"aux_loss", to_string(r.config.aux_loss)},
                   {"scr_dataset", r.config.scr_dataset},
                   {"scr_image", r.config.scr_image},
                   {"miou", miou},
                   {"mean_miou", r.mean_miou()},
                   {"final_loss", r.final_loss.to_json()},
                   {"config", r.config.to_json()},
                   {"reports", reports}});
  }
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  std::vector<std::string> domains;
  if (!rows.empty()) {
    for (const auto& [d, m] : rows.front().reports) domains.push_back(d);
  }
  os << std::left << std::setw(4) << "No." << std::setw(10) << "aux" << std::setw(13)
     << "scr_dataset" << std::setw(11) << "scr_image";
  for (const auto& d : domains) os << std::right << std::setw(10) << d;
  os << std::right << std::setw(10) << "mean" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << std::left << std::setw(4) << r.row << std::setw(10) << to_string(r.config.aux_loss)
       << std::setw(13) << (r.config.scr_dataset ? "on" : "off") << std::setw(11)
       << (r.config.scr_image ? "on" : "off");
    for (const auto& [d, m] : r.reports) os << std::right << std::setw(10) << 100.0 * m.miou;
    os << std::right << std::setw(10) << 100.0 * r.mean_miou() << '\n';
  }
  return os.str();
}

}  // namespace sst
