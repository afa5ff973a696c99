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

#include "sst/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "sst/log.hpp"
#include "sst/msa.hpp"
#include "sst/mse.hpp"

namespace sst {
namespace {

using nlohmann::json;

// Per-domain category representations of one sub-batch: X_0 and, per image,
// S_l and X_l for l = 1..3 (index l-1).
struct Reps {
  Var x0;
  std::vector<std::array<Var, kNumScales>> s;
  std::vector<std::array<Var, kNumScales>> x;
};

struct Term {
  std::string name;
  double weight;
  Var value;
};

Tensor ones_mask(int z) { return Tensor({z, z}, 1.0f); }

Var image_slice(Var pyramid_level, int index) {
  const Shape& s = pyramid_level.shape();
  return ops::reshape(ops::slice0(pyramid_level, index, 1), {s[1] * s[2], s[3]});
}

Reps build_reps(Binder& p, const PyramidVars& pyr, int offset, const Batch& b,
                const LabelDomain& dom, AuxMode mode, bool chain) {
  Reps r;
  r.x0 = p(embedding_name(dom.id()));
  if (!chain) return r;
  const Tensor mask = mode == AuxMode::kUnmasked ? ones_mask(dom.size()) : dom.intra_mask();
  Var ws = p(kMsaWeight);
  for (std::size_t i = 0; i < b.images.size(); ++i) {
    std::array<Var, kNumScales> s{}, x{};
    Var prev = r.x0;
    for (int l = 1; l <= kNumScales; ++l) {
      Var h = image_slice(pyr.scale(l), offset + static_cast<int>(i));
      RegionMasks masks = region_masks(*b.labels[i], l, dom.size());
      s[l - 1] = aggregate(h, masks, ws);
      prev = sp_layer(p, dom.id(), l, prev, s[l - 1], mask);
      x[l - 1] = prev;
    }
    r.s.push_back(s);
    r.x.push_back(x);
  }
  return r;
}

Var aux_term(const PyramidVars& pyr, int offset, const Batch& b, const Reps& r) {
  std::vector<Var> parts;
  for (std::size_t i = 0; i < b.images.size(); ++i) {
    parts.push_back(aux_logits(image_slice(pyr.f, offset + static_cast<int>(i)), r.x[i].back()));
  }
  return aux_loss(ops::concat0(parts), b.labels);
}

Var scr_dataset_term(Binder& p, const DomainPair& pair, const Reps& ra, const Reps& rb,
                     const DomainRegistry& reg) {
  Var m_ab = static_map(p, pair, pair.a, pair.b, ra.x0, rb.x0, reg.static_matrix(pair.a, pair.b));
  Var m_ba = static_map(p, pair, pair.b, pair.a, rb.x0, ra.x0, reg.static_matrix(pair.b, pair.a));
  return scr_dataset(ra.x0, rb.x0, m_ba, m_ab);
}

// Mean over image pairs (i-th with i-th, the shorter side cycling).
Var scr_image_term(Binder& p, const DomainPair& pair, const Reps& ra, const Reps& rb) {
  const std::size_t na = ra.x.size(), nb = rb.x.size();
  const std::size_t n = std::max(na, nb);
  Var total;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& xa = ra.x[i % na];
    const auto& xb = rb.x[i % nb];
    const auto& sa = ra.s[i % na];
    const auto& sb = rb.s[i % nb];
    std::vector<Var> x1, x2, m21, m12;
    for (int l = 1; l <= kNumScales; ++l) {
      const int k = l - 1;
      x1.push_back(xa[k]);
      x2.push_back(xb[k]);
      m12.push_back(dynamic_map(p, pair, pair.a, pair.b, l, xa[k], xb[k], sa[k], sb[k]));
      m21.push_back(dynamic_map(p, pair, pair.b, pair.a, l, xb[k], xa[k], sb[k], sa[k]));
    }
    Var term = scr_image(x1, x2, m21, m12);
    total = total.valid() ? ops::add(total, term) : term;
  }
  return ops::scale(total, 1.0f / static_cast<float>(n));
}

LossReport finish(Graph& g, const std::vector<Term>& terms, bool update) {
  LossReport report;
  Var total;
  for (const auto& t : terms) {
    const double v = t.value.value()[0];
    if (!std::isfinite(v)) throw std::runtime_error("non-finite loss component '" + t.name + "'");
    report.components.emplace_back(t.name, v);
    Var w = ops::scale(t.value, static_cast<float>(t.weight));
    total = total.valid() ? ops::add(total, w) : w;
  }
  report.total = total.value()[0];
  if (!std::isfinite(report.total)) throw std::runtime_error("non-finite total loss");
  if (update) g.backward(total);
  return report;
}

std::vector<const Image*> gather_images(const std::vector<Batch>& batches) {
  std::vector<const Image*> out;
  for (const auto& b : batches) out.insert(out.end(), b.images.begin(), b.images.end());
  return out;
}

void check_batch(const Batch& b) {
  if (b.images.empty() || b.images.size() != b.labels.size()) {
    throw std::invalid_argument("batch for '" + b.domain + "' needs matching nonempty images/labels");
  }
}

std::mt19937_64 seeded(std::uint64_t seed, std::initializer_list<std::uint32_t> extra) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), extra.begin(), extra.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

void shuffle(std::vector<int>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<std::uint8_t> flip_table(const LabelDomain& dom) {
  std::vector<std::uint8_t> t(256);
  for (int i = 0; i < 256; ++i) t[i] = static_cast<std::uint8_t>(i);
  const auto& names = dom.names();
  for (int i = 0; i < dom.size(); ++i) {
    const std::string& n = names[i];
    std::string mirror;
    if (n.starts_with("left-")) mirror = "right-" + n.substr(5);
    if (n.starts_with("right-")) mirror = "left-" + n.substr(6);
    if (mirror.empty()) continue;
    const int j = dom.index_of(mirror);
    if (j >= 0) t[i] = static_cast<std::uint8_t>(j);
  }
  return t;
}

// Owned storage for augmented copies of one step's samples.
struct AugmentedSample {
  Image image;
  LabelMap labels;
};

AugmentedSample augment(const LoadedSample& in, const AugmentConfig& cfg,
                        const std::vector<std::uint8_t>& mirror, std::mt19937_64& rng) {
  AugmentedSample out{in.image, in.labels};
  const int h = in.image.height, w = in.image.width;
  if (cfg.scale_crop) {
    const double s = 0.5 + 1.5 * unit(rng);
    const int sh = std::max(1, static_cast<int>(std::lround(h * s)));
    const int sw = std::max(1, static_cast<int>(std::lround(w * s)));
    const int oy = sh > h ? static_cast<int>(rng() % static_cast<std::uint64_t>(sh - h + 1)) : 0;
    const int ox = sw > w ? static_cast<int>(rng() % static_cast<std::uint64_t>(sw - w + 1)) : 0;
    std::fill(out.image.rgb.begin(), out.image.rgb.end(), 0);
    std::fill(out.labels.data.begin(), out.labels.data.end(), kIgnoreLabel);
    for (int y = 0; y < h; ++y) {
      const int yy = y + oy;
      if (yy >= sh) break;
      const int src_y = std::min(h - 1, static_cast<int>(static_cast<long>(yy) * h / sh));
      for (int x = 0; x < w; ++x) {
        const int xx = x + ox;
        if (xx >= sw) break;
        const int src_x = std::min(w - 1, static_cast<int>(static_cast<long>(xx) * w / sw));
        out.labels.at(y, x) = in.labels.at(src_y, src_x);
        for (int c = 0; c < 3; ++c) {
          out.image.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
              in.image.rgb[(static_cast<std::size_t>(src_y) * w + src_x) * 3 + c];
        }
      }
    }
  }
  if (cfg.flip && (rng() & 1u)) {
    AugmentedSample f = out;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        f.labels.at(y, x) = mirror[out.labels.at(y, w - 1 - x)];
        for (int c = 0; c < 3; ++c) {
          f.image.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
              out.image.rgb[(static_cast<std::size_t>(y) * w + (w - 1 - x)) * 3 + c];
        }
      }
    }
    out = std::move(f);
  }
  return out;
}

// Assembles a Batch from sample indices, augmenting into `storage` if enabled.
Batch make_batch(const DomainSamples& data, const std::vector<int>& idx, const TrainConfig& cfg,
                 const DomainRegistry& reg, std::vector<AugmentedSample>& storage,
                 std::mt19937_64& rng) {
  Batch b;
  b.domain = data.domain;
  if (!cfg.augment.any()) {
    for (int i : idx) {
      b.images.push_back(&data.samples[i].image);
      b.labels.push_back(&data.samples[i].labels);
    }
    return b;
  }
  const auto mirror = flip_table(reg.domain(data.domain));
  // Callers reserve capacity for the whole step so earlier pointers stay valid.
  const std::size_t first = storage.size();
  for (int i : idx) storage.push_back(augment(data.samples[i], cfg.augment, mirror, rng));
  for (std::size_t k = first; k < storage.size(); ++k) {
    b.images.push_back(&storage[k].image);
    b.labels.push_back(&storage[k].labels);
  }
  return b;
}

int steps_for(std::size_t n, int batch) {
  return static_cast<int>((n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

// Running mean of loss reports over one epoch.
struct EpochMeter {
  std::vector<std::pair<std::string, double>> sums;
  double total = 0.0;
  int count = 0;

  void add(const LossReport& r) {
    if (sums.empty()) {
      for (const auto& [k, v] : r.components) sums.emplace_back(k, 0.0);
    }
    for (std::size_t i = 0; i < sums.size(); ++i) sums[i].second += r.components[i].second;
    total += r.total;
    ++count;
  }

  json line(int epoch, double lr) const {
    json loss = json::object();
    for (const auto& [k, v] : sums) loss[k] = v / count;
    return {{"event", "epoch"}, {"epoch", epoch}, {"lr", lr}, {"steps", count},
            {"loss", loss},     {"total", total / count}};
  }
};

void write_line(std::ostream* log, const json& j) {
  if (!log) return;
  *log << j.dump() << '\n';
  log->flush();
}

const DomainSamples& find_samples(const std::vector<DomainSamples>& data, const std::string& d) {
  for (const auto& s : data) {
    if (s.domain == d) return s;
  }
  throw ConfigError("no training data for domain '" + d + "'");
}

json optimizer_json() {
  const AdamOptions o;
  return {{"name", "adam"}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}};
}

bool on_off(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_boolean()) return v.get<bool>();
  const auto s = v.get<std::string>();
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigError(std::string(key) + " must be \"on\" or \"off\", got \"" + s + "\"");
}

}  // namespace

std::string to_string(PairStrategy s) { return s == PairStrategy::kFull ? "full" : "progressive"; }

std::string to_string(AuxMode m) {
  switch (m) {
    case AuxMode::kOff: return "off";
    case AuxMode::kUnmasked: return "unmasked";
    case AuxMode::kMasked: return "masked";
  }
  return "masked";
}

PairStrategy parse_strategy(const std::string& s) {
  if (s == "full") return PairStrategy::kFull;
  if (s == "progressive") return PairStrategy::kProgressive;
  throw ConfigError("strategy must be full or progressive, got '" + s + "'");
}

AuxMode parse_aux_mode(const std::string& s) {
  if (s == "off") return AuxMode::kOff;
  if (s == "unmasked") return AuxMode::kUnmasked;
  if (s == "masked") return AuxMode::kMasked;
  throw ConfigError("aux_loss must be off, unmasked or masked, got '" + s + "'");
}

int TrainConfig::drop_epoch() const {
  if (lr_drop_epoch > 0) return lr_drop_epoch;
  return (5 * epochs + 5) / 6;
}

void TrainConfig::set_sst(bool on) {
  aux_loss = on ? AuxMode::kMasked : AuxMode::kOff;
  scr_dataset = on;
  scr_image = on;
}

void TrainConfig::validate(const DomainRegistry* registry) const {
  if (alpha < 0 || beta < 0 || lambda < 0) throw ConfigError("alpha, beta, lambda must be >= 0");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (!(base_lr > 0)) throw ConfigError("base_lr must be positive");
  if (lr_drop_epoch < 0 || drop_epoch() > epochs) {
    throw ConfigError("lr_drop_epoch must lie in [1, epochs=" + std::to_string(epochs) + "]");
  }
  if (!(lr_drop_factor > 0 && lr_drop_factor <= 1)) {
    throw ConfigError("lr_drop_factor must lie in (0, 1]");
  }
  if (batch_per_domain <= 0) throw ConfigError("batch_per_domain must be positive");
  if (domains.empty()) throw ConfigError("at least one domain is required");
  std::set<std::string> seen;
  for (const auto& d : domains) {
    if (!seen.insert(d).second) throw ConfigError("domain '" + d + "' listed twice");
  }
  if (any_scr() && domains.size() < 2) {
    throw ConfigError("scr_dataset/scr_image need at least 2 domains");
  }
  net.validate();
  if (registry) {
    int prev = 0;
    for (const auto& d : domains) {
      if (!registry->has_domain(d)) throw ConfigError("unknown domain '" + d + "'");
      const int z = registry->domain(d).size();
      if (z < prev) throw ConfigError("domains must be ordered coarsest to finest");
      prev = z;
    }
  }
}

json TrainConfig::to_json() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"lambda", lambda},
          {"epochs", epochs},
          {"base_lr", base_lr},
          {"lr_drop_epoch", drop_epoch()},
          {"lr_drop_factor", lr_drop_factor},
          {"batch_per_domain", batch_per_domain},
          {"seed", seed},
          {"strategy", to_string(strategy)},
          {"domains", domains},
          {"aux_loss", to_string(aux_loss)},
          {"scr_dataset", scr_dataset ? "on" : "off"},
          {"scr_image", scr_image ? "on" : "off"},
          {"net", net.to_json()},
          {"augment", {{"flip", augment.flip}, {"scale_crop", augment.scale_crop}}}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> known{
      "alpha",    "beta",     "lambda",  "epochs",      "base_lr",   "lr_drop_epoch",
      "lr_drop_factor", "batch_per_domain", "seed", "strategy", "domains", "aux_loss",
      "scr_dataset", "scr_image", "net", "augment"};
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown training config key '" + k + "'");
  }
  TrainConfig c;
  try {
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("base_lr")) c.base_lr = j.at("base_lr").get<double>();
    if (j.contains("lr_drop_epoch")) c.lr_drop_epoch = j.at("lr_drop_epoch").get<int>();
    if (j.contains("lr_drop_factor")) c.lr_drop_factor = j.at("lr_drop_factor").get<double>();
    if (j.contains("batch_per_domain")) c.batch_per_domain = j.at("batch_per_domain").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("domains")) c.domains = j.at("domains").get<std::vector<std::string>>();
    if (j.contains("aux_loss")) c.aux_loss = parse_aux_mode(j.at("aux_loss").get<std::string>());
    if (j.contains("scr_dataset")) c.scr_dataset = on_off(j, "scr_dataset");
    if (j.contains("scr_image")) c.scr_image = on_off(j, "scr_image");
    if (j.contains("net")) c.net = NetConfig::from_json(j.at("net"));
    if (j.contains("augment")) {
      const json& a = j.at("augment");
      c.augment.flip = a.value("flip", false);
      c.augment.scale_crop = a.value("scale_crop", false);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

std::vector<DomainPair> build_pairs(const std::vector<std::string>& domains, PairStrategy strategy) {
  if (domains.size() < 2) throw ConfigError("pairing needs at least 2 domains");
  std::vector<DomainPair> out;
  if (strategy == PairStrategy::kProgressive) {
    for (std::size_t i = 0; i + 1 < domains.size(); ++i) out.push_back({domains[i], domains[i + 1]});
  } else {
    for (std::size_t i = 0; i < domains.size(); ++i) {
      for (std::size_t j = i + 1; j < domains.size(); ++j) out.push_back({domains[i], domains[j]});
    }
  }
  return out;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  return epoch < cfg.drop_epoch() ? cfg.base_lr : cfg.base_lr * cfg.lr_drop_factor;
}

bool LossReport::has(const std::string& name) const {
  for (const auto& [k, v] : components) {
    if (k == name) return true;
  }
  return false;
}

double LossReport::get(const std::string& name) const {
  for (const auto& [k, v] : components) {
    if (k == name) return v;
  }
  throw std::out_of_range("no loss component '" + name + "'");
}

json LossReport::to_json() const {
  json c = json::object();
  for (const auto& [k, v] : components) c[k] = v;
  return {{"loss", c}, {"total", total}};
}

DomainSamples load_split(const DatasetManifest& manifest, const std::string& domain,
                         const std::string& split) {
  DomainSamples out;
  out.domain = domain;
  for (const ManifestEntry* e : manifest.split(split)) {
    out.samples.push_back(load_sample(manifest, *e, domain));
  }
  return out;
}

// ---------------------------------------------------------------------------

UniversalTrainer::UniversalTrainer(TrainConfig cfg, const DomainRegistry& registry)
    : cfg_(std::move(cfg)), registry_(&registry) {
  cfg_.validate(registry_);
  if (cfg_.any_scr()) pairs_ = build_pairs(cfg_.domains, cfg_.strategy);
  std::mt19937_64 rng = seeded(cfg_.seed, {0x1u});
  const int d = cfg_.net.feature_dim;
  init_core_params(params_, cfg_.net, rng);
  for (const auto& dom : cfg_.domains) init_head_params(params_, dom, registry.domain(dom).size(), d, rng);
  if (cfg_.uses_mse()) init_msa_params(params_, d, rng);
  if (cfg_.uses_embeddings()) {
    for (const auto& dom : cfg_.domains) init_mse_params(params_, dom, registry.domain(dom).size(), d, rng);
  }
  for (const auto& pair : pairs_) init_mst_params(params_, pair, d, rng);
}

LossReport UniversalTrainer::evaluate(const std::vector<Batch>& batches, const TrainConfig& cfg) {
  if ((cfg.uses_mse() && !cfg_.uses_mse()) || (cfg.uses_embeddings() && !cfg_.uses_embeddings()) ||
      (cfg.any_scr() && !cfg_.any_scr())) {
    throw ConfigError("evaluate: toggles enable modules this model was built without");
  }
  return run(batches, cfg, false, 0.0);
}

LossReport UniversalTrainer::step(const std::vector<Batch>& batches, double lr) {
  return run(batches, cfg_, true, lr);
}

LossReport UniversalTrainer::run(const std::vector<Batch>& batches, const TrainConfig& cfg,
                                 bool update, double lr) {
  if (batches.empty()) throw std::invalid_argument("universal step needs at least one sub-batch");
  std::set<std::string> present;
  for (const auto& b : batches) {
    check_batch(b);
    if (std::find(cfg_.domains.begin(), cfg_.domains.end(), b.domain) == cfg_.domains.end()) {
      throw ConfigError("batch domain '" + b.domain + "' is not part of this model");
    }
    if (!present.insert(b.domain).second) throw ConfigError("two sub-batches for '" + b.domain + "'");
  }
  if (update) params_.zero_grad();

  Graph g;
  Binder p(g, params_, update);
  PyramidVars pyr = forward(p, g.constant(image_batch(gather_images(batches))), cfg_.net);
  const int d = cfg_.net.feature_dim;

  std::vector<Term> terms;
  std::map<std::string, Reps> reps;
  int offset = 0;
  for (const auto& b : batches) {
    const int n = static_cast<int>(b.images.size());
    const Shape& fs = pyr.f.shape();
    Var f = ops::reshape(ops::slice0(pyr.f, offset, n), {n * fs[1] * fs[2], d});
    terms.push_back({"seg:" + b.domain, cfg.alpha, seg_loss(predict(p, f, b.domain), b.labels)});
    const LabelDomain& dom = registry_->domain(b.domain);
    if (cfg.uses_mse() || cfg.scr_dataset) {
      reps[b.domain] = build_reps(p, pyr, offset, b, dom, cfg.aux_loss, cfg.uses_mse());
    }
    if (cfg.aux_loss != AuxMode::kOff) {
      terms.push_back({"aux:" + b.domain, cfg.beta, aux_term(pyr, offset, b, reps[b.domain])});
    }
    offset += n;
  }
  if (cfg.any_scr()) {
    for (const auto& pair : pairs_) {
      if (!present.count(pair.a) || !present.count(pair.b)) continue;
      if (cfg.scr_dataset) {
        terms.push_back({"scr_dataset:" + pair.id(), cfg.lambda,
                         scr_dataset_term(p, pair, reps[pair.a], reps[pair.b], *registry_)});
      }
      if (cfg.scr_image) {
        terms.push_back({"scr_image:" + pair.id(), cfg.lambda,
                         scr_image_term(p, pair, reps[pair.a], reps[pair.b])});
      }
    }
  }
  LossReport report = finish(g, terms, update);
  if (update) adam_.step(params_, static_cast<float>(lr));
  return report;
}

Checkpoint UniversalTrainer::checkpoint(int epoch, const std::string& regime) const {
  Checkpoint c;
  c.params = params_;
  c.metadata = {{"regime", regime},
                {"config", cfg_.to_json()},
                {"net", cfg_.net.to_json()},
                {"domains", cfg_.domains},
                {"epoch", epoch},
                {"seed", cfg_.seed},
                {"optimizer", optimizer_json()},
                {"registry_hash", registry_->hash()}};
  return c;
}

// ---------------------------------------------------------------------------

TransferTrainer::TransferTrainer(const Checkpoint& pretrained, std::string source,
                                 std::string target, TrainConfig cfg,
                                 const DomainRegistry& registry)
    : cfg_(std::move(cfg)),
      registry_(&registry),
      source_(std::move(source)),
      target_(std::move(target)),
      pair_{source_, target_} {
  if (pretrained.registry_hash() != registry.hash()) {
    throw ConfigError("registry mismatch: checkpoint " + pretrained.registry_hash() +
                      " vs current " + registry.hash());
  }
  if (source_ == target_) throw ConfigError("source and target domain must differ");
  teacher_net_ = pretrained.net();
  cfg_.net = teacher_net_;
  cfg_.domains = {source_, target_};
  if (!registry.has_domain(source_) || !registry.has_domain(target_)) {
    throw ConfigError("unknown source or target domain");
  }
  teacher_aux_ = AuxMode::kMasked;
  if (pretrained.metadata.contains("config")) {
    teacher_aux_ = parse_aux_mode(pretrained.metadata["config"].value("aux_loss", "masked"));
    if (teacher_aux_ == AuxMode::kOff) teacher_aux_ = AuxMode::kMasked;
  }
  const auto heads = pretrained.head_domains();
  if (std::find(heads.begin(), heads.end(), source_) == heads.end()) {
    throw ConfigError("pretrained checkpoint has no head for source domain '" + source_ + "'");
  }
  if (cfg_.any_scr() && !pretrained.params.contains(embedding_name(source_))) {
    throw ConfigError("pretrained checkpoint lacks the MSE of source domain '" + source_ + "'");
  }
  if (cfg_.scr_image && !pretrained.params.contains(kMsaWeight)) {
    throw ConfigError("pretrained checkpoint lacks MSA parameters");
  }
  for (const auto& p : pretrained.params.all()) {
    if (p.tag == "core" || p.tag == head_tag(source_) || p.tag == "msa" ||
        p.tag == mse_tag(source_)) {
      teacher_.add(p.name, p.tag, p.value);
    }
  }

  std::mt19937_64 rng = seeded(cfg_.seed, {0x2u});
  const int d = teacher_net_.feature_dim;
  const int z = registry.domain(target_).size();
  for (const auto& p : teacher_.all()) {
    if (p.tag == "core") student_.add(p.name, p.tag, p.value);
  }
  init_head_params(student_, target_, z, d, rng);
  init_msa_params(student_, d, rng);
  init_mse_params(student_, target_, z, d, rng);
  init_mst_params(student_, pair_, d, rng);
}

LossReport TransferTrainer::step(const Batch& source, const Batch& target, double lr) {
  return run(source, target, true, lr);
}

LossReport TransferTrainer::evaluate(const Batch& source, const Batch& target) {
  return run(source, target, false, 0.0);
}

LossReport TransferTrainer::run(const Batch& source, const Batch& target, bool update, double lr) {
  check_batch(source);
  check_batch(target);
  if (source.domain != source_ || target.domain != target_) {
    throw ConfigError("transfer batches must be for '" + source_ + "' and '" + target_ + "'");
  }
  if (update) student_.zero_grad();

  Graph g;
  Binder s(g, student_, update);
  Binder t(g, teacher_, false);
  const int d = teacher_net_.feature_dim;
  const LabelDomain& tdom = registry_->domain(target_);

  PyramidVars pyr = forward(s, g.constant(image_batch(target.images)), teacher_net_);
  const int n = static_cast<int>(target.images.size());
  const Shape& fs = pyr.f.shape();
  Var f = ops::reshape(pyr.f, {n * fs[1] * fs[2], d});

  std::vector<Term> terms;
  terms.push_back({"seg:" + target_, cfg_.alpha, seg_loss(predict(s, f, target_), target.labels)});
  Reps rt = build_reps(s, pyr, 0, target, tdom, cfg_.aux_loss, cfg_.uses_mse());
  if (cfg_.aux_loss != AuxMode::kOff) {
    terms.push_back({"aux:" + target_, cfg_.beta, aux_term(pyr, 0, target, rt)});
  }
  if (cfg_.any_scr()) {
    Reps rs;
    if (cfg_.scr_image) {
      PyramidVars tp = forward(t, g.constant(image_batch(source.images)), teacher_net_);
      rs = build_reps(t, tp, 0, source, registry_->domain(source_), teacher_aux_, true);
    } else {
      rs.x0 = t(embedding_name(source_));
    }
    if (cfg_.scr_dataset) {
      terms.push_back({"scr_dataset:" + pair_.id(), cfg_.lambda,
                       scr_dataset_term(s, pair_, rs, rt, *registry_)});
    }
    if (cfg_.scr_image) {
      terms.push_back({"scr_image:" + pair_.id(), cfg_.lambda, scr_image_term(s, pair_, rs, rt)});
    }
  }
  LossReport report = finish(g, terms, update);
  if (update) adam_.step(student_, static_cast<float>(lr));
  return report;
}

Checkpoint TransferTrainer::checkpoint(int epoch) const {
  Checkpoint c;
  c.params = student_;
  c.metadata = {{"regime", "dedicated-transfer"},
                {"config", cfg_.to_json()},
                {"net", teacher_net_.to_json()},
                {"domains", std::vector<std::string>{target_}},
                {"source", source_},
                {"target", target_},
                {"epoch", epoch},
                {"seed", cfg_.seed},
                {"optimizer", optimizer_json()},
                {"registry_hash", registry_->hash()}};
  return c;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<int>> epoch_batches(int num_samples, int batch, int steps,
                                            std::uint64_t seed, int epoch, int stream) {
  if (num_samples <= 0) throw std::invalid_argument("epoch_batches: no samples");
  std::mt19937_64 rng = seeded(seed, {0x3u, static_cast<std::uint32_t>(epoch),
                                      static_cast<std::uint32_t>(stream)});
  std::vector<int> order;
  std::vector<std::vector<int>> out(steps);
  for (int s = 0; s < steps; ++s) {
    for (int k = 0; k < batch; ++k) {
      if (order.empty()) {
        order.resize(num_samples);
        for (int i = 0; i < num_samples; ++i) order[i] = num_samples - 1 - i;
        shuffle(order, rng);
      }
      out[s].push_back(order.back());
      order.pop_back();
    }
  }
  return out;
}

std::vector<int> retain_subset(int n, double frac, std::uint64_t seed) {
  if (!(frac > 0 && frac <= 1)) throw ConfigError("retain fraction must lie in (0, 1]");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  const int keep = std::max(1, static_cast<int>(std::lround(frac * n)));
  if (keep >= n) return idx;
  std::mt19937_64 rng = seeded(seed, {0x4u});
  shuffle(idx, rng);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Checkpoint train_universal(const TrainConfig& cfg, const std::vector<DomainSamples>& data,
                           const DomainRegistry& registry, std::ostream* log) {
  UniversalTrainer trainer(cfg, registry);
  std::vector<const DomainSamples*> ordered;
  std::size_t largest = 0;
  for (const auto& d : cfg.domains) {
    ordered.push_back(&find_samples(data, d));
    if (ordered.back()->samples.empty()) throw ConfigError("no training samples for '" + d + "'");
    largest = std::max(largest, ordered.back()->samples.size());
  }
  const int steps = steps_for(largest, cfg.batch_per_domain);
  write_line(log, {{"event", "config"}, {"regime", "universal"}, {"config", cfg.to_json()},
                   {"registry_hash", registry.hash()}});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    std::vector<std::vector<std::vector<int>>> plan;
    for (std::size_t k = 0; k < ordered.size(); ++k) {
      plan.push_back(epoch_batches(static_cast<int>(ordered[k]->samples.size()),
                                   cfg.batch_per_domain, steps, cfg.seed, epoch,
                                   static_cast<int>(k)));
    }
    std::mt19937_64 aug_rng = seeded(cfg.seed, {0x5u, static_cast<std::uint32_t>(epoch)});
    EpochMeter meter;
    for (int s = 0; s < steps; ++s) {
      std::vector<AugmentedSample> storage;
      storage.reserve(ordered.size() * static_cast<std::size_t>(cfg.batch_per_domain));
      std::vector<Batch> batches;
      for (std::size_t k = 0; k < ordered.size(); ++k) {
        batches.push_back(make_batch(*ordered[k], plan[k][s], cfg, registry, storage, aug_rng));
      }
      meter.add(trainer.step(batches, lr));
    }
    write_line(log, meter.line(epoch, lr));
  }
  return trainer.checkpoint(cfg.epochs);
}

Checkpoint dedicated_pretrain(const TrainConfig& cfg, const std::vector<DomainSamples>& data,
                              const DomainRegistry& registry, std::ostream* log) {
  TrainConfig c = cfg;
  c.scr_dataset = false;
  c.scr_image = false;
  if (c.aux_loss == AuxMode::kOff) {
    log_warning("dedicated pretraining without the auxiliary loss leaves MSE untrained");
  }
  Checkpoint out = train_universal(c, data, registry, log);
  out.metadata["regime"] = "dedicated-pretrain";
  return out;
}

Checkpoint dedicated_transfer(const Checkpoint& pretrained, const DomainSamples& source,
                              const DomainSamples& target, const TrainConfig& cfg,
                              const DomainRegistry& registry, double retain_frac,
                              std::ostream* log) {
  TransferTrainer trainer(pretrained, source.domain, target.domain, cfg, registry);
  if (source.samples.empty() || target.samples.empty()) {
    throw ConfigError("dedicated transfer needs source and target samples");
  }
  const std::vector<int> keep =
      retain_subset(static_cast<int>(target.samples.size()), retain_frac, cfg.seed);
  DomainSamples retained{target.domain, {}};
  for (int i : keep) retained.samples.push_back(target.samples[i]);

  const int steps = steps_for(retained.samples.size(), cfg.batch_per_domain);
  TrainConfig echo = cfg;
  echo.domains = {source.domain, target.domain};
  echo.net = pretrained.net();
  write_line(log, {{"event", "config"},
                   {"regime", "dedicated-transfer"},
                   {"config", echo.to_json()},
                   {"retain_frac", retain_frac},
                   {"retained", retained.samples.size()},
                   {"registry_hash", registry.hash()}});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    auto src_plan = epoch_batches(static_cast<int>(source.samples.size()), cfg.batch_per_domain,
                                  steps, cfg.seed, epoch, 0);
    auto tgt_plan = epoch_batches(static_cast<int>(retained.samples.size()),
                                  cfg.batch_per_domain, steps, cfg.seed, epoch, 1);
    std::mt19937_64 aug_rng = seeded(cfg.seed, {0x5u, static_cast<std::uint32_t>(epoch)});
    EpochMeter meter;
    for (int s = 0; s < steps; ++s) {
      std::vector<AugmentedSample> storage;
      storage.reserve(2 * static_cast<std::size_t>(cfg.batch_per_domain));
      Batch sb = make_batch(source, src_plan[s], cfg, registry, storage, aug_rng);
      Batch tb = make_batch(retained, tgt_plan[s], cfg, registry, storage, aug_rng);
      meter.add(trainer.step(sb, tb, lr));
    }
    write_line(log, meter.line(epoch, lr));
  }
  Checkpoint out = trainer.checkpoint(cfg.epochs);
  out.metadata["retain_frac"] = retain_frac;
  out.metadata["retained"] = retained.samples.size();
  return out;
}

}  // namespace sst
