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

#include "sst/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sst/checkpoint.hpp"
#include "sst/evalkit.hpp"
#include "sst/log.hpp"
#include "sst/synthgen.hpp"
#include "sst/trainer.hpp"

namespace sst {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

json read_json_file(const fs::path& p) {
  require_file(p, "config file");
  std::ifstream in(p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(p.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

// Flags shared by the training subcommands, each mirroring one TrainConfig field.
struct TrainFlags {
  std::string config_path;
  std::optional<double> alpha, beta, lambda, base_lr, lr_drop_factor;
  std::optional<int> epochs, lr_drop_epoch, batch, feature_dim;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy, sst, aux_loss, scr_dataset, scr_image;
  std::vector<std::string> domains;
  std::vector<int> widths;
  bool flip = false, scale_crop = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON training config file (flags override it)");
    app->add_option("--alpha", alpha, "segmentation loss weight [config: alpha]");
    app->add_option("--beta", beta, "auxiliary loss weight [config: beta]");
    app->add_option("--lambda", lambda, "SCR loss weight [config: lambda]");
    app->add_option("--epochs", epochs, "training epochs [config: epochs]");
    app->add_option("--lr", base_lr, "base learning rate [config: base_lr]");
    app->add_option("--lr-drop-epoch", lr_drop_epoch, "epoch of the learning-rate drop [config: lr_drop_epoch]");
    app->add_option("--lr-drop-factor", lr_drop_factor, "learning-rate drop factor [config: lr_drop_factor]");
    app->add_option("--batch", batch, "images per domain per step [config: batch_per_domain]");
    app->add_option("--seed", seed, "run seed [config: seed]");
    app->add_option("--strategy", strategy, "full|progressive domain pairing [config: strategy]")
        ->check(CLI::IsMember({"full", "progressive"}));
    app->add_option("--domains", domains, "domains, coarsest first [config: domains]")->delimiter(',');
    app->add_option("--sst", sst, "on|off: all SST components [config: aux_loss, scr_dataset, scr_image]")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--aux-loss", aux_loss, "off|unmasked|masked [config: aux_loss]")
        ->check(CLI::IsMember({"off", "unmasked", "masked"}));
    app->add_option("--scr-dataset", scr_dataset, "on|off [config: scr_dataset]")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--scr-image", scr_image, "on|off [config: scr_image]")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--feature-dim", feature_dim, "feature channels D [config: net.feature_dim]");
    app->add_option("--widths", widths, "5 encoder widths [config: net.widths]")->delimiter(',');
    app->add_flag("--flip", flip, "random horizontal flips [config: augment.flip]");
    app->add_flag("--scale-crop", scale_crop, "random rescale and crop [config: augment.scale_crop]");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_path.empty()) c = TrainConfig::from_json(read_json_file(config_path));
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (lambda) c.lambda = *lambda;
    if (epochs) {
      c.epochs = *epochs;
      c.lr_drop_epoch = 0;
    }
    if (base_lr) c.base_lr = *base_lr;
    if (lr_drop_epoch) c.lr_drop_epoch = *lr_drop_epoch;
    if (lr_drop_factor) c.lr_drop_factor = *lr_drop_factor;
    if (batch) c.batch_per_domain = *batch;
    if (seed) c.seed = *seed;
    if (strategy) c.strategy = parse_strategy(*strategy);
    if (!domains.empty()) c.domains = domains;
    if (sst) c.set_sst(*sst == "on");
    if (aux_loss) c.aux_loss = parse_aux_mode(*aux_loss);
    if (scr_dataset) c.scr_dataset = *scr_dataset == "on";
    if (scr_image) c.scr_image = *scr_image == "on";
    if (feature_dim) c.net.feature_dim = *feature_dim;
    if (!widths.empty()) {
      if (widths.size() != 5) throw ConfigError("--widths needs 5 values");
      for (int i = 0; i < 5; ++i) c.net.widths[i] = widths[i];
    }
    if (flip) c.augment.flip = true;
    if (scale_crop) c.augment.scale_crop = true;
    return c;
  }
};

struct DataSpec {
  std::string domain;  // empty: inferred
  fs::path dir;
};

DataSpec parse_data_spec(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return {"", s};
  return {s.substr(0, eq), s.substr(eq + 1)};
}

DatasetManifest open_dataset(const fs::path& dir) {
  require_file(dir / "manifest.json", "dataset manifest");
  return load_manifest(dir);
}

// Resolves --data arguments to one (domain, dataset) per configured domain.
// Accepted forms: DOMAIN=DIR; a single DIR carrying all domains; or one DIR
// per configured domain, in order.
std::vector<std::pair<std::string, DatasetManifest>> resolve_data(
    const std::vector<std::string>& args, std::vector<std::string>& domains,
    const DomainRegistry& registry) {
  if (args.empty()) throw UsageError("--data is required");
  std::vector<DataSpec> specs;
  for (const auto& a : args) specs.push_back(parse_data_spec(a));
  std::vector<std::pair<std::string, DatasetManifest>> out;
  const bool named = specs.front().domain.size() > 0;
  for (const auto& s : specs) {
    if ((s.domain.size() > 0) != named) throw UsageError("--data: mix of DOMAIN=DIR and DIR forms");
  }
  if (named) {
    for (const auto& s : specs) out.emplace_back(s.domain, open_dataset(s.dir));
    if (domains.empty()) {
      for (const auto& s : specs) domains.push_back(s.domain);
    }
  } else if (specs.size() == 1) {
    DatasetManifest m = open_dataset(specs[0].dir);
    if (domains.empty()) {
      domains = m.domains;
      std::stable_sort(domains.begin(), domains.end(), [&](const auto& a, const auto& b) {
        return registry.has_domain(a) && registry.has_domain(b) &&
               registry.domain(a).size() < registry.domain(b).size();
      });
    }
    for (const auto& d : domains) out.emplace_back(d, m);
  } else {
    if (domains.size() != specs.size()) {
      throw UsageError("--data: " + std::to_string(specs.size()) + " directories for " +
                       std::to_string(domains.size()) + " configured domains");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) out.emplace_back(domains[i], open_dataset(specs[i].dir));
  }
  for (const auto& [d, m] : out) {
    if (std::find(m.domains.begin(), m.domains.end(), d) == m.domains.end()) {
      throw UsageError("dataset " + m.root.string() + " has no labels for domain '" + d + "'");
    }
  }
  return out;
}

std::vector<DomainSamples> load_data(const std::vector<std::pair<std::string, DatasetManifest>>& data,
                                     const std::string& split) {
  std::vector<DomainSamples> out;
  for (const auto& [d, m] : data) out.push_back(load_split(m, d, split));
  return out;
}

DomainRegistry load_registry(const std::string& dir) {
  if (dir.empty()) return builtin_registry();
  require_file(dir, "registry directory");
  return DomainRegistry::load_directory(dir);
}

void save_run(const Checkpoint& ckpt, const fs::path& out_dir, const std::string& log_text,
              std::ostream& out) {
  save_checkpoint(ckpt, out_dir);
  std::ofstream(out_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc) << log_text;
  out << json{{"checkpoint", out_dir.string()}, {"log", (out_dir / "train_log.jsonl").string()}}.dump()
      << '\n';
}

Checkpoint load_ckpt(const fs::path& dir) {
  require_file(dir / "manifest.json", "checkpoint");
  return load_checkpoint(dir);
}

std::pair<int, int> parse_canvas(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("--canvas must look like HxW, got '" + s + "'");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto fail = [&err](const char* kind, const std::string& message, int code) {
    err << json{{"error", kind}, {"message", one_line(message)}}.dump() << '\n';
    return code;
  };

  CLI::App app{"Multi-domain human parsing toolkit", "sst"};
  app.require_subcommand(1);
  std::string registry_dir;
  app.add_option("--registry", registry_dir, "directory of *.domain.json/*.link.json (default: built-in)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out, canvas = "48x48";
  int gen_count = 0;
  std::uint64_t gen_seed = 0;
  double gen_split = 0.8;
  std::vector<std::string> gen_domains;
  gen->add_option("--out", gen_out, "output directory [generation: out_dir]")->required();
  gen->add_option("--count", gen_count, "number of samples [generation: count]")->required();
  gen->add_option("--seed", gen_seed, "generator seed [generation: seed]");
  gen->add_option("--canvas", canvas, "HxW, multiples of 16 [generation: height, width]");
  gen->add_option("--split", gen_split, "train fraction [generation: split]");
  gen->add_option("--domains", gen_domains, "label domains, fine first [generation: domains]")->delimiter(',');

  // training subcommands
  auto* uni = app.add_subcommand("train-universal", "one network for all domains");
  TrainFlags uni_flags;
  uni_flags.attach(uni);
  std::vector<std::string> uni_data;
  std::string uni_out;
  uni->add_option("--data", uni_data, "dataset dirs: DOMAIN=DIR, one DIR, or one DIR per domain")->required();
  uni->add_option("--out", uni_out, "checkpoint directory")->required();

  auto* pre = app.add_subcommand("pretrain", "dedicated step 1: source network with MSA/MSE");
  TrainFlags pre_flags;
  pre_flags.attach(pre);
  std::vector<std::string> pre_data;
  std::string pre_out;
  pre->add_option("--data", pre_data, "source dataset dirs (as for train-universal)")->required();
  pre->add_option("--out", pre_out, "checkpoint directory")->required();

  auto* ded = app.add_subcommand("train-dedicated", "dedicated step 2: transfer to a target domain");
  TrainFlags ded_flags;
  ded_flags.attach(ded);
  std::string ded_ckpt, ded_source, ded_target, ded_out;
  double retain = 1.0;
  ded->add_option("--pretrain-ckpt", ded_ckpt, "checkpoint from `pretrain`")->required();
  ded->add_option("--source", ded_source, "source dataset: DOMAIN=DIR or DIR")->required();
  ded->add_option("--target", ded_target, "target dataset: DOMAIN=DIR or DIR")->required();
  ded->add_option("--retain-frac", retain, "fraction of target training data kept (0,1]");
  ded->add_option("--out", ded_out, "checkpoint directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "metrics of one head on a dataset split");
  std::string ev_ckpt, ev_data, ev_domain, ev_split = "test", ev_out;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--domain", ev_domain, "label domain / head")->required();
  ev->add_option("--split", ev_split, "train|test");
  ev->add_option("--out", ev_out, "write the report here instead of stdout");

  // export
  auto* ex = app.add_subcommand("export", "strip auxiliary modules for inference");
  std::string ex_ckpt, ex_out;
  std::vector<std::string> ex_domains;
  ex->add_option("--ckpt", ex_ckpt, "checkpoint directory")->required();
  ex->add_option("--domains", ex_domains, "heads to keep")->required()->delimiter(',');
  ex->add_option("--out", ex_out, "output checkpoint directory")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "six-row component ablation");
  TrainFlags ab_flags;
  ab_flags.attach(ab);
  std::vector<std::string> ab_data;
  std::string ab_out;
  ab->add_option("--data", ab_data, "dataset dirs (as for train-universal)")->required();
  ab->add_option("--out", ab_out, "output directory (ablation.json, ablation.txt, logs)")->required();

  // render
  auto* rd = app.add_subcommand("render", "colourised prediction of one image");
  std::string rd_ckpt, rd_image, rd_domain, rd_out;
  rd->add_option("--ckpt", rd_ckpt, "checkpoint directory")->required();
  rd->add_option("--image", rd_image, "input PPM")->required();
  rd->add_option("--domain", rd_domain, "head to use")->required();
  rd->add_option("--out", rd_out, "output PPM")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitUsage);
  }

  try {
    const DomainRegistry registry = load_registry(registry_dir);

    if (gen->parsed()) {
      GenerationConfig cfg;
      cfg.out_dir = gen_out;
      cfg.count = gen_count;
      cfg.seed = gen_seed;
      std::tie(cfg.height, cfg.width) = parse_canvas(canvas);
      cfg.split = gen_split;
      if (!gen_domains.empty()) cfg.domains = gen_domains;
      if (cfg.count <= 0 || cfg.height % 16 || cfg.width % 16 || cfg.height < kMinCanvas ||
          cfg.width < kMinCanvas || cfg.split < 0 || cfg.split > 1) {
        throw UsageError("gen-data: need count > 0, canvas multiple of 16 and >= 32, split in [0,1]");
      }
      DatasetManifest m = generate_dataset(cfg, registry);
      out << json{{"dataset", gen_out}, {"samples", m.entries.size()}, {"config", m.config}}.dump() << '\n';
      return kExitOk;
    }

    if (uni->parsed() || pre->parsed() || ab->parsed()) {
      TrainFlags& flags = uni->parsed() ? uni_flags : pre->parsed() ? pre_flags : ab_flags;
      std::vector<std::string>& data_args = uni->parsed() ? uni_data : pre->parsed() ? pre_data : ab_data;
      TrainConfig cfg = flags.resolve();
      if (pre->parsed()) {
        cfg.scr_dataset = false;
        cfg.scr_image = false;
      }
      auto data = resolve_data(data_args, cfg.domains, registry);
      if (cfg.domains.size() < 2 && !pre->parsed() && cfg.any_scr()) {
        log_info("single domain: SCR terms disabled");
        cfg.scr_dataset = false;
        cfg.scr_image = false;
      }
      cfg.validate(&registry);
      const auto train = load_data(data, "train");
      if (ab->parsed()) {
        const auto test = load_data(data, "test");
        const auto rows = ablate(cfg, train, test, registry, (fs::path(ab_out) / "logs").string());
        json doc = {{"base_config", cfg.to_json()}, {"rows", ablation_json(rows)}};
        write_json_file(fs::path(ab_out) / "ablation.json", doc);
        const std::string table = ablation_table(rows);
        std::ofstream(fs::path(ab_out) / "ablation.txt") << table;
        out << table;
        return kExitOk;
      }
      std::ostringstream log;
      Checkpoint ckpt = uni->parsed() ? train_universal(cfg, train, registry, &log)
                                      : dedicated_pretrain(cfg, train, registry, &log);
      save_run(ckpt, uni->parsed() ? uni_out : pre_out, log.str(), out);
      return kExitOk;
    }

    if (ded->parsed()) {
      TrainConfig cfg = ded_flags.resolve();
      Checkpoint teacher = load_ckpt(ded_ckpt);
      DataSpec src = parse_data_spec(ded_source);
      DataSpec tgt = parse_data_spec(ded_target);
      DatasetManifest src_m = open_dataset(src.dir);
      DatasetManifest tgt_m = open_dataset(tgt.dir);
      if (src.domain.empty()) {
        const auto heads = teacher.head_domains();
        if (heads.size() != 1) throw UsageError("--source: name the domain as DOMAIN=DIR");
        src.domain = heads.front();
      }
      if (tgt.domain.empty()) {
        if (tgt_m.domains.size() != 1) throw UsageError("--target: name the domain as DOMAIN=DIR");
        tgt.domain = tgt_m.domains.front();
      }
      cfg.domains = {src.domain, tgt.domain};
      cfg.net = teacher.net();
      TrainConfig check = cfg;
      check.domains = {tgt.domain};
      check.scr_dataset = check.scr_image = false;
      check.validate(&registry);
      if (!(retain > 0 && retain <= 1)) throw UsageError("--retain-frac must lie in (0, 1]");
      std::ostringstream log;
      Checkpoint ckpt = dedicated_transfer(teacher, load_split(src_m, src.domain, "train"),
                                           load_split(tgt_m, tgt.domain, "train"), cfg, registry,
                                           retain, &log);
      save_run(ckpt, ded_out, log.str(), out);
      return kExitOk;
    }

    if (ev->parsed()) {
      Checkpoint ckpt = load_ckpt(ev_ckpt);
      DatasetManifest m = open_dataset(ev_data);
      const auto heads = ckpt.head_domains();
      if (std::find(heads.begin(), heads.end(), ev_domain) == heads.end()) {
        throw UsageError("checkpoint has no head for domain '" + ev_domain + "'");
      }
      MetricsReport r = evaluate(ckpt, load_split(m, ev_domain, ev_split),
                                 {{"dataset", m.config}, {"split", ev_split}});
      if (ev_out.empty()) {
        out << r.to_json().dump(2) << '\n';
      } else {
        write_json_file(ev_out, r.to_json());
        out << json{{"report", ev_out}, {"miou", r.miou}, {"mean_acc", r.mean_acc}}.dump() << '\n';
      }
      return kExitOk;
    }

    if (ex->parsed()) {
      Checkpoint ckpt = load_ckpt(ex_ckpt);
      const auto heads = ckpt.head_domains();
      for (const auto& d : ex_domains) {
        if (std::find(heads.begin(), heads.end(), d) == heads.end()) {
          throw UsageError("checkpoint has no head for domain '" + d + "'");
        }
      }
      Checkpoint stripped = export_inference(ckpt, ex_domains);
      save_checkpoint(stripped, ex_out);
      out << json{{"checkpoint", ex_out},
                  {"parameters", stripped.params.size()},
                  {"bytes", checkpoint_size(ex_out)},
                  {"source_bytes", checkpoint_size(ex_ckpt)}}
                 .dump()
          << '\n';
      return kExitOk;
    }

    if (rd->parsed()) {
      Checkpoint ckpt = load_ckpt(rd_ckpt);
      require_file(rd_image, "image");
      const auto heads = ckpt.head_domains();
      if (std::find(heads.begin(), heads.end(), rd_domain) == heads.end()) {
        throw UsageError("checkpoint has no head for domain '" + rd_domain + "'");
      }
      if (!registry.has_domain(rd_domain)) throw UsageError("unknown domain '" + rd_domain + "'");
      Image img = read_ppm(rd_image);
      const auto pred = predict_labels(ckpt, rd_domain, {&img});
      write_ppm(rd_out, render(pred.front(), registry.domain(rd_domain).palette()));
      out << json{{"render", rd_out}, {"domain", rd_domain}}.dump() << '\n';
      return kExitOk;
    }
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kExitUsage);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kExitUsage);
  } catch (const DomainError& e) {
    return fail("config", e.what(), kExitUsage);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), kExitRuntime);
  }
  return fail("usage", "no subcommand", kExitUsage);
}

}  // namespace sst
