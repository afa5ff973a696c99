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

#include "sst/parsenet.hpp"

#include <cmath>
#include <stdexcept>

#include "sst/log.hpp"

namespace sst {
namespace {

void add_conv(ParamStore& store, const std::string& name, int kernel, int cin, int cout,
              std::mt19937_64& rng) {
  const int fan_in = kernel * kernel * cin;
  store.add(name + ".w", "core", he_normal({fan_in, cout}, fan_in, rng));
  store.add(name + ".b", "core", Tensor({cout}, 0.0f));
}

Var conv(Binder& p, Var x, const std::string& name, int kernel, int stride) {
  return ops::conv2d(x, p(name + ".w"), p(name + ".b"), kernel, stride, kernel / 2);
}

Var conv_relu(Binder& p, Var x, const std::string& name, int kernel, int stride) {
  return ops::relu(conv(p, x, name, kernel, stride));
}

}  // namespace

nlohmann::json NetConfig::to_json() const {
  return {{"feature_dim", feature_dim}, {"widths", widths}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
  NetConfig cfg;
  if (j.contains("feature_dim")) cfg.feature_dim = j.at("feature_dim").get<int>();
  if (j.contains("widths")) {
    const auto w = j.at("widths").get<std::vector<int>>();
    if (w.size() != cfg.widths.size()) {
      throw std::invalid_argument("net.widths must have 5 entries, got " + std::to_string(w.size()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) cfg.widths[i] = w[i];
  }
  cfg.validate();
  return cfg;
}

void NetConfig::validate() const {
  if (feature_dim <= 0) throw std::invalid_argument("net.feature_dim must be positive");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("net.widths entries must be positive");
  }
}

const Var& PyramidVars::scale(int l) const {
  switch (l) {
    case 1: return h1;
    case 2: return h2;
    case 3: return h3;
    default: throw std::out_of_range("pyramid scale must be 1, 2 or 3, got " + std::to_string(l));
  }
}

int scale_factor(int l) {
  switch (l) {
    case 1: return 16;
    case 2: return 8;
    case 3: return 4;
    default: throw std::out_of_range("pyramid scale must be 1, 2 or 3, got " + std::to_string(l));
  }
}

std::string head_weight_name(const std::string& domain) { return "head." + domain + ".w"; }
std::string head_bias_name(const std::string& domain) { return "head." + domain + ".b"; }
std::string head_tag(const std::string& domain) { return "head:" + domain; }

void init_core_params(ParamStore& store, const NetConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto& w = cfg.widths;
  const int d = cfg.feature_dim;
  add_conv(store, "core.enc0", 3, 3, w[0], rng);
  add_conv(store, "core.enc1", 3, w[0], w[1], rng);
  add_conv(store, "core.enc2", 3, w[1], w[2], rng);
  add_conv(store, "core.enc3", 3, w[2], w[3], rng);
  add_conv(store, "core.enc4", 3, w[3], w[4], rng);
  add_conv(store, "core.dec1", 1, w[4], d, rng);
  add_conv(store, "core.lat3", 1, w[3], d, rng);
  add_conv(store, "core.dec2", 3, d, d, rng);
  add_conv(store, "core.lat2", 1, w[2], d, rng);
  add_conv(store, "core.dec3", 3, d, d, rng);
  add_conv(store, "core.lat1", 1, w[1], d, rng);
  add_conv(store, "core.dec4", 1, d, d, rng);
  add_conv(store, "core.lat0", 1, w[0], d, rng);
  add_conv(store, "core.dec5", 1, d, d, rng);
}

void init_head_params(ParamStore& store, const std::string& domain, int num_classes,
                      int feature_dim, std::mt19937_64& rng) {
  const float stddev = 1.0f / std::sqrt(static_cast<float>(feature_dim));
  store.add(head_weight_name(domain), head_tag(domain),
            random_normal({feature_dim, num_classes}, stddev, rng));
  store.add(head_bias_name(domain), head_tag(domain), Tensor({num_classes}, 0.0f));
}

Tensor image_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("image_batch: no images");
  const int h = images.front()->height, w = images.front()->width;
  Tensor out({static_cast<int>(images.size()), h, w, 3});
  float* dst = out.data();
  for (const Image* img : images) {
    if (img->height != h || img->width != w) {
      throw ShapeError("image_batch: mixed image sizes " + std::to_string(h) + "x" +
                       std::to_string(w) + " and " + std::to_string(img->height) + "x" +
                       std::to_string(img->width));
    }
    for (std::uint8_t v : img->rgb) *dst++ = static_cast<float>(v) / 255.0f;
  }
  return out;
}

void check_input_size(int height, int width) {
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0) {
    throw ShapeError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not a positive multiple of 16");
  }
}

PyramidVars forward(Binder& p, Var images, const NetConfig& cfg) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[3] != 3) {
    throw ShapeError("forward: expected images [N,H,W,3], got " + shape_str(s));
  }
  check_input_size(s[1], s[2]);

  Var e0 = conv_relu(p, images, "core.enc0", 3, 1);
  Var e1 = conv_relu(p, e0, "core.enc1", 3, 2);
  Var e2 = conv_relu(p, e1, "core.enc2", 3, 2);
  Var e3 = conv_relu(p, e2, "core.enc3", 3, 2);
  Var e4 = conv_relu(p, e3, "core.enc4", 3, 2);

  PyramidVars out;
  out.h1 = conv_relu(p, e4, "core.dec1", 1, 1);
  out.h2 = conv_relu(p, ops::add(ops::upsample2x(out.h1), conv(p, e3, "core.lat3", 1, 1)),
                     "core.dec2", 3, 1);
  out.h3 = conv_relu(p, ops::add(ops::upsample2x(out.h2), conv(p, e2, "core.lat2", 1, 1)),
                     "core.dec3", 3, 1);
  Var g = conv_relu(p, ops::add(ops::upsample2x(out.h3), conv(p, e1, "core.lat1", 1, 1)),
                    "core.dec4", 1, 1);
  out.f = conv_relu(p, ops::add(ops::upsample2x(g), conv(p, e0, "core.lat0", 1, 1)),
                    "core.dec5", 1, 1);
  if (out.f.shape()[3] != cfg.feature_dim) {
    throw ShapeError("forward: parameters give D=" + std::to_string(out.f.shape()[3]) +
                     ", config says D=" + std::to_string(cfg.feature_dim));
  }
  return out;
}

FeaturePyramid forward(const Tensor& image, ParamStore& params, const NetConfig& cfg) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("forward: expected image [H,W,3], got " + shape_str(image.shape()));
  }
  check_input_size(image.dim(0), image.dim(1));
  Graph g;
  Binder b(g, params, false);
  Shape batched{1, image.dim(0), image.dim(1), 3};
  PyramidVars pv = forward(b, g.constant(image.reshaped(batched)), cfg);
  auto drop = [](const Var& v) {
    const Shape& s = v.shape();
    return v.value().reshaped({s[1], s[2], s[3]});
  };
  return {drop(pv.h1), drop(pv.h2), drop(pv.h3), drop(pv.f)};
}

Var predict(Var features, Var weight, Var bias) {
  const Shape& fs = features.shape();
  const Shape& ws = weight.shape();
  if (fs.size() != 2 || ws.size() != 2 || fs[1] != ws[0]) {
    throw ShapeError("predict: features " + shape_str(fs) + " do not match head weight " +
                     shape_str(ws));
  }
  return ops::add_row(ops::matmul(features, weight), bias);
}

Var predict(Binder& params, Var features, const std::string& domain) {
  return predict(features, params(head_weight_name(domain)), params(head_bias_name(domain)));
}

Tensor predict(const Tensor& features, const Tensor& weight, const Tensor& bias) {
  if (features.rank() != 3) {
    throw ShapeError("predict: expected features [H,W,D], got " + shape_str(features.shape()));
  }
  const int h = features.dim(0), w = features.dim(1), d = features.dim(2);
  Graph g;
  Var out = predict(g.constant(features.reshaped({h * w, d})), g.constant(weight),
                    g.constant(bias));
  return out.value().reshaped({h, w, out.shape()[1]});
}

Var seg_loss(Var logits, const std::vector<const LabelMap*>& labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2) throw ShapeError("seg_loss: expected logits [P,Z], got " + shape_str(s));
  const int z = s[1];
  std::vector<std::uint8_t> flat;
  flat.reserve(static_cast<std::size_t>(s[0]));
  bool any = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const LabelMap& m = *labels[i];
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        const std::uint8_t v = m.at(y, x);
        if (v == kIgnoreLabel) {
          flat.push_back(v);
          continue;
        }
        if (v >= z) {
          throw DomainError("label " + std::to_string(v) + " >= Z=" + std::to_string(z) +
                            " in image " + std::to_string(i) + " at (y=" + std::to_string(y) +
                            ", x=" + std::to_string(x) + ")");
        }
        any = true;
        flat.push_back(v);
      }
    }
  }
  if (flat.size() != static_cast<std::size_t>(s[0])) {
    throw ShapeError("seg_loss: " + std::to_string(flat.size()) + " labels for " +
                     std::to_string(s[0]) + " logit rows");
  }
  if (!any) log_warning("segmentation loss: every pixel carries the ignore label; loss is 0");
  return ops::cross_entropy(logits, flat, kIgnoreLabel);
}

float seg_loss(const Tensor& logits, const LabelMap& labels) {
  if (logits.rank() != 3 || logits.dim(0) != labels.height || logits.dim(1) != labels.width) {
    throw ShapeError("seg_loss: logits " + shape_str(logits.shape()) + " vs labels " +
                     std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  Graph g;
  const int p = logits.dim(0) * logits.dim(1);
  Var loss = seg_loss(g.constant(logits.reshaped({p, logits.dim(2)})), {&labels});
  return loss.value()[0];
}

}  // namespace sst
