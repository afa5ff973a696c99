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

#include "sst/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <queue>
#include <random>

namespace sst {
namespace {

using nlohmann::json;
using namespace synthetic;

// round(1024 * sin(5° * i)), i = 0..36.
constexpr std::array<int, 37> kSin5 = {
    0,    89,   178,  265,  350,  433,  512,  587,  658,  724,  784,  839, 887,
    928,  962,  989,  1008, 1020, 1024, 1020, 1008, 989,  962,  928,  887, 839,
    784,  724,  658,  587,  512,  433,  350,  265,  178,  89,   0};

int sin_deg(int deg) { return kSin5[deg / 5]; }
int cos_deg(int deg) { return deg <= 90 ? kSin5[(90 - deg) / 5] : -kSin5[(deg - 90) / 5]; }

int fixed_mul(int length, int q10) {
  const int mag = (std::abs(length * q10) + 512) / 1024;
  return (length * q10) < 0 ? -mag : mag;
}

class FigureRng {
 public:
  explicit FigureRng(std::uint64_t seed) : gen_(seed) {}
  int uniform(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  int angle(int lo, int hi) { return 5 * uniform(lo / 5, hi / 5); }
  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

bool in_capsule(int px, int py, Point a, Point b, int r) {
  const std::int64_t abx = b.x - a.x, aby = b.y - a.y;
  const std::int64_t apx = px - a.x, apy = py - a.y;
  const std::int64_t len2 = abx * abx + aby * aby;
  const std::int64_t t = apx * abx + apy * aby;
  const std::int64_t r2 = static_cast<std::int64_t>(r) * r;
  if (len2 == 0 || t <= 0) return apx * apx + apy * apy <= r2;
  if (t >= len2) {
    const std::int64_t bx = px - b.x, by = py - b.y;
    return bx * bx + by * by <= r2;
  }
  // squared distance to the line times len2, compared exactly
  return (apx * apx + apy * apy) * len2 - t * t <= r2 * len2;
}

bool in_circle(int px, int py, Point c, int r) {
  const int dx = px - c.x, dy = py - c.y;
  return dx * dx + dy * dy <= r * r;
}

template <typename Pred>
void paint(LabelMap& lm, std::uint8_t label, Pred pred) {
  for (int y = 0; y < lm.height; ++y) {
    for (int x = 0; x < lm.width; ++x) {
      if (pred(x, y)) lm.at(y, x) = label;
    }
  }
}

bool single_component(const LabelMap& lm) {
  std::vector<char> seen(lm.data.size(), 0);
  int components = 0;
  for (int y0 = 0; y0 < lm.height; ++y0) {
    for (int x0 = 0; x0 < lm.width; ++x0) {
      const std::size_t i0 = static_cast<std::size_t>(y0) * lm.width + x0;
      if (lm.data[i0] == kBackground || seen[i0]) continue;
      if (++components > 1) return false;
      std::queue<Point> q;
      q.push({x0, y0});
      seen[i0] = 1;
      while (!q.empty()) {
        auto p = q.front();
        q.pop();
        const std::array<Point, 4> nb{{{p.x + 1, p.y}, {p.x - 1, p.y}, {p.x, p.y + 1}, {p.x, p.y - 1}}};
        for (auto n : nb) {
          if (n.x < 0 || n.y < 0 || n.x >= lm.width || n.y >= lm.height) continue;
          const std::size_t i = static_cast<std::size_t>(n.y) * lm.width + n.x;
          if (lm.data[i] == kBackground || seen[i]) continue;
          seen[i] = 1;
          q.push(n);
        }
      }
    }
  }
  return components == 1;
}

bool joints_inside(const FigureSkeleton& f) {
  for (const auto& [name, p] : f.joints()) {
    if (p.x < 2 || p.y < 2 || p.x > f.width - 3 || p.y > f.height - 3) return false;
  }
  return true;
}

FigureSkeleton draw_pose(FigureRng& rng, int height, int width) {
  const int size = std::min(height, width);
  const int ox = (width - size) / 2, oy = (height - size) / 2;
  // Layout is designed on a 48-unit square and scaled to the canvas.
  auto sc = [&](int v) { return v * size / 48; };
  auto pt = [&](int x, int y) { return Point{ox + sc(x), oy + sc(y)}; };
  auto radius = [&](int v) { return std::max(1, sc(v)); };

  FigureSkeleton f;
  f.height = height;
  f.width = width;

  const int cx = 24 + rng.uniform(-2, 2);
  const int hy = rng.uniform(10, 11);
  const int hr = rng.uniform(5, 6);
  const int tw = rng.uniform(5, 6);
  const int neck_y = hy + hr + 1;
  const int pelvis_y = neck_y + 11 + rng.uniform(0, 1);

  f.head = pt(cx, hy);
  f.head_radius = radius(hr);
  f.neck = pt(cx, neck_y);
  f.pelvis = pt(cx, pelvis_y);
  f.torso_half_width = radius(tw);

  // Arms: upper arm 40..70° from vertical, forearm bends further out by 0..30°.
  auto arm = [&](int side, Point& shoulder, Point& elbow, Point& wrist) {
    const int sx = cx + side * (tw - 1), sy = neck_y + 2;
    const int a1 = rng.angle(40, 70);
    const int a2 = std::min(100, a1 + rng.angle(0, 30));
    const int ex = sx + side * fixed_mul(8, sin_deg(a1)), ey = sy + fixed_mul(8, cos_deg(a1));
    const int wx = ex + side * fixed_mul(7, sin_deg(a2)), wy = ey + fixed_mul(7, cos_deg(a2));
    shoulder = pt(sx, sy);
    elbow = pt(ex, ey);
    wrist = pt(wx, wy);
  };
  arm(-1, f.left_shoulder, f.left_elbow, f.left_wrist);
  arm(+1, f.right_shoulder, f.right_elbow, f.right_wrist);

  // Legs: thigh 10..20° outward, shin within ±5° of the thigh.
  auto leg = [&](int side, Point& hip, Point& knee, Point& ankle, Point& toe) {
    const int hx = cx + side * 3, hpy = pelvis_y;
    const int b1 = rng.angle(10, 20);
    const int b2 = b1 + rng.angle(-5, 5);
    const int kx = hx + side * fixed_mul(7, sin_deg(b1)), ky = hpy + fixed_mul(7, cos_deg(b1));
    const int ax = kx + side * fixed_mul(7, sin_deg(b2)), ay = ky + fixed_mul(7, cos_deg(b2));
    hip = pt(hx, hpy);
    knee = pt(kx, ky);
    ankle = pt(ax, ay);
    toe = pt(ax + side * 3, ay);
  };
  leg(-1, f.left_hip, f.left_knee, f.left_ankle, f.left_toe);
  leg(+1, f.right_hip, f.right_knee, f.right_ankle, f.right_toe);

  f.arm_radius = radius(2);
  f.leg_radius = radius(3);
  f.shoe_radius = radius(2);
  f.hat = rng.uniform(0, 1) == 1;
  f.hair_length = rng.uniform(0, 1);
  f.noise_seed = rng.raw();
  return f;
}

}  // namespace

std::vector<std::pair<std::string, Point>> FigureSkeleton::joints() const {
  return {{"head", head},
          {"neck", neck},
          {"pelvis", pelvis},
          {"left_shoulder", left_shoulder},
          {"right_shoulder", right_shoulder},
          {"left_elbow", left_elbow},
          {"right_elbow", right_elbow},
          {"left_wrist", left_wrist},
          {"right_wrist", right_wrist},
          {"left_hip", left_hip},
          {"right_hip", right_hip},
          {"left_knee", left_knee},
          {"right_knee", right_knee},
          {"left_ankle", left_ankle},
          {"right_ankle", right_ankle},
          {"left_toe", left_toe},
          {"right_toe", right_toe}};
}

LabelMap render_fine_labels(const FigureSkeleton& f) {
  LabelMap lm(f.height, f.width, kBackground);
  const int u = std::max(1, std::min(f.height, f.width) / 48);

  // legs
  paint(lm, kLeftLeg, [&](int x, int y) {
    return in_capsule(x, y, f.left_hip, f.left_knee, f.leg_radius) ||
           in_capsule(x, y, f.left_knee, f.left_ankle, f.leg_radius);
  });
  paint(lm, kRightLeg, [&](int x, int y) {
    return in_capsule(x, y, f.right_hip, f.right_knee, f.leg_radius) ||
           in_capsule(x, y, f.right_knee, f.right_ankle, f.leg_radius);
  });
  paint(lm, kShoes, [&](int x, int y) {
    return in_capsule(x, y, f.left_ankle, f.left_toe, f.shoe_radius) ||
           in_capsule(x, y, f.right_ankle, f.right_toe, f.shoe_radius);
  });

  // torso, including a neck up to the head centre
  paint(lm, kTorso, [&](int x, int y) {
    const bool body = y >= f.neck.y && y <= f.pelvis.y && std::abs(x - f.neck.x) <= f.torso_half_width;
    const bool neck = y >= f.head.y && y < f.neck.y && std::abs(x - f.neck.x) <= 2 * u;
    return body || neck;
  });

  // arms
  paint(lm, kLeftLowerArm,
        [&](int x, int y) { return in_capsule(x, y, f.left_elbow, f.left_wrist, f.arm_radius); });
  paint(lm, kRightLowerArm,
        [&](int x, int y) { return in_capsule(x, y, f.right_elbow, f.right_wrist, f.arm_radius); });
  paint(lm, kLeftUpperArm, [&](int x, int y) {
    return in_capsule(x, y, f.left_shoulder, f.left_elbow, f.arm_radius);
  });
  paint(lm, kRightUpperArm, [&](int x, int y) {
    return in_capsule(x, y, f.right_shoulder, f.right_elbow, f.arm_radius);
  });

  // head, hair, hat
  const Point h = f.head;
  const int r = f.head_radius;
  paint(lm, kFace, [&](int x, int y) { return in_circle(x, y, h, r); });
  paint(lm, kHair, [&](int x, int y) {
    const bool cap = in_circle(x, y, h, r + u) && y <= h.y - r / 2;
    if (f.hair_length == 0) return cap;
    const bool sides = in_circle(x, y, h, r + u) && std::abs(x - h.x) >= r - u;
    const bool strands = y >= h.y && y <= f.neck.y && std::abs(std::abs(x - h.x) - r) <= u;
    return cap || sides || strands;
  });
  if (f.hat) {
    paint(lm, kHat, [&](int x, int y) {
      const bool crown = y >= h.y - r - 2 * u && y <= h.y - r + u && std::abs(x - h.x) <= r - u;
      const bool brim = y == h.y - r + u && std::abs(x - h.x) <= r + 2 * u;
      return crown || brim;
    });
  }
  return lm;
}

FigureSkeleton sample_figure(std::uint64_t seed, int height, int width) {
  if (height < kMinCanvas || width < kMinCanvas) {
    throw SynthError("canvas " + std::to_string(height) + "x" + std::to_string(width) +
                     " is too small; both sides must be >= " + std::to_string(kMinCanvas));
  }
  FigureRng rng(seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    FigureSkeleton f = draw_pose(rng, height, width);
    if (joints_inside(f) && single_component(render_fine_labels(f))) return f;
  }
  throw SynthError("could not place a connected figure on the canvas");
}

SegSample rasterize(const FigureSkeleton& figure, const DomainRegistry& registry,
                    const std::vector<std::string>& domain_ids) {
  if (domain_ids.empty()) throw SynthError("rasterize: empty domain list");
  const LabelDomain& root = registry.domain(domain_ids.front());
  if (root.size() != kFineCount) {
    throw SynthError("rasterize: root domain '" + root.id() + "' is not the " +
                     std::to_string(kFineCount) + "-label fine domain");
  }
  SegSample s;
  s.domain_ids = domain_ids;
  LabelMap fine = render_fine_labels(figure);
  for (std::size_t i = 1; i < domain_ids.size(); ++i) {
    auto map = registry.coarsening(root.id(), domain_ids[i]);
    if (!map) {
      throw SynthError("rasterize: no coarsening chain from '" + root.id() + "' to '" +
                       domain_ids[i] + "'");
    }
    s.labels[domain_ids[i]] = coarsen_labels(fine, *map);
  }

  s.image = Image(figure.height, figure.width);
  std::mt19937_64 noise(figure.noise_seed);
  for (int y = 0; y < figure.height; ++y) {
    for (int x = 0; x < figure.width; ++x) {
      const Rgb& c = root.palette()[fine.at(y, x)];
      std::uint8_t* px = s.image.pixel(y, x);
      for (int k = 0; k < 3; ++k) {
        const int v = static_cast<int>(c[k]) + static_cast<int>(noise() % 33) - 16;
        px[k] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  s.labels[root.id()] = std::move(fine);
  return s;
}

json GenerationConfig::to_json() const {
  return json{{"count", count},   {"seed", seed},   {"canvas", {height, width}},
              {"split", split},   {"domains", domains}};
}

int train_count(int count, double split) {
  return static_cast<int>(std::llround(static_cast<double>(count) * split));
}

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

json DatasetManifest::to_json() const {
  json samples = json::array();
  for (const auto& e : entries) {
    samples.push_back(json{{"id", e.id}, {"image", e.image}, {"labels", e.labels}, {"split", e.split}});
  }
  return json{{"format", "sst-dataset-v1"}, {"config", config}, {"domains", domains},
              {"samples", samples}};
}

DatasetManifest generate_dataset(const GenerationConfig& cfg, const DomainRegistry& registry) {
  namespace fs = std::filesystem;
  if (cfg.count <= 0) throw SynthError("count must be positive, got " + std::to_string(cfg.count));
  if (!(cfg.split >= 0.0 && cfg.split <= 1.0)) throw SynthError("split must lie in [0, 1]");
  if (cfg.height % 16 != 0 || cfg.width % 16 != 0) {
    throw SynthError("canvas sides must be divisible by 16");
  }
  std::error_code ec;
  fs::create_directories(cfg.out_dir / "images", ec);
  for (const auto& d : cfg.domains) fs::create_directories(cfg.out_dir / "labels" / d, ec);
  if (ec || !fs::is_directory(cfg.out_dir / "images")) {
    throw SynthError("cannot create output directory " + cfg.out_dir.string());
  }

  DatasetManifest m;
  m.root = cfg.out_dir;
  m.config = cfg.to_json();
  m.domains = cfg.domains;
  const int n_train = train_count(cfg.count, cfg.split);
  for (int i = 0; i < cfg.count; ++i) {
    const auto fig = sample_figure(cfg.seed ^ static_cast<std::uint64_t>(i), cfg.height, cfg.width);
    const SegSample s = rasterize(fig, registry, cfg.domains);
    char id[16];
    std::snprintf(id, sizeof(id), "%06d", i);
    ManifestEntry e;
    e.id = id;
    e.image = "images/" + e.id + ".ppm";
    write_ppm(cfg.out_dir / e.image, s.image);
    for (const auto& d : cfg.domains) {
      e.labels[d] = "labels/" + d + "/" + e.id + ".pgm";
      write_pgm(cfg.out_dir / e.labels[d], s.labels.at(d));
    }
    e.split = i < n_train ? "train" : "test";
    m.entries.push_back(std::move(e));
  }
  std::ofstream out(cfg.out_dir / "manifest.json");
  if (!out) throw SynthError("cannot write manifest in " + cfg.out_dir.string());
  out << m.to_json().dump(2) << '\n';
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw SynthError("no manifest.json in " + dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SynthError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = dir;
  m.config = j.value("config", json::object());
  m.domains = j.at("domains").get<std::vector<std::string>>();
  for (const auto& s : j.at("samples")) {
    ManifestEntry e;
    e.id = s.at("id").get<std::string>();
    e.image = s.at("image").get<std::string>();
    e.labels = s.at("labels").get<std::map<std::string, std::string>>();
    e.split = s.at("split").get<std::string>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

LoadedSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                         const std::string& domain) {
  auto it = entry.labels.find(domain);
  if (it == entry.labels.end()) {
    throw SynthError("sample " + entry.id + " carries no labels for domain '" + domain + "'");
  }
  LoadedSample s{read_ppm(manifest.root / entry.image), read_pgm(manifest.root / it->second)};
  if (s.labels.height != s.image.height || s.labels.width != s.image.width) {
    throw SynthError("sample " + entry.id + ": label raster size differs from image size");
  }
  return s;
}

}  // namespace sst
