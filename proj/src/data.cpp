#include "spm/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <stdexcept>

#include "spm/json_io.hpp"
#include "spm/png_io.hpp"
#include "spm/rng.hpp"

namespace spm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Vec2 {
  double x, y;
};

double length(Vec2 v) { return std::hypot(v.x, v.y); }

double sd_box(Vec2 p, double hx, double hy) {
  const double dx = std::abs(p.x) - hx;
  const double dy = std::abs(p.y) - hy;
  const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(dx, dy), 0.0);
}

// Equilateral triangle centred on its centroid; half_side is half the edge length.
double sd_triangle(Vec2 p, double half_side) {
  const double k = std::numbers::sqrt3;
  p.x = std::abs(p.x) - half_side;
  p.y = p.y + half_side / k;
  if (p.x + k * p.y > 0.0) p = {(p.x - k * p.y) / 2.0, (-k * p.x - p.y) / 2.0};
  p.x -= std::clamp(p.x, -2.0 * half_side, 0.0);
  return -length(p) * (p.y < 0.0 ? -1.0 : 1.0);
}

double shape_sdf(int cls, Vec2 p, double r) {
  switch (cls) {
    case 0: return length(p) - 0.85 * r;
    case 1: return sd_box(p, 0.72 * r, 0.72 * r);
    case 2: return sd_triangle(p, r * std::numbers::sqrt3 / 2.0);
    case 3: return std::min(sd_box(p, 0.95 * r, 0.3 * r), sd_box(p, 0.3 * r, 0.95 * r));
    default: throw std::out_of_range("shape_sdf: unknown class");
  }
}

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb o{0, 0, 0};
  if (hp < 1) o = {c, x, 0};
  else if (hp < 2) o = {x, c, 0};
  else if (hp < 3) o = {0, c, x};
  else if (hp < 4) o = {0, x, c};
  else if (hp < 5) o = {x, 0, c};
  else o = {c, 0, x};
  const double m = v - c;
  return {o.r + m, o.g + m, o.b + m};
}

struct Geometry {
  double cx, cy, radius, angle;
};

// Fixed number of uniforms per image so styling never perturbs other streams.
struct StyleDraws {
  double bg_h, bg_s, bg_v, fg_h, fg_s, fg_v;
  double stripe_angle, stripe_period, stripe_phase;
  double wobble_f1, wobble_f2, wobble_p1, wobble_p2;
  std::uint64_t noise_seed;
};

Image render(const DomainSpec& spec, int cls, const Geometry& geo, const StyleDraws& st) {
  constexpr int kSize = kCanonicalSize;
  constexpr int kSuper = 4;
  Rgb bg, fg;
  if (spec.palette == Palette::kPastel) {
    bg = hsv(st.bg_h + spec.hue_shift, 0.15 + 0.2 * st.bg_s, 0.85 + 0.15 * st.bg_v);
    fg = hsv(st.fg_h + spec.hue_shift, 0.5 + 0.4 * st.fg_s, 0.25 + 0.4 * st.fg_v);
  } else {
    const double b = 0.92 + 0.08 * st.bg_v;
    const double f = 0.3 * st.fg_v;
    bg = {b, b, b};
    fg = {f, f, f};
  }
  Rng noise(st.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double ca = std::cos(geo.angle), sa = std::sin(geo.angle);
  const double sc = std::cos(st.stripe_angle), ss = std::sin(st.stripe_angle);

  Image img(kSize, kSize, 3);
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      int hits = 0, interior = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper - geo.cx;
          const double py = y + (sy + 0.5) / kSuper - geo.cy;
          Vec2 q{ca * px + sa * py, -sa * px + ca * py};
          if (spec.stroke == Stroke::kOutline && spec.stroke_jitter > 0.0) {
            q.x += spec.stroke_jitter * std::sin(q.y * st.wobble_f1 + st.wobble_p1);
            q.y += spec.stroke_jitter * std::sin(q.x * st.wobble_f2 + st.wobble_p2);
          }
          const double d = shape_sdf(cls, q, geo.radius);
          const bool inside = spec.stroke == Stroke::kFilled ? d <= 0.0
                                                             : std::abs(d) <= 0.5 * spec.stroke_width;
          hits += inside ? 1 : 0;
          interior += !inside && d <= 0.0 ? 1 : 0;
        }
      }
      const double cover = (hits + spec.fill_opacity * interior) / (kSuper * kSuper);
      Rgb base = bg;
      if (spec.background == Background::kStripes) {
        const double t = (x * sc + y * ss) / st.stripe_period + st.stripe_phase;
        if (std::fmod(std::floor(t), 2.0) != 0.0) base = {bg.r * 0.8, bg.g * 0.8, bg.b * 0.8};
      }
      double tex = 0.0;
      if (spec.background == Background::kNoise) tex = 0.08 * gauss(noise);
      const double px[3] = {base.r + tex, base.g + tex, base.b + tex};
      const double fc[3] = {fg.r, fg.g, fg.b};
      for (int c = 0; c < 3; ++c) {
        double v = px[c] * (1.0 - cover) + fc[c] * cover;
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * gauss(noise);
        img.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace

std::string to_string(Background b) {
  switch (b) {
    case Background::kSolid: return "solid";
    case Background::kNoise: return "noise";
    case Background::kStripes: return "stripes";
  }
  return "solid";
}
std::string to_string(Palette p) { return p == Palette::kPastel ? "pastel" : "white"; }
std::string to_string(Stroke s) { return s == Stroke::kFilled ? "filled" : "outline"; }

Background background_from_string(const std::string& s) {
  if (s == "solid") return Background::kSolid;
  if (s == "noise") return Background::kNoise;
  if (s == "stripes") return Background::kStripes;
  throw std::invalid_argument("unknown background mode '" + s + "'");
}
Palette palette_from_string(const std::string& s) {
  if (s == "pastel") return Palette::kPastel;
  if (s == "white") return Palette::kWhite;
  throw std::invalid_argument("unknown palette '" + s + "'");
}
Stroke stroke_from_string(const std::string& s) {
  if (s == "filled") return Stroke::kFilled;
  if (s == "outline") return Stroke::kOutline;
  throw std::invalid_argument("unknown stroke '" + s + "'");
}

DomainSpec photo_like() { return DomainSpec{}; }

DomainSpec sketch_like() {
  DomainSpec d;
  d.name = "sketch";
  d.palette = Palette::kWhite;
  d.stroke = Stroke::kOutline;
  d.stroke_width = 1.6;
  d.stroke_jitter = 0.6;
  d.fill_opacity = 0.75;
  return d;
}

DomainSpec cartoon_like() {
  DomainSpec d;
  d.name = "cartoon";
  d.background = Background::kStripes;
  d.stroke = Stroke::kOutline;
  d.stroke_width = 3.0;
  return d;
}

DomainSpec texture_like() {
  DomainSpec d;
  d.name = "texture";
  d.background = Background::kNoise;
  d.hue_shift = 0.5;
  return d;
}

DomainSpec domain_by_name(const std::string& name) {
  std::string base = name;
  if (base.size() > 5 && base.ends_with("-like")) base.resize(base.size() - 5);
  if (base == "photo") return photo_like();
  if (base == "sketch") return sketch_like();
  if (base == "cartoon") return cartoon_like();
  if (base == "texture") return texture_like();
  throw std::invalid_argument("unknown domain '" + name + "' (expected photo, sketch, cartoon or texture)");
}

std::vector<int> LabeledDataset::histogram() const {
  std::vector<int> h(num_classes, 0);
  for (int l : labels) ++h.at(l);
  return h;
}

LabeledDataset gen_dataset(const DomainSpec& spec, std::size_t n, int c, std::uint64_t seed) {
  const int max_classes = static_cast<int>(class_names().size());
  if (c < 1 || c > max_classes) {
    throw std::invalid_argument("gen_dataset: class count must lie in [1, " + std::to_string(max_classes) + "]");
  }
  if (n < static_cast<std::size_t>(c)) {
    throw std::invalid_argument("gen_dataset: need at least one image per class (n=" + std::to_string(n) +
                                ", c=" + std::to_string(c) + ")");
  }
  if (!(spec.noise_sigma >= 0.0) || !(spec.stroke_width > 0.0) || !(spec.stroke_jitter >= 0.0) ||
      !(spec.fill_opacity >= 0.0 && spec.fill_opacity <= 1.0)) {
    throw std::invalid_argument("gen_dataset: invalid styling parameters for domain '" + spec.name + "'");
  }
  LabeledDataset ds;
  ds.domain = spec;
  ds.seed = seed;
  ds.num_classes = c;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % c);
  Rng label_rng(derive_seed({seed, tag(Stream::kLabels)}));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = std::uniform_int_distribution<std::size_t>(0, i)(label_rng);
    std::swap(ds.labels[i], ds.labels[j]);
  }

  ds.images.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng geo_rng(derive_seed({seed, tag(Stream::kGeometry), i}));
    Geometry geo;
    geo.cx = uniform(geo_rng, 12.0, 20.0);
    geo.cy = uniform(geo_rng, 12.0, 20.0);
    geo.radius = uniform(geo_rng, 7.0, 11.0);
    geo.angle = uniform(geo_rng, 0.0, 2.0 * std::numbers::pi);

    Rng style_rng(derive_seed({seed, tag(Stream::kStyle), i}));
    StyleDraws st;
    st.bg_h = uniform01(style_rng);
    st.bg_s = uniform01(style_rng);
    st.bg_v = uniform01(style_rng);
    // Keep foreground hue away from the background hue.
    st.fg_h = st.bg_h + uniform(style_rng, 0.25, 0.75);
    st.fg_s = uniform01(style_rng);
    st.fg_v = uniform01(style_rng);
    st.stripe_angle = uniform(style_rng, 0.0, std::numbers::pi);
    st.stripe_period = uniform(style_rng, 3.0, 6.0);
    st.stripe_phase = uniform01(style_rng);
    st.wobble_f1 = uniform(style_rng, 0.5, 1.2);
    st.wobble_f2 = uniform(style_rng, 0.5, 1.2);
    st.wobble_p1 = uniform(style_rng, 0.0, 2.0 * std::numbers::pi);
    st.wobble_p2 = uniform(style_rng, 0.0, 2.0 * std::numbers::pi);
    st.noise_seed = style_rng();

    ds.images[i] = render(spec, ds.labels[i], geo, st);
    // Store exactly what a PNG round trip would give back.
    for (float& v : ds.images[i].data) v = quantize8(v) / 255.0f;
  }
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::string& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw std::runtime_error("save_dataset: cannot create " + root + ": " + ec.message());
  json items = json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string& cls = class_names().at(ds.labels[i]);
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    const fs::path rel = fs::path(ds.domain.name) / cls / name;
    fs::create_directories(fs::path(root) / rel.parent_path(), ec);
    if (ec) throw std::runtime_error("save_dataset: cannot create directory: " + ec.message());
    write_png((fs::path(root) / rel).string(), ds.images[i]);
    items.push_back({{"file", rel.generic_string()},
                     {"label", ds.labels[i]},
                     {"domain", ds.domain.name},
                     {"seed", ds.seed}});
  }
  json manifest{{"format", "spm-dataset/1"},
                {"domain", domain_to_json(ds.domain)},
                {"seed", ds.seed},
                {"num_classes", ds.num_classes},
                {"class_names", std::vector<std::string>(class_names().begin(),
                                                         class_names().begin() + ds.num_classes)},
                {"items", items}};
  std::ofstream out(fs::path(root) / "manifest.json");
  if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + root);
  out << manifest.dump(2) << '\n';
}

LabeledDataset load_dataset(const std::string& root, std::vector<std::string>* warnings) {
  const fs::path manifest_path = fs::path(root) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("load_dataset: missing manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("load_dataset: corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  LabeledDataset ds;
  std::set<fs::path> listed;
  try {
    ds.domain = domain_from_json(manifest.at("domain"));
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.num_classes = manifest.at("num_classes").get<int>();
    for (const auto& item : manifest.at("items")) {
      const fs::path rel = item.at("file").get<std::string>();
      const int label = item.at("label").get<int>();
      if (label < 0 || label >= ds.num_classes) throw std::runtime_error("label out of range");
      listed.insert(rel.lexically_normal());
      ds.images.push_back(resize_to_canonical(read_png((fs::path(root) / rel).string())));
      ds.labels.push_back(label);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("load_dataset: malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const fs::path rel = fs::relative(entry.path(), root).lexically_normal();
    if (!listed.contains(rel)) {
      const std::string msg = "load_dataset: ignoring " + rel.generic_string() + " (not in manifest)";
      std::cerr << "warning: " << msg << '\n';
      if (warnings) warnings->push_back(msg);
    }
  }
  return ds;
}

}  // namespace spm
