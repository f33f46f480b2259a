#include "spm/augment.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace spm {

namespace {

int perfect_square_side(int nu) {
  if (nu < 1) return -1;
  int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(nu))));
  return side * side == nu ? side : -1;
}

int checked_grid_side(int nu, const char* where) {
  const int side = perfect_square_side(nu);
  if (side < 0) {
    throw std::invalid_argument(std::string(where) + ": patch count " +
                                std::to_string(nu) +
                                " is not a positive perfect square");
  }
  if (kCanonicalSize % side != 0) {
    throw std::invalid_argument(std::string(where) + ": grid side " +
                                std::to_string(side) + " does not divide " +
                                std::to_string(kCanonicalSize));
  }
  return side;
}

// Cross-fade weight of the tile covering [c0, c1) at pixel centre t. Interior
// boundaries ramp linearly over [B - e, B + e]; image borders stay at 1.
double ramp_weight(double t, int c0, int c1, double e, int extent) {
  double left = 1.0;
  double right = 1.0;
  if (c0 > 0) left = std::clamp((t - (c0 - e)) / (2.0 * e), 0.0, 1.0);
  if (c1 < extent) right = std::clamp(((c1 + e) - t) / (2.0 * e), 0.0, 1.0);
  return std::min(left, right);
}

}  // namespace

void SpmParams::validate() const {
  if (nu_options.empty()) throw std::invalid_argument("SpmParams: nu_options is empty");
  for (int nu : nu_options) checked_grid_side(nu, "SpmParams");
  if (!(a_start > 0.0) || !(a_end > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("SpmParams: Beta shapes must be positive");
  }
  if (a_end > a_start) throw std::invalid_argument("SpmParams: a_end must not exceed a_start");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("SpmParams: rho must lie in [0, 1]");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw std::invalid_argument("SpmParams: overlap_fraction must lie in [0, 1)");
  }
}

double sample_lambda(double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::domain_error("sample_lambda: Beta shapes must be positive and finite");
  }
  const double x = std::gamma_distribution<double>(a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(b, 1.0)(rng);
  if (x + y <= 0.0) {
    // Both gamma draws underflowed (tiny shapes); the limit is Bernoulli(a / (a + b)).
    return uniform01(rng) < a / (a + b) ? 1.0 : 0.0;
  }
  return std::clamp(x / (x + y), 0.0, 1.0);
}

double schedule_a(int epoch, int total_epochs, double a_start, double a_end) {
  if (total_epochs < 1) throw std::invalid_argument("schedule_a: total_epochs must be >= 1");
  if (epoch < 0 || epoch > total_epochs) {
    throw std::out_of_range("schedule_a: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(total_epochs) + "]");
  }
  return schedule_a_at(static_cast<double>(epoch) / total_epochs, a_start, a_end);
}

double schedule_a_at(double progress, double a_start, double a_end) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw std::out_of_range("schedule_a_at: progress outside [0, 1]");
  }
  if (progress == 0.0) return a_start;
  if (progress == 1.0) return a_end;
  return a_start + (a_end - a_start) * progress;
}

PatchLayout patch_layout(const Image& img, int nu) {
  require_canonical(img, "patch_layout");
  const int side = checked_grid_side(nu, "patch_layout");
  PatchLayout layout;
  layout.grid_side = side;
  layout.patch_h = img.height / side;
  layout.patch_w = img.width / side;
  layout.permutation.resize(nu);
  std::iota(layout.permutation.begin(), layout.permutation.end(), 0);
  return layout;
}

PatchPartition partition_patches(const Image& img, int nu) {
  PatchPartition out;
  out.layout = patch_layout(img, nu);
  const int side = out.layout.grid_side;
  out.tiles.reserve(nu);
  for (int ty = 0; ty < side; ++ty) {
    for (int tx = 0; tx < side; ++tx) {
      Image tile(out.layout.patch_h, out.layout.patch_w, img.channels);
      for (int y = 0; y < out.layout.patch_h; ++y)
        for (int x = 0; x < out.layout.patch_w; ++x)
          for (int c = 0; c < img.channels; ++c)
            tile.at(y, x, c) = img.at(ty * out.layout.patch_h + y, tx * out.layout.patch_w + x, c);
      out.tiles.push_back(std::move(tile));
    }
  }
  return out;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = std::uniform_int_distribution<int>(0, i)(rng);
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

double blend_half_band(int patch_side, double overlap_fraction) {
  return 0.5 * overlap_fraction * patch_side;
}

Image shuffle_patches(const Image& img, const PatchLayout& layout, bool blend,
                      double overlap_fraction) {
  const int g = layout.grid_side;
  const int ph = layout.patch_h;
  const int pw = layout.patch_w;
  const int nc = img.channels;
  if (g * ph != img.height || g * pw != img.width ||
      static_cast<int>(layout.permutation.size()) != g * g) {
    throw std::invalid_argument("shuffle_patches: layout does not match image");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw std::invalid_argument("shuffle_patches: overlap_fraction must lie in [0, 1)");
  }
  const double ey = blend ? blend_half_band(ph, overlap_fraction) : 0.0;
  const double ex = blend ? blend_half_band(pw, overlap_fraction) : 0.0;

  Image out(img.height, img.width, nc);
  if (ey <= 0.0 && ex <= 0.0) {
    for (int p = 0; p < g * g; ++p) {
      const int src = layout.permutation[p];
      const int dy0 = (p / g) * ph, dx0 = (p % g) * pw;
      const int sy0 = (src / g) * ph, sx0 = (src % g) * pw;
      for (int y = 0; y < ph; ++y) {
        std::copy_n(img.data.data() + img.index(sy0 + y, sx0, 0), pw * nc,
                    out.data.data() + out.index(dy0 + y, dx0, 0));
      }
    }
    return out;
  }

  // Tiles contributing to each row and column, with their ramp weights. The
  // band is narrower than half a tile, so at most two tiles overlap per axis.
  struct Contributions {
    int count = 0;
    int tile[2];
    double weight[2];
  };
  auto axis = [g](int extent, int side, double e) {
    std::vector<Contributions> per(extent);
    for (int t = 0; t < g; ++t) {
      for (int i = 0; i < extent; ++i) {
        const double w = e > 0.0 ? ramp_weight(i + 0.5, t * side, (t + 1) * side, e, extent)
                                 : (i >= t * side && i < (t + 1) * side ? 1.0 : 0.0);
        if (w <= 0.0) continue;
        auto& c = per[i];
        c.tile[c.count] = t;
        c.weight[c.count] = w;
        ++c.count;
      }
    }
    return per;
  };
  const auto rows = axis(img.height, ph, ey);
  const auto cols = axis(img.width, pw, ex);

  float* dst = out.data.data();
  std::vector<double> acc(nc);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double wsum = 0.0;
      std::fill(acc.begin(), acc.end(), 0.0);
      const auto& ry = rows[y];
      const auto& rx = cols[x];
      if (ry.count == 1 && rx.count == 1) {
        // A lone tile normalises to weight 1: plain copy.
        const int src = layout.permutation[ry.tile[0] * g + rx.tile[0]];
        const int sy = std::clamp(y + (src / g - ry.tile[0]) * ph, 0, img.height - 1);
        const int sx = std::clamp(x + (src % g - rx.tile[0]) * pw, 0, img.width - 1);
        const float* s = img.data.data() + img.index(sy, sx, 0);
        for (int c = 0; c < nc; ++c) *dst++ = s[c];
        continue;
      }
      for (int i = 0; i < ry.count; ++i) {
        for (int j = 0; j < rx.count; ++j) {
          const int p = ry.tile[i] * g + rx.tile[j];
          const int src = layout.permutation[p];
          const int sy = std::clamp(y + (src / g - ry.tile[i]) * ph, 0, img.height - 1);
          const int sx = std::clamp(x + (src % g - rx.tile[j]) * pw, 0, img.width - 1);
          const double w = ry.weight[i] * rx.weight[j];
          wsum += w;
          const float* s = img.data.data() + img.index(sy, sx, 0);
          for (int c = 0; c < nc; ++c) acc[c] += w * s[c];
        }
      }
      for (int c = 0; c < nc; ++c) *dst++ = static_cast<float>(acc[c] / wsum);
    }
  }
  out.clamp01();
  return out;
}

Image spm_mix(const Image& img, int nu, double lambda, Rng& rng, bool blend,
              double overlap_fraction) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("spm_mix: lambda must lie in [0, 1]");
  }
  PatchLayout layout = patch_layout(img, nu);
  layout.permutation = random_permutation(nu, rng);
  Image out = shuffle_patches(img, layout, blend, overlap_fraction);
  for (std::size_t i = 0; i < img.size(); ++i) {
    out.data[i] = static_cast<float>(lambda * img.data[i] + (1.0 - lambda) * out.data[i]);
  }
  out.clamp01();
  return out;
}

int draw_nu(const SpmParams& params, Rng& rng) {
  const auto i = std::uniform_int_distribution<std::size_t>(0, params.nu_options.size() - 1)(rng);
  return params.nu_options[i];
}

SpmDecision draw_spm_decision(const SpmParams& params, double progress, Rng& rng,
                              std::optional<int> fixed_nu) {
  SpmDecision d;
  d.apply = bernoulli(rng, params.rho);
  const int drawn_nu = draw_nu(params, rng);
  d.nu = fixed_nu.value_or(drawn_nu);
  d.a = schedule_a_at(progress, params.a_start, params.a_end);
  d.lambda = sample_lambda(d.a, params.b, rng);
  return d;
}

Image hflip(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

Image crop_shifted(const Image& img, int dy, int dx) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y) {
    const int sy = std::clamp(y + dy, 0, img.height - 1);
    for (int x = 0; x < img.width; ++x) {
      const int sx = std::clamp(x + dx, 0, img.width - 1);
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Image weak_augment(const Image& img, Rng& rng) {
  constexpr int kPad = 2;
  std::uniform_int_distribution<int> shift(-kPad, kPad);
  const int dy = shift(rng);
  const int dx = shift(rng);
  const bool flip = bernoulli(rng, 0.5);
  Image out = crop_shifted(img, dy, dx);
  return flip ? hflip(out) : out;
}

namespace {

// Bilinear resample; with `mirror` set, output columns are written right to
// left, which equals hflip() of the unmirrored result.
Image resample_box_impl(const Image& src, double y0, double x0, double h, double w, int out_h,
                        int out_w, bool mirror) {
  struct Tap {
    int lo, hi;
    double f;
  };
  auto taps = [](double start, double len, int n, int extent) {
    std::vector<Tap> t(n);
    for (int i = 0; i < n; ++i) {
      const double s = std::clamp(start + (i + 0.5) * len / n - 0.5, 0.0, extent - 1.0);
      const int lo = static_cast<int>(s);
      t[i] = {lo, std::min(lo + 1, extent - 1), s - lo};
    }
    return t;
  };
  const auto ty = taps(y0, h, out_h, src.height);
  auto tx = taps(x0, w, out_w, src.width);
  if (mirror) std::reverse(tx.begin(), tx.end());
  const int nc = src.channels;
  Image out(out_h, out_w, nc);
  float* dst = out.data.data();
  for (const Tap& ry : ty) {
    const float* row_lo = src.data.data() + src.index(ry.lo, 0, 0);
    const float* row_hi = src.data.data() + src.index(ry.hi, 0, 0);
    for (const Tap& rx : tx) {
      for (int c = 0; c < nc; ++c) {
        const double top = (1 - rx.f) * row_lo[rx.lo * nc + c] + rx.f * row_lo[rx.hi * nc + c];
        const double bot = (1 - rx.f) * row_hi[rx.lo * nc + c] + rx.f * row_hi[rx.hi * nc + c];
        *dst++ = static_cast<float>((1 - ry.f) * top + ry.f * bot);
      }
    }
  }
  return out;
}

}  // namespace

Image resample_box(const Image& src, double y0, double x0, double h, double w,
                   int out_h, int out_w) {
  return resample_box_impl(src, y0, x0, h, w, out_h, out_w, false);
}

Image standard_strong(const Image& img, Rng& rng) {
  const double H = img.height, W = img.width;
  double ch = H, cw = W, cy = 0.0, cx = 0.0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = uniform(rng, 0.2, 1.0) * H * W;
    const double ratio = std::exp(uniform(rng, std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
    const double w = std::sqrt(area * ratio);
    const double h = std::sqrt(area / ratio);
    if (w <= W && h <= H) {
      ch = h;
      cw = w;
      cy = uniform(rng, 0.0, H - h);
      cx = uniform(rng, 0.0, W - w);
      break;
    }
  }
  const bool flip = bernoulli(rng, 0.5);
  Image out = resample_box_impl(img, cy, cx, ch, cw, img.height, img.width, flip);

  const double brightness = uniform(rng, 0.6, 1.4);
  const double contrast = uniform(rng, 0.6, 1.4);
  const bool gray = bernoulli(rng, 0.2);

  double mean = 0.0;
  for (float& v : out.data) {
    v = static_cast<float>(std::clamp(v * brightness, 0.0, 1.0));
    mean += v;
  }
  mean /= static_cast<double>(out.size());
  for (float& v : out.data) {
    v = static_cast<float>(std::clamp((v - mean) * contrast + mean, 0.0, 1.0));
  }
  if (gray && out.channels == 3) {
    for (std::size_t i = 0; i < out.size(); i += 3) {
      const float m = (out.data[i] + out.data[i + 1] + out.data[i + 2]) / 3.0f;
      out.data[i] = out.data[i + 1] = out.data[i + 2] = m;
    }
  }
  return out;
}

Image strong_augment_with(const Image& img, const SpmDecision& decision,
                          const SpmParams& params, std::uint64_t spm_seed,
                          std::uint64_t pipeline_seed) {
  Rng pipeline_rng(pipeline_seed);
  if (!decision.apply) return standard_strong(img, pipeline_rng);
  Rng spm_rng(spm_seed);
  const Image mixed = spm_mix(img, decision.nu, decision.lambda, spm_rng, params.blend,
                              params.overlap_fraction);
  return standard_strong(mixed, pipeline_rng);
}

StrongView strong_augment(const Image& img, const SpmParams& params, double progress,
                          Rng& rng, std::optional<int> fixed_nu) {
  params.validate();
  const std::uint64_t spm_seed = rng();
  const std::uint64_t pipeline_seed = rng();
  StrongView view;
  view.decision = draw_spm_decision(params, progress, rng, fixed_nu);
  view.image = strong_augment_with(img, view.decision, params, spm_seed, pipeline_seed);
  return view;
}

}  // namespace spm
