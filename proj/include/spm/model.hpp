#pragma once

// Desk-scale encoder/classifier used for both the live and the momentum model:
//
//   input 3x32x32
//   -> 3 x [conv 3x3 stride 2 pad 1 -> GroupNorm -> ReLU]   (16/32/64 channels)
//   -> global average pool -> feature (64)
//   -> linear classifier (C logits, softmax)
//   -> linear projection (32, L2-normalised) for the contrastive branch
//
// Activations are Eigen column-major matrices with one column per spatial
// position (channels contiguous), columns ordered (sample, y, x). An image's
// HWC buffer is therefore already a valid (3 x H*W) activation block.
//
// Parameter tensors, in order:
//   conv{i}.weight [Cout, 3, 3, Cin]   conv{i}.bias [Cout]
//   gn{i}.weight [Cout]                gn{i}.bias [Cout]        (i = 1..3)
//   fc.weight [C, F]    fc.bias [C]    proj.weight [P, F]    proj.bias [P]

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spm/image.hpp"
#include "spm/losses.hpp"
#include "spm/param_set.hpp"
#include "spm/rng.hpp"

namespace spm {

struct ArchConfig {
  std::array<int, 3> channels{16, 32, 64};
  int groups = 4;
  int num_classes = 4;
  int proj_dim = 32;
  int image_size = kCanonicalSize;
  double gn_eps = 1e-5;

  int feature_dim() const { return channels[2]; }

  void validate() const {
    for (int c : channels) {
      if (c <= 0 || groups <= 0 || c % groups != 0) {
        throw std::invalid_argument("ArchConfig: channel counts must be positive multiples of groups");
      }
    }
    if (num_classes < 1 || proj_dim < 1 || image_size < 8) {
      throw std::invalid_argument("ArchConfig: invalid class count, projection size or image size");
    }
  }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using RowMajorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

namespace model_index {
inline constexpr std::size_t conv_weight(int l) { return 4 * l; }
inline constexpr std::size_t conv_bias(int l) { return 4 * l + 1; }
inline constexpr std::size_t gn_weight(int l) { return 4 * l + 2; }
inline constexpr std::size_t gn_bias(int l) { return 4 * l + 3; }
inline constexpr std::size_t fc_weight = 12;
inline constexpr std::size_t fc_bias = 13;
inline constexpr std::size_t proj_weight = 14;
inline constexpr std::size_t proj_bias = 15;
}  // namespace model_index

/// Kaiming-uniform (fan-in) weights, zero biases, unit GroupNorm scales.
template <class T>
ParamSet<T> init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed({seed, tag(Stream::kInit)}));
  ParamSet<T> p;
  auto kaiming = [&](NamedTensor<T>& t, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (T& v : t.data) v = static_cast<T>(u(rng));
  };
  int cin = 3;
  for (int l = 0; l < 3; ++l) {
    const int cout = arch.channels[l];
    const std::string n = std::to_string(l + 1);
    kaiming(p.add("conv" + n + ".weight", {cout, 3, 3, cin}), 9 * cin);
    p.add("conv" + n + ".bias", {cout});
    p.add("gn" + n + ".weight", {cout}, T(1));
    p.add("gn" + n + ".bias", {cout});
    cin = cout;
  }
  kaiming(p.add("fc.weight", {arch.num_classes, arch.feature_dim()}), arch.feature_dim());
  p.add("fc.bias", {arch.num_classes});
  kaiming(p.add("proj.weight", {arch.proj_dim, arch.feature_dim()}), arch.feature_dim());
  p.add("proj.bias", {arch.proj_dim});
  return p;
}

template <class T>
struct ConvCache {
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  Matrix<T> cols;          ///< (9 * in_c) x (B * out_h * out_w)
  Matrix<T> xhat;          ///< normalised conv output
  std::vector<T> inv_std;  ///< one per (sample, group)
  Matrix<T> out;           ///< post-ReLU activation
};

/// Forward results plus everything backward() needs. Per-sample vectors are
/// columns, so each *_span() is a row-major (B x width) buffer.
template <class T>
struct ForwardPass {
  int batch = 0;
  std::array<ConvCache<T>, 3> conv;
  Matrix<T> features;    ///< F x B, pooled encoder output before normalisation
  Matrix<T> logits;      ///< C x B
  Matrix<T> probs;       ///< C x B
  Matrix<T> proj_raw;    ///< P x B
  std::vector<T> proj_norm;
  Matrix<T> projection;  ///< P x B, unit columns

  std::span<const T> probs_span() const { return {probs.data(), static_cast<std::size_t>(probs.size())}; }
  std::span<const T> projection_span() const {
    return {projection.data(), static_cast<std::size_t>(projection.size())};
  }
  std::span<const T> features_span() const {
    return {features.data(), static_cast<std::size_t>(features.size())};
  }
  int predicted(int b) const {
    Eigen::Index idx = 0;
    probs.col(b).maxCoeff(&idx);
    return static_cast<int>(idx);
  }
};

namespace detail {

// Offset of each 3x3 tap of a stride-2, pad-1 window into one image's HWC
// buffer, or -1 for padding. Identical for every image in the batch.
inline std::vector<std::ptrdiff_t> tap_offsets(int h, int w, int cin, int oh, int ow) {
  std::vector<std::ptrdiff_t> off(static_cast<std::size_t>(oh) * ow * 9);
  std::size_t i = 0;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = 2 * oy - 1 + ky;
          const int ix = 2 * ox - 1 + kx;
          off[i++] = (iy < 0 || iy >= h || ix < 0 || ix >= w)
                         ? -1
                         : (static_cast<std::ptrdiff_t>(iy) * w + ix) * cin;
        }
  return off;
}

template <class T>
void im2col_s2(const Matrix<T>& in, int batch, int h, int w, int cin, int oh, int ow,
               Matrix<T>& cols) {
  const int k = 9 * cin;
  const auto off = tap_offsets(h, w, cin, oh, ow);
  const std::size_t taps = off.size();
  cols.resize(k, static_cast<Eigen::Index>(batch) * oh * ow);
  auto gather = [&](auto channels) {
    const int nc = channels();
    T* dst = cols.data();
    for (int b = 0; b < batch; ++b) {
      const T* img = in.data() + static_cast<std::size_t>(b) * h * w * cin;
      for (std::size_t t = 0; t < taps; ++t, dst += nc) {
        if (off[t] < 0) {
          for (int ch = 0; ch < nc; ++ch) dst[ch] = T(0);
        } else {
          for (int ch = 0; ch < nc; ++ch) dst[ch] = img[off[t] + ch];
        }
      }
    }
  };
  // The RGB input layer gets a fixed-width copy the compiler can unroll.
  if (cin == 3) {
    gather([] { return 3; });
  } else {
    gather([cin] { return cin; });
  }
}

template <class T>
void col2im_s2(const Matrix<T>& dcols, int batch, int h, int w, int cin, int oh, int ow,
               Matrix<T>& din) {
  const auto off = tap_offsets(h, w, cin, oh, ow);
  const std::size_t taps = off.size();
  din.setZero(cin, static_cast<Eigen::Index>(batch) * h * w);
  const T* src = dcols.data();
  for (int b = 0; b < batch; ++b) {
    T* img = din.data() + static_cast<std::size_t>(b) * h * w * cin;
    for (std::size_t t = 0; t < taps; ++t, src += cin) {
      if (off[t] < 0) continue;
      T* d = img + off[t];
      for (int ch = 0; ch < cin; ++ch) d[ch] += src[ch];
    }
  }
}

template <class T>
void conv_block_forward(const ArchConfig& arch, const ParamSet<T>& p, int layer,
                        const Matrix<T>& in, int batch, int h, int w, int cin,
                        ConvCache<T>& c) {
  using namespace model_index;
  const int cout = arch.channels[layer];
  c.in_h = h;
  c.in_w = w;
  c.in_c = cin;
  c.out_h = (h + 1) / 2;
  c.out_w = (w + 1) / 2;
  c.out_c = cout;
  const int k = 9 * cin;
  im2col_s2(in, batch, h, w, cin, c.out_h, c.out_w, c.cols);

  ConstRowMajorMap<T> weight(p[conv_weight(layer)].data.data(), cout, k);
  ConstVectorMap<T> bias(p[conv_bias(layer)].data.data(), cout);
  ConstVectorMap<T> gamma(p[gn_weight(layer)].data.data(), cout);
  ConstVectorMap<T> beta(p[gn_bias(layer)].data.data(), cout);

  Matrix<T> z;
  z.noalias() = weight * c.cols;
  z.colwise() += bias;

  const int hw = c.out_h * c.out_w;
  const int cpg = cout / arch.groups;
  const T eps = static_cast<T>(arch.gn_eps);
  const T count = static_cast<T>(cpg * hw);
  c.xhat.resize(cout, z.cols());
  c.out.resize(cout, z.cols());
  c.inv_std.resize(static_cast<std::size_t>(batch) * arch.groups);
  Vector<T> row(cout), shift(cout), scale(cout);
  for (int b = 0; b < batch; ++b) {
    auto blk = z.middleCols(static_cast<Eigen::Index>(b) * hw, hw);
    auto xh = c.xhat.middleCols(static_cast<Eigen::Index>(b) * hw, hw);
    row = blk.rowwise().sum();
    for (int g = 0; g < arch.groups; ++g) shift.segment(g * cpg, cpg).setConstant(row.segment(g * cpg, cpg).sum() / count);
    xh = blk.colwise() - shift;
    row = xh.array().square().rowwise().sum().matrix();
    for (int g = 0; g < arch.groups; ++g) {
      const T inv = T(1) / std::sqrt(row.segment(g * cpg, cpg).sum() / count + eps);
      c.inv_std[static_cast<std::size_t>(b) * arch.groups + g] = inv;
      scale.segment(g * cpg, cpg).setConstant(inv);
    }
    xh = (xh.array().colwise() * scale.array()).matrix();
    c.out.middleCols(static_cast<Eigen::Index>(b) * hw, hw) =
        ((xh.array().colwise() * gamma.array()).colwise() + beta.array()).max(T(0)).matrix();
  }
}

template <class T>
void conv_block_backward(const ArchConfig& arch, const ParamSet<T>& p, ParamSet<T>& grads,
                         int layer, const ConvCache<T>& c, int batch, const Matrix<T>& dout,
                         Matrix<T>* din) {
  using namespace model_index;
  const int cout = c.out_c;
  const int k = 9 * c.in_c;
  ConstVectorMap<T> gamma(p[gn_weight(layer)].data.data(), cout);

  const int hw = c.out_h * c.out_w;
  const int cpg = cout / arch.groups;
  const T count = static_cast<T>(cpg * hw);
  VectorMap<T> dgamma(grads[gn_weight(layer)].data.data(), cout);
  VectorMap<T> dbeta(grads[gn_bias(layer)].data.data(), cout);
  dgamma.setZero();
  dbeta.setZero();
  Matrix<T> dz(cout, dout.cols());
  Vector<T> s1(cout), s2(cout), m1(cout), m2(cout), scale(cout);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(b) * hw;
    auto blk = dz.middleCols(c0, hw);
    const auto xh = c.xhat.middleCols(c0, hw);
    // ReLU mask, then the per-channel sums shared by the affine and norm gradients.
    blk = (c.out.middleCols(c0, hw).array() > T(0)).select(dout.middleCols(c0, hw).array(), T(0)).matrix();
    s1 = blk.rowwise().sum();
    s2 = (blk.array() * xh.array()).rowwise().sum().matrix();
    dgamma += s2;
    dbeta += s1;
    s1 = s1.cwiseProduct(gamma);
    s2 = s2.cwiseProduct(gamma);
    for (int g = 0; g < arch.groups; ++g) {
      m1.segment(g * cpg, cpg).setConstant(s1.segment(g * cpg, cpg).sum() / count);
      m2.segment(g * cpg, cpg).setConstant(s2.segment(g * cpg, cpg).sum() / count);
      scale.segment(g * cpg, cpg).setConstant(c.inv_std[static_cast<std::size_t>(b) * arch.groups + g]);
    }
    blk = ((((blk.array().colwise() * gamma.array()).colwise() - m1.array()) -
            xh.array().colwise() * m2.array()).colwise() * scale.array()).matrix();
  }

  VectorMap<T>(grads[conv_bias(layer)].data.data(), cout) = dz.rowwise().sum();
  RowMajorMap<T>(grads[conv_weight(layer)].data.data(), cout, k).noalias() = dz * c.cols.transpose();
  if (din) {
    ConstRowMajorMap<T> weight(p[conv_weight(layer)].data.data(), cout, k);
    Matrix<T> dcols;
    dcols.noalias() = weight.transpose() * dz;
    col2im_s2(dcols, batch, c.in_h, c.in_w, c.in_c, c.out_h, c.out_w, *din);
  }
}

}  // namespace detail

template <class T>
ForwardPass<T> forward(const ArchConfig& arch, const ParamSet<T>& p, std::span<const Image> images) {
  using namespace model_index;
  const int s = arch.image_size;
  for (const Image& img : images) {
    if (img.height != s || img.width != s || img.channels != 3) {
      throw std::invalid_argument("forward: expected " + std::to_string(s) + "x" + std::to_string(s) +
                                  "x3 inputs, got " + std::to_string(img.height) + "x" +
                                  std::to_string(img.width) + "x" + std::to_string(img.channels));
    }
  }
  ForwardPass<T> fp;
  fp.batch = static_cast<int>(images.size());
  const int batch = fp.batch;
  const std::size_t per_image = static_cast<std::size_t>(s) * s * 3;
  Matrix<T> input(3, static_cast<Eigen::Index>(batch) * s * s);
  for (int b = 0; b < batch; ++b) {
    T* dst = input.data() + b * per_image;
    for (std::size_t i = 0; i < per_image; ++i) dst[i] = static_cast<T>(images[b].data[i]);
  }
  detail::conv_block_forward(arch, p, 0, input, batch, s, s, 3, fp.conv[0]);
  for (int l = 1; l < 3; ++l) {
    const auto& prev = fp.conv[l - 1];
    detail::conv_block_forward(arch, p, l, prev.out, batch, prev.out_h, prev.out_w, prev.out_c, fp.conv[l]);
  }

  const auto& last = fp.conv[2];
  const int hw = last.out_h * last.out_w;
  const int f = arch.feature_dim();
  fp.features.resize(f, batch);
  for (int b = 0; b < batch; ++b) {
    fp.features.col(b) = last.out.middleCols(static_cast<Eigen::Index>(b) * hw, hw).rowwise().mean();
  }

  ConstRowMajorMap<T> wfc(p[fc_weight].data.data(), arch.num_classes, f);
  ConstVectorMap<T> bfc(p[fc_bias].data.data(), arch.num_classes);
  fp.logits.noalias() = wfc * fp.features;
  fp.logits.colwise() += bfc;
  fp.probs.resize(arch.num_classes, batch);
  for (int b = 0; b < batch; ++b) {
    const T mx = fp.logits.col(b).maxCoeff();
    fp.probs.col(b) = (fp.logits.col(b).array() - mx).exp().matrix();
    fp.probs.col(b) /= fp.probs.col(b).sum();
  }

  ConstRowMajorMap<T> wp(p[proj_weight].data.data(), arch.proj_dim, f);
  ConstVectorMap<T> bp(p[proj_bias].data.data(), arch.proj_dim);
  fp.proj_raw.noalias() = wp * fp.features;
  fp.proj_raw.colwise() += bp;
  fp.proj_norm.resize(batch);
  fp.projection.resize(arch.proj_dim, batch);
  for (int b = 0; b < batch; ++b) {
    const T n = std::max(fp.proj_raw.col(b).norm(), static_cast<T>(1e-12));
    fp.proj_norm[b] = n;
    fp.projection.col(b) = fp.proj_raw.col(b) / n;
  }
  return fp;
}

/// Back-propagates upstream gradients w.r.t. the softmax probabilities
/// (C x B, may be empty) and the normalised projection (P x B, may be empty).
template <class T>
ParamSet<T> backward(const ArchConfig& arch, const ParamSet<T>& p, const ForwardPass<T>& fp,
                     const Matrix<T>& dprobs, const Matrix<T>& dprojection) {
  using namespace model_index;
  const int batch = fp.batch;
  const int f = arch.feature_dim();
  ParamSet<T> g = p.zeros_like();
  Matrix<T> dfeat = Matrix<T>::Zero(f, batch);

  if (dprobs.size() > 0) {
    Matrix<T> dlogits(arch.num_classes, batch);
    for (int b = 0; b < batch; ++b) {
      const T dot = fp.probs.col(b).dot(dprobs.col(b));
      dlogits.col(b) = (fp.probs.col(b).array() * (dprobs.col(b).array() - dot)).matrix();
    }
    RowMajorMap<T>(g[fc_weight].data.data(), arch.num_classes, f).noalias() = dlogits * fp.features.transpose();
    VectorMap<T>(g[fc_bias].data.data(), arch.num_classes) = dlogits.rowwise().sum();
    ConstRowMajorMap<T> wfc(p[fc_weight].data.data(), arch.num_classes, f);
    dfeat.noalias() += wfc.transpose() * dlogits;
  }
  if (dprojection.size() > 0) {
    Matrix<T> draw(arch.proj_dim, batch);
    for (int b = 0; b < batch; ++b) {
      const auto z = fp.projection.col(b);
      const T dot = z.dot(dprojection.col(b));
      draw.col(b) = (dprojection.col(b) - z * dot) / fp.proj_norm[b];
    }
    RowMajorMap<T>(g[proj_weight].data.data(), arch.proj_dim, f).noalias() = draw * fp.features.transpose();
    VectorMap<T>(g[proj_bias].data.data(), arch.proj_dim) = draw.rowwise().sum();
    ConstRowMajorMap<T> wp(p[proj_weight].data.data(), arch.proj_dim, f);
    dfeat.noalias() += wp.transpose() * draw;
  }

  const auto& last = fp.conv[2];
  const int hw = last.out_h * last.out_w;
  Matrix<T> dout(f, static_cast<Eigen::Index>(batch) * hw);
  for (int b = 0; b < batch; ++b) {
    dout.middleCols(static_cast<Eigen::Index>(b) * hw, hw).colwise() = dfeat.col(b) / static_cast<T>(hw);
  }
  Matrix<T> din;
  for (int l = 2; l >= 0; --l) {
    detail::conv_block_backward(arch, p, g, l, fp.conv[l], batch, dout, l > 0 ? &din : nullptr);
    if (l > 0) std::swap(dout, din);
  }
  return g;
}

/// Everything the adaptation objective needs besides the images themselves.
template <class T>
struct LossSpec {
  std::vector<int> pseudo_labels;
  std::vector<double> weights;
  std::vector<T> keys;       ///< B x P, positives from the momentum model
  std::vector<T> negatives;  ///< M x P, queued keys
  std::vector<int> negative_labels;
  double temperature = 0.07;
  bool use_ce = true;
  bool use_div = true;
  bool use_ctr = true;
};

template <class T>
struct Objective {
  LossBreakdown losses;
  ParamSet<T> grads;
  ForwardPass<T> pass;
};

/// Forward pass, loss terms and (optionally) exact gradients of l_total.
template <class T>
Objective<T> loss_and_grad(const ArchConfig& arch, const ParamSet<T>& p,
                           std::span<const Image> images, const LossSpec<T>& spec,
                           bool with_grad = true) {
  Objective<T> out;
  out.pass = forward(arch, p, images);
  const auto& fp = out.pass;
  const std::size_t c = arch.num_classes;
  const std::size_t dim = arch.proj_dim;
  auto probs = fp.probs_span();

  Matrix<T> dprobs;
  Matrix<T> dproj;
  if (with_grad) {
    dprobs = Matrix<T>::Zero(arch.num_classes, fp.batch);
    dproj = Matrix<T>::Zero(arch.proj_dim, fp.batch);
  }
  std::span<T> dprobs_span(dprobs.data(), static_cast<std::size_t>(dprobs.size()));
  std::span<T> dproj_span(dproj.data(), static_cast<std::size_t>(dproj.size()));

  double l_ce = 0.0, l_div = 0.0, l_ctr = 0.0;
  if (spec.use_ce) {
    l_ce = weighted_ce<T>(probs, c, spec.pseudo_labels, spec.weights);
    if (with_grad) weighted_ce_grad<T>(probs, c, spec.pseudo_labels, spec.weights, dprobs_span);
  }
  if (spec.use_div) {
    l_div = diversity_loss<T>(probs, c);
    if (with_grad) diversity_grad<T>(probs, c, dprobs_span);
  }
  if (spec.use_ctr) {
    ContrastiveBatch<T> cb;
    cb.queries = fp.projection_span();
    cb.keys = spec.keys;
    cb.negatives = spec.negatives;
    cb.dim = dim;
    cb.query_labels = spec.pseudo_labels;
    cb.negative_labels = spec.negative_labels;
    cb.temperature = spec.temperature;
    l_ctr = contrastive_loss<T>(cb, with_grad ? dproj_span : std::span<T>{});
  }
  out.losses = total_loss(l_ce, l_ctr, l_div);
  if (with_grad) {
    out.grads = backward(arch, p, fp, spec.use_ce || spec.use_div ? dprobs : Matrix<T>(),
                         spec.use_ctr ? dproj : Matrix<T>());
  }
  return out;
}

/// theta <- theta - lr * grad. Non-finite gradients abort the update.
template <class T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, double lr) {
  require_congruent(params, grads, "sgd_step");
  for (std::size_t t = 0; t < grads.size(); ++t) {
    for (T v : grads[t].data) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw std::runtime_error("sgd_step: non-finite gradient in tensor " + grads[t].name);
      }
    }
  }
  const T step = static_cast<T>(lr);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& dst = params[t].data;
    const auto& g = grads[t].data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= step * g[i];
  }
}

/// SGD with optional heavy-ball momentum and L2 decay folded into the
/// gradient. With momentum = weight_decay = 0 this is exactly sgd_step.
template <class T>
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum = 0.0, double weight_decay = 0.0)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    if (momentum_ == 0.0 && weight_decay_ == 0.0) {
      sgd_step(params, grads, lr_);
      return;
    }
    require_congruent(params, grads, "SgdOptimizer::step");
    if (velocity_.size() == 0) velocity_ = params.zeros_like();
    ParamSet<T> update = grads;
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t].numel(); ++i) {
        T gi = grads[t].data[i] + static_cast<T>(weight_decay_) * params[t].data[i];
        T& v = velocity_[t].data[i];
        v = static_cast<T>(momentum_) * v + gi;
        update[t].data[i] = v;
      }
    }
    sgd_step(params, update, lr_);
  }

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  ParamSet<T> velocity_;
};

}  // namespace spm
