#pragma once

// Adaptation objective: confidence-weighted cross-entropy, diversity
// regulariser and queue-based InfoNCE with same-pseudo-label negatives masked.
// Probability and embedding batches are row-major (sample-major) buffers.
// Every *_grad / gradient output is accumulated (+=), never overwritten.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spm {

/// Floor applied inside every log; oracle recomputations must use the same.
inline constexpr double kLogFloor = 1e-12;

inline double clamped_log(double p) { return std::log(std::max(p, kLogFloor)); }

struct LossBreakdown {
  double l_ce = 0.0;
  double l_div = 0.0;
  double l_ctr = 0.0;
  double l_total = 0.0;
};

inline LossBreakdown total_loss(double l_ce, double l_ctr, double l_div) {
  LossBreakdown out;
  out.l_ce = l_ce;
  out.l_ctr = l_ctr;
  out.l_div = l_div;
  out.l_total = l_ce + l_ctr + l_div;
  return out;
}

namespace detail {

inline std::size_t batch_of(std::size_t n, std::size_t width, const char* where) {
  if (width == 0 || n % width != 0) {
    throw std::invalid_argument(std::string(where) + ": buffer size is not a multiple of the row width");
  }
  return n / width;
}

inline void check_weighted_inputs(std::size_t batch, std::size_t classes,
                                  std::span<const int> labels,
                                  std::span<const double> weights) {
  if (labels.size() != batch || weights.size() != batch) {
    throw std::invalid_argument("weighted_ce: labels/weights do not match batch size");
  }
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("weighted_ce: pseudo-label out of range");
    }
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
      throw std::invalid_argument("weighted_ce: weights must be finite and non-negative");
    }
  }
}

}  // namespace detail

/// -(1/B) sum_i w_i log p_i[label_i], with the log floored at kLogFloor.
template <class T>
double weighted_ce(std::span<const T> probs, std::size_t classes,
                   std::span<const int> labels, std::span<const double> weights) {
  const std::size_t batch = detail::batch_of(probs.size(), classes, "weighted_ce");
  detail::check_weighted_inputs(batch, classes, labels, weights);
  if (batch == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    sum += weights[i] * clamped_log(static_cast<double>(probs[i * classes + labels[i]]));
  }
  return -sum / static_cast<double>(batch);
}

template <class T>
void weighted_ce_grad(std::span<const T> probs, std::size_t classes,
                      std::span<const int> labels, std::span<const double> weights,
                      std::span<T> dprobs) {
  const std::size_t batch = detail::batch_of(probs.size(), classes, "weighted_ce_grad");
  detail::check_weighted_inputs(batch, classes, labels, weights);
  const double denom = static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t j = i * classes + labels[i];
    const double p = static_cast<double>(probs[j]);
    if (p >= kLogFloor) dprobs[j] += static_cast<T>(-weights[i] / (denom * p));
  }
}

/// Negative entropy of the batch-mean prediction, sum_c pbar_c log pbar_c.
template <class T>
double diversity_loss(std::span<const T> probs, std::size_t classes) {
  const std::size_t batch = detail::batch_of(probs.size(), classes, "diversity_loss");
  if (batch == 0) return 0.0;
  std::vector<double> mean(classes, 0.0);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t c = 0; c < classes; ++c) mean[c] += probs[i * classes + c];
  double loss = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    mean[c] /= static_cast<double>(batch);
    loss += mean[c] * clamped_log(mean[c]);
  }
  return loss;
}

template <class T>
void diversity_grad(std::span<const T> probs, std::size_t classes, std::span<T> dprobs) {
  const std::size_t batch = detail::batch_of(probs.size(), classes, "diversity_grad");
  if (batch == 0) return;
  std::vector<double> mean(classes, 0.0);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t c = 0; c < classes; ++c) mean[c] += probs[i * classes + c];
  std::vector<double> g(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    mean[c] /= static_cast<double>(batch);
    const double dmean = mean[c] >= kLogFloor ? std::log(mean[c]) + 1.0 : std::log(kLogFloor);
    g[c] = dmean / static_cast<double>(batch);
  }
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t c = 0; c < classes; ++c) dprobs[i * classes + c] += static_cast<T>(g[c]);
}

/// Query/key pairs plus the key queue used as negatives. All vectors are
/// expected to be unit-norm.
template <class T>
struct ContrastiveBatch {
  std::span<const T> queries;    ///< B x dim
  std::span<const T> keys;       ///< B x dim, positives
  std::span<const T> negatives;  ///< M x dim, queued keys
  std::size_t dim = 0;
  std::span<const int> query_labels;     ///< B pseudo-labels
  std::span<const int> negative_labels;  ///< M pseudo-labels stored with the keys
  double temperature = 0.07;

  std::size_t batch() const { return dim ? queries.size() / dim : 0; }
  std::size_t num_negatives() const { return dim ? negatives.size() / dim : 0; }
};

/// Mean InfoNCE over queries. A negative whose stored pseudo-label equals the
/// query's pseudo-label is left out of the denominator. When dqueries is
/// non-empty the gradient w.r.t. the (normalised) queries is accumulated.
template <class T>
double contrastive_loss(const ContrastiveBatch<T>& cb, std::span<T> dqueries = {}) {
  if (cb.dim == 0) throw std::invalid_argument("contrastive_loss: dim must be positive");
  if (!(cb.temperature > 0.0)) throw std::invalid_argument("contrastive_loss: temperature must be positive");
  const std::size_t batch = detail::batch_of(cb.queries.size(), cb.dim, "contrastive_loss");
  const std::size_t m = detail::batch_of(cb.negatives.size(), cb.dim, "contrastive_loss");
  if (cb.keys.size() != cb.queries.size() || cb.query_labels.size() != batch ||
      cb.negative_labels.size() != m) {
    throw std::invalid_argument("contrastive_loss: inconsistent batch sizes");
  }
  if (batch == 0) return 0.0;
  const bool want_grad = !dqueries.empty();
  const double inv_t = 1.0 / cb.temperature;

  auto dot = [&](std::span<const T> a, std::size_t ia, std::span<const T> b, std::size_t ib) {
    double s = 0.0;
    for (std::size_t d = 0; d < cb.dim; ++d) {
      s += static_cast<double>(a[ia * cb.dim + d]) * static_cast<double>(b[ib * cb.dim + d]);
    }
    return s;
  };

  double total = 0.0;
  std::vector<double> logits;
  std::vector<std::size_t> kept;
  std::vector<double> grad;
  for (std::size_t i = 0; i < batch; ++i) {
    logits.clear();
    kept.clear();
    logits.push_back(dot(cb.queries, i, cb.keys, i) * inv_t);
    for (std::size_t j = 0; j < m; ++j) {
      if (cb.negative_labels[j] == cb.query_labels[i]) continue;
      kept.push_back(j);
      logits.push_back(dot(cb.queries, i, cb.negatives, j) * inv_t);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    total += lse - logits[0];

    if (want_grad) {
      const double scale = inv_t / static_cast<double>(batch);
      for (double& l : logits) l = std::exp(l - lse);
      grad.assign(cb.dim, 0.0);
      for (std::size_t d = 0; d < cb.dim; ++d) {
        grad[d] = (logits[0] - 1.0) * static_cast<double>(cb.keys[i * cb.dim + d]);
      }
      for (std::size_t n = 0; n < kept.size(); ++n) {
        const double s = logits[n + 1];
        const std::size_t row = kept[n] * cb.dim;
        for (std::size_t d = 0; d < cb.dim; ++d) {
          grad[d] += s * static_cast<double>(cb.negatives[row + d]);
        }
      }
      for (std::size_t d = 0; d < cb.dim; ++d) {
        dqueries[i * cb.dim + d] += static_cast<T>(scale * grad[d]);
      }
    }
  }
  return total / static_cast<double>(batch);
}

}  // namespace spm
