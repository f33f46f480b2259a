#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <stdexcept>
#include <vector>

#include "spm/param_set.hpp"

namespace spm {

/// FIFO queue of (unit feature, class-probability) pairs. Slots are written at
/// `cursor` and wrap around once the bank is full.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(std::size_t capacity, std::size_t dim, std::size_t classes);

  /// Appends `count` rows (row-major feats: count x dim, probs: count x classes).
  /// Features must be unit-norm within 1e-3 and probabilities must form a
  /// distribution within 1e-3; both are renormalised before storage.
  void enqueue(std::span<const float> feats, std::span<const float> probs);

  void clear();

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t classes() const { return classes_; }
  std::size_t size() const { return size_; }
  std::size_t cursor() const { return cursor_; }
  bool empty() const { return size_ == 0; }

  std::span<const float> feature(std::size_t slot) const {
    return {features_.data() + slot * dim_, dim_};
  }
  std::span<const float> probs(std::size_t slot) const {
    return {probs_.data() + slot * classes_, classes_};
  }

  /// Binary snapshot, little-endian:
  ///   char[8] "SPMQBANK", u32 version (1),
  ///   u64 capacity M, u64 dim d, u64 classes C, u64 cursor, u64 size,
  ///   f32[M * d] features (row-major), f32[M * C] probabilities (row-major).
  void save(std::ostream& out) const;
  static FeatureBank load(std::istream& in);
  void save(const std::string& path) const;
  static FeatureBank load(const std::string& path);

  friend bool operator==(const FeatureBank&, const FeatureBank&) = default;

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::vector<float> features_;
  std::vector<float> probs_;
};

struct PseudoLabel {
  int label = 0;
  double p_top1 = 0.0;
  double margin = 0.0;
  double weight = 0.0;
};

struct ConfidenceMargin {
  double p_top1 = 0.0;
  double margin = 0.0;
  double weight = 0.0;
};

/// Confidence-margin weight of a probability vector:
/// w = p_top1 * (p_top1 - p_top2) * exp(p_top1 - p_top2).
ConfidenceMargin compute_weight(std::span<const double> probs);

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(std::span<const double> v);

struct Refinement {
  PseudoLabel pseudo;
  std::vector<std::size_t> neighbors;  ///< bank slots, most similar first
  std::vector<double> avg_probs;
  bool cold_start = false;
};

/// k-NN soft voting: the k bank entries with the highest cosine similarity to
/// `query` (ties to the lower slot) have their probability vectors averaged
/// (summed in neighbour order, then divided by k). If the bank holds fewer
/// than k entries the sample's own prediction is used with weight 0.
Refinement refine(const FeatureBank& bank, std::span<const float> query, int k,
                  std::span<const float> own_probs = {});

/// theta_m <- m * theta_m + (1 - m) * theta, elementwise.
template <class T>
void momentum_update(ParamSet<T>& theta_m, const ParamSet<T>& theta, double m) {
  require_congruent(theta_m, theta, "momentum_update");
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("momentum_update: m must lie in [0, 1]");
  const T keep = static_cast<T>(m);
  const T take = static_cast<T>(1.0 - m);
  for (std::size_t t = 0; t < theta.size(); ++t) {
    auto& dst = theta_m[t].data;
    const auto& src = theta[t].data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + take * src[i];
  }
}

}  // namespace spm
