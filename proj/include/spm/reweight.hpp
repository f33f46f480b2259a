#pragma once

#include <span>
#include <vector>

namespace spm {

/// How the confidence-margin weights are phased in over training.
struct WarmupPolicy {
  /// Fraction of training over which gamma ramps linearly from 0 to 1.
  double warmup_fraction = 0.5;
  /// Rescale raw weights to batch-mean 1 before blending.
  bool normalize_batch = true;

  void validate() const;
};

/// gamma = min(progress / warmup_fraction, 1); a zero warmup_fraction means
/// the weights apply from the first step.
double warmup_gamma(double progress, const WarmupPolicy& policy);

/// (1 - gamma) * 1 + gamma * w~, where w~ is the raw weight (optionally
/// normalised to batch-mean 1; an all-zero batch normalises to all zeros).
std::vector<double> effective_weights(std::span<const double> raw, double progress,
                                      const WarmupPolicy& policy);

/// Same blend with gamma supplied directly.
std::vector<double> blend_weights(std::span<const double> raw, double gamma, bool normalize_batch);

}  // namespace spm
