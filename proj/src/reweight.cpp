#include "spm/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spm {

void WarmupPolicy::validate() const {
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw std::invalid_argument("WarmupPolicy: warmup_fraction must lie in [0, 1]");
  }
}

double warmup_gamma(double progress, const WarmupPolicy& policy) {
  policy.validate();
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw std::out_of_range("warmup_gamma: progress must lie in [0, 1]");
  }
  if (policy.warmup_fraction == 0.0) return 1.0;
  return std::min(progress / policy.warmup_fraction, 1.0);
}

std::vector<double> blend_weights(std::span<const double> raw, double gamma, bool normalize_batch) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::out_of_range("blend_weights: gamma must lie in [0, 1]");
  for (double w : raw) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("blend_weights: raw weights must be finite and non-negative");
  }
  std::vector<double> scaled(raw.begin(), raw.end());
  if (normalize_batch && !raw.empty()) {
    double sum = 0.0;
    for (double w : raw) sum += w;
    const double n = static_cast<double>(raw.size());
    for (double& w : scaled) w = sum > 0.0 ? w * n / sum : 0.0;
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (1.0 - gamma) * 1.0 + gamma * scaled[i];
  return out;
}

std::vector<double> effective_weights(std::span<const double> raw, double progress,
                                      const WarmupPolicy& policy) {
  return blend_weights(raw, warmup_gamma(progress, policy), policy.normalize_batch);
}

}  // namespace spm
