#pragma once

// Straightforward reference implementations the library is checked against.
// They share no code with src/ beyond the data containers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "spm/pseudolabel.hpp"

namespace spm::oracle {

/// w = p1 * (p1 - p2) * exp(p1 - p2), spelled out from sorted probabilities.
inline double confidence_margin_weight(std::vector<double> probs) {
  std::sort(probs.begin(), probs.end(), std::greater<>());
  const double p1 = probs[0];
  const double p2 = probs.size() > 1 ? probs[1] : 0.0;
  return p1 * (p1 - p2) * std::exp(p1 - p2);
}

struct KnnResult {
  std::vector<std::size_t> neighbors;
  std::vector<double> avg_probs;
  int label = 0;
  double weight = 0.0;
};

/// Exhaustive search: score every slot, stable-sort by descending cosine, keep k.
inline KnnResult brute_force_knn(const FeatureBank& bank, const std::vector<float>& query, int k) {
  const std::size_t n = bank.size();
  std::vector<double> score(n);
  for (std::size_t s = 0; s < n; ++s) {
    double d = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) d += static_cast<double>(query[j]) * bank.feature(s)[j];
    score[s] = d;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  KnnResult r;
  r.neighbors.assign(idx.begin(), idx.begin() + k);
  r.avg_probs.assign(bank.classes(), 0.0);
  for (std::size_t s : r.neighbors)
    for (std::size_t c = 0; c < bank.classes(); ++c) r.avg_probs[c] += bank.probs(s)[c];
  for (double& p : r.avg_probs) p /= k;
  r.label = 0;
  for (std::size_t c = 1; c < r.avg_probs.size(); ++c)
    if (r.avg_probs[c] > r.avg_probs[r.label]) r.label = static_cast<int>(c);
  r.weight = confidence_margin_weight(r.avg_probs);
  return r;
}

/// Unit vector with Gaussian entries.
template <class Gen>
std::vector<float> random_unit(std::size_t dim, Gen& gen) {
  std::normal_distribution<double> n01;
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = n01(gen);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

/// Random distribution; with `peaked` set, one class dominates.
template <class Gen>
std::vector<float> random_distribution(std::size_t classes, Gen& gen, bool peaked = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(classes);
  double s = 0.0;
  for (double& x : v) {
    x = peaked ? std::pow(u(gen), 4.0) : u(gen);
    s += x;
  }
  std::vector<float> out(classes);
  for (std::size_t i = 0; i < classes; ++i) out[i] = static_cast<float>(v[i] / s);
  return out;
}

}  // namespace spm::oracle
