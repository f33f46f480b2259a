#include "spm/pseudolabel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

namespace spm {

static_assert(std::endian::native == std::endian::little,
              "bank snapshots are written in host order and assume little-endian");

namespace {

constexpr char kBankMagic[8] = {'S', 'P', 'M', 'Q', 'B', 'A', 'N', 'K'};
constexpr std::uint32_t kBankVersion = 1;
constexpr double kUnitTolerance = 1e-3;

double norm_of(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

template <class V>
void write_pod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw std::runtime_error("FeatureBank::load: truncated snapshot");
  return v;
}

}  // namespace

FeatureBank::FeatureBank(std::size_t capacity, std::size_t dim, std::size_t classes)
    : capacity_(capacity), dim_(dim), classes_(classes),
      features_(capacity * dim, 0.0f), probs_(capacity * classes, 0.0f) {
  if (capacity == 0 || dim == 0 || classes == 0) {
    throw std::invalid_argument("FeatureBank: capacity, dim and classes must be positive");
  }
}

void FeatureBank::enqueue(std::span<const float> feats, std::span<const float> probs) {
  if (feats.size() % dim_ != 0) throw std::invalid_argument("FeatureBank::enqueue: ragged feature batch");
  const std::size_t count = feats.size() / dim_;
  if (probs.size() != count * classes_) {
    throw std::invalid_argument("FeatureBank::enqueue: probability batch does not match feature batch");
  }
  std::vector<double> norms(count), sums(count);
  for (std::size_t i = 0; i < count; ++i) {
    norms[i] = norm_of(feats.subspan(i * dim_, dim_));
    if (!(std::abs(norms[i] - 1.0) <= kUnitTolerance)) {
      throw std::invalid_argument("FeatureBank::enqueue: feature " + std::to_string(i) +
                                  " is not unit-norm (norm " + std::to_string(norms[i]) + ")");
    }
    double s = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) {
      const float p = probs[i * classes_ + c];
      if (!(p >= 0.0f)) throw std::invalid_argument("FeatureBank::enqueue: negative probability");
      s += p;
    }
    if (!(std::abs(s - 1.0) <= kUnitTolerance)) {
      throw std::invalid_argument("FeatureBank::enqueue: probabilities do not sum to 1");
    }
    sums[i] = s;
  }
  for (std::size_t i = 0; i < count; ++i) {
    float* f = features_.data() + cursor_ * dim_;
    float* p = probs_.data() + cursor_ * classes_;
    for (std::size_t d = 0; d < dim_; ++d) f[d] = static_cast<float>(feats[i * dim_ + d] / norms[i]);
    for (std::size_t c = 0; c < classes_; ++c) p[c] = static_cast<float>(probs[i * classes_ + c] / sums[i]);
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }
}

void FeatureBank::clear() {
  std::fill(features_.begin(), features_.end(), 0.0f);
  std::fill(probs_.begin(), probs_.end(), 0.0f);
  cursor_ = 0;
  size_ = 0;
}

void FeatureBank::save(std::ostream& out) const {
  out.write(kBankMagic, sizeof(kBankMagic));
  write_pod(out, kBankVersion);
  for (std::uint64_t v : {capacity_, dim_, classes_, cursor_, size_}) write_pod(out, v);
  out.write(reinterpret_cast<const char*>(features_.data()),
            static_cast<std::streamsize>(features_.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(probs_.data()),
            static_cast<std::streamsize>(probs_.size() * sizeof(float)));
  if (!out) throw std::runtime_error("FeatureBank::save: write failed");
}

FeatureBank FeatureBank::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBankMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("FeatureBank::load: bad magic");
  }
  if (read_pod<std::uint32_t>(in) != kBankVersion) {
    throw std::runtime_error("FeatureBank::load: unsupported version");
  }
  const auto capacity = read_pod<std::uint64_t>(in);
  const auto dim = read_pod<std::uint64_t>(in);
  const auto classes = read_pod<std::uint64_t>(in);
  const auto cursor = read_pod<std::uint64_t>(in);
  const auto size = read_pod<std::uint64_t>(in);
  if (cursor >= capacity || size > capacity) throw std::runtime_error("FeatureBank::load: inconsistent header");
  FeatureBank bank(capacity, dim, classes);
  bank.cursor_ = cursor;
  bank.size_ = size;
  in.read(reinterpret_cast<char*>(bank.features_.data()),
          static_cast<std::streamsize>(bank.features_.size() * sizeof(float)));
  in.read(reinterpret_cast<char*>(bank.probs_.data()),
          static_cast<std::streamsize>(bank.probs_.size() * sizeof(float)));
  if (!in) throw std::runtime_error("FeatureBank::load: truncated payload");
  return bank;
}

void FeatureBank::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("FeatureBank::save: cannot open " + path);
  save(out);
}

FeatureBank FeatureBank::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("FeatureBank::load: cannot open " + path);
  return load(in);
}

int argmax_lowest(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax_lowest: empty vector");
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

ConfidenceMargin compute_weight(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("compute_weight: empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("compute_weight: negative or NaN probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kUnitTolerance) {
    throw std::invalid_argument("compute_weight: probabilities do not sum to 1");
  }
  const int top = argmax_lowest(probs);
  double second = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (static_cast<int>(i) != top) second = std::max(second, probs[i]);
  ConfidenceMargin cm;
  cm.p_top1 = probs[top];
  cm.margin = cm.p_top1 - second;
  cm.weight = cm.p_top1 * cm.margin * std::exp(cm.margin);
  return cm;
}

Refinement refine(const FeatureBank& bank, std::span<const float> query, int k,
                  std::span<const float> own_probs) {
  if (k < 1) throw std::invalid_argument("refine: k must be >= 1");
  if (query.size() != bank.dim()) throw std::invalid_argument("refine: query dimension mismatch");
  if (!(std::abs(norm_of(query) - 1.0) <= kUnitTolerance)) {
    throw std::invalid_argument("refine: query is not unit-norm");
  }
  Refinement r;
  if (bank.size() < static_cast<std::size_t>(k)) {
    if (own_probs.size() != bank.classes()) {
      throw std::invalid_argument("refine: bank holds fewer than k entries and no fallback prediction was given");
    }
    r.cold_start = true;
    r.avg_probs.assign(own_probs.begin(), own_probs.end());
    double s = 0.0;
    for (double p : r.avg_probs) s += p;
    for (double& p : r.avg_probs) p /= s;
    const ConfidenceMargin cm = compute_weight(r.avg_probs);
    r.pseudo = {argmax_lowest(r.avg_probs), cm.p_top1, cm.margin, 0.0};
    return r;
  }

  const std::size_t n = bank.size();
  std::vector<double> sim(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto f = bank.feature(s);
    double d = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) d += static_cast<double>(query[j]) * f[j];
    sim[s] = d;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sim[a] > sim[b] || (sim[a] == sim[b] && a < b);
                    });
  r.neighbors.assign(order.begin(), order.begin() + k);

  r.avg_probs.assign(bank.classes(), 0.0);
  for (std::size_t s : r.neighbors) {
    const auto p = bank.probs(s);
    for (std::size_t c = 0; c < p.size(); ++c) r.avg_probs[c] += p[c];
  }
  for (double& p : r.avg_probs) p /= k;
  const ConfidenceMargin cm = compute_weight(r.avg_probs);
  r.pseudo = {argmax_lowest(r.avg_probs), cm.p_top1, cm.margin, cm.weight};
  return r;
}

}  // namespace spm
