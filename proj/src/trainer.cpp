#include "spm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "spm/pseudolabel.hpp"

namespace spm {

namespace {

// The training loops allocate and free the same large activation buffers every
// step; keeping them on the heap instead of fresh mmaps avoids a page-fault storm.
void keep_buffers_on_heap() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

// Upper bound on augmentation worker threads: SPM_NUM_WORKERS if set,
// otherwise the hardware concurrency.
unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPM_NUM_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  return n;
}

// Runs fn(i) for i in [0, n). Results are written by index, so the outcome
// does not depend on the number of workers.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// FIFO queue of contrastive keys and the pseudo-labels they were stored with.
class KeyQueue {
 public:
  KeyQueue(std::size_t capacity, std::size_t dim)
      : capacity_(capacity), dim_(dim), keys_(capacity * dim), labels_(capacity) {}

  void enqueue(std::span<const float> keys, std::span<const int> labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::copy_n(keys.data() + i * dim_, dim_, keys_.data() + cursor_ * dim_);
      labels_[cursor_] = labels[i];
      cursor_ = (cursor_ + 1) % capacity_;
      size_ = std::min(size_ + 1, capacity_);
    }
  }

  std::vector<float> keys() const { return {keys_.begin(), keys_.begin() + size_ * dim_}; }
  std::vector<int> labels() const { return {labels_.begin(), labels_.begin() + size_}; }

 private:
  std::size_t capacity_, dim_;
  std::size_t cursor_ = 0, size_ = 0;
  std::vector<float> keys_;
  std::vector<int> labels_;
};

std::vector<float> normalized_columns(const Matrix<float>& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index b = 0; b < m.cols(); ++b) {
    const double n = std::max(static_cast<double>(m.col(b).norm()), 1e-12);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out[static_cast<std::size_t>(b * m.rows() + r)] = static_cast<float>(m(r, b) / n);
    }
  }
  return out;
}

}  // namespace

void SourceConfig::validate() const {
  if (epochs < 0 || batch_size < 1 || !(lr >= 0.0) || momentum < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("SourceConfig: invalid epochs, batch size or optimiser settings");
  }
}

void AdaptConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("AdaptConfig: epochs must be >= 0");
  if (batch_size < 1 || k_neighbors < 1 || bank_capacity < 1 || eval_every < 1) {
    throw std::invalid_argument("AdaptConfig: counts must be positive");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("AdaptConfig: lr must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("AdaptConfig: temperature must be positive");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) {
    throw std::invalid_argument("AdaptConfig: ema_momentum must lie in [0, 1]");
  }
  if (sgd_momentum < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("AdaptConfig: optimiser momentum and weight decay must be >= 0");
  }
  spm.validate();
  warmup.validate();
}

double epoch_progress(int epoch, int total_epochs) {
  if (total_epochs <= 1) return 0.0;
  return std::clamp(static_cast<double>(epoch) / (total_epochs - 1), 0.0, 1.0);
}

std::vector<int> predict(const ArchConfig& arch, const ParamSet<float>& params,
                         std::span<const Image> images, int batch_size) {
  std::vector<int> out(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, images.size() - start);
    const auto fp = forward(arch, params, images.subspan(start, n));
    for (std::size_t i = 0; i < n; ++i) out[start + i] = fp.predicted(static_cast<int>(i));
  }
  return out;
}

Accuracy score_predictions(std::span<const int> pred, std::span<const int> labels, int num_classes) {
  if (pred.size() != labels.size()) throw std::invalid_argument("score_predictions: size mismatch");
  std::vector<int> correct(num_classes, 0), total(num_classes, 0);
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++total.at(labels[i]);
    if (pred[i] == labels[i]) {
      ++correct[labels[i]];
      ++hits;
    }
  }
  Accuracy acc;
  acc.per_class.resize(num_classes);
  int present = 0;
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    if (total[c] == 0) {
      acc.per_class[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    acc.per_class[c] = static_cast<double>(correct[c]) / total[c];
    sum += acc.per_class[c];
    ++present;
  }
  acc.mean = present ? sum / present : 0.0;
  acc.overall = pred.empty() ? 0.0 : static_cast<double>(hits) / pred.size();
  return acc;
}

Accuracy evaluate(const ArchConfig& arch, const ParamSet<float>& params, const LabeledDataset& ds,
                  int batch_size) {
  return score_predictions(predict(arch, params, ds.images, batch_size), ds.labels, ds.num_classes);
}

SourceResult train_source(const ArchConfig& arch, const LabeledDataset& train,
                          const LabeledDataset* heldout, const SourceConfig& cfg) {
  cfg.validate();
  arch.validate();
  keep_buffers_on_heap();
  if (train.size() == 0) throw std::invalid_argument("train_source: empty training set");
  SourceResult result;
  result.params = init_params<float>(arch, cfg.seed);
  SgdOptimizer<float> opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  const std::size_t n = train.size();
  std::vector<Image> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Cosine decay keeps the last epochs stable.
    opt.set_lr(cfg.lr * 0.5 * (1.0 + std::cos(M_PI * epoch / std::max(1, cfg.epochs))));
    const auto order = shuffled_order(n, derive_seed({cfg.seed, tag(Stream::kShuffle), 1000u + epoch}));
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, n - start);
      batch.resize(bsz);
      LossSpec<float> spec;
      spec.use_div = false;
      spec.use_ctr = false;
      spec.pseudo_labels.resize(bsz);
      spec.weights.assign(bsz, 1.0);
      parallel_for(bsz, [&](std::size_t i) {
        const std::size_t idx = order[start + i];
        Rng rng(derive_seed({cfg.seed, tag(Stream::kWeak), 1000u + epoch, idx}));
        batch[i] = weak_augment(train.images[idx], rng);
      });
      for (std::size_t i = 0; i < bsz; ++i) spec.pseudo_labels[i] = train.labels[order[start + i]];
      auto obj = loss_and_grad<float>(arch, result.params, batch, spec);
      if (!std::isfinite(obj.losses.l_total) || !obj.grads.all_finite()) {
        throw DivergenceError("train_source: non-finite loss or gradient at epoch " + std::to_string(epoch),
                              result.params);
      }
      loss_sum += obj.losses.l_total * bsz;
      for (std::size_t i = 0; i < bsz; ++i)
        hits += obj.pass.predicted(static_cast<int>(i)) == spec.pseudo_labels[i] ? 1 : 0;
      opt.step(result.params, obj.grads);
    }
    result.log.push_back({epoch, loss_sum / n, static_cast<double>(hits) / n});
  }
  if (heldout) result.heldout = evaluate(arch, result.params, *heldout);
  return result;
}

AdaptResult adapt(const ArchConfig& arch, const ParamSet<float>& theta_s,
                  std::span<const Image> target, std::span<const int> hidden_labels,
                  const AdaptConfig& cfg, const LabeledDataset* eval_set,
                  const MetricsObserver& observer) {
  cfg.validate();
  arch.validate();
  keep_buffers_on_heap();
  if (!hidden_labels.empty() && hidden_labels.size() != target.size()) {
    throw std::invalid_argument("adapt: hidden label count does not match target size");
  }
  AdaptResult result;
  result.params = theta_s;
  result.momentum_params = theta_s;
  if (cfg.epochs == 0 || target.empty()) return result;

  ParamSet<float>& theta = result.params;
  ParamSet<float>& theta_m = result.momentum_params;
  const std::size_t classes = arch.num_classes;
  FeatureBank bank(cfg.bank_capacity, arch.feature_dim(), classes);
  KeyQueue key_queue(cfg.bank_capacity, arch.proj_dim);
  SgdOptimizer<float> opt(cfg.lr, cfg.sgd_momentum, cfg.weight_decay);

  const std::size_t n = target.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  long step = 0;
  std::vector<Image> weak, query, key;
  std::vector<SpmDecision> decisions;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double progress = epoch_progress(epoch, cfg.epochs);
    const double spm_a = schedule_a_at(progress, cfg.spm.a_start, cfg.spm.a_end);
    const double gamma = cfg.reweight ? warmup_gamma(progress, cfg.warmup) : 0.0;
    const auto order = shuffled_order(n, derive_seed({cfg.seed, tag(Stream::kShuffle), static_cast<std::uint64_t>(epoch)}));

    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const std::size_t start = s * cfg.batch_size;
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, n - start);
      std::optional<int> batch_nu;
      if (cfg.nu_per_batch) {
        Rng batch_rng(derive_seed({cfg.seed, tag(Stream::kBatch), static_cast<std::uint64_t>(epoch), s}));
        batch_nu = draw_nu(cfg.spm, batch_rng);
      }
      weak.resize(bsz);
      query.resize(bsz);
      key.resize(bsz);
      decisions.resize(2 * bsz);
      parallel_for(bsz, [&](std::size_t i) {
        const std::uint64_t idx = order[start + i];
        const std::uint64_t ep = static_cast<std::uint64_t>(epoch);
        Rng weak_rng(derive_seed({cfg.seed, tag(Stream::kWeak), ep, idx}));
        weak[i] = weak_augment(target[idx], weak_rng);
        Rng q_rng(derive_seed({cfg.seed, tag(Stream::kStrongQuery), ep, idx}));
        auto q = strong_augment(target[idx], cfg.spm, progress, q_rng, batch_nu);
        Rng k_rng(derive_seed({cfg.seed, tag(Stream::kStrongKey), ep, idx}));
        auto k = strong_augment(target[idx], cfg.spm, progress, k_rng, batch_nu);
        query[i] = std::move(q.image);
        key[i] = std::move(k.image);
        decisions[2 * i] = q.decision;
        decisions[2 * i + 1] = k.decision;
      });
      for (const auto& d : decisions) {
        ++result.strong_views;
        result.spm_views += d.apply ? 1 : 0;
      }

      // Pseudo-labels from the momentum model on the weak view.
      const auto weak_pass = forward<float>(arch, theta_m, weak);
      if (!weak_pass.features.allFinite() || !weak_pass.probs.allFinite()) {
        throw DivergenceError("adapt: momentum model produced non-finite outputs at step " + std::to_string(step),
                              theta);
      }
      const auto feats = normalized_columns(weak_pass.features);
      bank.enqueue(feats, weak_pass.probs_span());

      LossSpec<float> spec;
      spec.temperature = cfg.temperature;
      spec.pseudo_labels.resize(bsz);
      std::vector<double> raw(bsz);
      std::size_t pl_hits = 0;
      for (std::size_t i = 0; i < bsz; ++i) {
        const auto r = refine(bank, std::span<const float>(feats).subspan(i * arch.feature_dim(), arch.feature_dim()),
                              cfg.k_neighbors, weak_pass.probs_span().subspan(i * classes, classes));
        spec.pseudo_labels[i] = r.pseudo.label;
        raw[i] = r.pseudo.weight;
        if (!hidden_labels.empty() && hidden_labels[order[start + i]] == r.pseudo.label) ++pl_hits;
      }
      spec.weights = blend_weights(raw, gamma, cfg.warmup.normalize_batch);

      const auto key_pass = forward<float>(arch, theta_m, key);
      spec.keys.assign(key_pass.projection_span().begin(), key_pass.projection_span().end());
      spec.negatives = key_queue.keys();
      spec.negative_labels = key_queue.labels();

      auto obj = loss_and_grad<float>(arch, theta, query, spec);
      if (!std::isfinite(obj.losses.l_total) || !obj.grads.all_finite()) {
        throw DivergenceError("adapt: non-finite loss or gradient at step " + std::to_string(step), theta);
      }
      ParamSet<float> before = theta;
      opt.step(theta, obj.grads);
      if (!theta.all_finite()) {
        throw DivergenceError("adapt: parameters left the finite range at step " + std::to_string(step),
                              std::move(before));
      }
      momentum_update(theta_m, theta, cfg.ema_momentum);
      key_queue.enqueue(spec.keys, spec.pseudo_labels);

      MetricsRow row;
      row.step = step;
      row.epoch = epoch;
      row.l_ce = obj.losses.l_ce;
      row.l_div = obj.losses.l_div;
      row.l_ctr = obj.losses.l_ctr;
      row.l_total = obj.losses.l_total;
      row.mean_weight = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(bsz);
      row.spm_a = spm_a;
      row.gamma = gamma;
      row.pl_accuracy = hidden_labels.empty() ? std::numeric_limits<double>::quiet_NaN()
                                              : static_cast<double>(pl_hits) / bsz;
      const bool last_step = s + 1 == steps_per_epoch;
      if (last_step && eval_set && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)) {
        result.final_accuracy = evaluate(arch, theta, *eval_set);
        row.target_accuracy = result.final_accuracy->mean;
      }
      result.metrics.push_back(row);
      if (observer) observer(row);
    }
  }
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot write " + path);
  out.precision(9);
  out << "step,epoch,l_ce,l_div,l_ctr,l_total,mean_weight,spm_a,gamma,pl_accuracy,target_accuracy\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.epoch << ',' << r.l_ce << ',' << r.l_div << ',' << r.l_ctr << ','
        << r.l_total << ',' << r.mean_weight << ',' << r.spm_a << ',' << r.gamma << ',';
    if (!std::isnan(r.pl_accuracy)) out << r.pl_accuracy;
    out << ',';
    if (r.target_accuracy) out << *r.target_accuracy;
    out << '\n';
  }
}

Split split_from_string(const std::string& name) {
  if (name == "source-train") return Split::kSourceTrain;
  if (name == "source-test") return Split::kSourceTest;
  if (name == "target-train") return Split::kTargetTrain;
  if (name == "target-test") return Split::kTargetTest;
  throw std::invalid_argument("unknown split '" + name +
                              "' (expected source-train, source-test, target-train or target-test)");
}

LabeledDataset make_split(const ExperimentConfig& cfg, std::uint64_t seed, Split split) {
  const int c = cfg.arch.num_classes;
  switch (split) {
    case Split::kSourceTrain: return gen_dataset(cfg.source_domain, cfg.n_source, c, derive_seed({seed, 101}));
    case Split::kSourceTest: return gen_dataset(cfg.source_domain, cfg.n_source_test, c, derive_seed({seed, 102}));
    case Split::kTargetTrain: return gen_dataset(cfg.target_domain, cfg.n_target, c, derive_seed({seed, 103}));
    case Split::kTargetTest: return gen_dataset(cfg.target_domain, cfg.n_target_test, c, derive_seed({seed, 104}));
  }
  throw std::invalid_argument("make_split: unknown split");
}

SeedSetup prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedSetup s;
  s.seed = seed;
  const auto source_train = make_split(cfg, seed, Split::kSourceTrain);
  const auto source_test = make_split(cfg, seed, Split::kSourceTest);
  s.target_train = make_split(cfg, seed, Split::kTargetTrain);
  s.target_test = make_split(cfg, seed, Split::kTargetTest);
  SourceConfig src = cfg.source;
  src.seed = seed;
  auto trained = train_source(cfg.arch, source_train, &source_test, src);
  s.theta_s = std::move(trained.params);
  s.source_heldout = *trained.heldout;
  s.target_source_only = evaluate(cfg.arch, s.theta_s, s.target_test);
  return s;
}

std::vector<AblationVariant> ablation_variants() {
  return {{"baseline", false, false, false},
          {"+reweight", false, false, true},
          {"+spm", true, false, false},
          {"+spm+overlap", true, true, false},
          {"all", true, true, true}};
}

AdaptConfig variant_config(const AdaptConfig& base, const AblationVariant& v) {
  AdaptConfig cfg = base;
  if (!v.spm) cfg.spm.rho = 0.0;
  cfg.spm.blend = v.overlap;
  cfg.reweight = v.reweight;
  return cfg;
}

AblationResult ablate(const ExperimentConfig& cfg, const std::vector<AblationVariant>& variants,
                      const ProgressLog& log) {
  AblationResult result;
  for (const auto& v : variants) result.rows.push_back({v, {}, 0.0});
  for (std::uint64_t seed : cfg.seeds) {
    const SeedSetup setup = prepare_seed(cfg, seed);
    result.source_only.push_back(setup.target_source_only.mean);
    if (log) {
      log("seed " + std::to_string(seed) + ": source held-out " + std::to_string(setup.source_heldout.mean) +
          ", target source-only " + std::to_string(setup.target_source_only.mean));
    }
    for (auto& row : result.rows) {
      AdaptConfig acfg = variant_config(cfg.adapt, row.variant);
      acfg.seed = seed;
      const auto res = adapt(cfg.arch, setup.theta_s, setup.target_train.images, setup.target_train.labels,
                             acfg, &setup.target_test);
      row.accuracies.push_back(res.final_accuracy->mean);
      if (log) log("  " + row.variant.name + ": " + std::to_string(res.final_accuracy->mean));
    }
  }
  for (auto& row : result.rows) {
    row.mean = row.accuracies.empty()
                   ? 0.0
                   : std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / row.accuracies.size();
  }
  return result;
}

void write_ablation_csv(const std::string& path, const AblationResult& result,
                        const std::vector<std::uint64_t>& seeds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_ablation_csv: cannot write " + path);
  out.precision(6);
  out << "variant,baseline,spm,overlap,reweight";
  for (auto s : seeds) out << ",seed_" << s;
  out << ",mean\n";
  for (const auto& row : result.rows) {
    out << row.variant.name << ",1," << row.variant.spm << ',' << row.variant.overlap << ','
        << row.variant.reweight;
    for (double a : row.accuracies) out << ',' << a;
    out << ',' << row.mean << '\n';
  }
}

}  // namespace spm
