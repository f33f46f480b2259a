// Acceptance run: prints one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--seeds N] [--report FILE] [--csv FILE] [--strict]
//
// The exit status is non-zero when a criterion throws, or with --strict when
// any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spm/augment.hpp"
#include "spm/model.hpp"
#include "spm/pseudolabel.hpp"
#include "spm/trainer.hpp"

using namespace spm;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Image random_image(std::uint64_t seed) {
  Rng rng(seed);
  Image img(kCanonicalSize, kCanonicalSize, 3);
  for (float& v : img.data) v = static_cast<float>(uniform01(rng));
  return img;
}

// 1. Confidence-margin weight on a grid of distributions.
Verdict criterion_weights() {
  std::vector<std::vector<double>> grid{
      {1.0, 0.0, 0.0}, {0.5, 0.5, 0.0, 0.0}, {0.6, 0.3, 0.1}, {0.25, 0.25, 0.25, 0.25}, {0.9, 0.1}};
  std::mt19937_64 gen(1);
  while (grid.size() < 20) {
    const std::size_t c = 2 + grid.size() % 5;
    const auto f = oracle::random_distribution(c, gen, grid.size() % 2 == 0);
    // Renormalise in double so the input sums to one exactly enough.
    std::vector<double> p(f.begin(), f.end());
    double s = 0.0;
    for (double v : p) s += v;
    for (double& v : p) v /= s;
    grid.push_back(p);
  }
  double worst = 0.0;
  for (const auto& p : grid) worst = std::max(worst, std::abs(compute_weight(p).weight - oracle::confidence_margin_weight(p)));
  const bool anchors = std::abs(compute_weight(grid[0]).weight - std::exp(1.0)) <= 1e-9 &&
                       compute_weight(grid[1]).weight == 0.0 &&
                       std::abs(compute_weight(grid[2]).weight - 0.6 * 0.3 * std::exp(0.3)) <= 1e-9;
  return {anchors && worst <= 1e-9, "20 distributions, max |err| " + fmt("%.2e", worst) + ", (0.6,0.3,0.1) -> " +
                                        fmt("%.12f", compute_weight(grid[2]).weight)};
}

// 2. SPM identities.
Verdict criterion_spm_identities() {
  bool identity = true, multiset = true;
  double lin = 0.0, pou = 0.0;
  for (int nu : {4, 16, 64, 256}) {
    const Image img = random_image(200 + nu);
    for (bool blend : {false, true}) {
      Rng r(nu);
      identity = identity && spm_mix(img, nu, 1.0, r, blend, 0.3) == img;
      for (double lambda : {0.2, 0.55, 0.9}) {
        Rng r0(nu + 7), r1(nu + 7);
        const Image zero = spm_mix(img, nu, 0.0, r0, blend, 0.3);
        const Image mixed = spm_mix(img, nu, lambda, r1, blend, 0.3);
        for (std::size_t i = 0; i < img.size(); ++i)
          lin = std::max(lin, std::abs(mixed.data[i] - (lambda * img.data[i] + (1 - lambda) * zero.data[i])));
      }
    }
    Rng r(nu + 1);
    auto a = spm_mix(img, nu, 0.0, r, false, 0.3).data;
    auto b = img.data;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    multiset = multiset && a == b;

    const Image flat(kCanonicalSize, kCanonicalSize, 3, 0.37f);
    for (double overlap : {0.1, 0.3, 0.6}) {
      PatchLayout layout = patch_layout(flat, nu);
      Rng pr(nu + 2);
      layout.permutation = random_permutation(nu, pr);
      for (float v : shuffle_patches(flat, layout, true, overlap).data) pou = std::max(pou, std::abs(v - 0.37));
    }
  }
  return {identity && multiset && lin <= 1e-6 && pou <= 1e-6,
          std::string("identity ") + (identity ? "ok" : "broken") + ", multiset " + (multiset ? "ok" : "broken") +
              ", linearity " + fmt("%.2e", lin) + ", blend " + fmt("%.2e", pou)};
}

// 3. Beta sampler moments within 3 Monte-Carlo standard errors.
Verdict criterion_beta() {
  bool ok = true;
  std::string detail;
  const int n = 100000;
  const std::pair<double, double> shapes[] = {{1, 1}, {8, 1}, {4, 1}, {2, 5}};
  for (auto [a, b] : shapes) {
    Rng rng(derive_seed({3, static_cast<std::uint64_t>(a * 10 + b)}));
    std::vector<double> x(n);
    for (double& v : x) v = sample_lambda(a, b, rng);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
      const double d = v - mean;
      m2 += d * d;
      m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    const double var = m2 * n / (n - 1);
    const double mu = a / (a + b);
    const double sigma2 = a * b / ((a + b) * (a + b) * (a + b + 1));
    const double z_mean = std::abs(mean - mu) / std::sqrt(sigma2 / n);
    const double z_var = std::abs(var - sigma2) / std::sqrt((m4 - m2 * m2) / n);
    ok = ok && z_mean <= 3.0 && z_var <= 3.0;
    detail += "(" + fmt("%g", a) + "," + fmt("%g", b) + ") z=" + fmt("%.2f", z_mean) + "/" + fmt("%.2f", z_var) + " ";
  }
  detail.pop_back();
  return {ok, detail};
}

// 4. k-NN refinement against exhaustive search.
Verdict criterion_knn() {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<std::size_t> size(1, 1024), dim(4, 64), classes(2, 12);
  std::size_t queries = 0;
  for (int bank_id = 0; bank_id < 100; ++bank_id) {
    const std::size_t n = bank_id == 0 ? 1024 : size(gen);
    const std::size_t d = dim(gen), c = classes(gen);
    FeatureBank bank(n, d, c);
    for (std::size_t i = 0; i < n; ++i) bank.enqueue(oracle::random_unit(d, gen), oracle::random_distribution(c, gen, i % 2 == 0));
    for (int q = 0; q < 5; ++q) {
      const auto query = oracle::random_unit(d, gen);
      for (int k : {1, 3, 8}) {
        if (static_cast<std::size_t>(k) > n) continue;
        const Refinement r = refine(bank, query, k);
        const auto o = oracle::brute_force_knn(bank, query, k);
        ++queries;
        if (r.neighbors != o.neighbors || r.avg_probs != o.avg_probs || r.pseudo.label != o.label ||
            r.pseudo.weight != o.weight) {
          return {false, "mismatch on bank " + std::to_string(bank_id) + " (size " + std::to_string(n) + "), k=" +
                             std::to_string(k)};
        }
      }
    }
  }
  return {true, std::to_string(queries) + " queries over 100 banks, all exact"};
}

// 5. Analytic gradients against central differences on a tiny network.
Verdict criterion_gradients() {
  ArchConfig arch;
  arch.channels = {2, 2, 2};
  arch.groups = 2;
  arch.num_classes = 3;
  arch.proj_dim = 3;
  ParamSet<double> p = init_params<double>(arch, 11);
  Rng jitter(110);
  for (auto& t : p)
    for (double& v : t.data) v += 0.1 * (uniform01(jitter) - 0.5);
  std::vector<Image> images;
  for (std::uint64_t i = 0; i < 4; ++i) images.push_back(random_image(40 + i));
  LossSpec<double> spec;
  spec.pseudo_labels = {0, 1, 2, 1};
  spec.weights = {1.0, 0.5, 2.0, 0.25};
  std::mt19937_64 gen(3);
  for (int i = 0; i < 4; ++i)
    for (float v : oracle::random_unit(3, gen)) spec.keys.push_back(v);
  for (int i = 0; i < 6; ++i)
    for (float v : oracle::random_unit(3, gen)) spec.negatives.push_back(v);
  spec.negative_labels = {0, 1, 2, 0, 1, 2};

  const char* names[] = {"ce", "div", "ctr", "total"};
  std::string detail = std::to_string(p.total_numel()) + " params, worst ratio";
  bool ok = p.total_numel() <= 200;
  for (int term = 0; term < 4; ++term) {
    spec.use_ce = term == 0 || term == 3;
    spec.use_div = term == 1 || term == 3;
    spec.use_ctr = term == 2 || term == 3;
    const auto g = loss_and_grad<double>(arch, p, images, spec).grads;
    double worst = 0.0;
    for (std::size_t t = 0; t < p.size(); ++t) {
      for (std::size_t i = 0; i < p[t].numel(); ++i) {
        auto plus = p, minus = p;
        plus[t].data[i] += 1e-4;
        minus[t].data[i] -= 1e-4;
        const double fd = (loss_and_grad<double>(arch, plus, images, spec, false).losses.l_total -
                           loss_and_grad<double>(arch, minus, images, spec, false).losses.l_total) /
                          2e-4;
        const double a = g[t].data[i];
        worst = std::max(worst, std::abs(a - fd) / (1e-3 * std::max({std::abs(a), std::abs(fd), 1e-6})));
      }
    }
    ok = ok && worst <= 1.0;
    detail += std::string(" ") + names[term] + "=" + fmt("%.3f", worst);
  }
  return {ok, detail};
}

// 6. With rho = 0 and gamma = 0 the trainer's loss trace equals a separately
// written unweighted loop over the same random streams.
Verdict criterion_baseline_reduction() {
  const ArchConfig arch;
  const ParamSet<float> theta_s = init_params<float>(arch, 21);
  const LabeledDataset target = gen_dataset(sketch_like(), 96, arch.num_classes, 22);
  AdaptConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 10;
  cfg.bank_capacity = 40;
  cfg.seed = 23;
  cfg.spm.rho = 0.0;
  cfg.reweight = false;
  const AdaptResult lib = adapt(arch, theta_s, target.images, {}, cfg);

  ParamSet<float> theta = theta_s, slow = theta_s;
  SgdOptimizer<float> opt(cfg.lr, cfg.sgd_momentum, cfg.weight_decay);
  FeatureBank bank(cfg.bank_capacity, arch.feature_dim(), arch.num_classes);
  // Key ring: slot order, overwritten from slot 0 once full.
  std::vector<float> ring_keys(cfg.bank_capacity * arch.proj_dim);
  std::vector<int> ring_labels(cfg.bank_capacity);
  std::size_t ring_next = 0, ring_size = 0;
  const std::size_t n = target.images.size();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng shuffle(derive_seed({cfg.seed, tag(Stream::kShuffle), 0}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(shuffle)]);

  std::vector<double> trace;
  for (std::size_t start = 0; start < n && trace.size() < 10; start += cfg.batch_size) {
    const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, n - start);
    std::vector<Image> weak, query, key;
    for (std::size_t i = 0; i < bsz; ++i) {
      const std::uint64_t idx = order[start + i];
      const Image& x = target.images[idx];
      Rng w(derive_seed({cfg.seed, tag(Stream::kWeak), 0, idx}));
      weak.push_back(weak_augment(x, w));
      // Each strong stream hands out an SPM seed first and the pipeline seed second.
      Rng q(derive_seed({cfg.seed, tag(Stream::kStrongQuery), 0, idx}));
      q();
      Rng q_pipe(q());
      query.push_back(standard_strong(x, q_pipe));
      Rng k(derive_seed({cfg.seed, tag(Stream::kStrongKey), 0, idx}));
      k();
      Rng k_pipe(k());
      key.push_back(standard_strong(x, k_pipe));
    }
    const auto wp = forward<float>(arch, slow, weak);
    const std::size_t f = arch.feature_dim(), c = arch.num_classes;
    std::vector<float> feats(f * bsz);
    for (std::size_t b = 0; b < bsz; ++b) {
      const double norm = std::max(static_cast<double>(wp.features.col(b).norm()), 1e-12);
      for (std::size_t r = 0; r < f; ++r) feats[b * f + r] = static_cast<float>(wp.features(r, b) / norm);
    }
    bank.enqueue(feats, wp.probs_span());

    LossSpec<float> spec;
    spec.temperature = cfg.temperature;
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto r = refine(bank, std::span<const float>(feats).subspan(b * f, f), cfg.k_neighbors,
                            wp.probs_span().subspan(b * c, c));
      spec.pseudo_labels.push_back(r.pseudo.label);
    }
    spec.weights.assign(bsz, 1.0);
    const auto kp = forward<float>(arch, slow, key);
    spec.keys.assign(kp.projection_span().begin(), kp.projection_span().end());
    spec.negatives.assign(ring_keys.begin(), ring_keys.begin() + ring_size * arch.proj_dim);
    spec.negative_labels.assign(ring_labels.begin(), ring_labels.begin() + ring_size);
    const auto obj = loss_and_grad<float>(arch, theta, query, spec);
    trace.push_back(obj.losses.l_total);
    opt.step(theta, obj.grads);
    momentum_update(slow, theta, cfg.ema_momentum);
    for (std::size_t b = 0; b < bsz; ++b) {
      std::copy_n(spec.keys.begin() + b * arch.proj_dim, arch.proj_dim, ring_keys.begin() + ring_next * arch.proj_dim);
      ring_labels[ring_next] = spec.pseudo_labels[b];
      ring_next = (ring_next + 1) % cfg.bank_capacity;
      ring_size = std::min(ring_size + 1, cfg.bank_capacity);
    }
  }
  if (lib.metrics.size() < trace.size()) return {false, "trainer produced fewer than 10 steps"};
  std::size_t equal = 0;
  for (std::size_t s = 0; s < trace.size(); ++s) equal += lib.metrics[s].l_total == trace[s] ? 1 : 0;
  return {equal == trace.size() && trace.size() == 10,
          std::to_string(equal) + "/" + std::to_string(trace.size()) + " steps bit-identical, first loss " +
              fmt("%.9f", trace.front())};
}

struct Experiment {
  std::vector<std::uint64_t> seeds;
  std::vector<double> source_only;
  std::vector<std::vector<double>> acc;  // [variant][seed]
  std::vector<AblationVariant> variants;
  double core_seconds = 0.0;   // source model, baseline and full runs
  double total_seconds = 0.0;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

Experiment run_experiment(int num_seeds, bool all_variants) {
  ExperimentConfig cfg;
  cfg.adapt.eval_every = cfg.adapt.epochs;
  Experiment ex;
  for (const auto& v : ablation_variants()) {
    if (all_variants || v.name == "baseline" || v.name == "all") ex.variants.push_back(v);
  }
  ex.acc.resize(ex.variants.size());
  const auto t_all = Clock::now();
  for (int i = 0; i < num_seeds; ++i) {
    const std::uint64_t seed = cfg.seeds[i % cfg.seeds.size()] + static_cast<std::uint64_t>(i / cfg.seeds.size()) * 100;
    ex.seeds.push_back(seed);
    auto t0 = Clock::now();
    const SeedSetup setup = prepare_seed(cfg, seed);
    ex.core_seconds += seconds_since(t0);
    ex.source_only.push_back(setup.target_source_only.mean);
    std::fprintf(stderr, "seed %llu: source held-out %.3f, target source-only %.3f\n",
                 static_cast<unsigned long long>(seed), setup.source_heldout.mean, setup.target_source_only.mean);
    for (std::size_t v = 0; v < ex.variants.size(); ++v) {
      AdaptConfig ac = variant_config(cfg.adapt, ex.variants[v]);
      ac.seed = seed;
      t0 = Clock::now();
      const AdaptResult r = adapt(cfg.arch, setup.theta_s, setup.target_train.images, {}, ac, &setup.target_test);
      const double dt = seconds_since(t0);
      if (ex.variants[v].name == "baseline" || ex.variants[v].name == "all") ex.core_seconds += dt;
      ex.acc[v].push_back(r.final_accuracy->mean);
      std::fprintf(stderr, "  %-14s %.3f (%.0f s)\n", ex.variants[v].name.c_str(), r.final_accuracy->mean, dt);
    }
  }
  ex.total_seconds = seconds_since(t_all);
  return ex;
}

double variant_mean(const Experiment& ex, const std::string& name) {
  for (std::size_t v = 0; v < ex.variants.size(); ++v)
    if (ex.variants[v].name == name) return mean_of(ex.acc[v]);
  return NAN;
}

// 7. End-to-end gain over the source-only model.
Verdict criterion_end_to_end(const Experiment& ex) {
  const double src = mean_of(ex.source_only), base = variant_mean(ex, "baseline"), full = variant_mean(ex, "all");
  const double gain = 100.0 * (full - src);
  const bool ok = gain >= 5.0 && full >= base && ex.core_seconds < 15 * 60;
  return {ok, std::to_string(ex.seeds.size()) + " seeds: source-only " + fmt("%.4f", src) + ", baseline " +
                  fmt("%.4f", base) + ", full " + fmt("%.4f", full) + ", gain " + fmt("%+.2f", gain) + " pp, " +
                  fmt("%.0f", ex.core_seconds) + " s"};
}

// 8. Full method at least as good as the baseline; every row reported.
Verdict criterion_ablation(const Experiment& ex, const std::string& csv) {
  AblationResult result;
  result.source_only = ex.source_only;
  for (std::size_t v = 0; v < ex.variants.size(); ++v) {
    result.rows.push_back({ex.variants[v], ex.acc[v], mean_of(ex.acc[v])});
  }
  if (!csv.empty()) write_ablation_csv(csv, result, ex.seeds);
  std::string detail;
  for (const auto& row : result.rows) detail += row.variant.name + "=" + fmt("%.4f", row.mean) + " ";
  detail += "(" + fmt("%.0f", ex.total_seconds) + " s)";
  const bool ok = result.rows.size() == 5 && variant_mean(ex, "all") >= variant_mean(ex, "baseline");
  return {ok, detail};
}

// 9. Momentum update arithmetic.
Verdict criterion_momentum() {
  const ArchConfig arch;
  const ParamSet<double> slow0 = init_params<double>(arch, 31), live = init_params<double>(arch, 32);
  ParamSet<double> slow = slow0;
  momentum_update(slow, live, 0.999);
  double one = 0.0;
  for (std::size_t t = 0; t < slow.size(); ++t)
    for (std::size_t i = 0; i < slow[t].numel(); ++i)
      one = std::max(one, std::abs(slow[t].data[i] - (0.999 * slow0[t].data[i] + 0.001 * live[t].data[i])));

  slow = slow0;
  for (int i = 0; i < 10000; ++i) momentum_update(slow, live, 0.999);
  double gap = 0.0, gap0 = 0.0;
  for (std::size_t t = 0; t < slow.size(); ++t) {
    for (std::size_t i = 0; i < slow[t].numel(); ++i) {
      gap = std::max(gap, std::abs(slow[t].data[i] - live[t].data[i]));
      gap0 = std::max(gap0, std::abs(slow0[t].data[i] - live[t].data[i]));
    }
  }
  const double bound = gap0 * std::pow(0.999, 10000) * (1 + 1e-6);
  return {one <= 1e-12 && gap <= bound,
          "single step " + fmt("%.2e", one) + ", after 1e4 steps " + fmt("%.4e", gap) + " <= " + fmt("%.4e", bound)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  int seeds = 5;
  std::string report, csv;
  bool strict = false;
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--seeds", seeds, "seeds for the end-to-end runs");
  app.add_option("--report", report, "also write the PASS/FAIL lines to this file");
  app.add_option("--csv", csv, "ablation CSV written by criterion 8");
  app.add_flag("--strict", strict, "exit non-zero when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

  std::optional<Experiment> experiment;
  auto get_experiment = [&]() -> const Experiment& {
    if (!experiment) experiment = run_experiment(seeds, want(8));
    return *experiment;
  };

  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, criterion_weights},
      {2, criterion_spm_identities},
      {3, criterion_beta},
      {4, criterion_knn},
      {5, criterion_gradients},
      {6, criterion_baseline_reduction},
      {7, [&] { return criterion_end_to_end(get_experiment()); }},
      {8, [&] { return criterion_ablation(get_experiment(), csv); }},
      {9, criterion_momentum},
  };

  std::ostringstream lines;
  int failed = 0, errors = 0;
  for (const auto& [id, run] : criteria) {
    if (!want(id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
      ++errors;
    }
    failed += v.pass ? 0 : 1;
    std::string line = std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + ": " + v.detail;
    if (id != 7 && id != 8) line += " [" + fmt("%.2f", seconds_since(t0)) + " s]";
    std::cout << line << std::endl;
    lines << line << '\n';
  }
  if (!report.empty()) {
    std::ofstream out(report);
    out << lines.str();
  }
  return errors > 0 || (strict && failed > 0) ? 1 : 0;
}
