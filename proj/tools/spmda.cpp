// spmda: command-line driver for data generation, augmentation previews,
// source training, adaptation, evaluation and ablation.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "spm/augment.hpp"
#include "spm/checkpoint.hpp"
#include "spm/config.hpp"
#include "spm/data.hpp"
#include "spm/png_io.hpp"
#include "spm/trainer.hpp"

namespace fs = std::filesystem;
using namespace spm;

namespace {

struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--override", flags.overrides, "key=value, repeatable; bare keys resolve by section")
      ->allow_extra_args(false);
}

RunConfig resolve(const ConfigFlags& flags, const std::string& prefer) {
  RunConfig cfg = load_run_config(flags.config, flags.overrides, prefer);
  cfg.experiment.source.seed = cfg.seed;
  cfg.experiment.adapt.seed = cfg.seed;
  write_resolved_config(cfg, cfg.paths.out);
  return cfg;
}

LabeledDataset dataset_for(const RunConfig& cfg, const std::string& dir, Split split) {
  if (!dir.empty()) return load_dataset(dir);
  return make_split(cfg.experiment, cfg.seed, split);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Per-class table used both on stdout and in the accuracy CSVs.
std::string accuracy_table(const Accuracy& acc) {
  std::string out = "class,accuracy\n";
  for (std::size_t k = 0; k < acc.per_class.size(); ++k) {
    const std::string name = k < class_names().size() ? class_names()[k] : "class" + std::to_string(k);
    out += name + "," + fmt(acc.per_class[k]) + "\n";
  }
  out += "mean," + fmt(acc.mean) + "\n";
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<fs::path> png_files(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_gen_data(const fs::path& out, const std::string& spec, std::size_t n, int classes,
                 std::uint64_t seed) {
  const LabeledDataset ds = gen_dataset(domain_by_name(spec), n, classes, seed);
  save_dataset(ds, out.string());
  std::cout << "wrote " << ds.size() << " images to " << out.string() << "\n";
  return 0;
}

struct AugmentFlags {
  std::string in;
  std::string out;
  int nu = 16;
  double a = 1.0;
  double b = 1.0;
  bool blend = false;
  double overlap = SpmParams{}.overlap_fraction;
  std::uint64_t seed = 0;
};

// Every input image gets one SPM draw from its own stream, so blend and
// non-blend runs with the same seed share lambda and the permutation.
int cmd_augment(const AugmentFlags& f) {
  SpmParams check;
  check.nu_options = {f.nu};
  check.validate();
  if (!(f.a > 0.0) || !(f.b > 0.0)) throw std::invalid_argument("--a and --b must be positive");
  const fs::path in(f.in);
  const fs::path out(f.out);
  const auto files = png_files(in);
  if (files.empty()) throw std::runtime_error("no PNG files under " + f.in);
  std::uint64_t index = 0;
  for (const auto& file : files) {
    const Image img = resize_to_canonical(read_png(file.string()));
    Rng rng(derive_seed({f.seed, tag(Stream::kPreview), index++}));
    const double lambda = sample_lambda(f.a, f.b, rng);
    const Image mixed = spm_mix(img, f.nu, lambda, rng, f.blend, f.overlap);
    const fs::path rel = fs::relative(file, in);
    for (const auto& [sub, image] : {std::pair{"before", &img}, std::pair{"after", &mixed}}) {
      const fs::path dst = out / sub / rel;
      fs::create_directories(dst.parent_path());
      write_png(dst.string(), *image);
    }
  }
  std::cout << "augmented " << files.size() << " images into " << out.string() << "\n";
  return 0;
}

int cmd_train_source(const ConfigFlags& flags) {
  const RunConfig cfg = resolve(flags, "source");
  const ExperimentConfig& e = cfg.experiment;
  const LabeledDataset train = dataset_for(cfg, cfg.paths.source_data, Split::kSourceTrain);
  const LabeledDataset heldout = make_split(e, cfg.seed, Split::kSourceTest);
  const SourceResult result = train_source(e.arch, train, &heldout, e.source);

  const fs::path out(cfg.paths.out);
  save_checkpoint((out / "checkpoint").string(), e.arch, result.params);
  std::string log = "epoch,loss,train_accuracy\n";
  for (const auto& row : result.log) {
    log += std::to_string(row.epoch) + "," + fmt(row.loss) + "," + fmt(row.train_accuracy) + "\n";
  }
  write_text(out / "source_metrics.csv", log);
  const std::string table = accuracy_table(*result.heldout);
  write_text(out / "heldout_accuracy.csv", table);
  std::cout << "source held-out accuracy\n" << table;
  return 0;
}

void dump_spm_preview(const fs::path& dir, const LabeledDataset& target, const SpmParams& params,
                      std::uint64_t seed) {
  fs::create_directories(dir);
  const std::size_t count = std::min<std::size_t>(8, target.size());
  const std::vector<double> progress{0.0, 0.5, 1.0};
  for (std::size_t i = 0; i < count; ++i) {
    const std::string stem = "img" + std::to_string(i);
    write_png((dir / (stem + "_before.png")).string(), target.images[i]);
    for (double p : progress) {
      Rng rng(derive_seed({seed, tag(Stream::kPreview), i, static_cast<std::uint64_t>(p * 100)}));
      const int nu = draw_nu(params, rng);
      const double lambda = sample_lambda(schedule_a_at(p, params.a_start, params.a_end), params.b, rng);
      const Image mixed = spm_mix(target.images[i], nu, lambda, rng, params.blend, params.overlap_fraction);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_p%03d.png", stem.c_str(), static_cast<int>(p * 100));
      write_png((dir / name).string(), mixed);
    }
  }
}

int cmd_adapt(const ConfigFlags& flags, const std::string& preview) {
  const RunConfig cfg = resolve(flags, "adapt");
  if (cfg.paths.checkpoint.empty()) throw std::invalid_argument("adapt needs paths.checkpoint");
  const Checkpoint ck = load_checkpoint(cfg.paths.checkpoint);
  const LabeledDataset target = dataset_for(cfg, cfg.paths.target_data, Split::kTargetTrain);
  const LabeledDataset eval = dataset_for(cfg, cfg.paths.eval_data, Split::kTargetTest);
  const fs::path out(cfg.paths.out);
  if (!preview.empty()) dump_spm_preview(preview, target, cfg.experiment.adapt.spm, cfg.seed);

  const auto observer = [](const MetricsRow& row) {
    if (!row.target_accuracy) return;
    std::cout << "epoch " << row.epoch << " loss " << fmt(row.l_total) << " pl_acc " << fmt(row.pl_accuracy)
              << " target_acc " << fmt(*row.target_accuracy) << "\n";
  };
  AdaptResult result;
  try {
    result = adapt(ck.arch, ck.params, target.images, target.labels, cfg.experiment.adapt, &eval, observer);
  } catch (const DivergenceError& e) {
    save_checkpoint((out / "checkpoint_last_good").string(), ck.arch, e.last_good());
    throw;
  }
  save_checkpoint((out / "checkpoint").string(), ck.arch, result.params);
  write_metrics_csv((out / "metrics.csv").string(), result.metrics);
  if (result.final_accuracy) std::cout << "target accuracy\n" << accuracy_table(*result.final_accuracy);
  return 0;
}

int cmd_eval(const ConfigFlags& flags, const std::string& split) {
  const RunConfig cfg = resolve(flags, "");
  if (cfg.paths.checkpoint.empty()) throw std::invalid_argument("eval needs paths.checkpoint");
  const Checkpoint ck = load_checkpoint(cfg.paths.checkpoint);
  const LabeledDataset data = dataset_for(cfg, cfg.paths.eval_data, split_from_string(split));
  const Accuracy acc = evaluate(ck.arch, ck.params, data);
  const std::string table = accuracy_table(acc);
  write_text(fs::path(cfg.paths.out) / "eval_accuracy.csv", table);
  std::cout << table;
  return 0;
}

int cmd_ablate(const ConfigFlags& flags) {
  const RunConfig cfg = resolve(flags, "adapt");
  const auto log = [](const std::string& line) { std::cout << line << std::endl; };
  const AblationResult result = ablate(cfg.experiment, ablation_variants(), log);
  const fs::path out(cfg.paths.out);
  write_ablation_csv((out / "ablation.csv").string(), result, cfg.experiment.seeds);
  std::string src = "seed,source_only\n";
  for (std::size_t i = 0; i < result.source_only.size(); ++i) {
    src += std::to_string(cfg.experiment.seeds[i]) + "," + fmt(result.source_only[i]) + "\n";
  }
  write_text(out / "source_only.csv", src);
  for (const auto& row : result.rows) std::cout << row.variant.name << " " << fmt(row.mean) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shuffle PatchMix source-free adaptation toolkit"};
  app.require_subcommand(1);

  std::string gen_out, gen_spec = "photo";
  std::size_t gen_n = 0;
  int gen_classes = 4;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labelled dataset");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--spec", gen_spec, "domain preset: photo, sketch, cartoon, texture");
  gen->add_option("--n", gen_n, "number of images")->required();
  gen->add_option("--classes", gen_classes, "number of classes (2-4)");
  gen->add_option("--seed", gen_seed, "generator seed");

  AugmentFlags aug;
  auto* augment = app.add_subcommand("augment", "Apply SPM to every PNG under a directory");
  augment->add_option("--in", aug.in, "input directory")->required()->check(CLI::ExistingDirectory);
  augment->add_option("--out", aug.out, "output directory (before/ and after/ subtrees)")->required();
  augment->add_option("--nu", aug.nu, "patch count (perfect square)");
  augment->add_option("--a", aug.a, "Beta shape a");
  augment->add_option("--b", aug.b, "Beta shape b");
  augment->add_flag("--blend", aug.blend, "cross-fade enlarged patches");
  augment->add_option("--overlap", aug.overlap, "overlap fraction used with --blend");
  augment->add_option("--seed", aug.seed, "seed");

  ConfigFlags src_flags, adapt_flags, eval_flags, ablate_flags;
  auto* train = app.add_subcommand("train-source", "Train the source model");
  add_config_flags(train, src_flags);

  std::string preview;
  auto* ad = app.add_subcommand("adapt", "Adapt a source checkpoint to the target domain");
  add_config_flags(ad, adapt_flags);
  ad->add_option("--spm-preview", preview, "write before/after SPM panels for a few target images");

  std::string split = "target-test";
  auto* ev = app.add_subcommand("eval", "Per-class and mean accuracy of a checkpoint");
  add_config_flags(ev, eval_flags);
  ev->add_option("--split", split, "generated split used when paths.eval_data is empty");

  auto* ab = app.add_subcommand("ablate", "Component ablation over the configured seeds");
  add_config_flags(ab, ablate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen_data(gen_out, gen_spec, gen_n, gen_classes, gen_seed);
    if (*augment) return cmd_augment(aug);
    if (*train) return cmd_train_source(src_flags);
    if (*ad) return cmd_adapt(adapt_flags, preview);
    if (*ev) return cmd_eval(eval_flags, split);
    if (*ab) return cmd_ablate(ablate_flags);
  } catch (const std::exception& e) {
    std::cerr << "spmda: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
