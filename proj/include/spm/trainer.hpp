#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spm/augment.hpp"
#include "spm/data.hpp"
#include "spm/model.hpp"
#include "spm/reweight.hpp"

namespace spm {

struct SourceConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdaptConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 2e-4;
  /// Heavy-ball momentum of the SGD optimiser for theta_t.
  double sgd_momentum = 0.9;
  double weight_decay = 0.0;
  int k_neighbors = 3;
  SpmParams spm;
  WarmupPolicy warmup;
  /// Confidence-margin reweighting; off pins gamma to 0 (all weights 1).
  bool reweight = true;
  std::size_t bank_capacity = 256;
  double temperature = 0.07;
  /// Momentum of the slowly updated model.
  double ema_momentum = 0.999;
  /// Draw the SPM patch count once per mini-batch (otherwise per image).
  bool nu_per_batch = true;
  /// Evaluate every this many epochs (the last epoch is always evaluated).
  int eval_every = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Training progress used by the Beta schedule and the warmup ramp: 0 at the
/// first epoch, 1 at the last.
double epoch_progress(int epoch, int total_epochs);

struct Accuracy {
  std::vector<double> per_class;  ///< NaN for classes absent from the set
  double mean = 0.0;              ///< macro average over present classes
  double overall = 0.0;
};

/// Per-class accuracy of predicted against true labels.
Accuracy score_predictions(std::span<const int> pred, std::span<const int> labels, int num_classes);

Accuracy evaluate(const ArchConfig& arch, const ParamSet<float>& params, const LabeledDataset& ds,
                  int batch_size = 256);
std::vector<int> predict(const ArchConfig& arch, const ParamSet<float>& params,
                         std::span<const Image> images, int batch_size = 256);

struct SourceEpoch {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

struct SourceResult {
  ParamSet<float> params;
  std::vector<SourceEpoch> log;
  std::optional<Accuracy> heldout;
};

/// Plain cross-entropy training on weakly augmented labelled source images.
SourceResult train_source(const ArchConfig& arch, const LabeledDataset& train,
                          const LabeledDataset* heldout, const SourceConfig& cfg);

struct MetricsRow {
  long step = 0;
  int epoch = 0;
  double l_ce = 0.0;
  double l_div = 0.0;
  double l_ctr = 0.0;
  double l_total = 0.0;
  double mean_weight = 0.0;  ///< batch mean of the raw confidence-margin weights
  double spm_a = 0.0;
  double gamma = 0.0;
  double pl_accuracy = 0.0;
  std::optional<double> target_accuracy;
};

struct AdaptResult {
  ParamSet<float> params;
  ParamSet<float> momentum_params;
  std::vector<MetricsRow> metrics;
  std::optional<Accuracy> final_accuracy;
  std::size_t strong_views = 0;
  std::size_t spm_views = 0;
};

/// Thrown when the objective becomes non-finite; carries the parameters from
/// the last completed step.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, ParamSet<float> last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const ParamSet<float>& last_good() const { return last_good_; }

 private:
  ParamSet<float> last_good_;
};

using MetricsObserver = std::function<void(const MetricsRow&)>;

/// Source-free adaptation of theta_s to the unlabelled target images.
/// `hidden_labels` (may be empty) only feed the pseudo-label accuracy column;
/// `eval_set` (may be null) is only used for the per-epoch accuracy.
AdaptResult adapt(const ArchConfig& arch, const ParamSet<float>& theta_s,
                  std::span<const Image> target, std::span<const int> hidden_labels,
                  const AdaptConfig& cfg, const LabeledDataset* eval_set = nullptr,
                  const MetricsObserver& observer = {});

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

/// Everything needed to reproduce one source -> target experiment.
struct ExperimentConfig {
  ArchConfig arch;
  SourceConfig source;
  AdaptConfig adapt;
  DomainSpec source_domain = photo_like();
  DomainSpec target_domain = sketch_like();
  std::size_t n_source = 2000;
  std::size_t n_target = 2000;
  std::size_t n_source_test = 1000;
  std::size_t n_target_test = 1000;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

/// The four generated splits of one experiment seed.
enum class Split { kSourceTrain, kSourceTest, kTargetTrain, kTargetTest };

Split split_from_string(const std::string& name);  ///< "source-train", "target-test", ...
LabeledDataset make_split(const ExperimentConfig& cfg, std::uint64_t seed, Split split);

struct SeedSetup {
  std::uint64_t seed = 0;
  ParamSet<float> theta_s;
  Accuracy source_heldout;
  Accuracy target_source_only;
  LabeledDataset target_train;
  LabeledDataset target_test;
};

/// Generates the seed's four splits, trains the source model and records its
/// source and target accuracy.
SeedSetup prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// One row of the component ablation.
struct AblationVariant {
  std::string name;
  bool spm = false;
  bool overlap = false;
  bool reweight = false;
};

/// baseline, +reweight, +SPM, +SPM+overlap, all.
std::vector<AblationVariant> ablation_variants();

/// Copy of `base` with the variant's components switched on or off.
AdaptConfig variant_config(const AdaptConfig& base, const AblationVariant& v);

struct AblationRow {
  AblationVariant variant;
  std::vector<double> accuracies;  ///< one per seed, mean per-class accuracy
  double mean = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<double> source_only;  ///< per seed
};

using ProgressLog = std::function<void(const std::string&)>;

AblationResult ablate(const ExperimentConfig& cfg, const std::vector<AblationVariant>& variants,
                      const ProgressLog& log = {});

void write_ablation_csv(const std::string& path, const AblationResult& result,
                        const std::vector<std::uint64_t>& seeds);

}  // namespace spm
