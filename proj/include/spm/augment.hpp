#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spm/image.hpp"
#include "spm/rng.hpp"

namespace spm {

/// Shuffle PatchMix configuration.
struct SpmParams {
  /// Candidate patch counts; each must be a perfect square.
  std::vector<int> nu_options{4, 16, 64, 256};
  /// Beta shape `a` is annealed linearly from a_start to a_end over training.
  double a_start = 8.0;
  double a_end = 1.0;
  double b = 1.0;
  /// Probability that a strong augmentation goes through SPM first.
  double rho = 0.8;
  /// Total linear enlargement of each extracted patch (split over both edges).
  double overlap_fraction = 0.30;
  /// Cross-fade enlarged patches with their neighbours.
  bool blend = true;

  void validate() const;
};

struct PatchLayout {
  int grid_side = 1;
  int patch_h = 0;
  int patch_w = 0;
  /// Destination tile p receives source tile permutation[p]; row-major tiles.
  std::vector<int> permutation;

  int count() const { return grid_side * grid_side; }
};

struct PatchPartition {
  PatchLayout layout;
  std::vector<Image> tiles;
};

/// One draw from Beta(a, b) via the ratio of two gamma variates.
double sample_lambda(double a, double b, Rng& rng);

/// Linear schedule of the Beta shape: a_start at epoch 0, a_end at total_epochs.
double schedule_a(int epoch, int total_epochs, double a_start, double a_end);
/// Same schedule parameterised by training progress in [0, 1].
double schedule_a_at(double progress, double a_start, double a_end);

/// Identity layout of nu equal tiles over a canonical image.
PatchLayout patch_layout(const Image& img, int nu);

/// Non-overlapping tiling of a canonical image into nu tiles with the
/// identity permutation.
PatchPartition partition_patches(const Image& img, int nu);

std::vector<int> random_permutation(int n, Rng& rng);

/// Reassembles the image with tiles moved according to layout.permutation.
/// With blend set, each tile is read from a source window enlarged by
/// overlap_fraction and cross-faded with its neighbours over linear ramps.
Image shuffle_patches(const Image& img, const PatchLayout& layout, bool blend,
                      double overlap_fraction);

/// Shuffle PatchMix: lambda * img + (1 - lambda) * shuffled(img).
Image spm_mix(const Image& img, int nu, double lambda, Rng& rng, bool blend,
              double overlap_fraction);

/// Half-width of the cross-fade band around interior tile boundaries, in pixels.
double blend_half_band(int patch_side, double overlap_fraction);

/// Outcome of the per-image SPM coin flip.
struct SpmDecision {
  bool apply = false;
  int nu = 1;
  double lambda = 1.0;
  double a = 1.0;
};

/// Draws whether SPM is applied (probability rho), the patch count (uniform
/// over nu_options unless fixed_nu is given) and lambda ~ Beta(a(progress), b).
SpmDecision draw_spm_decision(const SpmParams& params, double progress,
                              Rng& rng, std::optional<int> fixed_nu = {});

int draw_nu(const SpmParams& params, Rng& rng);

Image hflip(const Image& img);
/// Shifted crop of a border-replicated image: output(y, x) = img(y + dy, x + dx).
Image crop_shifted(const Image& img, int dy, int dx);

/// Weak view: random crop with 2-pixel padding and a horizontal flip (p = 0.5).
Image weak_augment(const Image& img, Rng& rng);

/// Desk-scale stand-in for the MoCo-v2 recipe: random resized crop
/// (scale 0.2-1.0), horizontal flip, brightness/contrast jitter (+-0.4) and
/// channel-mean grayscale (p = 0.2).
Image standard_strong(const Image& img, Rng& rng);

/// Applies SPM (if decided) and then the standard strong pipeline. The SPM
/// transform and the standard pipeline use independent streams so a decision
/// with lambda = 1 reproduces the SPM-free output bit for bit.
Image strong_augment_with(const Image& img, const SpmDecision& decision,
                          const SpmParams& params, std::uint64_t spm_seed,
                          std::uint64_t pipeline_seed);

struct StrongView {
  Image image;
  SpmDecision decision;
};

StrongView strong_augment(const Image& img, const SpmParams& params,
                          double progress, Rng& rng,
                          std::optional<int> fixed_nu = {});

}  // namespace spm
