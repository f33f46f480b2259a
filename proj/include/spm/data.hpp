#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spm/image.hpp"

namespace spm {

enum class Background { kSolid, kNoise, kStripes };
enum class Palette { kPastel, kWhite };
enum class Stroke { kFilled, kOutline };

/// Rendering style of one synthetic domain. Shape geometry never depends on
/// any of these fields.
struct DomainSpec {
  std::string name = "photo";
  Background background = Background::kSolid;
  Palette palette = Palette::kPastel;
  Stroke stroke = Stroke::kFilled;
  double hue_shift = 0.0;     ///< class-independent hue rotation, in turns
  double noise_sigma = 0.02;  ///< additive per-pixel Gaussian noise
  double stroke_width = 1.6;  ///< outline width in pixels
  double stroke_jitter = 0.0; ///< amplitude of the wobble applied to outlines
  double fill_opacity = 0.0;  ///< interior shading of outlined shapes

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

/// Solid pastel backgrounds with filled shapes.
DomainSpec photo_like();
/// White background with dark, jittered outline strokes and light shading.
DomainSpec sketch_like();
/// Striped pastel background with thick outlines.
DomainSpec cartoon_like();
/// Noise-textured background with filled shapes.
DomainSpec texture_like();

/// Looks up a preset by name ("photo", "photo-like", "sketch", ...).
DomainSpec domain_by_name(const std::string& name);

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"circle", "square", "triangle", "cross"};
  return names;
}

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  DomainSpec domain;
  std::uint64_t seed = 0;
  int num_classes = 4;

  std::size_t size() const { return images.size(); }
  std::vector<int> histogram() const;
};

/// n canonical 32x32 RGB images with balanced labels. Labels and shape
/// geometry depend only on (n, c, seed); the domain controls styling.
/// Intensities are multiples of 1/255, so a PNG round trip is lossless.
LabeledDataset gen_dataset(const DomainSpec& spec, std::size_t n, int c, std::uint64_t seed);

/// Writes <root>/<domain>/<class>/<index>.png plus <root>/manifest.json.
void save_dataset(const LabeledDataset& ds, const std::string& root);

/// Loads a dataset written by save_dataset. PNGs present on disk but absent
/// from the manifest are skipped and reported in `warnings` (and on stderr).
LabeledDataset load_dataset(const std::string& root, std::vector<std::string>* warnings = nullptr);

std::string to_string(Background b);
std::string to_string(Palette p);
std::string to_string(Stroke s);
Background background_from_string(const std::string& s);
Palette palette_from_string(const std::string& s);
Stroke stroke_from_string(const std::string& s);

}  // namespace spm
