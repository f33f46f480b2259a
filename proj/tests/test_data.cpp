#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "spm/data.hpp"
#include "spm/json_io.hpp"
#include "spm/png_io.hpp"
#include "test_support.hpp"

using namespace spm;
using spm::testing::TempDir;

TEST(GenDataset, SameArgumentsGiveIdenticalData) {
  const auto a = gen_dataset(sketch_like(), 24, 4, 5);
  const auto b = gen_dataset(sketch_like(), 24, 4, 5);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.images, b.images);
}

TEST(GenDataset, ClassesAreBalanced) {
  const auto ds = gen_dataset(photo_like(), 40, 4, 1);
  EXPECT_EQ(ds.histogram(), (std::vector<int>{10, 10, 10, 10}));
  for (const auto& img : ds.images) EXPECT_TRUE(img.is_canonical());
}

TEST(GenDataset, LabelsDoNotDependOnStyle) {
  DomainSpec striped = photo_like();
  striped.background = Background::kStripes;
  const auto a = gen_dataset(photo_like(), 30, 3, 8);
  const auto b = gen_dataset(striped, 30, 3, 8);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, b.images);
}

TEST(GenDataset, RejectsTooFewImages) {
  EXPECT_THROW(gen_dataset(photo_like(), 3, 4, 0), std::invalid_argument);
  EXPECT_THROW(gen_dataset(photo_like(), 10, 5, 0), std::invalid_argument);
}

TEST(GenDataset, DomainsDifferOnlyInStyle) {
  const auto photo = gen_dataset(photo_like(), 8, 4, 2);
  const auto sketch = gen_dataset(sketch_like(), 8, 4, 2);
  EXPECT_EQ(photo.labels, sketch.labels);
  EXPECT_NE(photo.images, sketch.images);
}

TEST(Presets, LookupByName) {
  EXPECT_EQ(domain_by_name("photo"), photo_like());
  EXPECT_EQ(domain_by_name("sketch-like"), sketch_like());
  EXPECT_EQ(domain_by_name("cartoon"), cartoon_like());
  EXPECT_EQ(domain_by_name("texture"), texture_like());
  EXPECT_THROW(domain_by_name("painting"), std::invalid_argument);
}

TEST(Presets, JsonRoundTrip) {
  for (const auto& d : {photo_like(), sketch_like(), cartoon_like(), texture_like()}) {
    EXPECT_EQ(domain_from_json(domain_to_json(d)), d);
  }
}

TEST(SaveLoad, RoundTripIsLossless) {
  TempDir dir("spm_data");
  const auto ds = gen_dataset(sketch_like(), 12, 4, 3);
  save_dataset(ds, dir.str());
  ASSERT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  ASSERT_TRUE(std::filesystem::exists(dir / "sketch/circle"));
  const auto back = load_dataset(dir.str());
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.domain, ds.domain);
  EXPECT_EQ(back.histogram(), ds.histogram());
}

TEST(SaveLoad, StrayImagesAreIgnoredWithWarning) {
  TempDir dir("spm_data");
  const auto ds = gen_dataset(photo_like(), 8, 4, 4);
  save_dataset(ds, dir.str());
  write_png((dir / "photo/square/stray.png").string(), ds.images[0]);
  std::vector<std::string> warnings;
  const auto back = load_dataset(dir.str(), &warnings);
  EXPECT_EQ(back.size(), 8u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("stray.png"), std::string::npos);
}

TEST(SaveLoad, MissingOrCorruptManifestFails) {
  TempDir dir("spm_data");
  EXPECT_THROW(load_dataset(dir.str()), std::runtime_error);
  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(load_dataset(dir.str()), std::runtime_error);
}

TEST(Png, ReadBackEqualsQuantisedImage) {
  TempDir dir("spm_png");
  Image img(4, 5, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>(i) / img.size();
  write_png((dir / "x.png").string(), img);
  const Image back = read_png((dir / "x.png").string());
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back.data[i], quantize8(img.data[i]) / 255.0f);
}
