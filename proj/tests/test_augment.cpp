#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "spm/augment.hpp"
#include "test_support.hpp"

using namespace spm;
using spm::testing::random_image;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments sample_moments(double a, double b, int n, std::uint64_t seed) {
  Rng rng(seed);
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_lambda(a, b, rng);
    s += x;
    s2 += x * x;
  }
  Moments m;
  m.mean = s / n;
  m.var = s2 / n - m.mean * m.mean;
  return m;
}

// Pixels whose centre lies within the half band of an interior tile boundary.
bool in_band(int i, int side, int extent, double e) {
  const double c = i + 0.5;
  for (int b = side; b < extent; b += side) {
    if (std::abs(c - b) < e) return true;
  }
  return false;
}

}  // namespace

TEST(BetaSampler, UniformCaseHasMeanOneHalf) {
  EXPECT_NEAR(sample_moments(1.0, 1.0, 100000, 11).mean, 0.5, 0.01);
}

TEST(BetaSampler, SkewedCaseMatchesAnalyticMean) {
  EXPECT_NEAR(sample_moments(8.0, 1.0, 100000, 12).mean, 8.0 / 9.0, 0.01);
}

TEST(BetaSampler, RejectsNonPositiveShapes) {
  Rng rng(1);
  EXPECT_THROW(sample_lambda(0.0, 1.0, rng), std::domain_error);
  EXPECT_THROW(sample_lambda(1.0, -2.0, rng), std::domain_error);
}

TEST(BetaSampler, DrawsStayInUnitInterval) {
  Rng rng(3);
  for (double a : {1e-3, 0.5, 1.0, 8.0, 1e6}) {
    for (int i = 0; i < 2000; ++i) {
      const double x = sample_lambda(a, 1.0, rng);
      ASSERT_GE(x, 0.0);
      ASSERT_LE(x, 1.0);
    }
  }
}

TEST(Schedule, EndpointsAndMidpoint) {
  EXPECT_EQ(schedule_a(0, 100, 8.0, 1.0), 8.0);
  EXPECT_EQ(schedule_a(100, 100, 8.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(schedule_a(50, 100, 8.0, 1.0), 4.5);
  EXPECT_EQ(schedule_a_at(0.0, 8.0, 1.0), 8.0);
  EXPECT_EQ(schedule_a_at(1.0, 8.0, 1.0), 1.0);
}

TEST(Schedule, NonIncreasingInEpoch) {
  double prev = schedule_a(0, 37, 8.0, 1.0);
  for (int e = 1; e <= 37; ++e) {
    const double a = schedule_a(e, 37, 8.0, 1.0);
    EXPECT_LE(a, prev);
    prev = a;
  }
}

TEST(Partition, FourTilesOfSixteen) {
  const Image img = random_image(5);
  const PatchPartition part = partition_patches(img, 4);
  ASSERT_EQ(part.tiles.size(), 4u);
  for (int t = 0; t < 4; ++t) {
    const Image& tile = part.tiles[t];
    EXPECT_EQ(tile.height, 16);
    EXPECT_EQ(tile.width, 16);
    const int oy = (t / 2) * 16, ox = (t % 2) * 16;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) ASSERT_EQ(tile.at(y, x, c), img.at(oy + y, ox + x, c));
  }
}

TEST(Partition, SingleTileIsTheInput) {
  const Image img = random_image(6);
  const PatchPartition part = partition_patches(img, 1);
  ASSERT_EQ(part.tiles.size(), 1u);
  EXPECT_EQ(part.tiles[0], img);
}

TEST(Partition, RejectsNonCanonicalAndNonSquareCounts) {
  EXPECT_THROW(partition_patches(random_image(7, 30), 4), std::invalid_argument);
  EXPECT_THROW(partition_patches(random_image(7), 8), std::invalid_argument);
}

TEST(SpmMix, LambdaOneIsIdentity) {
  const Image img = random_image(8);
  for (int nu : {1, 4, 16, 64, 256}) {
    for (bool blend : {false, true}) {
      Rng rng(nu);
      EXPECT_EQ(spm_mix(img, nu, 1.0, rng, blend, 0.3), img);
    }
  }
}

TEST(SpmMix, LambdaZeroPermutesPixels) {
  const Image img = random_image(9);
  auto sorted = [](std::vector<float> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  for (int nu : {4, 16, 64, 256}) {
    Rng rng(100 + nu);
    const Image out = spm_mix(img, nu, 0.0, rng, false, 0.3);
    EXPECT_EQ(sorted(out.data), sorted(img.data)) << "nu=" << nu;
  }
}

TEST(SpmMix, HalfMixMatchesLoopOracle) {
  const Image img = random_image(10);
  Rng rng(77);
  const Image out = spm_mix(img, 4, 0.5, rng, false, 0.3);

  Rng replay(77);
  const std::vector<int> perm = random_permutation(4, replay);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const int dest = (y / 16) * 2 + x / 16;
      const int src = perm[dest];
      const int sy = (src / 2) * 16 + y % 16;
      const int sx = (src % 2) * 16 + x % 16;
      for (int c = 0; c < 3; ++c) {
        const float expected = static_cast<float>(0.5 * img.at(y, x, c) + 0.5 * img.at(sy, sx, c));
        ASSERT_EQ(out.at(y, x, c), expected) << y << "," << x << "," << c;
      }
    }
  }
}

TEST(SpmMix, LinearInLambda) {
  const Image img = random_image(11);
  for (bool blend : {false, true}) {
    for (double lambda : {0.1, 0.37, 0.8}) {
      Rng r0(5), r1(5);
      const Image zero = spm_mix(img, 16, 0.0, r0, blend, 0.3);
      const Image mixed = spm_mix(img, 16, lambda, r1, blend, 0.3);
      for (std::size_t i = 0; i < img.size(); ++i) {
        ASSERT_NEAR(mixed.data[i], lambda * img.data[i] + (1 - lambda) * zero.data[i], 1e-6);
      }
    }
  }
}

TEST(SpmMix, RejectsLambdaOutsideUnitInterval) {
  Rng rng(1);
  EXPECT_THROW(spm_mix(random_image(1), 4, 1.5, rng, false, 0.3), std::invalid_argument);
}

TEST(Blend, ConstantImageIsPreserved) {
  Image img(32, 32, 3, 0.42f);
  for (int nu : {4, 16, 64, 256}) {
    for (double overlap : {0.1, 0.3, 0.9}) {
      PatchLayout layout = patch_layout(img, nu);
      Rng rng(nu);
      layout.permutation = random_permutation(nu, rng);
      const Image out = shuffle_patches(img, layout, true, overlap);
      for (float v : out.data) ASSERT_NEAR(v, 0.42f, 1e-6);
    }
  }
}

TEST(Blend, OnlyBandPixelsDifferFromHardShuffle) {
  const Image img = random_image(12);
  for (int nu : {4, 16, 64}) {
    PatchLayout layout = patch_layout(img, nu);
    Rng rng(nu + 1);
    layout.permutation = random_permutation(nu, rng);
    const Image hard = shuffle_patches(img, layout, false, 0.3);
    const Image soft = shuffle_patches(img, layout, true, 0.3);
    const double e = blend_half_band(layout.patch_h, 0.3);
    int band_pixels = 0, changed = 0;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        const bool band = in_band(y, layout.patch_h, 32, e) || in_band(x, layout.patch_w, 32, e);
        band_pixels += band;
        for (int c = 0; c < 3; ++c) {
          if (!band) {
            ASSERT_EQ(soft.at(y, x, c), hard.at(y, x, c)) << "nu=" << nu << " at " << y << "," << x;
          } else if (soft.at(y, x, c) != hard.at(y, x, c)) {
            ++changed;
          }
        }
      }
    }
    EXPECT_GT(band_pixels, 0);
    EXPECT_GT(changed, 0);
  }
}

TEST(StrongAugment, RhoZeroNeverTakesSpmBranch) {
  SpmParams params;
  params.rho = 0.0;
  const Image img = random_image(13);
  Rng rng(14);
  int taken = 0;
  for (int i = 0; i < 10000; ++i) taken += strong_augment(img, params, 0.5, rng).decision.apply;
  EXPECT_EQ(taken, 0);
}

TEST(StrongAugment, LambdaOneReducesToStandardPipeline) {
  SpmParams params;
  params.rho = 1.0;
  const Image img = random_image(15);
  for (std::uint64_t s = 0; s < 20; ++s) {
    SpmDecision d;
    d.apply = true;
    d.nu = 16;
    d.lambda = 1.0;
    const Image with_spm = strong_augment_with(img, d, params, 1000 + s, s);
    Rng plain(s);
    EXPECT_EQ(with_spm, standard_strong(img, plain));
  }
}

TEST(StrongAugment, BranchFrequencyMatchesRho) {
  SpmParams params;
  Rng rng(16);
  int taken = 0;
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) taken += draw_spm_decision(params, 0.3, rng).apply;
  EXPECT_NEAR(static_cast<double>(taken) / n, 0.8, 0.01);
}

TEST(StrongAugment, FixedSeedIsDeterministic) {
  const Image img = random_image(17);
  SpmParams params;
  Rng a(18), b(18);
  for (int i = 0; i < 20; ++i) {
    const auto va = strong_augment(img, params, 0.2, a);
    const auto vb = strong_augment(img, params, 0.2, b);
    EXPECT_EQ(va.image, vb.image);
    EXPECT_EQ(va.decision.lambda, vb.decision.lambda);
  }
}

TEST(WeakAugment, DoubleFlipRestoresCrop) {
  const Image img = random_image(19);
  const Image crop = crop_shifted(img, 1, -2);
  EXPECT_EQ(hflip(hflip(crop)), crop);
}

TEST(WeakAugment, DeterministicAndShapePreserving) {
  const Image img = random_image(20);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng a(s), b(s);
    const Image out = weak_augment(img, a);
    EXPECT_EQ(out, weak_augment(img, b));
    EXPECT_TRUE(out.same_shape(img));
  }
}
