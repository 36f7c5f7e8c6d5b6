#include <gtest/gtest.h>

#include <cmath>

#include "agcl/core/random.hpp"
#include "agcl/data/phantom.hpp"
#include "agcl/sampling/augment.hpp"
#include "agcl/sampling/minibatch.hpp"
#include "agcl/sampling/patches.hpp"

using namespace agcl;
using namespace agcl::data;
using namespace agcl::sampling;

namespace {

struct Scene {
  PhantomSample sample;
  AttentionMaps attention;
};

Scene scene(std::uint64_t seed, double q = 1.0) {
  Scene s;
  s.sample = generate_phantom(PhantomConfig{}, seed);
  s.sample.id = seed;
  s.attention = simulate_attention(s.sample, q, seed + 1);
  return s;
}

double fg_ratio(const Mask& y) {
  double n = 0;
  for (auto v : y.values()) n += v;
  return n / double(y.numel());
}

Tensor<float> disk(std::size_t p, double r) {
  Tensor<float> t({p, p});
  const double c = p / 2.0;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      if (std::hypot(i + 0.5 - c, j + 0.5 - c) <= r) t[i * p + j] = 1;
  return t;
}

double dice(const Tensor<float>& a, const Tensor<float>& b) {
  double inter = 0, s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    inter += a[i] * b[i];
    s += a[i] + b[i];
  }
  return 2 * inter / s;
}

std::vector<QueryPatch> patch_pool(std::size_t n_samples, std::size_t per_object) {
  std::vector<QueryPatch> pool;
  for (std::uint64_t s = 0; s < n_samples; ++s) {
    auto sc = scene(s);
    auto ps = extract_query_patches(sc.sample, sc.attention, per_object, 32, s);
    pool.insert(pool.end(), ps.patches.begin(), ps.patches.end());
  }
  return pool;
}

}  // namespace

TEST(Patches, CountAndCentres) {
  auto sc = scene(3, 0.7);
  auto ps = extract_query_patches(sc.sample, sc.attention, 3, 32, 11);
  ASSERT_EQ(ps.patches.size(), 12u);
  EXPECT_TRUE(ps.warnings.empty());
  const std::size_t w = sc.sample.width(), plane = w * sc.sample.height();
  for (const auto& p : ps.patches) {
    EXPECT_EQ(sc.attention.maps[(p.object - 1) * plane + p.center_y * w + p.center_x], 1);
    EXPECT_EQ(p.x.shape(), (Shape{32, 32}));
    EXPECT_EQ(p.c.shape(), (Shape{32, 32}));
    EXPECT_EQ(p.y.shape(), (Shape{32, 32}));
    EXPECT_EQ(p.modality, sc.sample.modality);
    // channel layout of a
    for (std::size_t i = 0; i < 32 * 32; ++i) {
      ASSERT_EQ(p.a[i], p.x[i]);
      ASSERT_EQ(p.a[32 * 32 + i], float(p.c[i]));
    }
    // y is the ground truth window at the same place
    const long top = long(p.center_y) - 16, left = long(p.center_x) - 16;
    for (long i = 0; i < 32; ++i) {
      for (long j = 0; j < 32; ++j) {
        const long yy = top + i, xx = left + j;
        const bool inside = yy >= 0 && yy < 64 && xx >= 0 && xx < 64;
        const auto expect = inside ? sc.sample.gt_masks[(p.object - 1) * plane + yy * w + xx] : 0;
        ASSERT_EQ(p.y[i * 32 + j], expect);
        if (!inside) {
          ASSERT_EQ(p.x[i * 32 + j], 0.0f);
        }
      }
    }
  }
}

TEST(Patches, Deterministic) {
  auto sc = scene(5);
  auto a = extract_query_patches(sc.sample, sc.attention, 4, 16, 9);
  auto b = extract_query_patches(sc.sample, sc.attention, 4, 16, 9);
  ASSERT_EQ(a.patches.size(), b.patches.size());
  for (std::size_t i = 0; i < a.patches.size(); ++i) EXPECT_EQ(a.patches[i].a, b.patches[i].a);
}

TEST(Patches, EmptyAttentionWarnsAndSkips) {
  auto sc = scene(5);
  const std::size_t plane = 64 * 64;
  std::fill_n(sc.attention.maps.data() + 2 * plane, plane, std::uint8_t{0});
  auto ps = extract_query_patches(sc.sample, sc.attention, 3, 32, 1);
  EXPECT_EQ(ps.patches.size(), 9u);
  ASSERT_EQ(ps.warnings.size(), 1u);
  EXPECT_NE(ps.warnings[0].find("object 3"), std::string::npos);
  for (const auto& p : ps.patches) EXPECT_NE(p.object, 3);
}

TEST(Patches, RejectsOversizedPatch) {
  auto sc = scene(1);
  EXPECT_THROW(extract_query_patches(sc.sample, sc.attention, 1, 65, 1), StructuralError);
}

TEST(Patches, AttentionGuidedBeatsUniformPlacement) {
  double guided = 0, uniform_ratio = 0;
  std::size_t n_guided = 0, n_uniform = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto sc = scene(1000 + seed);
    for (const auto& p : extract_query_patches(sc.sample, sc.attention, 2, 32, seed).patches) {
      guided += fg_ratio(p.y);
      ++n_guided;
    }
    Rng rng(seed);
    for (std::size_t o = 0; o < 4; ++o) {
      for (int k = 0; k < 2; ++k) {
        const long cy = long(uniform_index(rng, 64)), cx = long(uniform_index(rng, 64));
        uniform_ratio += fg_ratio(make_patch(sc.sample, sc.attention, o, cy, cx, 32).y);
        ++n_uniform;
      }
    }
  }
  EXPECT_GT(guided / double(n_guided), uniform_ratio / double(n_uniform));
}

TEST(Augment, ShapesAndBinaryAttention) {
  auto sc = scene(2, 0.8);
  auto ps = extract_query_patches(sc.sample, sc.attention, 2, 32, 4);
  for (std::size_t i = 0; i < ps.patches.size(); ++i) {
    auto [v1, v2] = augment_pair(ps.patches[i], i);
    EXPECT_EQ(v1.shape(), ps.patches[i].a.shape());
    EXPECT_EQ(v2.shape(), ps.patches[i].a.shape());
    for (std::size_t q = 0; q < 32 * 32; ++q) {
      ASSERT_TRUE(v1[32 * 32 + q] == 0.0f || v1[32 * 32 + q] == 1.0f);
      ASSERT_TRUE(v2[32 * 32 + q] == 0.0f || v2[32 * 32 + q] == 1.0f);
    }
  }
}

TEST(Augment, DeterministicPerSeed) {
  auto sc = scene(2);
  auto patch = extract_query_patches(sc.sample, sc.attention, 1, 32, 4).patches[0];
  auto a = augment_pair(patch, 17), b = augment_pair(patch, 17), c = augment_pair(patch, 18);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_FALSE(a.first == a.second);
  EXPECT_FALSE(a.first == c.first);
}

TEST(Augment, ParameterRanges) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto p = draw_augment(rng, 32);
    EXPECT_NEAR(p.crop_side * p.crop_side, 0.8 * 32 * 32, 1e-9);
    EXPECT_GE(p.crop_y, 0);
    EXPECT_LE(p.crop_y + p.crop_side, 32);
    EXPECT_GE(p.angle_deg, -30);
    EXPECT_LE(p.angle_deg, 30);
    EXPECT_GE(p.scale_width, 0.7);
    EXPECT_LE(p.scale_width, 1.3);
    EXPECT_GE(p.scale_length, 0.3);
    EXPECT_LE(p.scale_length, 1.7);
  }
}

TEST(Augment, IdentityParametersOnlyCrop) {
  // a full-side "crop" with no rotation or scaling reproduces the input
  Tensor<float> a({2, 8, 8});
  for (std::size_t i = 0; i < 64; ++i) {
    a[i] = float(i) * 0.25f;
    a[64 + i] = float(i % 3 == 0);
  }
  AugmentParams id;
  id.crop_side = 8;
  EXPECT_EQ(apply_augment(a, id), a);
}

TEST(Augment, RotationSelfInverseOnDisk) {
  const auto d = disk(64, 20);
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const double theta = uniform(rng, -30, 30);
    const auto back = rotate(rotate(d, theta, Interp::nearest), -theta, Interp::nearest);
    EXPECT_GE(dice(d, back), 0.95) << "theta " << theta;
  }
}

TEST(Augment, RotationDirectionAndCentre) {
  // a single bright pixel right of centre moves a quarter turn under 90 degrees
  Tensor<float> t({9, 9});
  t[4 * 9 + 7] = 1;
  auto r = rotate(t, 90, Interp::nearest);
  EXPECT_EQ(r[4 * 9 + 4], 0.0f);
  float sum = 0;
  for (auto v : r.values()) sum += v;
  EXPECT_EQ(sum, 1.0f);
  EXPECT_TRUE(r[1 * 9 + 4] == 1.0f || r[7 * 9 + 4] == 1.0f);
}

TEST(Minibatch, PairingContract) {
  auto pool = patch_pool(3, 2);
  auto mb = build_minibatch(pool, 4, {}, 1.0, 5);
  ASSERT_EQ(mb.views.shape(), (Shape{8, 2, 32, 32}));
  EXPECT_EQ(mb.meta.pairing, (std::vector<std::size_t>{1, 0, 3, 2, 5, 4, 7, 6}));
  EXPECT_NO_THROW(mb.meta.validate());
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_TRUE(mb.meta.visible[k]);
    EXPECT_EQ(mb.meta.labels[k], mb.meta.labels[mb.meta.pairing[k]]);
    EXPECT_EQ(mb.sources[k], mb.sources[mb.meta.pairing[k]]);
    const auto& src = pool[mb.sources[k]];
    EXPECT_EQ(mb.meta.labels[k].modality, src.modality);
    EXPECT_EQ(mb.meta.labels[k].object, src.object);
  }
}

TEST(Minibatch, DrawsWithoutReplacement) {
  auto pool = patch_pool(2, 2);  // 16 patches
  auto mb = build_minibatch(pool, 16, {}, 1.0, 9);
  std::set<std::size_t> used(mb.sources.begin(), mb.sources.end());
  EXPECT_EQ(used.size(), 16u);
}

TEST(Minibatch, ModalityFilter) {
  auto pool = patch_pool(12, 1);
  std::size_t m1 = 0;
  for (const auto& p : pool) m1 += p.modality == 1;
  ASSERT_GE(m1, 4u);
  auto mb = build_minibatch(pool, 4, {1}, 1.0, 2);
  for (const auto& l : mb.meta.labels) EXPECT_EQ(l.modality, 1);
  EXPECT_THROW(build_minibatch(pool, m1 + 1, {1}, 1.0, 2), CapacityError);
}

TEST(Minibatch, LabelFractionRoundsUpPerPair) {
  auto pool = patch_pool(3, 2);
  auto mb = build_minibatch(pool, 10, {}, 0.25, 1);
  std::size_t visible = 0;
  for (std::size_t k = 0; k < 20; ++k) {
    visible += mb.meta.visible[k];
    EXPECT_EQ(mb.meta.visible[k], mb.meta.visible[mb.meta.pairing[k]]);
  }
  EXPECT_EQ(visible, 2u * 3u);  // ceil(2.5) pairs
  auto none = build_minibatch(pool, 10, {}, 0.0, 1);
  for (bool v : none.meta.visible) EXPECT_FALSE(v);
}

TEST(Minibatch, CapacityErrorStatesCounts) {
  auto pool = patch_pool(1, 1);
  try {
    build_minibatch(pool, 5, {}, 1.0, 0);
    FAIL();
  } catch (const CapacityError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("5"), std::string::npos);
    EXPECT_NE(msg.find("4 available"), std::string::npos);
  }
}
