#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "agcl/core/random.hpp"
#include "agcl/data/container.hpp"
#include "agcl/data/dataset.hpp"
#include "agcl/data/phantom.hpp"

namespace fs = std::filesystem;
using namespace agcl;
using namespace agcl::data;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("agcl_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += v;
  return n;
}

double mean_dice_at(const Mask& gt, double q) {
  double acc = 0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    acc += mask_dice(gt, simulate_coarse_mask(gt, q, derive_seed(99, {k})));
  }
  return acc / 100;
}

}  // namespace

TEST(Phantom, SameSeedIsBitIdentical) {
  PhantomConfig cfg;
  auto a = generate_phantom(cfg, 42), b = generate_phantom(cfg, 42);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.gt_masks, b.gt_masks);
  EXPECT_EQ(a.modality, b.modality);
  auto c = generate_phantom(cfg, 43);
  EXPECT_FALSE(a.image == c.image);
}

TEST(Phantom, MasksAreDisjointAndNonEmpty) {
  PhantomConfig cfg;
  const std::size_t plane = cfg.height * cfg.width;
  std::set<int> modalities;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto s = generate_phantom(cfg, seed);
    ASSERT_EQ(s.gt_masks.shape(), (Shape{4, 64, 64}));
    modalities.insert(s.modality);
    for (std::size_t q = 0; q < plane; ++q) {
      int sum = 0;
      for (std::size_t o = 0; o < 4; ++o) sum += s.gt_masks[o * plane + q];
      ASSERT_LE(sum, 1) << "seed " << seed << " pixel " << q;
    }
    for (std::size_t o = 0; o < 4; ++o) EXPECT_GT(count(PhantomSample::plane(s.gt_masks, o)), 0u);
  }
  EXPECT_EQ(modalities, (std::set<int>{1, 2}));
}

TEST(Phantom, ObjectIntensityMatchesConfiguredMean) {
  PhantomConfig cfg;
  const std::size_t plane = cfg.height * cfg.width;
  for (std::uint64_t seed : {3u, 4u, 5u, 6u}) {
    auto s = generate_phantom(cfg, seed);
    for (std::size_t o = 0; o < 4; ++o) {
      double sum = 0;
      std::size_t n = 0;
      for (std::size_t q = 0; q < plane; ++q) {
        if (s.gt_masks[o * plane + q]) {
          sum += s.image[q];
          ++n;
        }
      }
      const double mu = cfg.mean(s.modality, int(o + 1)), sd = cfg.sigma(s.modality, int(o + 1));
      EXPECT_NEAR(sum / double(n), mu, 3 * sd / std::sqrt(double(n)))
          << "seed " << seed << " object " << o + 1;
    }
  }
}

TEST(Phantom, ImpossiblePlacementIsConfigError) {
  PhantomConfig cfg;
  cfg.height = cfg.width = 24;
  cfg.axis_min = cfg.axis_max = 7;
  cfg.max_attempts = 50;
  EXPECT_THROW(generate_phantom(cfg, 1), ConfigError);
}

TEST(Phantom, ValidateRejectsBadTables) {
  PhantomConfig cfg;
  cfg.intensity_mean[1] = cfg.intensity_mean[0] - 0.05;  // closer than 2 sigma
  EXPECT_THROW(cfg.validate(), ConfigError);
  PhantomConfig short_table;
  short_table.intensity_sigma.pop_back();
  EXPECT_THROW(short_table.validate(), ConfigError);
  PhantomConfig zero;
  zero.n_objects = 0;
  EXPECT_THROW(zero.validate(), ConfigError);
}

TEST(CoarseMask, QualityOneIsIdentity) {
  auto s = generate_phantom(PhantomConfig{}, 7);
  auto gt = PhantomSample::plane(s.gt_masks, 0);
  EXPECT_EQ(simulate_coarse_mask(gt, 1.0, 123), gt);
}

TEST(CoarseMask, EmptyStaysEmpty) {
  Mask empty({32, 32});
  for (double q : {0.0, 0.3, 0.9}) EXPECT_EQ(count(simulate_coarse_mask(empty, q, 5)), 0u);
}

TEST(CoarseMask, QualityOutsideUnitIntervalIsRangeError) {
  Mask m({8, 8});
  EXPECT_THROW(simulate_coarse_mask(m, -0.1, 1), RangeError);
  EXPECT_THROW(simulate_coarse_mask(m, 1.5, 1), RangeError);
  EXPECT_THROW(simulate_coarse_mask(m, std::nan(""), 1), RangeError);
}

TEST(CoarseMask, DeterministicAndBinary) {
  auto s = generate_phantom(PhantomConfig{}, 7);
  auto gt = PhantomSample::plane(s.gt_masks, 2);
  auto a = simulate_coarse_mask(gt, 0.4, 77), b = simulate_coarse_mask(gt, 0.4, 77);
  EXPECT_EQ(a, b);
  for (auto v : a.values()) EXPECT_LE(v, 1);
}

TEST(CoarseMask, MeanDiceIsMonotoneInQuality) {
  for (std::uint64_t seed : {7u, 11u}) {
    auto s = generate_phantom(PhantomConfig{}, seed);
    for (std::size_t o = 0; o < 4; ++o) {
      auto gt = PhantomSample::plane(s.gt_masks, o);
      double prev = 0;
      for (double q : {0.25, 0.5, 0.75, 1.0}) {
        const double d = mean_dice_at(gt, q);
        EXPECT_GE(d, prev) << "q " << q;
        prev = d;
      }
    }
  }
}

// Regression constant measured once on phantom seed 7, object 1.
TEST(CoarseMask, HalfQualityDiceBand) {
  auto s = generate_phantom(PhantomConfig{}, 7);
  EXPECT_NEAR(mean_dice_at(PhantomSample::plane(s.gt_masks, 0), 0.5), 0.6453, 0.01);
}

TEST(Container, RoundTripAllDtypes) {
  auto dir = scratch_dir("container");
  Tensor<float> f({2, 3}, std::vector<float>{1.5f, -2, 3, 1e-30f, 7, 8});
  Tensor<double> d({4}, std::vector<double>{0.1, -0.2, 1e300, 4});
  Tensor<std::uint8_t> u({2, 2, 2}, std::vector<std::uint8_t>{0, 1, 1, 0, 255, 3, 0, 1});
  write_tensor(dir / "f.agt", f);
  write_tensor(dir / "d.agt", d);
  write_tensor(dir / "u.agt", u);
  EXPECT_EQ(read_tensor<float>(dir / "f.agt"), f);
  EXPECT_EQ(read_tensor<double>(dir / "d.agt"), d);
  EXPECT_EQ(read_tensor<std::uint8_t>(dir / "u.agt"), u);
  EXPECT_EQ(fs::file_size(dir / "f.agt"), 4u + 4 + 4 + 2 * 8 + 6 * 4);
}

TEST(Container, HeaderLayout) {
  std::ostringstream os;
  write_tensor(os, Tensor<double>({3}, 1.0));
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 24);
  EXPECT_EQ(bytes.substr(0, 4), "AGT1");
  EXPECT_EQ(bytes[4], 2);  // f64
  EXPECT_EQ(bytes[8], 1);  // rank
  EXPECT_EQ(bytes[12], 3);
}

TEST(Container, TruncatedFileNamesTheFile) {
  auto dir = scratch_dir("trunc");
  write_tensor(dir / "t.agt", Tensor<float>({16, 16}, 1.0f));
  fs::resize_file(dir / "t.agt", fs::file_size(dir / "t.agt") - 5);
  try {
    read_tensor<float>(dir / "t.agt");
    FAIL() << "expected CorruptionError";
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("t.agt"), std::string::npos);
  }
}

TEST(Container, BadMagicAndWrongDtype) {
  std::istringstream junk("NOPE....");
  EXPECT_THROW(read_any_tensor(junk, "junk"), CorruptionError);
  std::ostringstream os;
  write_tensor(os, Tensor<double>({2}, 1.0));
  std::istringstream in(os.str());
  EXPECT_THROW(read_tensor<float>(in, "mem"), CorruptionError);
  EXPECT_THROW(read_tensor<float>(fs::path("/nonexistent/x.agt")), StructuralError);
}

TEST(Dataset, WriteReadRoundTrip) {
  auto dir = scratch_dir("roundtrip");
  auto ds = generate_dataset(PhantomConfig{}, 5, 3, 0.6, 2024);
  write_dataset(ds, dir);
  auto back = read_dataset(dir);
  ASSERT_EQ(back.samples.size(), 8u);
  EXPECT_EQ(back.manifest.n_objects, 4u);
  EXPECT_EQ(back.manifest.seed, 2024u);
  EXPECT_DOUBLE_EQ(back.manifest.quality, 0.6);
  EXPECT_EQ(back.indices(Split::test), (std::vector<std::size_t>{5, 6, 7}));
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(back.samples[i].image, ds.samples[i].image);
    EXPECT_EQ(back.samples[i].gt_masks, ds.samples[i].gt_masks);
    EXPECT_EQ(back.attention[i].maps, ds.attention[i].maps);
    EXPECT_EQ(back.samples[i].modality, ds.samples[i].modality);
  }
}

TEST(Dataset, SamplesIndependentOfCount) {
  auto small = generate_dataset(PhantomConfig{}, 2, 0, 0.5, 9);
  auto large = generate_dataset(PhantomConfig{}, 6, 0, 0.5, 9);
  EXPECT_EQ(small.samples[1].image, large.samples[1].image);
  EXPECT_EQ(small.attention[1].maps, large.attention[1].maps);
}

TEST(Dataset, TruncatedTensorIsCorruptionNamingFile) {
  auto dir = scratch_dir("corrupt");
  auto ds = generate_dataset(PhantomConfig{}, 2, 0, 1.0, 1);
  write_dataset(ds, dir);
  const auto victim = dir / ds.manifest.samples[1].image.file;
  fs::resize_file(victim, fs::file_size(victim) - 1);
  try {
    read_dataset(dir);
    FAIL() << "expected CorruptionError";
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find(ds.manifest.samples[1].image.file), std::string::npos);
  }
}

TEST(Dataset, FlippedByteIsCorruption) {
  auto dir = scratch_dir("flip");
  auto ds = generate_dataset(PhantomConfig{}, 1, 0, 1.0, 1);
  write_dataset(ds, dir);
  const auto victim = dir / ds.manifest.samples[0].masks.file;
  std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(40);
  f.put('\x7f');
  f.close();
  EXPECT_THROW(read_dataset(dir), CorruptionError);
}

TEST(Dataset, MissingFileIsStructural) {
  auto dir = scratch_dir("missing");
  auto ds = generate_dataset(PhantomConfig{}, 2, 0, 1.0, 1);
  write_dataset(ds, dir);
  fs::remove(dir / ds.manifest.samples[0].attention.file);
  EXPECT_THROW(read_dataset(dir), StructuralError);
  EXPECT_THROW(read_dataset(dir / "nowhere"), StructuralError);
}

TEST(Dataset, UnknownSchemaVersionIsVersionError) {
  auto dir = scratch_dir("version");
  auto ds = generate_dataset(PhantomConfig{}, 1, 0, 1.0, 1);
  write_dataset(ds, dir);
  std::ifstream in(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto pos = text.find("\"schema_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 19, "\"schema_version\": 99");
  // every tensor file removed: a partial load would hit StructuralError first
  for (const auto& e : ds.manifest.samples) fs::remove(dir / e.image.file);
  std::ofstream(dir / "manifest.json") << text;
  EXPECT_THROW(read_dataset(dir), VersionError);
}

TEST(Dataset, ManifestHasRequiredKeys) {
  auto dir = scratch_dir("keys");
  auto ds = generate_dataset(PhantomConfig{}, 1, 1, 0.8, 3);
  write_dataset(ds, dir);
  std::ifstream in(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  for (const char* key : {"schema_version", "n_samples", "n_objects", "n_modalities", "seed",
                          "quality", "samples"}) {
    EXPECT_NE(text.find("\"" + std::string(key) + "\""), std::string::npos) << key;
  }
}
