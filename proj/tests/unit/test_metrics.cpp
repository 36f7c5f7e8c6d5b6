#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "agcl/core/random.hpp"
#include "agcl/train/metrics.hpp"

using namespace agcl;
using namespace agcl::train;

namespace {

Tensor<std::uint8_t> masks_from_labels(const LabelMap& l, std::size_t n_obj) {
  const std::size_t plane = l.numel();
  Tensor<std::uint8_t> m({n_obj, l.dim(0), l.dim(1)});
  for (std::size_t q = 0; q < plane; ++q)
    if (l[q]) m[(l[q] - 1) * plane + q] = 1;
  return m;
}

// direct O(n^2) definition on normalised rows
double naive_silhouette(const Tensor<double>& e, const std::vector<int>& labels) {
  const std::size_t n = labels.size(), d = e.dim(1);
  std::vector<std::vector<double>> u(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += e[i * d + j] * e[i * d + j];
    for (std::size_t j = 0; j < d; ++j) u[i][j] = e[i * d + j] / std::sqrt(s);
  }
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += (u[a][j] - u[b][j]) * (u[a][j] - u[b][j]);
    return std::sqrt(s);
  };
  std::set<int> ids(labels.begin(), labels.end());
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = 0, b = 1e300;
    for (int c : ids) {
      double sum = 0;
      std::size_t cnt = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && labels[j] == c) {
          sum += dist(i, j);
          ++cnt;
        }
      }
      if (c == labels[i]) a = sum / double(cnt);
      else b = std::min(b, sum / double(cnt));
    }
    total += (b - a) / std::max(a, b);
  }
  return total / double(n);
}

Tensor<double> random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Tensor<double> t({n, d});
  Rng rng(seed);
  for (auto& v : t.values()) v = uniform(rng, -1, 1);
  return t;
}

}  // namespace

TEST(DiceScore, Examples) {
  LabelMap gt({4, 4}, std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0, 2, 2, 0, 0, 0, 0, 0, 0});
  const auto masks = masks_from_labels(gt, 2);
  EXPECT_EQ(dice_score(gt, masks), (std::vector<double>{1.0, 1.0}));
  LabelMap shifted({4, 4}, std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 2, 2, 0, 0, 0, 0});
  auto d = dice_score(shifted, masks);
  EXPECT_DOUBLE_EQ(d[0], 0.5);  // |P| = |G| = 4, overlap 2
  EXPECT_DOUBLE_EQ(d[1], 0.0);  // disjoint
  EXPECT_EQ(labels_from_masks(masks), gt);
}

TEST(DiceScore, EmptyEmptyIsOneAndShapeMismatchThrows) {
  LabelMap none({3, 3});
  EXPECT_EQ(dice_score(none, Tensor<std::uint8_t>({2, 3, 3})), (std::vector<double>{1.0, 1.0}));
  EXPECT_THROW(dice_score(none, Tensor<std::uint8_t>({2, 4, 3})), StructuralError);
}

TEST(MeanIoU, Examples) {
  LabelMap gt({2, 4}, std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(miou(gt, gt, 1), 1.0);
  LabelMap pred({2, 4}, std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(miou(pred, gt, 1), 1.0 / 3.0);  // |P n G| = 2, |P u G| = 6
  LabelMap off({2, 4}, std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(miou(off, gt, 1), 0.0);
  EXPECT_DOUBLE_EQ(miou(gt, gt, 3), 1.0);  // classes absent in both count as 1
  EXPECT_THROW(miou(gt, LabelMap({4, 2}), 1), StructuralError);
}

TEST(Silhouette, TightFarClusters) {
  Tensor<double> e({6, 2}, std::vector<double>{1, 0.001, 1, -0.001, 1, 0, 0.001, 1, -0.001, 1, 0, 1});
  EXPECT_GT(cluster_separation(e, {1, 1, 1, 2, 2, 2}), 0.9);
}

TEST(Silhouette, MatchesDirectDefinition) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto e = random_rows(40, 5, seed);
    std::vector<int> labels(40);
    Rng rng(seed + 100);
    for (auto& l : labels) l = int(uniform_index(rng, 3));
    labels[0] = labels[1] = 0;
    labels[2] = labels[3] = 1;
    labels[4] = labels[5] = 2;
    EXPECT_NEAR(cluster_separation(e, labels), naive_silhouette(e, labels), 1e-12);
  }
}

TEST(Silhouette, ShuffledLabelsNearZero) {
  // two separated groups, then labels shuffled
  Tensor<double> e({100, 3});
  Rng rng(5);
  for (std::size_t i = 0; i < 100; ++i) {
    e[i * 3 + (i < 50 ? 0 : 1)] = 1;
    for (std::size_t j = 0; j < 3; ++j) e[i * 3 + j] += uniform(rng, -0.2, 0.2);
  }
  std::vector<int> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = i < 50 ? 0 : 1;
  EXPECT_GT(cluster_separation(e, labels), 0.5);
  double mean = 0;
  for (int s = 0; s < 100; ++s) {
    std::shuffle(labels.begin(), labels.end(), rng);
    mean += cluster_separation(e, labels) / 100;
  }
  EXPECT_LT(std::abs(mean), 0.1);

  // without cluster structure every single shuffle stays near zero
  auto flat = random_rows(100, 3, 6);
  for (int s = 0; s < 100; ++s) {
    std::shuffle(labels.begin(), labels.end(), rng);
    EXPECT_LT(std::abs(cluster_separation(flat, labels)), 0.1);
  }
}

TEST(Silhouette, IdenticalPointsScoreZero) {
  Tensor<double> e({4, 2}, 1.0);
  EXPECT_EQ(cluster_separation(e, {0, 0, 1, 1}), 0.0);
}

TEST(Silhouette, DegenerateClusteringIsValidationError) {
  auto e = random_rows(4, 2, 1);
  EXPECT_THROW(cluster_separation(e, {0, 0, 0, 0}), ValidationError);
  EXPECT_THROW(cluster_separation(e, {0, 0, 0, 1}), ValidationError);
}

TEST(Pca, CollinearPointsHaveOneComponent) {
  Tensor<double> e({5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    e[i * 3 + 0] = 1.0 * i;
    e[i * 3 + 1] = -2.0 * i;
    e[i * 3 + 2] = 0.5 * i + 3;
  }
  auto r = pca_project(e, 2);
  EXPECT_TRUE(r.rank_deficient);
  ASSERT_EQ(r.explained_ratio.size(), 1u);
  EXPECT_NEAR(r.explained_ratio[0], 1.0, 1e-9);
}

TEST(Pca, OrthonormalCentredNonIncreasing) {
  auto e = random_rows(30, 6, 9);
  auto r = pca_project(e, 4);
  ASSERT_EQ(r.components.dim(0), 4u);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      double dot = 0;
      for (std::size_t j = 0; j < 6; ++j) dot += r.components[a * 6 + j] * r.components[b * 6 + j];
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-9);
    }
    double mean = 0;
    for (std::size_t i = 0; i < 30; ++i) mean += r.coords[i * 4 + a];
    EXPECT_NEAR(mean / 30, 0.0, 1e-12);
    if (a > 0) {
      EXPECT_LE(r.explained_ratio[a], r.explained_ratio[a - 1]);
    }
  }
}

TEST(Pca, FullRankReconstructionIsExact) {
  auto e = random_rows(12, 4, 10);
  auto r = pca_project(e, 4);
  ASSERT_FALSE(r.rank_deficient);
  double ratio_sum = 0;
  for (double v : r.explained_ratio) ratio_sum += v;
  EXPECT_NEAR(ratio_sum, 1.0, 1e-9);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double x = r.mean[j];
      for (std::size_t c = 0; c < 4; ++c) x += r.coords[i * 4 + c] * r.components[c * 4 + j];
      EXPECT_NEAR(x, e[i * 4 + j], 1e-9);
    }
  }
  EXPECT_THROW(pca_project(e, 12), StructuralError);
}
