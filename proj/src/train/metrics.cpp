#include "agcl/train/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>

namespace agcl::train {

std::vector<double> dice_score(const LabelMap& pred, const Tensor<std::uint8_t>& gt_masks) {
  if (pred.rank() != 2 || gt_masks.rank() != 3 || gt_masks.dim(1) != pred.dim(0) ||
      gt_masks.dim(2) != pred.dim(1)) {
    throw StructuralError("dice_score: prediction " + shape_string(pred.shape()) + " vs masks " +
                          shape_string(gt_masks.shape()));
  }
  const std::size_t n_obj = gt_masks.dim(0), plane = pred.numel();
  std::vector<double> out(n_obj);
  for (std::size_t o = 0; o < n_obj; ++o) {
    std::size_t inter = 0, p = 0, g = 0;
    for (std::size_t q = 0; q < plane; ++q) {
      const bool in_p = pred[q] == o + 1, in_g = gt_masks[o * plane + q] != 0;
      inter += in_p && in_g;
      p += in_p;
      g += in_g;
    }
    out[o] = p + g == 0 ? 1.0 : 2.0 * double(inter) / double(p + g);
  }
  return out;
}

LabelMap labels_from_masks(const Tensor<std::uint8_t>& masks) {
  const std::size_t n_obj = masks.dim(0), h = masks.dim(1), w = masks.dim(2);
  LabelMap out({h, w});
  for (std::size_t o = n_obj; o-- > 0;) {
    for (std::size_t q = 0; q < h * w; ++q)
      if (masks[o * h * w + q]) out[q] = static_cast<std::uint8_t>(o + 1);
  }
  return out;
}

double miou(const LabelMap& pred, const LabelMap& gt, std::size_t n_classes) {
  if (pred.shape() != gt.shape()) {
    throw StructuralError("miou: " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
  }
  if (n_classes == 0) throw StructuralError("miou needs at least one class");
  double total = 0;
  for (std::size_t c = 1; c <= n_classes; ++c) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t q = 0; q < pred.numel(); ++q) {
      const bool a = pred[q] == c, b = gt[q] == c;
      inter += a && b;
      uni += a || b;
    }
    total += uni == 0 ? 1.0 : double(inter) / double(uni);
  }
  return total / double(n_classes);
}

double cluster_separation(const Tensor<double>& embeddings, const std::vector<int>& labels) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size()) {
    throw StructuralError("cluster_separation: " + shape_string(embeddings.shape()) + " for " +
                          std::to_string(labels.size()) + " labels");
  }
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw ValidationError("silhouette needs at least two clusters");
  for (const auto& [l, n] : sizes) {
    if (n < 2) throw ValidationError("silhouette cluster " + std::to_string(l) + " has one member");
  }
  const std::size_t n = labels.size(), d = embeddings.dim(1);
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = embeddings[i * d + j];
    const double norm = x.row(i).norm();
    if (norm > 0) x.row(i) /= norm;
  }
  // squared distances via the Gram matrix, clamped at 0 against round-off
  const Eigen::MatrixXd gram = x * x.transpose();
  const Eigen::VectorXd sq = gram.diagonal();
  std::vector<int> cluster_ids;
  std::map<int, std::size_t> slot;
  for (const auto& [l, cnt] : sizes) {
    slot[l] = cluster_ids.size();
    cluster_ids.push_back(l);
  }
  double total = 0;
  std::vector<double> dist_sum(cluster_ids.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[slot[labels[j]]] += std::sqrt(std::max(0.0, sq(i) + sq(j) - 2 * gram(i, j)));
    }
    const std::size_t own = slot[labels[i]];
    const double a = dist_sum[own] / double(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cluster_ids.size(); ++c) {
      if (c != own) b = std::min(b, dist_sum[c] / double(sizes[cluster_ids[c]]));
    }
    const double denom = std::max(a, b);
    total += denom > 0 ? (b - a) / denom : 0.0;
  }
  return total / double(n);
}

PcaResult pca_project(const Tensor<double>& embeddings, std::size_t k) {
  if (embeddings.rank() != 2) throw StructuralError("pca_project expects [n, d] rows");
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  if (k == 0 || n <= k) {
    throw StructuralError("pca_project needs n > k, got n=" + std::to_string(n) +
                          " k=" + std::to_string(k));
  }
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = embeddings[i * d + j];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double total = sv.squaredNorm();
  const double cutoff = sv.size() ? sv(0) * 1e-10 * double(std::max(n, d)) : 0.0;
  std::size_t rank = 0;
  while (rank < std::size_t(sv.size()) && sv(rank) > cutoff) ++rank;
  const std::size_t found = std::min(k, rank);

  PcaResult r;
  r.rank_deficient = found < k;
  r.mean.assign(mean.data(), mean.data() + d);
  r.coords = Tensor<double>({n, found});
  r.components = Tensor<double>({found, d});
  for (std::size_t c = 0; c < found; ++c) {
    Eigen::VectorXd v = svd.matrixV().col(c);
    // sign convention: largest-magnitude entry positive
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    for (std::size_t j = 0; j < d; ++j) r.components[c * d + j] = v(j);
    const Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < n; ++i) r.coords[i * found + c] = proj(i);
    r.explained_ratio.push_back(total > 0 ? sv(c) * sv(c) / total : 0.0);
  }
  return r;
}

}  // namespace agcl::train
