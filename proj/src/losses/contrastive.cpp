#include <algorithm>
#include <cmath>
#include <limits>

#include "agcl/core/numerics.hpp"
#include "agcl/losses/losses.hpp"

namespace agcl::losses {

void ContrastiveLabels::validate() const {
  const std::size_t n = pairing.size();
  if (n < 2) throw StructuralError("contrastive batch needs 2N >= 2 views, got " + std::to_string(n));
  if (labels.size() != n || visible.size() != n) {
    throw StructuralError("contrastive batch: pairing/labels/visibility sizes differ");
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t p = pairing[k];
    if (p >= n || p == k || pairing[p] != k) {
      throw StructuralError("contrastive batch: pairing is not a fixed-point-free involution at " +
                            std::to_string(k));
    }
  }
}

std::vector<std::size_t> positive_set(const ContrastiveLabels& meta, std::size_t anchor,
                                      ContrastiveMode mode) {
  std::vector<std::size_t> positives;
  if (mode == ContrastiveMode::agcl && meta.visible[anchor]) {
    for (std::size_t l = 0; l < meta.size(); ++l) {
      if (l != anchor && meta.visible[l] && meta.labels[l] == meta.labels[anchor]) positives.push_back(l);
    }
  }
  if (positives.empty()) positives.push_back(meta.pairing[anchor]);
  return positives;
}

namespace {

// Unit rows of a [rows, dim] buffer.
template <typename T>
std::vector<T> unit_rows(const T* z, std::size_t rows, std::size_t dim, std::vector<T>& norms) {
  std::vector<T> u(rows * dim);
  norms.assign(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    T sq{0};
    for (std::size_t d = 0; d < dim; ++d) sq += z[r * dim + d] * z[r * dim + d];
    norms[r] = std::sqrt(sq);
    if (!(norms[r] > T(1e-12))) {
      throw NumericError("contrastive loss: embedding row " + std::to_string(r) + " has near-zero norm");
    }
    for (std::size_t d = 0; d < dim; ++d) u[r * dim + d] = z[r * dim + d] / norms[r];
  }
  return u;
}

// Logits cos/T for all pairs (diagonal unused).
template <typename T>
std::vector<T> logits(const std::vector<T>& u, std::size_t rows, std::size_t dim, T inv_t) {
  std::vector<T> s(rows * rows, T{0});
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t j = k + 1; j < rows; ++j) {
      T dot{0};
      for (std::size_t d = 0; d < dim; ++d) dot += u[k * dim + d] * u[j * dim + d];
      s[k * rows + j] = s[j * rows + k] = dot * inv_t;
    }
  }
  return s;
}

struct Forward {
  std::vector<double> terms;
  std::vector<double> lse;
};

// Per-anchor -(1/|P|) sum_{l in P} (s_kl - logsumexp_{j != k} s_kj).
template <typename T>
Forward anchor_terms(const std::vector<T>& s, const ContrastiveLabels& meta, ContrastiveMode mode) {
  const std::size_t n = meta.size();
  Forward f;
  f.terms.resize(n);
  f.lse.resize(n);
  std::vector<double> row;
  row.reserve(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != k) row.push_back(static_cast<double>(s[k * n + j]));
    f.lse[k] = logsumexp<double>(row);
    const auto positives = positive_set(meta, k, mode);
    double acc = 0;
    for (std::size_t l : positives) acc += static_cast<double>(s[k * n + l]) - f.lse[k];
    f.terms[k] = -acc / static_cast<double>(positives.size());
  }
  return f;
}

void check_temperature(double t) {
  if (!(t > 0) || !std::isfinite(t)) throw RangeError("temperature must be positive, got " + std::to_string(t));
}

void check_sphere(const ContrastiveBatchView& batch) {
  const std::size_t rows = batch.embeddings.dim(0), dim = batch.embeddings.dim(1);
  const double radius = 1.0 / batch.temperature;
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0;
    for (std::size_t d = 0; d < dim; ++d) sq += batch.embeddings[r * dim + d] * batch.embeddings[r * dim + d];
    if (std::abs(std::sqrt(sq) * batch.temperature - 1.0) > 1e-6) {
      throw ValidationError("embedding row " + std::to_string(r) + " is not on the radius " +
                            std::to_string(radius) + " sphere");
    }
  }
}

void validate_view(const ContrastiveBatchView& batch) {
  check_temperature(batch.temperature);
  batch.meta.validate();
  if (batch.embeddings.rank() != 2 || batch.embeddings.dim(0) != batch.meta.size()) {
    throw StructuralError("embeddings " + shape_string(batch.embeddings.shape()) + " for " +
                          std::to_string(batch.meta.size()) + " views");
  }
  check_sphere(batch);
}

}  // namespace

LossValue contrastive_loss(const ContrastiveBatchView& batch, ContrastiveMode mode) {
  validate_view(batch);
  const std::size_t n = batch.meta.size(), dim = batch.embeddings.dim(1);
  std::vector<double> norms;
  auto u = unit_rows(batch.embeddings.data(), n, dim, norms);
  auto s = logits(u, n, dim, 1.0 / batch.temperature);
  auto f = anchor_terms(s, batch.meta, mode);
  LossValue out;
  out.terms = std::move(f.terms);
  for (double t : out.terms) out.value += t;
  return out;
}

LossValue sscl_loss(const ContrastiveBatchView& batch) {
  return contrastive_loss(batch, ContrastiveMode::sscl);
}

LossValue agcl_loss(const ContrastiveBatchView& batch) {
  return contrastive_loss(batch, ContrastiveMode::agcl);
}

LossValue oracle_contrastive(const ContrastiveBatchView& batch, ContrastiveMode mode) {
  validate_view(batch);
  const std::size_t n = batch.meta.size(), dim = batch.embeddings.dim(1);
  if (n > 64) throw RangeError("oracle is limited to 2N <= 64 views, got " + std::to_string(n));
  const double t = batch.temperature;
  const auto& z = batch.embeddings;

  auto similarity = [&](std::size_t a, std::size_t b) {
    double na = 0, nb = 0, dot = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      na += z[a * dim + d] * z[a * dim + d];
      nb += z[b * dim + d] * z[b * dim + d];
      dot += z[a * dim + d] * z[b * dim + d];
    }
    const double v = dot / (std::sqrt(na) * std::sqrt(nb)) / t;
    if (std::abs(v) > 30.0) throw RangeError("oracle logit " + std::to_string(v) + " outside [-30, 30]");
    return v;
  };

  LossValue out;
  for (std::size_t k = 0; k < n; ++k) {
    double denominator = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != k) denominator += std::exp(similarity(k, j));
    std::vector<std::size_t> positives;
    if (mode == ContrastiveMode::agcl && batch.meta.visible[k]) {
      for (std::size_t l = 0; l < n; ++l) {
        if (l == k || !batch.meta.visible[l]) continue;
        if (batch.meta.labels[l].modality == batch.meta.labels[k].modality &&
            batch.meta.labels[l].object == batch.meta.labels[k].object)
          positives.push_back(l);
      }
    }
    if (positives.empty()) positives.push_back(batch.meta.pairing[k]);
    double acc = 0;
    for (std::size_t l : positives) acc += std::log(std::exp(similarity(k, l)) / denominator);
    out.terms.push_back(-acc / static_cast<double>(positives.size()));
    out.value += out.terms.back();
  }
  return out;
}

template <typename T>
Var<T> contrastive_loss(Var<T> embeddings, const ContrastiveLabels& meta, ContrastiveMode mode,
                        double temperature) {
  Tape<T>& tape = *embeddings.tape;
  check_temperature(temperature);
  meta.validate();
  if (embeddings.value().rank() != 2 || embeddings.shape()[0] != meta.size()) {
    throw StructuralError(tape.next_label("contrastive_loss") + ": embeddings " +
                          shape_string(embeddings.shape()) + " for " + std::to_string(meta.size()) +
                          " views");
  }
  const std::size_t n = meta.size(), dim = embeddings.shape()[1];
  const T inv_t = static_cast<T>(1.0 / temperature);
  std::vector<T> norms;
  auto u = unit_rows(embeddings.value().data(), n, dim, norms);
  auto s = logits(u, n, dim, inv_t);
  auto f = anchor_terms(s, meta, mode);
  double total = 0;
  for (double t : f.terms) total += t;

  return tape.record(
      "contrastive_loss", Tensor<T>::scalar(static_cast<T>(total)), {embeddings},
      [embeddings, meta, mode, n, dim, inv_t, u = std::move(u), s = std::move(s), norms = std::move(norms),
       lse = std::move(f.lse)](Tape<T>& tp, std::size_t self) {
        const double g = static_cast<double>(tp.upstream(self)[0]);
        // dL/ds_kj = softmax_k(j) - [j in P(k)]/|P(k)|
        std::vector<T> gs(n * n, T{0});
        for (std::size_t k = 0; k < n; ++k) {
          for (std::size_t j = 0; j < n; ++j)
            if (j != k) gs[k * n + j] = static_cast<T>(g * std::exp(static_cast<double>(s[k * n + j]) - lse[k]));
          const auto positives = positive_set(meta, k, mode);
          const double w = g / static_cast<double>(positives.size());
          for (std::size_t l : positives) gs[k * n + l] -= static_cast<T>(w);
        }
        // s_kj = u_k . u_j / T
        std::vector<T> du(n * dim, T{0});
        for (std::size_t k = 0; k < n; ++k) {
          for (std::size_t j = 0; j < n; ++j) {
            if (j == k) continue;
            const T c = (gs[k * n + j] + gs[j * n + k]) * inv_t;
            for (std::size_t d = 0; d < dim; ++d) du[k * dim + d] += c * u[j * dim + d];
          }
        }
        auto& buf = tp.grad_buffer(embeddings.id);
        for (std::size_t k = 0; k < n; ++k) {
          T dot{0};
          for (std::size_t d = 0; d < dim; ++d) dot += u[k * dim + d] * du[k * dim + d];
          for (std::size_t d = 0; d < dim; ++d)
            buf[k * dim + d] += (du[k * dim + d] - u[k * dim + d] * dot) / norms[k];
        }
      });
}

template Var<float> contrastive_loss(Var<float>, const ContrastiveLabels&, ContrastiveMode, double);
template Var<double> contrastive_loss(Var<double>, const ContrastiveLabels&, ContrastiveMode, double);

}  // namespace agcl::losses
