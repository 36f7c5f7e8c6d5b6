#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "agcl/error.hpp"

namespace agcl {

/// log(sum(exp(v))) via max shift; no overflow for |v_j| up to ~1e300.
template <typename T>
T logsumexp(std::span<const T> v) {
  if (v.empty()) throw StructuralError("logsumexp of an empty vector");
  const T mx = *std::max_element(v.begin(), v.end());
  T acc{0};
  for (T x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

/// v rescaled to the given norm. Throws NumericError when |v| <= 1e-12.
template <typename T>
std::vector<T> l2_normalize(std::span<const T> v, T radius) {
  T sq{0};
  for (T x : v) sq += x * x;
  const T norm = std::sqrt(sq);
  if (!(norm > T(1e-12))) throw NumericError("l2_normalize: vector norm is near zero");
  std::vector<T> out(v.begin(), v.end());
  for (T& x : out) x = radius * x / norm;
  return out;
}

}  // namespace agcl
