#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace agcl::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst = 0;      // largest observed error of the suite's metric
  double tolerance = 0;
  double seconds = 0;
  std::vector<std::string> notes;

  /// One-line summary, e.g. "oracle: PASS 400/400 checks, worst 3e-14 (tol 1e-10), 0.4 s".
  std::string summary() const;
};

/// Optimised SSCL/AGCL against the enumeration oracle on random batches with
/// 2N in {4, 8, 16}, O_E in {4, 8, 32}, T in {0.05, 0.1, 0.5, 1}, mixed
/// labels and partial label visibility.
SuiteResult oracle_suite(std::size_t n_batches = 200, std::uint64_t seed = 1);

/// Orthogonal-pair contrastive fixture and the two-of-four Dice fixture.
SuiteResult fixture_suite();

/// Analytic vs central-difference gradients (64-bit, relative tolerance
/// 1e-4) of the Dice loss, SSCL, AGCL and full encoder/projection/decoder
/// graphs, one set per seed.
SuiteResult grad_suite(std::size_t n_seeds = 100, std::uint64_t seed = 1);

/// AGCL equals SSCL when every class holds one pair, and when no labels are
/// visible.
SuiteResult reduction_suite(std::size_t n_batches = 100, std::uint64_t seed = 1);

}  // namespace agcl::verify
