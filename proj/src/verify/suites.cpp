#include "agcl/verify/suites.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>

#include "agcl/core/graph.hpp"
#include "agcl/core/random.hpp"
#include "agcl/losses/fixtures.hpp"
#include "agcl/losses/losses.hpp"
#include "agcl/model/model.hpp"

namespace agcl::verify {

using namespace agcl::losses;

namespace {

using Clock = std::chrono::steady_clock;

struct Tracker {
  SuiteResult r;
  Clock::time_point start = Clock::now();

  Tracker(std::string name, double tol) {
    r.name = std::move(name);
    r.tolerance = tol;
  }
  void check(double error, const std::string& what) { check(error, r.tolerance, what); }
  void check(double error, double tol, const std::string& what) {
    ++r.checks;
    if (!(error <= tol)) {  // NaN counts as a failure
      ++r.failures;
      if (r.notes.size() < 10) r.notes.push_back(what + ": error " + std::to_string(error));
    }
    if (!(error <= r.worst)) r.worst = error;
  }
  // An exception inside a check is a failed check, not an aborted suite.
  void guarded(const std::function<double()>& error, const std::string& what) {
    try {
      check(error(), what);
    } catch (const std::exception& e) {
      ++r.checks;
      ++r.failures;
      r.worst = std::numeric_limits<double>::infinity();
      if (r.notes.size() < 10) r.notes.push_back(what + ": " + e.what());
    }
  }
  SuiteResult finish() {
    r.passed = r.failures == 0 && r.checks > 0;
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
  }
};

model::ModelConfig tiny_model(std::uint64_t seed) {
  model::ModelConfig c;
  c.patch = 8;
  c.encoder_widths = {3, 4, 4};
  c.feature_dim = 5;
  c.projection_hidden = 4;
  c.projection_dim = 3;
  c.decoder_width = 3;
  c.skip_width = 2;
  c.temperature = seed % 2 ? 0.5 : 0.1;
  return c;
}

}  // namespace

std::string SuiteResult::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s: %s %zu/%zu checks, worst %.3g (tol %.3g), %.1f s", name.c_str(),
                passed ? "PASS" : "FAIL", checks - failures, checks, worst, tolerance, seconds);
  return buf;
}

SuiteResult oracle_suite(std::size_t n_batches, std::uint64_t seed) {
  Tracker t("oracle", 1e-10);
  const std::size_t pairs[] = {2, 4, 8};
  const std::size_t dims[] = {4, 8, 32};
  const double temps[] = {0.05, 0.1, 0.5, 1.0};
  for (std::size_t i = 0; i < n_batches; ++i) {
    const std::uint64_t s = derive_seed(seed, {i});
    Rng rng(s);
    const std::size_t n_pairs = pairs[i % 3], dim = dims[(i / 3) % 3];
    const double temp = temps[(i / 9) % 4];
    auto batch = random_batch(n_pairs, dim, temp, 1 + uniform_index(rng, 4), s);
    if (i % 2 == 1) {
      for (std::size_t k = 0; k < n_pairs; ++k) {
        const bool v = uniform(rng, 0, 1) < 0.6;
        batch.meta.visible[2 * k] = batch.meta.visible[2 * k + 1] = v;
      }
    }
    for (auto mode : {ContrastiveMode::sscl, ContrastiveMode::agcl}) {
      const double fast = contrastive_loss(batch, mode).value;
      const double slow = oracle_contrastive(batch, mode).value;
      t.check(std::abs(fast - slow), "batch " + std::to_string(i) + (mode == ContrastiveMode::agcl ? " agcl" : " sscl"));
    }
  }
  return t.finish();
}

SuiteResult fixture_suite() {
  Tracker t("fixtures", 1e-3);
  const auto batch = orthogonal_pair_fixture();
  const double e = std::exp(1.0);
  const struct {
    ContrastiveMode mode;
    double published, closed_form;
    const char* name;
  } cases[] = {{ContrastiveMode::sscl, 2.2056, 4 * (std::log(e + 2) - 1), "sscl"},
               {ContrastiveMode::agcl, 4.8722, 4 * std::log(e + 2) - 4.0 / 3.0, "agcl"}};
  for (const auto& c : cases) {
    const double oracle = oracle_contrastive(batch, c.mode).value;
    const double fast = contrastive_loss(batch, c.mode).value;
    t.check(std::abs(oracle - c.published), std::string(c.name) + " oracle vs published value");
    t.check(std::abs(fast - oracle), std::string(c.name) + " optimised vs oracle");
    t.check(std::abs(oracle - c.closed_form), 1e-12, std::string(c.name) + " oracle vs closed form");
  }
  // y has 4 foreground pixels, s = 1 on two of them
  Tensor<double> s({1, 2, 2, 4}), y({1, 2, 2, 4});
  for (std::size_t q = 0; q < 8; ++q) {
    const bool fg_y = q < 4, fg_s = q < 2;
    y[q] = fg_y ? 0 : 1;
    y[8 + q] = fg_y ? 1 : 0;
    s[q] = fg_s ? 0 : 1;
    s[8 + q] = fg_s ? 1 : 0;
  }
  const double eps = kDiceSmoothing;
  const double hand = 1 - 2 * (2 + eps) / (6 + eps);
  const double dice = dice_seg_loss(s, y).value;
  t.check(std::abs(dice - hand), 1e-6, "dice vs smoothed hand value");
  t.r.notes.push_back("dice fixture " + std::to_string(dice) + ", smoothed hand value " +
                      std::to_string(hand) + ", distance to 1/3 " +
                      std::to_string(std::abs(dice - 1.0 / 3.0)));
  return t.finish();
}

SuiteResult grad_suite(std::size_t n_seeds, std::uint64_t seed) {
  Tracker t("gradients", 1e-4);
  double raw_worst = 0;
  auto raw = [&](const GradReport& g) {
    raw_worst = std::max(raw_worst, g.raw_worst);
    return g.worst();
  };
  for (std::size_t i = 0; i < n_seeds; ++i) {
    const std::uint64_t s = derive_seed(seed, {i});
    Rng rng(s);
    const std::string tag = "seed " + std::to_string(i);

    // Dice loss on 2 x 2 x 4 x 4 probabilities
    Tensor<double> prob({2, 2, 4, 4}), y({2, 2, 4, 4});
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t q = 0; q < 16; ++q) {
        const double p = uniform(rng, 0.05, 0.95);
        const bool fg = uniform(rng, 0, 1) < 0.4;
        prob[b * 32 + q] = 1 - p;
        prob[b * 32 + 16 + q] = p;
        y[b * 32 + q] = fg ? 0 : 1;
        y[b * 32 + 16 + q] = fg ? 1 : 0;
      }
    }
    GraphFn<double> dice = [y](Tape<double>&, const VarMap<double>& in) { return dice_loss(bound(in, "s"), y); };
    t.check(raw(grad_check(dice, {{"s", prob}}, 1e-5, t.r.tolerance)), tag + " dice");

    // SSCL and AGCL with partial visibility
    auto batch = random_batch(4, 8, 0.5, 2, s);
    batch.meta.visible[2] = batch.meta.visible[3] = false;
    for (auto mode : {ContrastiveMode::sscl, ContrastiveMode::agcl}) {
      const auto meta = batch.meta;
      GraphFn<double> g = [meta, mode](Tape<double>&, const VarMap<double>& in) {
        return contrastive_loss(bound(in, "z"), meta, mode, 0.5);
      };
      t.check(raw(grad_check(g, {{"z", batch.embeddings}}, 1e-5, t.r.tolerance)),
              tag + (mode == ContrastiveMode::agcl ? " agcl" : " sscl"));
    }

    // full E -> P -> contrastive and E -> D -> Dice graphs
    const auto cfg = tiny_model(i);
    // redraw until no view's encoder feature is all zero (dead rectifiers
    // leave the projection's normalisation undefined)
    model::ModelParams<double> params;
    Tensor<double> a({2, 2, cfg.patch, cfg.patch});
    for (std::uint64_t draw = 0;; ++draw) {
      params = model::init_params<double>(cfg, derive_seed(s, {draw}));
      // nonzero biases move pre-activations off the rectifier kinks that
      // zero inputs would otherwise sit on exactly
      for (auto& [name, v] : params.tensors)
        if (name.ends_with(".bias"))
          for (auto& b : v.values()) b = uniform(rng, 0.05, 0.3);
      for (auto& v : a.values()) v = uniform(rng, -1, 1);
      bool live = true;
      try {
        Tape<double> probe;
        const auto bound_params = model::bind(probe, params);
        const auto enc = model::encoder_forward(cfg, bound_params, probe.constant(a));
        model::projection_forward(cfg, bound_params, enc.z);
        for (std::size_t r = 0; r < 2; ++r) {
          double sq = 0;
          for (std::size_t d = 0; d < cfg.feature_dim; ++d) sq += std::pow(enc.z.value()[r * cfg.feature_dim + d], 2);
          live = live && sq > 1e-6;
        }
      } catch (const NumericError&) {
        live = false;
      }
      if (live || draw == 20) break;
    }
    Inputs<double> in(params.tensors.begin(), params.tensors.end());
    in.emplace("a", a);
    ContrastiveLabels meta{{1, 0}, {{1, 1}, {1, 1}}, {true, true}};
    GraphFn<double> ep = [cfg, meta](Tape<double>&, const VarMap<double>& vm) {
      model::Bound<double> p{vm};
      auto z = model::encoder_forward(cfg, p, bound(vm, "a")).z;
      return contrastive_loss(model::projection_forward(cfg, p, z), meta, ContrastiveMode::agcl,
                              cfg.temperature);
    };
    std::set<std::string> decoder_only;
    for (const auto& [name, v] : params.tensors)
      if (name.rfind("decoder.", 0) == 0) decoder_only.insert(name);
    t.guarded([&] { return raw(grad_check(ep, in, 1e-6, t.r.tolerance, decoder_only)); },
              tag + " encoder+projection");

    Tensor<double> target({2, 2, cfg.patch, cfg.patch});
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t q = 0; q < cfg.patch * cfg.patch; ++q) {
        const bool fg = uniform(rng, 0, 1) < 0.3;
        target[(2 * b) * cfg.patch * cfg.patch + q] = fg ? 0 : 1;
        target[(2 * b + 1) * cfg.patch * cfg.patch + q] = fg ? 1 : 0;
      }
    }
    GraphFn<double> ed = [cfg, target](Tape<double>&, const VarMap<double>& vm) {
      model::Bound<double> p{vm};
      return dice_loss(model::decoder_forward(cfg, p, model::encoder_forward(cfg, p, bound(vm, "a"))), target);
    };
    std::set<std::string> projection_only;
    for (const auto& [name, v] : params.tensors)
      if (name.rfind("projection.", 0) == 0) projection_only.insert(name);
    t.guarded([&] { return raw(grad_check(ed, in, 1e-6, t.r.tolerance, projection_only)); },
              tag + " encoder+decoder");
  }
  t.r.notes.push_back("largest relative error before the difference round-off allowance " +
                      std::to_string(raw_worst));
  return t.finish();
}

SuiteResult reduction_suite(std::size_t n_batches, std::uint64_t seed) {
  Tracker t("reduction", 1e-12);
  for (std::size_t i = 0; i < n_batches; ++i) {
    const std::uint64_t s = derive_seed(seed, {i});
    const std::size_t n_pairs = 2 + i % 7;
    // one pair per class: distinct (m, o) for every pair
    auto batch = random_batch(n_pairs, 6, i % 2 ? 0.1 : 0.5, 1, s);
    for (std::size_t k = 0; k < n_pairs; ++k) {
      const ClassLabel l{int(1 + k % 2), int(1 + k / 2)};
      batch.meta.labels[2 * k] = batch.meta.labels[2 * k + 1] = l;
    }
    t.check(std::abs(agcl_loss(batch).value - sscl_loss(batch).value), "one pair per class " + std::to_string(i));
    // shared labels, none visible
    auto hidden = random_batch(n_pairs, 6, 0.2, 2, s + 1);
    std::fill(hidden.meta.visible.begin(), hidden.meta.visible.end(), false);
    t.check(std::abs(agcl_loss(hidden).value - sscl_loss(hidden).value), "label fraction 0 " + std::to_string(i));
  }
  return t.finish();
}

}  // namespace agcl::verify
