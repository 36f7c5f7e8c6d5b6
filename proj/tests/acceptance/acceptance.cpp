// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Criterion 5 and 6 train the standard benchmark end to end and dominate the
// runtime (about ten minutes on one core).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "agcl/cli/app.hpp"
#include "agcl/cli/config_file.hpp"
#include "agcl/core/random.hpp"
#include "agcl/data/container.hpp"
#include "agcl/data/dataset.hpp"
#include "agcl/losses/losses.hpp"
#include "agcl/model/model.hpp"
#include "agcl/sampling/minibatch.hpp"
#include "agcl/train/inference.hpp"
#include "agcl/train/trainer.hpp"
#include "agcl/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace agcl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "agcl_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int cli(const std::vector<std::string>& args, std::string* stdout_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  if (stdout_text) *stdout_text = out.str();
  if (code != 0) std::cerr << "  command failed (" << code << "): " << err.str();
  return code;
}

// ---- 1 ----
Outcome oracle_equivalence() {
  const auto r = verify::oracle_suite(200, 1);
  Outcome o;
  o.pass = r.passed && r.seconds < 30.0;
  o.detail = r.summary() + " (limit 30 s)";
  return o;
}

// ---- 2 ----
Outcome fixtures() {
  const auto r = verify::fixture_suite();
  Outcome o;
  o.pass = r.passed;
  o.detail = r.summary();
  for (const auto& n : r.notes) o.detail += "; " + n;
  return o;
}

// ---- 3 ----
Outcome gradients() {
  const auto r = verify::grad_suite(100, 1);
  Outcome o;
  o.pass = r.passed && r.seconds < 60.0;
  o.detail = r.summary() + " (limit 60 s)";
  return o;
}

// ---- 4 ----
Outcome reduction(const data::Dataset& ds, const train::RunConfig& cfg) {
  const auto r = verify::reduction_suite(100, 1);
  // label fraction 0 through the real minibatch builder
  const auto patches = train::collect_patches(ds, data::Split::train, 1, cfg.model.patch, 5);
  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto mb = sampling::build_minibatch(patches, 16, {}, 0.0, s);
    losses::ContrastiveBatchView v;
    v.meta = mb.meta;
    v.temperature = 0.1;
    v.embeddings = Tensor<double>({mb.meta.size(), 8});
    Rng rng(derive_seed(s, {9}));
    for (std::size_t k = 0; k < mb.meta.size(); ++k) {
      double sq = 0;
      for (std::size_t d = 0; d < 8; ++d) sq += std::pow(v.embeddings[k * 8 + d] = uniform(rng, -1, 1), 2);
      for (std::size_t d = 0; d < 8; ++d) v.embeddings[k * 8 + d] /= std::sqrt(sq) * v.temperature;
    }
    worst = std::max(worst, std::abs(losses::agcl_loss(v).value - losses::sscl_loss(v).value));
  }
  Outcome o;
  o.pass = r.passed && worst <= 1e-12;
  o.detail = r.summary() + "; label_fraction 0 minibatches: worst " + fmt("%.2g", worst) + " (tol 1e-12)";
  return o;
}

// ---- 5 ----
struct MethodResult {
  double dice = 0, miou = 0, silhouette = 0, seconds = 0;
};

MethodResult run_method(const data::Dataset& ds, train::RunConfig cfg, train::LossKind kind) {
  const auto t0 = Clock::now();
  cfg.stage1.loss = kind;
  const auto s1 = train::pretrain_stage1(ds, cfg);
  const auto s2 = train::finetune_stage2(ds, s1.params, cfg);
  const auto ev = train::evaluate(ds, s2.params, cfg);
  const auto em = train::embed(ds, s2.params, cfg);
  return {ev.dice_mean, ev.miou, em.silhouette, seconds_since(t0)};
}

Outcome trend(const data::Dataset& ds, const train::RunConfig& cfg) {
  std::map<std::string, MethodResult> r;
  double total = 0;
  for (auto kind : {train::LossKind::agcl, train::LossKind::sscl, train::LossKind::none, train::LossKind::ce}) {
    r[train::loss_name(kind)] = run_method(ds, cfg, kind);
    total += r[train::loss_name(kind)].seconds;
    const auto& m = r[train::loss_name(kind)];
    std::cout << "  benchmark " << train::loss_name(kind) << ": dice " << fmt("%.4f", m.dice) << " miou "
              << fmt("%.4f", m.miou) << " silhouette " << fmt("%.4f", m.silhouette) << " ("
              << fmt("%.0f", m.seconds) << " s)" << std::endl;
  }
  const double gap = 0.02;
  const auto &agcl = r["agcl"], &sscl = r["sscl"], &ri = r["none"], &ce = r["ce"];
  struct Check {
    std::string what;
    bool ok;
  };
  const std::vector<Check> checks{
      {"AGCL-SSCL " + fmt("%+.4f", agcl.dice - sscl.dice) + " >= 0.02", agcl.dice - sscl.dice >= gap},
      {"SSCL-RI " + fmt("%+.4f", sscl.dice - ri.dice) + " >= 0.02", sscl.dice - ri.dice >= gap},
      {"AGCL-CE " + fmt("%+.4f", agcl.dice - ce.dice) + " >= 0.02", agcl.dice - ce.dice >= gap},
      {"AGCL dice " + fmt("%.4f", agcl.dice) + " >= 0.85", agcl.dice >= 0.85},
      {"silhouette AGCL " + fmt("%.4f", agcl.silhouette) + " > SSCL " + fmt("%.4f", sscl.silhouette),
       agcl.silhouette > sscl.silhouette},
      {"runtime " + fmt("%.0f", total) + " s < 900 s", total < 900}};
  Outcome o;
  o.pass = true;
  for (const auto& c : checks) {
    o.pass = o.pass && c.ok;
    o.detail += (o.detail.empty() ? "" : "; ") + c.what + (c.ok ? " ok" : " NOT MET");
  }
  return o;
}

// ---- 6 ----
Outcome temperature_sweep(const fs::path& source_dir) {
  const auto dir = workdir("sweep");
  const auto csv = dir / "sweep.csv";
  const auto t0 = Clock::now();
  Outcome o;
  if (cli({"ablate", "--grid", (source_dir / "configs" / "ablate_temperature.ini").string(), "--out",
           csv.string()}) != 0) {
    o.detail = "ablate failed";
    return o;
  }
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<std::string, double>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.emplace_back(cells.at(0), std::stod(cells.at(5)));
  }
  std::size_t rank = 1;
  double t01 = -1;
  for (const auto& [id, dice] : rows)
    if (id == "temp=0.1") t01 = dice;
  for (const auto& [id, dice] : rows) {
    rank += dice > t01;
    o.detail += id + " dice " + fmt("%.4f", dice) + ", ";
  }
  o.pass = rows.size() == 4 && t01 >= 0 && rank <= 2;
  o.detail += std::to_string(rows.size()) + " rows; T=0.1 ranks " + std::to_string(rank) + " of " +
              std::to_string(rows.size()) + " (" + fmt("%.0f", seconds_since(t0)) + " s)";
  return o;
}

// ---- 7 ----
Outcome determinism() {
  // every subcommand twice on a reduced config; outputs compared byte for byte
  const char* run_ini = R"(seed = 21
[phantom]
n_train = 16
n_test = 4
[sampling]
[model]
[stage1]
epochs = 1
batch = 16
[stage2]
epochs = 1
[eval]
)";
  std::vector<std::map<std::string, std::string>> outputs;
  for (int rep = 0; rep < 2; ++rep) {
    const auto d = workdir("determinism" + std::to_string(rep));
    std::ofstream(d / "run.ini") << run_ini;
    std::ofstream(d / "grid.ini") << run_ini << "[ablate]\ntemp = 0.5\nlabel_fraction = 0.5\n";
    const std::string cfg = (d / "run.ini").string(), data = (d / "data").string();
    std::string check_out;
    int rc = 0;
    rc |= cli({"synth", "--config", cfg, "--out", data});
    for (const char* loss : {"agcl", "sscl", "ce", "none"}) {
      rc |= cli({"pretrain", "--data", data, "--config", cfg, "--loss", loss, "--out",
                 (d / (std::string(loss) + ".agp")).string()});
    }
    rc |= cli({"finetune", "--data", data, "--params", (d / "agcl.agp").string(), "--config", cfg, "--out",
               (d / "ft.agp").string()});
    rc |= cli({"eval", "--data", data, "--params", (d / "ft.agp").string(), "--report",
               (d / "eval.csv").string(), "--config", cfg});
    rc |= cli({"embed", "--data", data, "--params", (d / "agcl.agp").string(), "--out",
               (d / "embed.csv").string(), "--config", cfg, "--raw"});
    rc |= cli({"ablate", "--grid", (d / "grid.ini").string(), "--data", data, "--out",
               (d / "ablate.csv").string()});
    rc |= cli({"check", "--fixtures", "--reduction"}, &check_out);
    if (rc != 0) return {false, "a command failed"};
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (e.is_regular_file()) files[fs::relative(e.path(), d).string()] = slurp(e.path());
    }
    // timings in the check summary are the one legitimately varying output
    std::string stable;
    std::istringstream lines(check_out);
    for (std::string l; std::getline(lines, l);) stable += l.substr(0, l.rfind(", ")) + "\n";
    files["<check stdout>"] = stable;
    outputs.push_back(std::move(files));
  }
  std::size_t differing = 0;
  std::string which;
  for (const auto& [name, bytes] : outputs[0]) {
    const auto it = outputs[1].find(name);
    if (it == outputs[1].end() || it->second != bytes) {
      ++differing;
      which += " " + name;
    }
  }
  Outcome o;
  o.pass = differing == 0 && outputs[0].size() == outputs[1].size();
  o.detail = std::to_string(outputs[0].size()) + " output files from synth/pretrain x4/finetune/eval/embed/"
             "ablate/check compared, " + std::to_string(differing) + " differ" + which;
  return o;
}

// ---- 8 ----
Outcome container_integrity(const train::RunConfig& base) {
  auto cfg = base;
  cfg.n_train = 6;
  cfg.n_test = 2;
  const auto d = workdir("integrity");
  std::vector<std::string> problems;
  auto expect_rejected = [&](const std::string& what, const std::function<void()>& f,
                             const std::string& must_name) {
    try {
      f();
      problems.push_back(what + " accepted");
    } catch (const Error& e) {
      if (std::string(e.what()).find(must_name) == std::string::npos) {
        problems.push_back(what + " error does not name " + must_name + ": " + e.what());
      }
    }
  };

  auto ds = data::generate_dataset(cfg.phantom, cfg.n_train, cfg.n_test, cfg.quality, 8);
  data::write_dataset(ds, d / "a");
  auto back = data::read_dataset(d / "a");
  data::write_dataset(back, d / "b");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(d / "a")) {
    ++files;
    if (slurp(e.path()) != slurp(d / "b" / e.path().filename())) problems.push_back(e.path().filename().string() + " differs");
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (!(back.samples[i].image == ds.samples[i].image) || !(back.samples[i].gt_masks == ds.samples[i].gt_masks) ||
        !(back.attention[i].maps == ds.attention[i].maps))
      problems.push_back("sample " + std::to_string(i) + " tensors differ");
  }

  const auto params = train::initial_params(cfg);
  model::save_params(params, d / "p.agp");
  const auto p2 = model::load_params(d / "p.agp");
  model::save_params(p2, d / "p2.agp");
  if (!(p2.tensors == params.tensors) || slurp(d / "p.agp") != slurp(d / "p2.agp")) {
    problems.push_back("parameter round trip differs");
  }

  auto flip_byte = [](const fs::path& p, std::size_t from_end) {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto pos = static_cast<std::streamoff>(f.tellg()) - static_cast<std::streamoff>(from_end);
    f.seekg(pos);
    char c = 0;
    f.get(c);
    f.seekp(pos);
    f.put(static_cast<char>(c ^ 0x5a));
  };
  fs::copy(d / "a", d / "c");
  flip_byte(d / "c" / "sample_00003_image.agt", 7);
  expect_rejected("corrupted image", [&] { data::read_dataset(d / "c"); }, "sample_00003_image.agt");
  fs::copy(d / "a", d / "t");
  fs::resize_file(d / "t" / "sample_00001_masks.agt", fs::file_size(d / "t" / "sample_00001_masks.agt") - 10);
  expect_rejected("truncated masks", [&] { data::read_dataset(d / "t"); }, "sample_00001_masks.agt");
  flip_byte(d / "p2.agp", 100);
  expect_rejected("corrupted parameters", [&] { model::load_params(d / "p2.agp"); }, "p2.agp");
  fs::resize_file(d / "p.agp", fs::file_size(d / "p.agp") / 2);
  expect_rejected("truncated parameters", [&] { model::load_params(d / "p.agp"); }, "p.agp");

  Outcome o;
  o.pass = problems.empty();
  o.detail = std::to_string(files) + " dataset files and 1 parameter file round-tripped; 4 corruptions tried";
  for (const auto& p : problems) o.detail += "; " + p;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path source_dir = argc > 1 ? fs::path(argv[1]) : fs::path(AGCL_SOURCE_DIR);
  const auto cfg = cli::load_config(source_dir / "configs" / "default.ini");
  const auto t0 = Clock::now();
  std::cout << "benchmark: dataset " << cfg.n_train << " train / " << cfg.n_test << " test, "
            << cfg.phantom.height << "x" << cfg.phantom.width << ", O=" << cfg.phantom.n_objects
            << ", M=" << cfg.phantom.n_modalities << ", q=" << cfg.quality << ", seed " << cfg.seed
            << "; stage 1 " << cfg.stage1.epochs << " epochs, stage 2 " << cfg.stage2.epochs << " epochs"
            << std::endl;
  const auto ds = data::generate_dataset(cfg.phantom, cfg.n_train, cfg.n_test, cfg.quality, cfg.seed);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 oracle equivalence", oracle_equivalence},
      {"2 hand-computed fixtures", fixtures},
      {"3 gradient correctness", gradients},
      {"4 reduction law", [&] { return reduction(ds, cfg); }},
      {"5 trend reproduction", [&] { return trend(ds, cfg); }},
      {"6 temperature sweep", [&] { return temperature_sweep(source_dir); }},
      {"7 determinism", determinism},
      {"8 container integrity", [&] { return container_integrity(cfg); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
            << " (" << fmt("%.0f", seconds_since(t0)) << " s)" << std::endl;
  return failed ? 1 : 0;
}
