#include "agcl/cli/app.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "agcl/cli/config_file.hpp"
#include "agcl/core/kernels.hpp"
#include "agcl/data/dataset.hpp"
#include "agcl/model/model.hpp"
#include "agcl/train/inference.hpp"
#include "agcl/train/report.hpp"
#include "agcl/train/trainer.hpp"
#include "agcl/verify/suites.hpp"

namespace agcl::cli {

namespace fs = std::filesystem;
using train::RunConfig;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StructuralError("cannot write " + path.string());
  out << text;
}

fs::path sidecar(const fs::path& path, const std::string& suffix) {
  return fs::path(path.string() + suffix);
}

// The dataset fixes image geometry and label space; the config must agree.
void check_dataset(const data::Dataset& ds, const RunConfig& cfg) {
  const auto& m = ds.manifest;
  if (m.n_objects != cfg.phantom.n_objects || m.n_modalities != cfg.phantom.n_modalities) {
    throw ValidationError("dataset has " + std::to_string(m.n_objects) + " objects / " +
                          std::to_string(m.n_modalities) + " modalities, config [phantom] says " +
                          std::to_string(cfg.phantom.n_objects) + " / " +
                          std::to_string(cfg.phantom.n_modalities));
  }
  if (m.phantom.height < cfg.model.patch || m.phantom.width < cfg.model.patch) {
    throw ValidationError("[model].patch exceeds the dataset image size");
  }
}

model::ModelParams<float> load_for(const fs::path& path, const RunConfig& cfg) {
  auto p = model::load_params(path);
  auto want = cfg.model;
  want.temperature = p.config.temperature;
  if (!(want == p.config)) {
    throw CompatibilityError(path.string() + ": parameters were built for a different [model] section");
  }
  return p;
}

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_config(path, {});
}

train::MetricsRow eval_row(const std::string& run_id, const train::EvalReport& ev,
                           const train::EmbeddingReport& em) {
  train::MetricsRow r;
  r.run_id = run_id;
  r.stage = "eval";
  r.dice_mean = ev.dice_mean;
  r.dice_per_object = ev.dice_per_object;
  r.miou = ev.miou;
  r.silhouette = em.silhouette;
  return r;
}

// ---- ablation grid ----

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

struct Grid {
  RunConfig base;
  std::vector<GridAxis> axes;
};

Grid load_grid(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read grid file " + path.string());
  std::string line, base_text;
  std::vector<std::pair<std::size_t, std::string>> ablate_lines;
  bool in_ablate = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = line.substr(0, line.find_first_of("#;"));
    t.erase(0, t.find_first_not_of(" \t\r"));
    t.erase(t.find_last_not_of(" \t\r") + 1);
    if (!t.empty() && t.front() == '[') in_ablate = t == "[ablate]";
    if (in_ablate) {
      if (!t.empty() && t != "[ablate]") ablate_lines.emplace_back(line_no, t);
      base_text += "\n";  // keep line numbers of the base config stable
    } else {
      base_text += line + "\n";
    }
  }
  Grid g;
  g.base = parse_config(base_text, path.string());
  const std::set<std::string> known{"temp", "label_fraction", "modalities", "loss"};
  std::set<std::string> seen;
  for (const auto& [no, text] : ablate_lines) {
    const auto eq = text.find('=');
    const std::string where = path.string() + " line " + std::to_string(no);
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = values");
    std::string key = text.substr(0, eq), value = text.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    if (!known.count(key)) throw ValidationError("unknown key [ablate]." + key + " (" + where + ")");
    if (!seen.insert(key).second) throw ValidationError("duplicate key [ablate]." + key + " (" + where + ")");
    GridAxis axis{key, {}};
    const char sep = value.find('|') != std::string::npos || key == "modalities" ? '|' : ',';
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, sep)) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (!item.empty()) axis.values.push_back(item);
    }
    if (axis.values.empty()) throw ValidationError("[ablate]." + key + " lists no values (" + where + ")");
    // validate every point up front so a bad value fails before any training
    for (const auto& v : axis.values) {
      RunConfig probe = g.base;
      try {
        if (key == "temp") probe.stage1.temp = parse_doubles(v).at(0);
        if (key == "label_fraction") probe.stage1.label_fraction = parse_doubles(v).at(0);
        if (key == "modalities") probe.stage1.modalities = parse_modalities(v);
        if (key == "loss") probe.stage1.loss = train::parse_loss(v);
        probe.validate();
      } catch (const Error& e) {
        throw ValidationError("invalid value '" + v + "' for [ablate]." + key + " (" + where + "): " + e.what());
      }
    }
    g.axes.push_back(std::move(axis));
  }
  if (g.axes.empty()) throw ValidationError(path.string() + ": [ablate] section lists no sweeps");
  return g;
}

RunConfig apply_point(RunConfig cfg, const std::string& key, const std::string& value) {
  if (key == "temp") cfg.stage1.temp = parse_doubles(value).at(0);
  if (key == "label_fraction") cfg.stage1.label_fraction = parse_doubles(value).at(0);
  if (key == "modalities") cfg.stage1.modalities = parse_modalities(value);
  if (key == "loss") cfg.stage1.loss = train::parse_loss(value);
  cfg.model.temperature = cfg.stage1.temp;
  return cfg;
}

}  // namespace

std::size_t ablate_workers() {
  const char* env = std::getenv("AGCL_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ValidationError("AGCL_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(v);
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-guided contrastive pretraining and patch segmentation on synthetic phantoms", "agcl"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, params_path, report_path, grid_path, run_id, loss_arg;
  double temp_arg = 0;
  bool record_time = false, raw = false, do_grad = false, do_oracle = false, do_fixtures = false,
       do_reduction = false;

  auto* synth = app.add_subcommand("synth", "generate a phantom dataset");
  synth->add_option("--config", config_path, "run config file")->required();
  synth->add_option("--out", out_path, "output dataset directory")->required();

  auto* pretrain = app.add_subcommand("pretrain", "stage 1: train the encoder");
  pretrain->add_option("--data", data_dir, "dataset directory")->required();
  pretrain->add_option("--config", config_path, "run config file")->required();
  pretrain->add_option("--loss", loss_arg, "sscl | agcl | ce | none (overrides [stage1].loss)")
      ->check(CLI::IsMember({"sscl", "agcl", "ce", "none"}));
  pretrain->add_option("--temp", temp_arg, "temperature (overrides [stage1].temp)");
  pretrain->add_option("--out", out_path, "output parameter file")->required();
  pretrain->add_option("--run-id", run_id, "run identifier written to the CSV");
  pretrain->add_flag("--record-time", record_time, "write wall-clock seconds into the CSV");

  auto* finetune = app.add_subcommand("finetune", "stage 2: train the decoder");
  finetune->add_option("--data", data_dir, "dataset directory")->required();
  finetune->add_option("--params", params_path, "stage-1 parameter file")->required();
  finetune->add_option("--config", config_path, "run config file")->required();
  finetune->add_option("--out", out_path, "output parameter file")->required();
  finetune->add_option("--run-id", run_id, "run identifier written to the CSV");
  finetune->add_flag("--record-time", record_time, "write wall-clock seconds into the CSV");

  auto* eval = app.add_subcommand("eval", "segment the test split and report metrics");
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--params", params_path, "stage-2 parameter file")->required();
  eval->add_option("--report", report_path, "metrics CSV to write")->required();
  eval->add_option("--config", config_path, "run config file (defaults otherwise)");
  eval->add_option("--run-id", run_id, "run identifier written to the CSV");
  eval->add_flag("--record-time", record_time, "write wall-clock seconds into the CSV");

  auto* embed = app.add_subcommand("embed", "export PCA coordinates and silhouette of test patches");
  embed->add_option("--data", data_dir, "dataset directory")->required();
  embed->add_option("--params", params_path, "parameter file")->required();
  embed->add_option("--out", out_path, "embedding CSV to write")->required();
  embed->add_option("--config", config_path, "run config file (defaults otherwise)");
  embed->add_flag("--raw", raw, "append raw encoder features");

  auto* check = app.add_subcommand("check", "run the verification suites");
  check->add_flag("--grad", do_grad, "gradient suite");
  check->add_flag("--oracle", do_oracle, "loss oracle suite");
  check->add_flag("--fixtures", do_fixtures, "hand-computed fixtures");
  check->add_flag("--reduction", do_reduction, "AGCL-to-SSCL reduction laws");

  auto* ablate = app.add_subcommand("ablate", "sweep temperature, label fraction or modalities");
  ablate->add_option("--grid", grid_path, "grid file: run config plus an [ablate] section")->required();
  ablate->add_option("--out", out_path, "CSV with one row per grid point")->required();
  ablate->add_option("--data", data_dir, "dataset directory (generated from the grid config otherwise)");
  ablate->add_flag("--record-time", record_time, "write wall-clock seconds into the CSV");

  std::vector<std::string> argv_store{"agcl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  try {
    if (*synth) {
      const RunConfig cfg = load_config(config_path, {"phantom"});
      auto ds = data::generate_dataset(cfg.phantom, cfg.n_train, cfg.n_test, cfg.quality, cfg.seed);
      write_dataset(ds, out_path);
      write_text(fs::path(out_path) / "config_echo.ini", config_echo(cfg));
      out << "wrote " << ds.samples.size() << " samples to " << out_path << "\n";
      return kExitOk;
    }
    if (*pretrain) {
      RunConfig cfg = load_config(config_path);
      if (!loss_arg.empty()) cfg.stage1.loss = train::parse_loss(loss_arg);
      if (pretrain->count("--temp")) {
        if (!(temp_arg > 0) || !std::isfinite(temp_arg)) throw ValidationError("--temp must be > 0");
        cfg.stage1.temp = cfg.model.temperature = temp_arg;
      }
      cfg.validate();
      const auto ds = data::read_dataset(data_dir);
      check_dataset(ds, cfg);
      const auto result = train::pretrain_stage1(ds, cfg);
      model::save_params(result.params, out_path);
      if (run_id.empty()) run_id = train::loss_name(cfg.stage1.loss);
      train::write_metrics_csv(sidecar(out_path, ".history.csv"),
                               train::history_rows(run_id, result.history, record_time),
                               cfg.phantom.n_objects);
      write_text(sidecar(out_path, ".config.ini"), config_echo(cfg));
      out << "pretrain " << train::loss_name(cfg.stage1.loss) << ": " << result.history.epochs.size()
          << " epochs";
      if (!result.history.epochs.empty()) out << ", final loss " << result.history.epochs.back().loss;
      out << "\n";
      return kExitOk;
    }
    if (*finetune) {
      const RunConfig cfg = load_config(config_path);
      const auto ds = data::read_dataset(data_dir);
      check_dataset(ds, cfg);
      const auto result = train::finetune_stage2(ds, load_for(params_path, cfg), cfg);
      model::save_params(result.params, out_path);
      if (run_id.empty()) run_id = "finetune";
      train::write_metrics_csv(sidecar(out_path, ".history.csv"),
                               train::history_rows(run_id, result.history, record_time),
                               cfg.phantom.n_objects);
      write_text(sidecar(out_path, ".config.ini"), config_echo(cfg));
      out << "finetune: " << result.history.epochs.size() << " epochs";
      if (!result.history.epochs.empty()) out << ", final loss " << result.history.epochs.back().loss;
      out << "\n";
      return kExitOk;
    }
    if (*eval) {
      const auto start = std::chrono::steady_clock::now();
      RunConfig cfg = config_or_default(config_path);
      const auto ds = data::read_dataset(data_dir);
      const auto params = model::load_params(params_path);
      cfg.phantom.n_objects = ds.manifest.n_objects;
      const auto ev = train::evaluate(ds, params, cfg);
      const auto em = train::embed(ds, params, cfg);
      for (const auto& w : ev.warnings) err << "warning: " << w << "\n";
      auto row = eval_row(run_id.empty() ? "eval" : run_id, ev, em);
      if (record_time) row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      train::write_metrics_csv(report_path, {row}, ds.manifest.n_objects);
      write_text(sidecar(report_path, ".config.ini"), config_echo(cfg));
      out << "dice_mean " << ev.dice_mean << " miou " << ev.miou << " silhouette " << em.silhouette << "\n";
      return kExitOk;
    }
    if (*embed) {
      const RunConfig cfg = config_or_default(config_path);
      const auto ds = data::read_dataset(data_dir);
      const auto em = train::embed(ds, model::load_params(params_path), cfg);
      train::write_embedding_csv(out_path, em, raw);
      write_text(sidecar(out_path, ".config.ini"), config_echo(cfg));
      out << "silhouette " << em.silhouette << " over " << em.patches.size() << " patches";
      if (em.pca.rank_deficient) out << " (PCA rank below 2)";
      out << "\n";
      return kExitOk;
    }
    if (*check) {
      const bool all = !(do_grad || do_oracle || do_fixtures || do_reduction);
      std::vector<verify::SuiteResult> results;
      if (all || do_oracle) results.push_back(verify::oracle_suite());
      if (all || do_fixtures) results.push_back(verify::fixture_suite());
      if (all || do_reduction) results.push_back(verify::reduction_suite());
      if (all || do_grad) results.push_back(verify::grad_suite());
      bool ok = true;
      for (const auto& r : results) {
        out << r.summary() << "\n";
        for (const auto& n : r.notes) out << "  " << n << "\n";
        ok = ok && r.passed;
      }
      return ok ? kExitOk : kExitNumeric;
    }
    if (*ablate) {
      const Grid grid = load_grid(grid_path);
      const std::size_t workers = ablate_workers();
      const data::Dataset ds =
          data_dir.empty() ? data::generate_dataset(grid.base.phantom, grid.base.n_train, grid.base.n_test,
                                                    grid.base.quality, grid.base.seed)
                           : data::read_dataset(data_dir);
      check_dataset(ds, grid.base);

      struct Point {
        std::string key, value;
      };
      std::vector<Point> points;
      for (const auto& a : grid.axes)
        for (const auto& v : a.values) points.push_back({a.key, v});
      std::vector<std::string> lines(points.size());
      std::vector<std::exception_ptr> errors(points.size());
      std::atomic<std::size_t> next{0};
      auto work = [&] {
        if (workers > 1) kernels::set_threads(1);
        for (std::size_t i; (i = next++) < points.size();) {
          try {
            const auto start = std::chrono::steady_clock::now();
            const RunConfig cfg = apply_point(grid.base, points[i].key, points[i].value);
            const auto s1 = train::pretrain_stage1(ds, cfg);
            const auto s2 = train::finetune_stage2(ds, s1.params, cfg);
            const auto ev = train::evaluate(ds, s2.params, cfg);
            const auto em = train::embed(ds, s2.params, cfg);
            std::string line = points[i].key + "=" + points[i].value + "," + points[i].key + ",\"" +
                               points[i].value + "\",";
            line += s1.history.epochs.empty() ? "" : train::csv_number(s1.history.epochs.back().loss);
            line += ",";
            line += s2.history.epochs.empty() ? "" : train::csv_number(s2.history.epochs.back().loss);
            line += "," + train::csv_number(ev.dice_mean);
            for (double d : ev.dice_per_object) line += "," + train::csv_number(d);
            line += "," + train::csv_number(ev.miou) + "," + train::csv_number(em.silhouette) + ",";
            if (record_time) {
              line += train::csv_number(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            }
            lines[i] = line;
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      for (std::size_t w = 1; w < std::min(workers, points.size()); ++w) pool.emplace_back(work);
      work();
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);

      std::ofstream csv(out_path, std::ios::trunc);
      if (!csv) throw StructuralError("cannot write " + out_path);
      csv << "run_id,axis,value,pretrain_loss,finetune_loss,dice_mean";
      for (std::size_t o = 1; o <= ds.manifest.n_objects; ++o) csv << ",dice_o" << o;
      csv << ",miou,silhouette,wall_clock_s\n";
      for (const auto& l : lines) csv << l << "\n";
      write_text(sidecar(out_path, ".config.ini"), config_echo(grid.base));
      out << "ablate: " << points.size() << " grid points written to " << out_path << "\n";
      return kExitOk;
    }
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  err << app.help();
  return kExitInvalid;
}

}  // namespace agcl::cli
