#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "agcl/cli/app.hpp"
#include "agcl/cli/config_file.hpp"

namespace fs = std::filesystem;
using namespace agcl;
using namespace agcl::cli;

namespace {

const std::string kSections = "[phantom]\n[sampling]\n[model]\n[stage1]\n[stage2]\n[eval]\n";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "test.ini");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / "agcl_test_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough that a whole synth/pretrain/finetune/eval chain takes seconds.
const char* kTinyRun = R"(seed = 3
[phantom]
n_train = 6
n_test = 3
[sampling]
pretrain_patches_per_object = 2
[model]
patch = 16
encoder_widths = 4, 8, 8
feature_dim = 16
projection_hidden = 16
projection_dim = 8
decoder_width = 8
skip_width = 4
[stage1]
epochs = 2
batch = 12
[stage2]
epochs = 2
batch = 8
[eval]
)";

}  // namespace

TEST(ConfigFile, MinimalFileFillsDefaults) {
  const auto cfg = parse_config(kSections, "min.ini");
  EXPECT_EQ(config_echo(cfg), config_echo(train::RunConfig{}));
  EXPECT_EQ(cfg.stage1.temp, 0.1);
  EXPECT_EQ(cfg.model.temperature, 0.1);
}

TEST(ConfigFile, EchoRoundTripsExactly) {
  auto text = kSections;
  text.insert(text.find("[stage2]"), "temp = 0.3\nlabel_fraction = 0.25\nmodalities = 2\n");
  text = "seed = 77\n" + text;
  const auto cfg = parse_config(text, "x.ini");
  const auto again = parse_config(config_echo(cfg), "echo.ini");
  EXPECT_EQ(config_echo(again), config_echo(cfg));
  EXPECT_EQ(again.seed, 77u);
  EXPECT_EQ(again.stage1.temp, 0.3);
  EXPECT_EQ(again.stage1.modalities, std::set<int>{2});
}

TEST(ConfigFile, NegativeTemperatureNamesKeyAndLine) {
  auto text = kSections;
  text.insert(text.find("[stage2]"), "temp = -1\n");
  const auto msg = error_of(text);
  EXPECT_NE(msg.find("[stage1].temp"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
}

TEST(ConfigFile, DuplicateKeyRejected) {
  auto text = kSections;
  text.insert(text.find("[stage2]"), "epochs = 2\nepochs = 3\n");
  const auto msg = error_of(text);
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("[stage1].epochs"), std::string::npos) << msg;
}

TEST(ConfigFile, UnknownKeySectionAndMissingSection) {
  auto text = kSections;
  text.insert(text.find("[stage2]"), "temperature = 0.1\n");
  EXPECT_NE(error_of(text).find("[stage1].temperature"), std::string::npos);
  EXPECT_NE(error_of(kSections + "[extra]\n").find("extra"), std::string::npos);
  EXPECT_NE(error_of("[phantom]\n").find("missing"), std::string::npos);
  EXPECT_NO_THROW(parse_config("[phantom]\n", "synth.ini", {"phantom"}));
}

TEST(ConfigFile, RangeChecksAtLoad) {
  for (const std::string line : {"lr = 0", "label_fraction = 1.5", "loss = triplet", "batch = x",
                                 "modalities = 3", "epochs = -2"}) {
    auto text = kSections;
    text.insert(text.find("[stage2]"), line + "\n");
    EXPECT_NE(error_of(text).find("[stage1]."), std::string::npos) << line;
  }
  EXPECT_FALSE(error_of("seed = 1\n[phantom]\nquality = 2\n[sampling]\n[model]\n[stage1]\n[stage2]\n[eval]\n").empty());
}

TEST(ConfigFile, ShippedConfigsParse) {
  const fs::path root = AGCL_SOURCE_DIR;
  const auto cfg = load_config(root / "configs" / "default.ini");
  EXPECT_EQ(config_echo(cfg), config_echo(train::RunConfig{}));
  // the grid file is a run config plus an [ablate] section
  std::ifstream in(root / "configs" / "ablate_temperature.ini");
  std::string line, base;
  while (std::getline(in, line) && line != "[ablate]") base += line + "\n";
  EXPECT_EQ(config_echo(parse_config(base, "grid")), config_echo(train::RunConfig{}));
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("Usage"), std::string::npos);
  for (const char* sub : {"synth", "pretrain", "finetune", "eval", "embed", "check", "ablate"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
  EXPECT_EQ(run({"pretrain", "--help"}).code, kExitOk);
}

TEST(Cli, UnknownSubcommandOrFlagExitsOne) {
  auto r = run({"train"});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"check", "--bogus"}).code, kExitInvalid);
  EXPECT_EQ(run({}).code, kExitInvalid);
  EXPECT_EQ(run({"pretrain", "--data", "d", "--config", "c", "--out", "o", "--loss", "mse"}).code, kExitInvalid);
}

TEST(Cli, MissingFilesAreValidationFailures) {
  const auto dir = scratch("missing");
  auto r = run({"synth", "--config", (dir / "nope.ini").string(), "--out", (dir / "d").string()});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, CheckSuitesPrintOneSummaryEach) {
  const auto r = run({"check", "--oracle", "--fixtures", "--reduction"});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  std::size_t lines = 0;
  std::istringstream in(r.out);
  for (std::string l; std::getline(in, l);) lines += l.rfind("  ", 0) != 0;
  EXPECT_EQ(lines, 3u) << r.out;
}

TEST(Cli, FullPipelineIsDeterministic) {
  std::vector<std::string> outputs;
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = scratch("pipe" + std::to_string(rep));
    std::ofstream(dir / "run.ini") << kTinyRun;
    const auto cfg = (dir / "run.ini").string(), data = (dir / "data").string();
    ASSERT_EQ(run({"synth", "--config", cfg, "--out", data}).code, 0);
    auto r = run({"pretrain", "--data", data, "--config", cfg, "--loss", "agcl", "--temp", "0.2",
                  "--out", (dir / "s1.agp").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run({"finetune", "--data", data, "--params", (dir / "s1.agp").string(), "--config", cfg, "--out",
             (dir / "s2.agp").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run({"eval", "--data", data, "--params", (dir / "s2.agp").string(), "--report",
             (dir / "eval.csv").string(), "--config", cfg});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run({"embed", "--data", data, "--params", (dir / "s1.agp").string(), "--out",
             (dir / "embed.csv").string(), "--config", cfg, "--raw"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(slurp(dir / "s1.agp.config.ini").find("temp = 0.20000000000000001"), std::string::npos);

    std::string all;
    for (const char* f : {"data/manifest.json", "data/config_echo.ini", "s1.agp", "s1.agp.history.csv",
                          "s1.agp.config.ini", "s2.agp", "s2.agp.history.csv", "eval.csv", "embed.csv"}) {
      ASSERT_TRUE(fs::exists(dir / f)) << f;
      all += slurp(dir / f);
    }
    outputs.push_back(all);
  }
  EXPECT_EQ(outputs[0], outputs[1]);
}

TEST(Cli, FinetuneRejectsMismatchedModel) {
  const auto dir = scratch("mismatch");
  std::ofstream(dir / "run.ini") << kTinyRun;
  std::string other = kTinyRun;
  other.replace(other.find("feature_dim = 16"), 16, "feature_dim = 12");
  std::ofstream(dir / "other.ini") << other;
  const auto data = (dir / "data").string();
  ASSERT_EQ(run({"synth", "--config", (dir / "run.ini").string(), "--out", data}).code, 0);
  ASSERT_EQ(run({"pretrain", "--data", data, "--config", (dir / "run.ini").string(), "--loss", "none",
                 "--out", (dir / "p.agp").string()})
                .code,
            0);
  const auto r = run({"finetune", "--data", data, "--params", (dir / "p.agp").string(), "--config",
                      (dir / "other.ini").string(), "--out", (dir / "q.agp").string()});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("model"), std::string::npos) << r.err;
}

TEST(Cli, AblateOneRowPerPointIndependentOfFanOut) {
  std::vector<std::string> csvs;
  for (const char* threads : {"1", "2"}) {
    const auto dir = scratch(std::string("ablate") + threads);
    std::ofstream(dir / "grid.ini") << kTinyRun << "[ablate]\ntemp = 0.5, 0.1\nlabel_fraction = 0\n";
    ::setenv("AGCL_THREADS", threads, 1);
    const auto r = run({"ablate", "--grid", (dir / "grid.ini").string(), "--out", (dir / "a.csv").string()});
    ::unsetenv("AGCL_THREADS");
    ASSERT_EQ(r.code, 0) << r.err;
    csvs.push_back(slurp(dir / "a.csv"));
  }
  EXPECT_EQ(csvs[0], csvs[1]);
  std::istringstream in(csvs[0]);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1].rfind("temp=0.5,", 0), 0u);
  EXPECT_EQ(lines[2].rfind("temp=0.1,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("label_fraction=0,", 0), 0u);
}

TEST(Cli, AblateRejectsBadGrid) {
  const auto dir = scratch("badgrid");
  std::ofstream(dir / "grid.ini") << kTinyRun << "[ablate]\ntemp = 0.1, -3\n";
  auto r = run({"ablate", "--grid", (dir / "grid.ini").string(), "--out", (dir / "a.csv").string()});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("[ablate].temp"), std::string::npos) << r.err;
  std::ofstream(dir / "grid2.ini") << kTinyRun << "[ablate]\nbatch = 4\n";
  r = run({"ablate", "--grid", (dir / "grid2.ini").string(), "--out", (dir / "a.csv").string()});
  EXPECT_EQ(r.code, kExitInvalid);
}
