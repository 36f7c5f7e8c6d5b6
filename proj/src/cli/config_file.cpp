#include "agcl/cli/config_file.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace agcl::cli {

using train::RunConfig;

namespace {

// Thrown by value parsers; the caller adds section, key and line.
struct BadValue {
  std::string why;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& s) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw BadValue{"'" + s + "' is not a finite number"};
  }
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) throw BadValue{"'" + s + "' is not a non-negative integer"};
  return v;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(to_u64(s)); }

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw BadValue{"'" + s + "' is not a boolean (true/false)"};
}

std::vector<std::size_t> to_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split(s, ',')) out.push_back(to_size(item));
  return out;
}

void require(bool ok, const std::string& why) {
  if (!ok) throw BadValue{why};
}

double positive(const std::string& s) {
  const double v = to_double(s);
  require(v > 0, "must be > 0");
  return v;
}

double unit(const std::string& s) {
  const double v = to_double(s);
  require(v >= 0 && v <= 1, "must lie in [0, 1]");
  return v;
}

std::size_t at_least(const std::string& s, std::size_t lo) {
  const std::size_t v = to_size(s);
  require(v >= lo, "must be >= " + std::to_string(lo));
  return v;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Table = std::map<std::string, std::map<std::string, Setter>>;

const Table& table() {
  static const Table t = {
      {"", {{"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }}}},
      {"phantom",
       {{"height", [](RunConfig& c, const std::string& v) { c.phantom.height = at_least(v, 8); }},
        {"width", [](RunConfig& c, const std::string& v) { c.phantom.width = at_least(v, 8); }},
        {"n_objects", [](RunConfig& c, const std::string& v) { c.phantom.n_objects = at_least(v, 1); }},
        {"n_modalities", [](RunConfig& c, const std::string& v) { c.phantom.n_modalities = at_least(v, 1); }},
        {"intensity_mean", [](RunConfig& c, const std::string& v) { c.phantom.intensity_mean = parse_doubles(v); }},
        {"intensity_sigma",
         [](RunConfig& c, const std::string& v) {
           c.phantom.intensity_sigma = parse_doubles(v);
           for (double s : c.phantom.intensity_sigma) require(s >= 0, "entries must be >= 0");
         }},
        {"background_mean", [](RunConfig& c, const std::string& v) { c.phantom.background_mean = parse_doubles(v); }},
        {"noise_sigma",
         [](RunConfig& c, const std::string& v) {
           c.phantom.noise_sigma = to_double(v);
           require(c.phantom.noise_sigma >= 0, "must be >= 0");
         }},
        {"axis_min",
         [](RunConfig& c, const std::string& v) {
           c.phantom.axis_min = to_double(v);
           require(c.phantom.axis_min >= 1, "must be >= 1");
         }},
        {"axis_max",
         [](RunConfig& c, const std::string& v) {
           c.phantom.axis_max = to_double(v);
           require(c.phantom.axis_max >= 1, "must be >= 1");
         }},
        {"min_gap", [](RunConfig& c, const std::string& v) { c.phantom.min_gap = to_size(v); }},
        {"max_attempts", [](RunConfig& c, const std::string& v) { c.phantom.max_attempts = at_least(v, 1); }},
        {"n_train", [](RunConfig& c, const std::string& v) { c.n_train = at_least(v, 1); }},
        {"n_test", [](RunConfig& c, const std::string& v) { c.n_test = to_size(v); }},
        {"quality", [](RunConfig& c, const std::string& v) { c.quality = unit(v); }}}},
      {"sampling",
       {{"pretrain_patches_per_object",
         [](RunConfig& c, const std::string& v) { c.sampling.pretrain_patches_per_object = at_least(v, 1); }},
        {"finetune_patches_per_object",
         [](RunConfig& c, const std::string& v) { c.sampling.finetune_patches_per_object = at_least(v, 1); }},
        {"embed_patches_per_object",
         [](RunConfig& c, const std::string& v) { c.sampling.embed_patches_per_object = at_least(v, 1); }}}},
      {"model",
       {{"in_channels",
         [](RunConfig& c, const std::string& v) {
           c.model.in_channels = to_size(v);
           require(c.model.in_channels == 2, "must be 2 (image + attention)");
         }},
        {"patch", [](RunConfig& c, const std::string& v) { c.model.patch = at_least(v, 4); }},
        {"encoder_widths",
         [](RunConfig& c, const std::string& v) {
           c.model.encoder_widths = to_sizes(v);
           require(c.model.encoder_widths.size() >= 2, "needs at least two stages");
           for (auto w : c.model.encoder_widths) require(w >= 1, "widths must be >= 1");
         }},
        {"feature_dim", [](RunConfig& c, const std::string& v) { c.model.feature_dim = at_least(v, 2); }},
        {"projection_hidden", [](RunConfig& c, const std::string& v) { c.model.projection_hidden = at_least(v, 1); }},
        {"projection_dim", [](RunConfig& c, const std::string& v) { c.model.projection_dim = at_least(v, 2); }},
        {"decoder_width", [](RunConfig& c, const std::string& v) { c.model.decoder_width = at_least(v, 1); }},
        {"skip_width", [](RunConfig& c, const std::string& v) { c.model.skip_width = at_least(v, 1); }},
        {"aspp_dilation", [](RunConfig& c, const std::string& v) { c.model.aspp_dilation = at_least(v, 1); }}}},
      {"stage1",
       {{"loss",
         [](RunConfig& c, const std::string& v) {
           try {
             c.stage1.loss = train::parse_loss(v);
           } catch (const ConfigError& e) {
             throw BadValue{e.what()};
           }
         }},
        {"temp", [](RunConfig& c, const std::string& v) { c.stage1.temp = positive(v); }},
        {"epochs", [](RunConfig& c, const std::string& v) { c.stage1.epochs = to_size(v); }},
        {"batch", [](RunConfig& c, const std::string& v) { c.stage1.batch = at_least(v, 1); }},
        {"lr", [](RunConfig& c, const std::string& v) { c.stage1.lr = positive(v); }},
        {"modalities", [](RunConfig& c, const std::string& v) { c.stage1.modalities = parse_modalities(v); }},
        {"label_fraction", [](RunConfig& c, const std::string& v) { c.stage1.label_fraction = unit(v); }}}},
      {"stage2",
       {{"epochs", [](RunConfig& c, const std::string& v) { c.stage2.epochs = to_size(v); }},
        {"batch", [](RunConfig& c, const std::string& v) { c.stage2.batch = at_least(v, 1); }},
        {"lr", [](RunConfig& c, const std::string& v) { c.stage2.lr = positive(v); }},
        {"freeze_encoder", [](RunConfig& c, const std::string& v) { c.stage2.freeze_encoder = to_bool(v); }}}},
      {"eval",
       {{"threshold",
         [](RunConfig& c, const std::string& v) {
           c.eval.threshold = to_double(v);
           require(c.eval.threshold > 0 && c.eval.threshold < 1, "must lie in (0, 1)");
         }}}},
  };
  return t;
}

}  // namespace

std::vector<double> parse_doubles(const std::string& value) {
  std::vector<double> out;
  try {
    for (const auto& item : split(value, ',')) out.push_back(to_double(item));
  } catch (const BadValue& b) {
    throw ValidationError(b.why);
  }
  if (out.empty()) throw ValidationError("empty list");
  return out;
}

std::set<int> parse_modalities(const std::string& value) {
  if (trim(value) == "all" || trim(value).empty()) return {};
  std::set<int> out;
  for (const auto& item : split(value, ',')) {
    std::uint64_t m = 0;
    try {
      m = to_u64(item);
    } catch (const BadValue& b) {
      throw ValidationError(b.why);
    }
    if (m < 1) throw ValidationError("modality ids start at 1");
    out.insert(static_cast<int>(m));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RunConfig parse_config(const std::string& text, const std::string& origin,
                       const std::set<std::string>& required) {
  RunConfig cfg;
  std::string section;
  std::set<std::string> seen_sections;
  std::set<std::string> seen_keys;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  auto where = [&](const std::string& key) {
    return "[" + section + "]." + key + " (" + origin + " line " + std::to_string(line_no) + ")";
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValidationError(origin + " line " + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (!table().count(section) || section.empty()) {
        throw ValidationError(origin + " line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      }
      if (!seen_sections.insert(section).second) {
        throw ValidationError(origin + " line " + std::to_string(line_no) + ": duplicate section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + " line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto& keys = table().at(section);
    auto it = keys.find(key);
    if (it == keys.end()) throw ValidationError("unknown key " + where(key));
    if (!seen_keys.insert(section + "." + key).second) throw ValidationError("duplicate key " + where(key));
    try {
      it->second(cfg, value);
    } catch (const BadValue& b) {
      throw ValidationError("invalid value for " + where(key) + ": " + b.why);
    } catch (const ValidationError& e) {
      throw ValidationError("invalid value for " + where(key) + ": " + e.what());
    }
  }
  for (const auto& s : required) {
    if (!seen_sections.count(s)) throw ValidationError(origin + ": missing section [" + s + "]");
  }
  cfg.model.temperature = cfg.stage1.temp;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::set<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string(), required);
}

std::string config_echo(const RunConfig& c) {
  auto list = [](const auto& xs) {
    std::string out;
    for (const auto& x : xs) {
      if (!out.empty()) out += ", ";
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>) out += format_double(x);
      else out += std::to_string(x);
    }
    return out;
  };
  std::ostringstream o;
  o << "seed = " << c.seed << "\n\n[phantom]\n"
    << "height = " << c.phantom.height << "\n"
    << "width = " << c.phantom.width << "\n"
    << "n_objects = " << c.phantom.n_objects << "\n"
    << "n_modalities = " << c.phantom.n_modalities << "\n"
    << "intensity_mean = " << list(c.phantom.intensity_mean) << "\n"
    << "intensity_sigma = " << list(c.phantom.intensity_sigma) << "\n"
    << "background_mean = " << list(c.phantom.background_mean) << "\n"
    << "noise_sigma = " << format_double(c.phantom.noise_sigma) << "\n"
    << "axis_min = " << format_double(c.phantom.axis_min) << "\n"
    << "axis_max = " << format_double(c.phantom.axis_max) << "\n"
    << "min_gap = " << c.phantom.min_gap << "\n"
    << "max_attempts = " << c.phantom.max_attempts << "\n"
    << "n_train = " << c.n_train << "\n"
    << "n_test = " << c.n_test << "\n"
    << "quality = " << format_double(c.quality) << "\n\n[sampling]\n"
    << "pretrain_patches_per_object = " << c.sampling.pretrain_patches_per_object << "\n"
    << "finetune_patches_per_object = " << c.sampling.finetune_patches_per_object << "\n"
    << "embed_patches_per_object = " << c.sampling.embed_patches_per_object << "\n\n[model]\n"
    << "in_channels = " << c.model.in_channels << "\n"
    << "patch = " << c.model.patch << "\n"
    << "encoder_widths = " << list(c.model.encoder_widths) << "\n"
    << "feature_dim = " << c.model.feature_dim << "\n"
    << "projection_hidden = " << c.model.projection_hidden << "\n"
    << "projection_dim = " << c.model.projection_dim << "\n"
    << "decoder_width = " << c.model.decoder_width << "\n"
    << "skip_width = " << c.model.skip_width << "\n"
    << "aspp_dilation = " << c.model.aspp_dilation << "\n\n[stage1]\n"
    << "loss = " << train::loss_name(c.stage1.loss) << "\n"
    << "temp = " << format_double(c.stage1.temp) << "\n"
    << "epochs = " << c.stage1.epochs << "\n"
    << "batch = " << c.stage1.batch << "\n"
    << "lr = " << format_double(c.stage1.lr) << "\n"
    << "modalities = " << (c.stage1.modalities.empty() ? std::string("all") : list(c.stage1.modalities)) << "\n"
    << "label_fraction = " << format_double(c.stage1.label_fraction) << "\n\n[stage2]\n"
    << "epochs = " << c.stage2.epochs << "\n"
    << "batch = " << c.stage2.batch << "\n"
    << "lr = " << format_double(c.stage2.lr) << "\n"
    << "freeze_encoder = " << (c.stage2.freeze_encoder ? "true" : "false") << "\n\n[eval]\n"
    << "threshold = " << format_double(c.eval.threshold) << "\n";
  return o.str();
}

}  // namespace agcl::cli
