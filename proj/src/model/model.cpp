#include "agcl/model/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "agcl/core/random.hpp"
#include "agcl/data/container.hpp"
#include "json.hpp"

namespace agcl::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (feature_dim < 2) fail("feature_dim (D_E) must be >= 2");
  if (projection_dim < 2) fail("projection_dim (O_E) must be >= 2");
  if (projection_hidden < 1 || decoder_width < 1 || skip_width < 1) fail("widths must be >= 1");
  if (!(temperature > 0)) fail("temperature must be > 0");
  if (encoder_widths.size() < 2) fail("need at least two encoder stages");
  for (auto w : encoder_widths)
    if (w < 1) fail("encoder widths must be >= 1");
  const std::size_t div = std::size_t{1} << (encoder_widths.size() - 1);
  if (patch < div || patch % div != 0) {
    fail("patch " + std::to_string(patch) + " must be a multiple of " + std::to_string(div));
  }
  if (aspp_dilation < 1) fail("aspp_dilation must be >= 1");
}

std::string component_name(Component c) {
  switch (c) {
    case Component::encoder: return "encoder";
    case Component::projection: return "projection";
    case Component::decoder: return "decoder";
  }
  return "?";
}

template <typename T>
const Tensor<T>& ModelParams<T>::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw StructuralError("no parameter named '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ModelParams<T>::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw StructuralError("no parameter named '" + name + "'");
  return it->second;
}

template <typename T>
bool ModelParams<T>::is_frozen(const std::string& name) const {
  for (const auto& [c, f] : frozen) {
    if (f && name.rfind(component_name(c) + ".", 0) == 0) return true;
  }
  return false;
}

template <typename T>
std::size_t ModelParams<T>::count() const {
  std::size_t n = 0;
  for (const auto& [k, v] : tensors) n += v.numel();
  return n;
}

namespace {

// (name, shape, fan_in); fan_in 0 marks a bias
struct LayoutEntry {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

std::vector<LayoutEntry> layout(const ModelConfig& c) {
  std::vector<LayoutEntry> out;
  auto conv = [&](const std::string& n, std::size_t o, std::size_t i, std::size_t k) {
    out.push_back({n + ".weight", {o, i, k, k}, i * k * k});
    out.push_back({n + ".bias", {o}, 0});
  };
  auto dense = [&](const std::string& n, std::size_t o, std::size_t i) {
    out.push_back({n + ".weight", {o, i}, i});
    out.push_back({n + ".bias", {o}, 0});
  };
  std::size_t ch = c.in_channels;
  for (std::size_t s = 0; s < c.encoder_widths.size(); ++s) {
    conv("encoder.stage" + std::to_string(s + 1), c.encoder_widths[s], ch, 3);
    ch = c.encoder_widths[s];
  }
  conv("encoder.head", c.feature_dim, ch, 1);
  dense("projection.fc1", c.projection_hidden, c.feature_dim);
  dense("projection.fc2", c.projection_dim, c.projection_hidden);
  const std::size_t w = c.decoder_width;
  conv("decoder.aspp1", w, c.feature_dim, 1);
  conv("decoder.aspp2", w, c.feature_dim, 3);
  conv("decoder.fuse", w, 2 * w, 1);
  conv("decoder.skip", c.skip_width, c.encoder_widths[1], 1);
  conv("decoder.refine", w, w + c.skip_width, 3);
  conv("decoder.out", 2, w, 1);
  return out;
}

}  // namespace

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> p;
  p.config = cfg;
  for (const auto& s : layout(cfg)) {
    Tensor<T> t(s.shape);
    if (s.fan_in > 0) {
      Rng rng(derive_seed(seed, {data::fnv1a64(s.name.data(), s.name.size())}));
      const double bound = std::sqrt(6.0 / double(s.fan_in));
      for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -bound, bound));
    }
    p.tensors.emplace(s.name, std::move(t));
  }
  return p;
}

template <typename T>
Var<T> Bound<T>::operator[](const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw StructuralError("parameter '" + name + "' not bound");
  return it->second;
}

template <typename T>
Bound<T> bind(Tape<T>& tape, const ModelParams<T>& params) {
  Bound<T> b;
  for (const auto& [name, t] : params.tensors) {
    b.vars.emplace(name, tape.input(t, name, !params.is_frozen(name)));
  }
  return b;
}

template <typename T>
EncoderOutput<T> encoder_forward(const ModelConfig& cfg, const Bound<T>& p, Var<T> a) {
  const Shape& s = a.shape();
  if (s.size() != 4 || s[1] != cfg.in_channels || s[2] != cfg.patch || s[3] != cfg.patch) {
    throw StructuralError("encoder expects [B, " + std::to_string(cfg.in_channels) + ", " +
                          std::to_string(cfg.patch) + ", " + std::to_string(cfg.patch) +
                          "], got " + shape_string(s));
  }
  EncoderOutput<T> out;
  Var<T> h = a;
  const std::size_t stages = cfg.encoder_widths.size();
  for (std::size_t i = 0; i < stages; ++i) {
    const std::string n = "encoder.stage" + std::to_string(i + 1);
    h = relu(conv2d(h, p[n + ".weight"], std::optional{p[n + ".bias"]}, 1));
    if (i == 1) out.skip = h;
    if (i + 1 < stages) h = max_pool2d(h);
  }
  out.deep = relu(conv2d(h, p["encoder.head.weight"], std::optional{p["encoder.head.bias"]}, 0));
  out.z = global_avg_pool(out.deep);
  return out;
}

template <typename T>
Var<T> projection_forward(const ModelConfig& cfg, const Bound<T>& p, Var<T> z) {
  if (z.shape().size() != 2 || z.shape()[1] != cfg.feature_dim) {
    throw StructuralError("projection expects [B, " + std::to_string(cfg.feature_dim) +
                          "], got " + shape_string(z.shape()));
  }
  Var<T> h = relu(linear(z, p["projection.fc1.weight"], p["projection.fc1.bias"]));
  h = linear(h, p["projection.fc2.weight"], p["projection.fc2.bias"]);
  return l2_normalize_rows(h, static_cast<T>(1.0 / cfg.temperature));
}

template <typename T>
Var<T> decoder_forward(const ModelConfig& cfg, const Bound<T>& p, const EncoderOutput<T>& enc) {
  const Shape& d = enc.deep.shape();
  const Shape& k = enc.skip.shape();
  const std::size_t deep = cfg.deep_size(), half = cfg.patch / 2;
  if (d.size() != 4 || d[1] != cfg.feature_dim || d[2] != deep || d[3] != deep ||
      k.size() != 4 || k[0] != d[0] || k[1] != cfg.encoder_widths[1] || k[2] != half ||
      k[3] != half) {
    throw StructuralError("decoder got deep " + shape_string(d) + " and skip " + shape_string(k));
  }
  auto conv = [&](Var<T> x, const std::string& n, std::size_t pad, std::size_t dil = 1) {
    return conv2d(x, p["decoder." + n + ".weight"], std::optional{p["decoder." + n + ".bias"]}, pad,
                  dil);
  };
  Var<T> b1 = relu(conv(enc.deep, "aspp1", 0));
  Var<T> b2 = relu(conv(enc.deep, "aspp2", cfg.aspp_dilation, cfg.aspp_dilation));
  Var<T> h = relu(conv(concat_channels<T>({b1, b2}), "fuse", 0));
  h = upsample_bilinear(h, half / deep);
  Var<T> skip = relu(conv(enc.skip, "skip", 0));
  h = relu(conv(concat_channels<T>({h, skip}), "refine", 1));
  Var<T> logits = upsample_bilinear(conv(h, "out", 0), 2);
  return softmax_channels(logits);
}

// ---- serialization ----

namespace {

constexpr char kParamMagic[4] = {'A', 'G', 'P', '1'};

nlohmann::ordered_json config_json(const ModelConfig& c) {
  return {{"in_channels", c.in_channels},       {"patch", c.patch},
          {"encoder_widths", c.encoder_widths}, {"feature_dim", c.feature_dim},
          {"projection_hidden", c.projection_hidden}, {"projection_dim", c.projection_dim},
          {"decoder_width", c.decoder_width},   {"skip_width", c.skip_width},
          {"aspp_dilation", c.aspp_dilation},   {"temperature", c.temperature}};
}

ModelConfig config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  j.at("in_channels").get_to(c.in_channels);
  j.at("patch").get_to(c.patch);
  j.at("encoder_widths").get_to(c.encoder_widths);
  j.at("feature_dim").get_to(c.feature_dim);
  j.at("projection_hidden").get_to(c.projection_hidden);
  j.at("projection_dim").get_to(c.projection_dim);
  j.at("decoder_width").get_to(c.decoder_width);
  j.at("skip_width").get_to(c.skip_width);
  j.at("aspp_dilation").get_to(c.aspp_dilation);
  j.at("temperature").get_to(c.temperature);
  return c;
}

std::string describe_mismatch(const ModelConfig& a, const ModelConfig& b) {
  const auto ja = config_json(a), jb = config_json(b);
  std::string out;
  for (auto it = ja.begin(); it != ja.end(); ++it) {
    if (jb.at(it.key()) != it.value()) {
      out += (out.empty() ? "" : ", ") + it.key() + " file=" + it.value().dump() +
             " requested=" + jb.at(it.key()).dump();
    }
  }
  return out;
}

}  // namespace

void save_params(const ModelParams<float>& params, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["config"] = config_json(params.config);
  for (const auto& [c, f] : params.frozen) header["frozen"][component_name(c)] = f;
  header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, t] : params.tensors) header["tensors"].push_back(name);

  std::ostringstream body(std::ios::binary);
  const std::string text = header.dump();
  body.write(kParamMagic, 4);
  const std::uint64_t len = text.size();
  body.write(reinterpret_cast<const char*>(&len), sizeof len);
  body.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : params.tensors) data::write_tensor(body, t);
  const std::string bytes = body.str();
  const std::uint64_t sum = data::fnv1a64(bytes.data(), bytes.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StructuralError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
  if (!out) throw StructuralError("write failed for " + path.string());
}

ModelParams<float> load_params(const std::filesystem::path& path,
                               const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("missing file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  const std::string name = path.string();
  if (bytes.size() < 4 + 8 + 8 || bytes.compare(0, 4, kParamMagic, 4) != 0) {
    throw CorruptionError(name + ": not a parameter file");
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (data::fnv1a64(bytes.data(), bytes.size() - 8) != stored) {
    throw CorruptionError(name + ": checksum mismatch");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 8);
  if (len > bytes.size() - 20) throw CorruptionError(name + ": header length out of range");

  ModelParams<float> p;
  std::vector<std::string> names;
  try {
    const auto header = nlohmann::ordered_json::parse(bytes.substr(12, len));
    p.config = config_from_json(header.at("config"));
    for (auto& [c, f] : p.frozen) f = header.at("frozen").at(component_name(c)).get<bool>();
    header.at("tensors").get_to(names);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(name + ": bad header: " + e.what());
  }
  if (expected && !(*expected == p.config)) {
    throw CompatibilityError(name + ": stored model config differs: " +
                             describe_mismatch(p.config, *expected));
  }
  std::istringstream body(bytes.substr(12 + len, bytes.size() - 20 - len), std::ios::binary);
  for (const auto& n : names) p.tensors.emplace(n, data::read_tensor<float>(body, name + ":" + n));

  const auto reference = init_params<float>(p.config, 0);
  for (const auto& [n, t] : reference.tensors) {
    auto it = p.tensors.find(n);
    if (it == p.tensors.end() || it->second.shape() != t.shape()) {
      throw CompatibilityError(name + ": tensor '" + n + "' missing or misshapen for its config");
    }
  }
  return p;
}

#define AGCL_INSTANTIATE(T)                                                                  \
  template struct ModelParams<T>;                                                           \
  template struct Bound<T>;                                                                 \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                \
  template Bound<T> bind<T>(Tape<T>&, const ModelParams<T>&);                               \
  template EncoderOutput<T> encoder_forward<T>(const ModelConfig&, const Bound<T>&, Var<T>); \
  template Var<T> projection_forward<T>(const ModelConfig&, const Bound<T>&, Var<T>);        \
  template Var<T> decoder_forward<T>(const ModelConfig&, const Bound<T>&, const EncoderOutput<T>&);

AGCL_INSTANTIATE(float)
AGCL_INSTANTIATE(double)
#undef AGCL_INSTANTIATE

}  // namespace agcl::model
