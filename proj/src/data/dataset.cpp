#include "agcl/data/dataset.hpp"

#include <fstream>

#include "agcl/core/random.hpp"
#include "agcl/data/container.hpp"
#include "json.hpp"

namespace agcl::data {

using json = nlohmann::ordered_json;

std::string split_name(Split s) { return s == Split::train ? "train" : "test"; }

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

Dataset generate_dataset(const PhantomConfig& cfg, std::size_t n_train, std::size_t n_test,
                         double quality, std::uint64_t seed) {
  cfg.validate();
  if (!(quality >= 0.0 && quality <= 1.0)) {
    throw RangeError("attention quality must lie in [0, 1], got " + std::to_string(quality));
  }
  const std::size_t n = n_train + n_test;
  Dataset ds;
  ds.samples.resize(n);
  ds.attention.resize(n);
  ds.splits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.samples[i] = generate_phantom(cfg, derive_seed(seed, {i, 0}));
    ds.samples[i].id = i;
    ds.attention[i] = simulate_attention(ds.samples[i], quality, derive_seed(seed, {i, 1}));
    ds.splits[i] = i < n_train ? Split::train : Split::test;
  }
  auto& m = ds.manifest;
  m.n_samples = n;
  m.n_objects = cfg.n_objects;
  m.n_modalities = cfg.n_modalities;
  m.seed = seed;
  m.quality = quality;
  m.phantom = cfg;
  m.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.samples[i].id = i;
    m.samples[i].modality = ds.samples[i].modality;
    m.samples[i].split = ds.splits[i];
  }
  return ds;
}

namespace {

json phantom_json(const PhantomConfig& c) {
  return json{{"height", c.height},
              {"width", c.width},
              {"n_objects", c.n_objects},
              {"n_modalities", c.n_modalities},
              {"intensity_mean", c.intensity_mean},
              {"intensity_sigma", c.intensity_sigma},
              {"background_mean", c.background_mean},
              {"noise_sigma", c.noise_sigma},
              {"axis_min", c.axis_min},
              {"axis_max", c.axis_max},
              {"min_gap", c.min_gap},
              {"max_attempts", c.max_attempts}};
}

PhantomConfig phantom_from_json(const json& j) {
  PhantomConfig c;
  j.at("height").get_to(c.height);
  j.at("width").get_to(c.width);
  j.at("n_objects").get_to(c.n_objects);
  j.at("n_modalities").get_to(c.n_modalities);
  j.at("intensity_mean").get_to(c.intensity_mean);
  j.at("intensity_sigma").get_to(c.intensity_sigma);
  j.at("background_mean").get_to(c.background_mean);
  j.at("noise_sigma").get_to(c.noise_sigma);
  j.at("axis_min").get_to(c.axis_min);
  j.at("axis_max").get_to(c.axis_max);
  j.at("min_gap").get_to(c.min_gap);
  j.at("max_attempts").get_to(c.max_attempts);
  return c;
}

json ref_json(const FileRef& r) {
  return json{{"file", r.file}, {"dtype", r.dtype}, {"shape", r.shape}, {"fnv1a64", r.checksum}};
}

FileRef ref_from_json(const json& j) {
  return FileRef{j.at("file").get<std::string>(), j.at("dtype").get<std::string>(),
                 j.at("shape").get<Shape>(), j.at("fnv1a64").get<std::string>()};
}

template <typename T>
FileRef store(const std::filesystem::path& dir, const std::string& name, const Tensor<T>& t) {
  write_tensor(dir / name, t);
  return FileRef{name, dtype_name(dtype_of<T>()), t.shape(), hex64(file_checksum(dir / name))};
}

template <typename T>
Tensor<T> load(const std::filesystem::path& dir, const FileRef& ref) {
  const auto path = dir / ref.file;
  if (!std::filesystem::exists(path)) throw StructuralError("missing file " + path.string());
  if (hex64(file_checksum(path)) != ref.checksum) {
    throw CorruptionError(path.string() + ": checksum mismatch with manifest");
  }
  AnyTensor any = read_any_tensor(path);
  const TensorHeader h = header_of(any);
  if (dtype_name(h.dtype) != ref.dtype || h.shape != ref.shape) {
    throw CorruptionError(path.string() + ": header " + dtype_name(h.dtype) +
                          shape_string(h.shape) + " disagrees with manifest " + ref.dtype +
                          shape_string(ref.shape));
  }
  if (ref.dtype != dtype_name(dtype_of<T>())) {
    throw CorruptionError(path.string() + ": expected dtype " + dtype_name(dtype_of<T>()));
  }
  return std::get<Tensor<T>>(std::move(any));
}

std::string file_name(std::size_t id, const char* what) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "sample_%05zu_%s.agt", id, what);
  return buf;
}

}  // namespace

void write_dataset(Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto& m = ds.manifest;
  if (m.samples.size() != ds.samples.size() || ds.attention.size() != ds.samples.size()) {
    throw StructuralError("dataset manifest lists " + std::to_string(m.samples.size()) +
                          " samples, dataset holds " + std::to_string(ds.samples.size()));
  }
  json samples = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    auto& e = m.samples[i];
    e.image = store(dir, file_name(s.id, "image"), s.image);
    e.masks = store(dir, file_name(s.id, "masks"), s.gt_masks);
    e.attention = store(dir, file_name(s.id, "attention"), ds.attention[i].maps);
    samples.push_back(json{{"id", e.id},
                           {"modality", e.modality},
                           {"split", split_name(e.split)},
                           {"image", ref_json(e.image)},
                           {"masks", ref_json(e.masks)},
                           {"attention", ref_json(e.attention)}});
  }
  json j{{"schema_version", m.schema_version},
         {"n_samples", m.n_samples},
         {"n_objects", m.n_objects},
         {"n_modalities", m.n_modalities},
         {"seed", m.seed},
         {"quality", m.quality},
         {"phantom", phantom_json(m.phantom)},
         {"samples", samples}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw StructuralError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw StructuralError("missing file " + manifest_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptionError(manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  auto& m = ds.manifest;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion) {
      throw VersionError(manifest_path.string() + ": schema_version " +
                         std::to_string(m.schema_version) + " is not supported (expected " +
                         std::to_string(kSchemaVersion) + ")");
    }
    j.at("n_samples").get_to(m.n_samples);
    j.at("n_objects").get_to(m.n_objects);
    j.at("n_modalities").get_to(m.n_modalities);
    j.at("seed").get_to(m.seed);
    j.at("quality").get_to(m.quality);
    m.phantom = phantom_from_json(j.at("phantom"));
    for (const auto& s : j.at("samples")) {
      SampleEntry e;
      s.at("id").get_to(e.id);
      s.at("modality").get_to(e.modality);
      const auto split = s.at("split").get<std::string>();
      if (split != "train" && split != "test") {
        throw CorruptionError(manifest_path.string() + ": unknown split '" + split + "'");
      }
      e.split = split == "train" ? Split::train : Split::test;
      e.image = ref_from_json(s.at("image"));
      e.masks = ref_from_json(s.at("masks"));
      e.attention = ref_from_json(s.at("attention"));
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw CorruptionError(manifest_path.string() + ": " + e.what());
  }
  if (m.samples.size() != m.n_samples) {
    throw CorruptionError(manifest_path.string() + ": n_samples " + std::to_string(m.n_samples) +
                          " but " + std::to_string(m.samples.size()) + " entries");
  }

  for (const auto& e : m.samples) {
    PhantomSample s;
    s.id = e.id;
    s.modality = e.modality;
    s.image = load<float>(dir, e.image);
    s.gt_masks = load<std::uint8_t>(dir, e.masks);
    AttentionMaps att{load<std::uint8_t>(dir, e.attention), m.quality};
    if (s.gt_masks.rank() != 3 || s.gt_masks.dim(0) != m.n_objects ||
        att.maps.shape() != s.gt_masks.shape()) {
      throw CorruptionError((dir / e.masks.file).string() + ": expected " +
                            std::to_string(m.n_objects) + " object planes");
    }
    ds.samples.push_back(std::move(s));
    ds.attention.push_back(std::move(att));
    ds.splits.push_back(e.split);
  }
  return ds;
}

}  // namespace agcl::data
