#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agcl/data/phantom.hpp"

namespace agcl::data {

inline constexpr int kSchemaVersion = 1;

enum class Split { train, test };
std::string split_name(Split s);

struct FileRef {
  std::string file;  // relative to the dataset directory
  std::string dtype;
  Shape shape;
  std::string checksum;  // hex FNV-1a of the whole file
};

struct SampleEntry {
  std::size_t id = 0;
  int modality = 1;
  Split split = Split::train;
  FileRef image, masks, attention;
};

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  std::size_t n_samples = 0;
  std::size_t n_objects = 0;
  std::size_t n_modalities = 0;
  std::uint64_t seed = 0;
  double quality = 1.0;
  PhantomConfig phantom;
  std::vector<SampleEntry> samples;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PhantomSample> samples;
  std::vector<AttentionMaps> attention;  // parallel to samples
  std::vector<Split> splits;             // parallel to samples

  std::vector<std::size_t> indices(Split s) const;
};

/// n_train + n_test phantoms; sample i is generated from (seed, i) and its
/// attention from (seed, i, quality stream), so any subset can be rebuilt.
Dataset generate_dataset(const PhantomConfig& cfg, std::size_t n_train, std::size_t n_test,
                         double quality, std::uint64_t seed);

/// Writes one tensor file per array and manifest.json; fills the file
/// references and checksums of `ds.manifest`.
void write_dataset(Dataset& ds, const std::filesystem::path& dir);

/// VersionError for an unknown schema (before touching any tensor file),
/// StructuralError for a missing file, CorruptionError when a file's
/// checksum or header disagrees with the manifest.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace agcl::data
