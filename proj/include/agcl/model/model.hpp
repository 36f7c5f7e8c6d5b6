#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agcl/core/tape.hpp"

namespace agcl::model {

struct ModelConfig {
  std::size_t in_channels = 2;
  std::size_t patch = 32;
  std::vector<std::size_t> encoder_widths{16, 32, 64};
  std::size_t feature_dim = 128;     // D_E
  std::size_t projection_hidden = 128;
  std::size_t projection_dim = 64;   // O_E
  std::size_t decoder_width = 32;
  std::size_t skip_width = 16;
  std::size_t aspp_dilation = 2;
  double temperature = 0.1;

  /// ConfigError on D_E or O_E below 2, T <= 0, fewer than two encoder
  /// stages, or a patch size not divisible by 2^(stages-1).
  void validate() const;
  std::size_t deep_size() const { return patch >> (encoder_widths.size() - 1); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Component { encoder, projection, decoder };
std::string component_name(Component c);

/// Named parameter tensors, "encoder.*", "projection.*", "decoder.*".
template <typename T>
struct ModelParams {
  ModelConfig config;
  std::map<std::string, Tensor<T>> tensors;
  std::map<Component, bool> frozen{{Component::encoder, false},
                                   {Component::projection, false},
                                   {Component::decoder, false}};

  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool is_frozen(const std::string& name) const;
  std::size_t count() const;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    out.frozen = frozen;
    for (const auto& [k, v] : tensors) out.tensors.emplace(k, v.template cast<U>());
    return out;
  }
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases; each tensor
/// drawn from a stream keyed by (seed, name).
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Parameters placed on a tape; frozen components enter as non-trainable.
template <typename T>
struct Bound {
  std::map<std::string, Var<T>> vars;
  Var<T> operator[](const std::string& name) const;
};

template <typename T>
Bound<T> bind(Tape<T>& tape, const ModelParams<T>& params);

template <typename T>
struct EncoderOutput {
  Var<T> z;     // [B, D_E]
  Var<T> skip;  // [B, C_2, p/2, p/2], second stage before pooling
  Var<T> deep;  // [B, D_E, p/4, p/4], last map before global pooling
};

template <typename T>
EncoderOutput<T> encoder_forward(const ModelConfig& cfg, const Bound<T>& p, Var<T> a);

/// Two-layer perceptron, rows rescaled to radius 1/T.
template <typename T>
Var<T> projection_forward(const ModelConfig& cfg, const Bound<T>& p, Var<T> z);

/// [B, 2, p, p] probabilities (softmax over the two channels).
template <typename T>
Var<T> decoder_forward(const ModelConfig& cfg, const Bound<T>& p, const EncoderOutput<T>& enc);

/// Parameter file: "AGP1", u64 header length, JSON header (config, frozen
/// flags, tensor names), one tensor record per name, then a u64 FNV-1a of
/// everything before it.
void save_params(const ModelParams<float>& params, const std::filesystem::path& path);

/// CorruptionError on a bad checksum or malformed file; CompatibilityError if
/// `expected` is given and differs from the stored config.
ModelParams<float> load_params(const std::filesystem::path& path,
                               const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace agcl::model
