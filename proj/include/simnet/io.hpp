#pragma once

// On-disk formats.
//
// Feature store (SIMF), little-endian:
//   "SIMF" | u32 version=1 | u64 count N | u32 dim K | u8 label_kind
//   then N records: [i32 label if label_kind == 1] K x f32
// Optional sidecars next to the store: "<store>.ids" (one id per line, UTF-8)
// and "<store>.queries" (one query index per line).
//
// Checkpoint (SIMC), little-endian, parameters as f64:
//   "SIMC" | u32 version=1 | u8 kind (1 simnet, 2 linear, 3 encoder+simnet)
//   simnet:  u8 preset | u32 K | f64 width_scale | u8 input_norm |
//            u32 n_hidden | n_hidden x u32 hidden dim | network
//   linear:  u32 K | 2K x f64 weights | f64 bias
//   encoder+simnet: network (encoder) | simnet payload
//   network: u32 input_dim | u32 n_layers | per layer:
//            u32 out | u32 in | u8 activation | out*in f64 (row-major) | out f64 bias

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "simnet/baselines.hpp"
#include "simnet/dataset.hpp"
#include "simnet/model.hpp"
#include "simnet/nn.hpp"

namespace simnet {

inline constexpr std::uint32_t kFeatureStoreVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_feature_store(const Dataset& dataset);
/// Ids default to record indices; no query indices.
Dataset decode_feature_store(std::span<const std::uint8_t> bytes);

/// Writes the store (and sidecars when ids are not plain indices or queries
/// exist) through a temporary file and an atomic rename.
void write_feature_store(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_feature_store(const std::filesystem::path& path);

enum class ModelKind : std::uint8_t { SimNet = 1, Linear = 2, EncoderSimNet = 3 };

struct EncoderSimNet {
  nn::Network encoder;
  SimNetModel model;
};

using AnyModel = std::variant<SimNetModel, LinearModel, EncoderSimNet>;

ModelKind kind_of(const AnyModel& model) noexcept;

std::vector<std::uint8_t> encode_checkpoint(const AnyModel& model);
AnyModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const AnyModel& model);
AnyModel load_checkpoint(const std::filesystem::path& path);

/// Typed loads; throw FormatError when the stored kind differs.
SimNetModel load_simnet(const std::filesystem::path& path);
LinearModel load_linear(const std::filesystem::path& path);
EncoderSimNet load_encoder_simnet(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Write to "<path>.tmp" then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace simnet
