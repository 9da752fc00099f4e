#pragma once

// Checkpoint layout: <dir>/manifest.json lists parameter names, shapes,
// precision, byte offsets, model config and seed; <dir>/params.bin holds the
// little-endian IEEE-754 arrays concatenated in lexicographic name order.

#include <filesystem>

#include <json.hpp>

#include "sekd/seq_model.hpp"

namespace sekd {

inline constexpr const char *kManifestFile = "manifest.json";
inline constexpr const char *kBlobFile = "params.bin";

nlohmann::json to_json(const ModelConfig &config);
ModelConfig model_config_from_json(const nlohmann::json &j);

/// Writes manifest and blob; `extra` is stored under "metadata".
template <typename T>
void save_checkpoint(const ModelParams<T> &params, const std::filesystem::path &dir,
                     const nlohmann::json &extra = nlohmann::json::object());

/// Reads a checkpoint of either precision, converting to T.
template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path &dir);

} // namespace sekd
