#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gamekd/model.hpp"
#include "gamekd/tensor.hpp"

namespace gamekd {

// On-disk checkpoint: magic + version, a JSON manifest (arbitrary metadata
// plus the parameter table with dotted names and shapes), then the raw
// little-endian 64-bit float payload. Round-trips bit-exactly.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<NamedParam> params;

  const Tensor& find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     std::span<const NamedParam> params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

void save_encoder(const std::filesystem::path& path, const EncoderModel& model,
                  nlohmann::json extra_meta = {});
EncoderModel load_encoder(const std::filesystem::path& path,
                          nlohmann::json* meta_out = nullptr);

} // namespace gamekd
