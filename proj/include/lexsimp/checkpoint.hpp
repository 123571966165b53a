#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lexsimp/autograd.hpp"

namespace lexsimp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Self-describing binary archive: magic, version, JSON header (metadata plus
// tensor names and shapes), then raw little-endian doubles in header order.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json meta;
  std::vector<std::pair<std::string, nn::Matrix>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const std::vector<const nn::Parameter*>& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies tensors into `params` by name; every parameter must be present
// with a matching shape.
void assign_parameters(const Checkpoint& ckpt, const std::vector<nn::Parameter*>& params);

// SHA-256 (hex) over names, shapes and raw parameter bytes, in order.
std::string parameter_digest(const std::vector<const nn::Parameter*>& params);

std::string sha256_hex(std::string_view bytes);

}  // namespace lexsimp
