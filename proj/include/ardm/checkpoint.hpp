#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ardm/dynamics.hpp"

namespace ardm {

/**
 * Binary model checkpoint:
 *
 *   "ARDM" | u16 version | u8 kind (0 feedforward, 1 autoregressive)
 *   | u32 n | u32 m | u32 hidden-layer count | u32 widths...
 *   | u32 dimension order x n            (autoregressive only)
 *   | f64 state mean/std, action mean/std, reward mean/std
 *   | f64 parameters (count implied by the architecture)
 *   | u32 metadata length | UTF-8 "key=value\n" lines
 *
 * All integers and reals little-endian.
 */
struct Checkpoint {
  static constexpr char kMagic[4] = {'A', 'R', 'D', 'M'};
  static constexpr std::uint16_t kVersion = 1;

  std::unique_ptr<DynamicsModel> model;
  /// Free-form metadata: validation_nll, config_digest, seed, activation, ...
  std::map<std::string, std::string> metadata;
};

std::vector<std::uint8_t> encode_checkpoint(const DynamicsModel& model,
                                            const std::map<std::string, std::string>& metadata);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const DynamicsModel& model,
                     const std::map<std::string, std::string>& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ardm
