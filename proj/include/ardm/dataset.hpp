#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ardm/linalg.hpp"

namespace ardm {

/**
 * A batch of (s, a, r', s') transitions. Every matrix stores one transition
 * per column: states is n x B, actions m x B, next_states n x B, rewards has
 * length B.
 */
struct TransitionBatch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;

  TransitionBatch() = default;
  TransitionBatch(std::size_t state_dim, std::size_t action_dim, std::size_t count);

  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
  std::size_t state_dim() const { return static_cast<std::size_t>(states.rows()); }
  std::size_t action_dim() const { return static_cast<std::size_t>(actions.rows()); }
  bool empty() const { return size() == 0; }

  /// Throws ShapeError on inconsistent lengths and NumericInputError on non-finite entries.
  void validate() const;

  TransitionBatch select(std::span<const std::size_t> indices) const;
  void set(std::size_t column, const Vector& s, const Vector& a, double r, const Vector& next);

  bool operator==(const TransitionBatch& other) const;
};

/// Transition collection with a per-transition synthetic-origin flag.
struct TransitionDataset {
  TransitionBatch transitions;
  std::vector<std::uint8_t> synthetic;  // empty, or one flag per transition

  std::size_t size() const { return transitions.size(); }
  std::size_t state_dim() const { return transitions.state_dim(); }
  std::size_t action_dim() const { return transitions.action_dim(); }
  std::size_t synthetic_count() const;

  /// Concatenates b after a; flags default to 0 for inputs without flags.
  static TransitionDataset concat(const TransitionDataset& a, const TransitionDataset& b);
};

/// Initial-state set S0, one state per column.
struct InitialStates {
  Matrix states;
  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
  std::size_t state_dim() const { return static_cast<std::size_t>(states.rows()); }
};

namespace format {

inline constexpr char kDatasetMagic[4] = {'A', 'R', 'D', 'S'};
inline constexpr char kInitialStatesMagic[4] = {'A', 'R', 'S', '0'};
inline constexpr char kOriginFlagsMagic[4] = {'A', 'R', 'O', 'F'};
inline constexpr std::uint16_t kDatasetVersion = 1;
/// magic(4) version(2) n(4) m(4) count(8) flags(1)
inline constexpr std::size_t kDatasetHeaderBytes = 23;
/// magic(4) version(2) n(4) count(8) flags(1)
inline constexpr std::size_t kInitialStatesHeaderBytes = 19;
inline constexpr std::uint8_t kFlagReal64 = 0x01;

/// Expected file size of a dataset file with the given shape.
std::uint64_t dataset_file_size(std::uint64_t n, std::uint64_t m, std::uint64_t count,
                                bool real64 = true);

}  // namespace format

/// Serialized bytes of a dataset file (always written with 64-bit reals).
std::vector<std::uint8_t> encode_dataset(const TransitionBatch& batch);
/// Accepts 64-bit or 32-bit real payloads; rejects any length mismatch with FormatError.
TransitionBatch decode_dataset(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_initial_states(const InitialStates& s0);
InitialStates decode_initial_states(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_origin_flags(std::span<const std::uint8_t> flags);
std::vector<std::uint8_t> decode_origin_flags(std::span<const std::uint8_t> bytes);

void save_dataset(const std::filesystem::path& path, const TransitionBatch& batch);
TransitionBatch load_dataset(const std::filesystem::path& path);
void save_initial_states(const std::filesystem::path& path, const InitialStates& s0);
InitialStates load_initial_states(const std::filesystem::path& path);
void save_origin_flags(const std::filesystem::path& path, std::span<const std::uint8_t> flags);
std::vector<std::uint8_t> load_origin_flags(const std::filesystem::path& path);

}  // namespace ardm
