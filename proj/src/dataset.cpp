#include "ardm/dataset.hpp"

#include "ardm/io.hpp"

namespace ardm {

TransitionBatch::TransitionBatch(std::size_t state_dim, std::size_t action_dim, std::size_t count)
    : states(Matrix::Zero(static_cast<Eigen::Index>(state_dim), static_cast<Eigen::Index>(count))),
      actions(Matrix::Zero(static_cast<Eigen::Index>(action_dim), static_cast<Eigen::Index>(count))),
      rewards(Vector::Zero(static_cast<Eigen::Index>(count))),
      next_states(Matrix::Zero(static_cast<Eigen::Index>(state_dim), static_cast<Eigen::Index>(count))) {}

void TransitionBatch::validate() const {
  const auto count = states.cols();
  if (actions.cols() != count || rewards.size() != count || next_states.cols() != count) {
    throw ShapeError("TransitionBatch: inconsistent batch lengths");
  }
  if (next_states.rows() != states.rows()) {
    throw ShapeError("TransitionBatch: next-state dimension differs from state dimension");
  }
  if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite() || !next_states.allFinite()) {
    throw NumericInputError("TransitionBatch: non-finite entries");
  }
}

TransitionBatch TransitionBatch::select(std::span<const std::size_t> indices) const {
  TransitionBatch out(state_dim(), action_dim(), indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto src = static_cast<Eigen::Index>(indices[j]);
    const auto dst = static_cast<Eigen::Index>(j);
    out.states.col(dst) = states.col(src);
    out.actions.col(dst) = actions.col(src);
    out.rewards(dst) = rewards(src);
    out.next_states.col(dst) = next_states.col(src);
  }
  return out;
}

void TransitionBatch::set(std::size_t column, const Vector& s, const Vector& a, double r,
                          const Vector& next) {
  const auto c = static_cast<Eigen::Index>(column);
  states.col(c) = s;
  actions.col(c) = a;
  rewards(c) = r;
  next_states.col(c) = next;
}

bool TransitionBatch::operator==(const TransitionBatch& other) const {
  return states.rows() == other.states.rows() && states.cols() == other.states.cols() &&
         actions.rows() == other.actions.rows() && states == other.states &&
         actions == other.actions && rewards == other.rewards && next_states == other.next_states;
}

std::size_t TransitionDataset::synthetic_count() const {
  std::size_t count = 0;
  for (auto f : synthetic) count += f != 0;
  return count;
}

TransitionDataset TransitionDataset::concat(const TransitionDataset& a, const TransitionDataset& b) {
  if (a.state_dim() != b.state_dim() || a.action_dim() != b.action_dim()) {
    throw ShapeError("TransitionDataset::concat: dimension mismatch");
  }
  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nb = static_cast<Eigen::Index>(b.size());
  TransitionDataset out;
  out.transitions = TransitionBatch(a.state_dim(), a.action_dim(), a.size() + b.size());
  out.transitions.states << a.transitions.states, b.transitions.states;
  out.transitions.actions << a.transitions.actions, b.transitions.actions;
  out.transitions.rewards << a.transitions.rewards, b.transitions.rewards;
  out.transitions.next_states << a.transitions.next_states, b.transitions.next_states;
  out.synthetic.assign(a.size() + b.size(), 0);
  for (Eigen::Index i = 0; i < na; ++i) {
    if (!a.synthetic.empty()) out.synthetic[static_cast<std::size_t>(i)] = a.synthetic[static_cast<std::size_t>(i)];
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    if (!b.synthetic.empty()) {
      out.synthetic[static_cast<std::size_t>(na + i)] = b.synthetic[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

namespace format {

std::uint64_t dataset_file_size(std::uint64_t n, std::uint64_t m, std::uint64_t count, bool real64) {
  const std::uint64_t width = real64 ? 8 : 4;
  return kDatasetHeaderBytes + count * (n + m + 1 + n) * width;
}

}  // namespace format

std::vector<std::uint8_t> encode_dataset(const TransitionBatch& batch) {
  batch.validate();
  io::ByteWriter w;
  w.bytes(format::kDatasetMagic, 4);
  w.u16(format::kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(batch.state_dim()));
  w.u32(static_cast<std::uint32_t>(batch.action_dim()));
  w.u64(batch.size());
  w.u8(format::kFlagReal64);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < batch.states.rows(); ++d) w.f64(batch.states(d, c));
    for (Eigen::Index d = 0; d < batch.actions.rows(); ++d) w.f64(batch.actions(d, c));
    w.f64(batch.rewards(c));
    for (Eigen::Index d = 0; d < batch.next_states.rows(); ++d) w.f64(batch.next_states(d, c));
  }
  return std::move(w.data());
}

TransitionBatch decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "dataset file");
  r.expect_magic(format::kDatasetMagic);
  const std::uint16_t version = r.u16();
  if (version != format::kDatasetVersion) {
    throw FormatError("dataset file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32();
  const std::uint32_t m = r.u32();
  const std::uint64_t count = r.u64();
  const std::uint8_t flags = r.u8();
  const bool real64 = (flags & format::kFlagReal64) != 0;
  const std::uint64_t expected = format::dataset_file_size(n, m, count, real64);
  if (bytes.size() != expected) {
    throw FormatError("dataset file: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  TransitionBatch batch(n, m, count);
  auto real = [&]() { return real64 ? r.f64() : static_cast<double>(r.f32()); };
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    for (std::uint32_t d = 0; d < n; ++d) batch.states(d, c) = real();
    for (std::uint32_t d = 0; d < m; ++d) batch.actions(d, c) = real();
    batch.rewards(c) = real();
    for (std::uint32_t d = 0; d < n; ++d) batch.next_states(d, c) = real();
  }
  return batch;
}

std::vector<std::uint8_t> encode_initial_states(const InitialStates& s0) {
  io::ByteWriter w;
  w.bytes(format::kInitialStatesMagic, 4);
  w.u16(format::kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(s0.state_dim()));
  w.u64(s0.size());
  w.u8(format::kFlagReal64);
  for (Eigen::Index c = 0; c < s0.states.cols(); ++c) {
    for (Eigen::Index d = 0; d < s0.states.rows(); ++d) w.f64(s0.states(d, c));
  }
  return std::move(w.data());
}

InitialStates decode_initial_states(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "initial-state file");
  r.expect_magic(format::kInitialStatesMagic);
  const std::uint16_t version = r.u16();
  if (version != format::kDatasetVersion) {
    throw FormatError("initial-state file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32();
  const std::uint64_t count = r.u64();
  const bool real64 = (r.u8() & format::kFlagReal64) != 0;
  const std::uint64_t expected = format::kInitialStatesHeaderBytes + count * n * (real64 ? 8 : 4);
  if (bytes.size() != expected) {
    throw FormatError("initial-state file: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  InitialStates s0;
  s0.states.resize(n, static_cast<Eigen::Index>(count));
  for (std::uint64_t c = 0; c < count; ++c) {
    for (std::uint32_t d = 0; d < n; ++d) {
      s0.states(d, static_cast<Eigen::Index>(c)) = real64 ? r.f64() : static_cast<double>(r.f32());
    }
  }
  return s0;
}

std::vector<std::uint8_t> encode_origin_flags(std::span<const std::uint8_t> flags) {
  io::ByteWriter w;
  w.bytes(format::kOriginFlagsMagic, 4);
  w.u16(format::kDatasetVersion);
  w.u64(flags.size());
  for (auto f : flags) w.u8(f != 0 ? 1 : 0);
  return std::move(w.data());
}

std::vector<std::uint8_t> decode_origin_flags(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "origin-flag file");
  r.expect_magic(format::kOriginFlagsMagic);
  if (r.u16() != format::kDatasetVersion) throw FormatError("origin-flag file: unsupported version");
  const std::uint64_t count = r.u64();
  if (r.remaining() != count) {
    throw FormatError("origin-flag file: expected " + std::to_string(count) + " flags, got " +
                      std::to_string(r.remaining()));
  }
  std::vector<std::uint8_t> flags(count);
  for (auto& f : flags) f = r.u8();
  return flags;
}

void save_dataset(const std::filesystem::path& path, const TransitionBatch& batch) {
  io::write_file_atomic(path, encode_dataset(batch));
}

TransitionBatch load_dataset(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_dataset(bytes);
}

void save_initial_states(const std::filesystem::path& path, const InitialStates& s0) {
  io::write_file_atomic(path, encode_initial_states(s0));
}

InitialStates load_initial_states(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_initial_states(bytes);
}

void save_origin_flags(const std::filesystem::path& path, std::span<const std::uint8_t> flags) {
  io::write_file_atomic(path, encode_origin_flags(flags));
}

std::vector<std::uint8_t> load_origin_flags(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_origin_flags(bytes);
}

}  // namespace ardm
