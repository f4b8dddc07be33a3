#include "ardm/checkpoint.hpp"

#include <sstream>

#include "ardm/io.hpp"

namespace ardm {

std::vector<std::uint8_t> encode_checkpoint(const DynamicsModel& model,
                                            const std::map<std::string, std::string>& metadata) {
  io::ByteWriter w;
  w.bytes(Checkpoint::kMagic, 4);
  w.u16(Checkpoint::kVersion);
  w.u8(static_cast<std::uint8_t>(model.kind()));
  w.u32(static_cast<std::uint32_t>(model.state_dim()));
  w.u32(static_cast<std::uint32_t>(model.action_dim()));
  const auto& hidden = model.spec().hidden_layers;
  w.u32(static_cast<std::uint32_t>(hidden.size()));
  for (std::size_t width : hidden) w.u32(static_cast<std::uint32_t>(width));
  if (model.kind() == ModelKind::kAutoregressive) {
    for (std::uint32_t d : static_cast<const AutoregressiveDynamics&>(model).dimension_order()) w.u32(d);
  }
  const NormalizationStats& s = model.stats();
  for (double v : s.state_mean) w.f64(v);
  for (double v : s.state_std) w.f64(v);
  for (double v : s.action_mean) w.f64(v);
  for (double v : s.action_std) w.f64(v);
  w.f64(s.reward_mean);
  w.f64(s.reward_std);
  for (double v : model.parameters().values()) w.f64(v);

  std::map<std::string, std::string> meta = metadata;
  meta.emplace("activation", to_string(model.spec().activation));
  std::string text;
  for (const auto& [key, value] : meta) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint metadata keys/values may not contain '=' or newlines: " + key);
    }
    text += key + "=" + value + "\n";
  }
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  return std::move(w.data());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "checkpoint");
  r.expect_magic(Checkpoint::kMagic);
  const std::uint16_t version = r.u16();
  if (version != Checkpoint::kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint8_t kind_byte = r.u8();
  if (kind_byte > 1) throw FormatError("checkpoint: unknown model kind " + std::to_string(kind_byte));
  const auto kind = static_cast<ModelKind>(kind_byte);
  const std::uint32_t n = r.u32();
  const std::uint32_t m = r.u32();
  if (n == 0 || m == 0 || n > (1u << 20) || m > (1u << 20)) throw FormatError("checkpoint: implausible dimensions");
  const std::uint32_t layer_count = r.u32();
  if (layer_count > 1024) throw FormatError("checkpoint: implausible layer count");
  std::vector<std::size_t> hidden(layer_count);
  for (auto& width : hidden) {
    width = r.u32();
    if (width == 0) throw FormatError("checkpoint: zero layer width");
  }
  std::vector<std::uint32_t> order;
  if (kind == ModelKind::kAutoregressive) {
    order.resize(n);
    for (auto& d : order) d = r.u32();
  }
  NormalizationStats stats = NormalizationStats::identity(n, m);
  for (auto& v : stats.state_mean) v = r.f64();
  for (auto& v : stats.state_std) v = r.f64();
  for (auto& v : stats.action_mean) v = r.f64();
  for (auto& v : stats.action_std) v = r.f64();
  stats.reward_mean = r.f64();
  stats.reward_std = r.f64();

  // the activation lives in the metadata block, which follows the parameters
  const MlpSpec probe = kind == ModelKind::kFeedforward ? FeedforwardDynamics::make_spec(n, m, hidden)
                                                        : AutoregressiveDynamics::make_spec(n, m, hidden);
  const std::size_t count = probe.parameter_count();
  if (r.remaining() < count * 8 + 4) throw FormatError("checkpoint: truncated parameter block");
  std::vector<double> values(count);
  for (auto& v : values) v = r.f64();
  const std::uint32_t meta_len = r.u32();
  const std::string text = r.text(meta_len);
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after metadata");

  Checkpoint cp;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed metadata line '" + line + "'");
    cp.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Activation activation = Activation::kRelu;
  if (auto it = cp.metadata.find("activation"); it != cp.metadata.end()) {
    try {
      activation = activation_from_string(it->second);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
  }
  MlpSpec spec = probe;
  spec.activation = activation;
  ParameterSet params(spec);
  params.buffer() = std::move(values);
  try {
    if (kind == ModelKind::kFeedforward) {
      cp.model = std::make_unique<FeedforwardDynamics>(n, m, spec, std::move(params), std::move(stats));
    } else {
      cp.model = std::make_unique<AutoregressiveDynamics>(n, m, spec, std::move(params), std::move(stats),
                                                          std::move(order));
    }
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const DynamicsModel& model,
                     const std::map<std::string, std::string>& metadata) {
  io::write_file_atomic(path, encode_checkpoint(model, metadata));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_checkpoint(bytes);
}

}  // namespace ardm
