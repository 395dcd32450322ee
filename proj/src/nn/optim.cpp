#include "tkg/nn/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "tkg/core/error.hpp"

namespace tkg::nn {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  for (const auto& t : params.tensors()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& t : params_->tensors()) {
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      t.value[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      t.grad[i] = 0.0;
    }
    ++k;
  }
}

namespace {

constexpr char kMagic[8] = {'T', 'K', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  return value;
}

nlohmann::json read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path.string() + ": not a parameter checkpoint");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = read_le<std::uint64_t>(in);
  if (!in || length > (1u << 26)) throw DataError(path.string() + ": corrupt checkpoint header");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw DataError(path.string() + ": truncated checkpoint header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

CheckpointHeader to_header(const nlohmann::json& j) {
  CheckpointHeader h;
  h.kind = j.value("kind", std::string{});
  h.config_hash = j.value("config_hash", std::string{});
  h.meta_json = j.contains("meta") ? j["meta"].dump() : "{}";
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointHeader& header) {
  nlohmann::ordered_json j;
  j["kind"] = header.kind;
  j["config_hash"] = header.config_hash;
  j["meta"] = nlohmann::ordered_json::parse(header.meta_json.empty() ? "{}" : header.meta_json);
  j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : params.tensors()) {
    j["tensors"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  }
  const auto text = j.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_le(out, kVersion);
    write_le(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : params.tensors()) {
      for (const double v : t.value) write_le(out, static_cast<float>(v));
    }
    if (!out) throw Error("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing checkpoint " + path.string());
  return to_header(read_header(in, path));
}

CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing checkpoint " + path.string());
  const auto j = read_header(in, path);
  const auto& shapes = j.at("tensors");
  if (shapes.size() != params.tensors().size()) {
    throw DataError(path.string() + ": checkpoint holds " + std::to_string(shapes.size()) + " tensors, model has " +
                    std::to_string(params.tensors().size()));
  }
  std::size_t k = 0;
  for (auto& t : params.tensors()) {
    const auto& s = shapes[k++];
    if (s.at("name").get<std::string>() != t.name || s.at("rows").get<std::size_t>() != t.rows ||
        s.at("cols").get<std::size_t>() != t.cols) {
      throw DataError(path.string() + ": tensor " + t.name + " does not match the checkpoint");
    }
    for (auto& v : t.value) v = read_le<float>(in);
  }
  if (!in) throw DataError(path.string() + ": truncated checkpoint payload");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes in checkpoint");
  return to_header(j);
}

void round_to_float(ParameterSet& params) {
  for (auto& t : params.tensors()) {
    for (auto& v : t.value) v = static_cast<float>(v);
  }
}

}  // namespace tkg::nn
