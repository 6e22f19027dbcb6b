#include "cbt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cbt {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::size_t kMagicLen = 5;

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::string serialize(const std::vector<NamedTensor>& tensors, nlohmann::json header) {
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t total = 0;
  for (const NamedTensor& t : tensors) {
    manifest.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"count", t.tensor.numel()}});
    total += t.tensor.numel();
  }
  header["tensors"] = std::move(manifest);
  const std::string h = header.dump();
  std::string out;
  out.reserve(kMagicLen + 8 + h.size() + 4 * total);
  out.append(kCheckpointMagic, kMagicLen);
  put_u64(out, h.size());
  out += h;
  for (const NamedTensor& t : tensors) {
    for (double v : t.tensor.values()) {
      const float f = static_cast<float>(v);
      char buf[4];
      std::memcpy(buf, &f, 4);
      out.append(buf, 4);
    }
  }
  return out;
}

struct Parsed {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
};

Parsed parse(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::string where = path.string() + ": ";
  if (bytes.size() < kMagicLen + 8) throw CheckpointError(where + "truncated before header");
  const std::string magic = bytes.substr(0, kMagicLen);
  if (magic != std::string(kCheckpointMagic, kMagicLen)) {
    if (magic.rfind("CBTK", 0) == 0) {
      throw CheckpointError(where + "unsupported format version '" + magic + "' (expected CBTK1)");
    }
    throw CheckpointError(where + "not a checkpoint (bad magic)");
  }
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + kMagicLen, 8);
  const std::size_t data_start = kMagicLen + 8 + hlen;
  if (hlen > bytes.size() || data_start > bytes.size()) throw CheckpointError(where + "truncated header");
  Parsed p;
  try {
    p.header = nlohmann::json::parse(bytes.substr(kMagicLen + 8, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + "corrupt header: " + e.what());
  }
  std::size_t offset = data_start;
  for (const auto& entry : p.header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    if (shape.empty() || shape_numel(shape) != count) {
      throw CheckpointError(where + "tensor " + name + " header shape " + shape_string(shape) +
                            " disagrees with count " + std::to_string(count));
    }
    if (offset + 4 * count > bytes.size()) {
      throw CheckpointError(where + "truncated inside tensor " + name);
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + offset + 4 * i, 4);
      values[i] = f;
    }
    offset += 4 * count;
    p.tensors.push_back({name, Tensor::from_values(shape, std::move(values), true)});
  }
  if (offset != bytes.size()) {
    throw CheckpointError(where + "expected " + std::to_string(offset) + " bytes, file has " +
                          std::to_string(bytes.size()));
  }
  return p;
}

}  // namespace

void write_file_atomically(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_checkpoint(const ParameterSet& params, const ModelConfig& config, const fs::path& path) {
  config.validate();
  write_file_atomically(path, serialize(params.named(), {{"config", to_json(config)}}));
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  Parsed p = parse(path);
  if (!p.header.contains("config")) throw CheckpointError(path.string() + ": header has no model config");
  ModelConfig config;
  try {
    config = model_config_from_json(p.header.at("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  try {
    return {ParameterSet::assemble(config, p.tensors), config};
  } catch (const ShapeError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void save_tensor_file(const std::vector<NamedTensor>& tensors, const nlohmann::json& extra, const fs::path& path) {
  write_file_atomically(path, serialize(tensors, {{"extra", extra}}));
}

TensorFile load_tensor_file(const fs::path& path) {
  Parsed p = parse(path);
  return {std::move(p.tensors), p.header.value("extra", nlohmann::json::object())};
}

}  // namespace cbt
