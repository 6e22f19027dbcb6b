#include "cbt/dataset_io.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cbt/checkpoint.hpp"
#include "json.hpp"

namespace cbt {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

nlohmann::json to_json(const ImageExample& ex) {
  const RegionFeatureSet& f = ex.features;
  std::string raw(f.values.size() * sizeof(float), '\0');
  if (!raw.empty()) std::memcpy(raw.data(), f.values.data(), raw.size());
  return {{"image_id", ex.captions.image_id},
          {"refs", ex.captions.refs},
          {"features", {{"regions", f.regions}, {"dim", f.dim}, {"dtype", "float32-le"}, {"data", base64_encode(raw)}}}};
}

ImageExample from_json(const nlohmann::json& j) {
  ImageExample ex;
  ex.captions.image_id = j.at("image_id").get<std::string>();
  ex.captions.refs = j.at("refs").get<std::vector<TokenSeq>>();
  const auto& f = j.at("features");
  if (f.value("dtype", std::string("float32-le")) != "float32-le") {
    throw DatasetError("unsupported feature dtype " + f.at("dtype").dump());
  }
  ex.features.image_id = ex.captions.image_id;
  ex.features.regions = f.at("regions").get<std::size_t>();
  ex.features.dim = f.at("dim").get<std::size_t>();
  const std::string raw = base64_decode(f.at("data").get<std::string>());
  if (raw.size() != ex.features.regions * ex.features.dim * sizeof(float)) {
    throw DatasetError("feature payload of '" + ex.captions.image_id + "' has " + std::to_string(raw.size()) +
                       " bytes, expected " + std::to_string(ex.features.regions * ex.features.dim * sizeof(float)));
  }
  ex.features.values.resize(ex.features.regions * ex.features.dim);
  if (!raw.empty()) std::memcpy(ex.features.values.data(), raw.data(), raw.size());
  if (ex.features.regions == 0) throw DatasetError("image '" + ex.captions.image_id + "' has no regions");
  for (float v : ex.features.values) {
    if (!std::isfinite(v)) throw DatasetError("image '" + ex.captions.image_id + "' has non-finite features");
  }
  return ex;
}

}  // namespace

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kAlphabet[i])] = i;
    return t;
  }();
  if (text.size() % 4 != 0) throw DatasetError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (v[k] = table[static_cast<unsigned char>(c)]) < 0) {
        throw DatasetError("invalid base64 character at offset " + std::to_string(i + k));
      }
    }
    const unsigned w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out += static_cast<char>((w >> 16) & 255);
    if (pad < 2) out += static_cast<char>((w >> 8) & 255);
    if (pad < 1) out += static_cast<char>(w & 255);
  }
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::string text;
  for (const auto& ex : data) text += to_json(ex).dump() + "\n";
  write_file_atomically(path, text);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<CaptionRecord> caption_records(const Dataset& data) {
  std::vector<CaptionRecord> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(ex.captions);
  return out;
}

std::vector<EncodedImage> encode_dataset(const Dataset& data, const Vocabulary& vocab, std::size_t max_tokens) {
  std::vector<EncodedImage> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    EncodedImage e;
    e.image_id = ex.captions.image_id;
    e.features = ex.features.to_tensor();
    for (const auto& r : ex.captions.refs) e.refs.push_back(truncate(vocab.encode(r), max_tokens));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace cbt
