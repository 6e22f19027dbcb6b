#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbt/captions.hpp"
#include "cbt/vocabulary.hpp"

namespace cbt {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageExample {
  CaptionRecord captions;
  RegionFeatureSet features;

  friend bool operator==(const ImageExample&, const ImageExample&) = default;
};

using Dataset = std::vector<ImageExample>;

/// JSON Lines, one image per line:
///
///   {"image_id": "train-000017",
///    "refs": [["two", "red", "cars", ...], ...],
///    "features": {"regions": 6, "dim": 32, "dtype": "float32-le",
///                 "data": "<base64 of regions*dim little-endian floats>"}}
///
/// Region values round-trip bit-exactly.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

std::vector<CaptionRecord> caption_records(const Dataset& data);

/// An image ready for training or decoding: features as a tensor and
/// references as truncated vocabulary ids.
struct EncodedImage {
  std::string image_id;
  Tensor features;
  std::vector<IdSeq> refs;
};

std::vector<EncodedImage> encode_dataset(const Dataset& data, const Vocabulary& vocab,
                                         std::size_t max_tokens = kMaxCaptionTokens);

}  // namespace cbt
