#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cbt/cider.hpp"
#include "cbt/dataset_io.hpp"
#include "cbt/search.hpp"
#include "cbt/vocabulary.hpp"

namespace cbt {

struct DecodedImage {
  std::string image_id;
  Selection selection;
  IdSeq fwd_caption;  // forward word order
  IdSeq bwd_caption;
};

/// Beam search (or greedy when `greedy`) and sentence-level selection for every image.
std::vector<DecodedImage> decode_split(const Ensemble& model, const std::vector<EncodedImage>& split,
                                       const DecodeConfig& config, bool greedy = false);

struct MetricRow {
  std::vector<double> bleu;  // BLEU-1..4
  double cider = 0.0;
  std::vector<double> cider_per_image;
};

struct EvalReport {
  MetricRow l2r;
  MetricRow r2l;
  MetricRow ensemble;
};

/// Scores the L2R-only, R2L-only and selected captions. CIDEr document
/// frequencies come from `references`.
EvalReport score_decoded(const std::vector<DecodedImage>& decoded, const std::vector<std::vector<IdSeq>>& references,
                         CiderVariant variant = CiderVariant::kCider);

MetricRow score_captions(const std::vector<IdSeq>& candidates, const std::vector<std::vector<IdSeq>>& references,
                         CiderVariant variant = CiderVariant::kCider);

EvalReport evaluate(const Ensemble& model, const std::vector<EncodedImage>& split, const DecodeConfig& config,
                    CiderVariant variant = CiderVariant::kCider, bool greedy = false);

/// Fixed-width table: one row per variant, BLEU-1..4 and CIDEr (x100 like the
/// usual captioning tables).
std::string format_report(const EvalReport& report);

/// Decode records, one JSON object per line:
///   {"image_id", "caption", "flow", "fwd_score", "bwd_score", "fwd_caption", "bwd_caption"}
/// with captions as token lists in forward word order.
void save_decoded(const std::vector<DecodedImage>& decoded, const Vocabulary& vocab,
                  const std::filesystem::path& path);

struct DecodeRecord {
  std::string image_id;
  TokenSeq caption;
  Flow flow = Flow::kL2R;
  double fwd_score = 0.0;
  double bwd_score = 0.0;
  TokenSeq fwd_caption;
  TokenSeq bwd_caption;
};

std::vector<DecodeRecord> load_decoded(const std::filesystem::path& path);

/// Scores string decode records against a dataset matched by image id.
EvalReport score_records(const std::vector<DecodeRecord>& records, const Dataset& data,
                         CiderVariant variant = CiderVariant::kCider);

}  // namespace cbt
