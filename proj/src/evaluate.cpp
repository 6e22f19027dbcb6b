#include "cbt/evaluate.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>

#include "cbt/bleu.hpp"
#include "cbt/checkpoint.hpp"
#include "json.hpp"

namespace cbt {

std::vector<DecodedImage> decode_split(const Ensemble& model, const std::vector<EncodedImage>& split,
                                       const DecodeConfig& config, bool greedy) {
  std::vector<DecodedImage> out;
  out.reserve(split.size());
  for (const auto& img : split) {
    Hypothesis fwd, bwd;
    if (greedy) {
      GreedyResult g = greedy_decode(model, img.features, config.max_len);
      fwd = std::move(g.fwd);
      bwd = std::move(g.bwd);
    } else {
      BeamResult b = beam_search_bidir(model, img.features, config);
      fwd = std::move(b.fwd.front());
      bwd = std::move(b.bwd.front());
    }
    out.push_back({img.image_id, sentence_level_ensemble(fwd, bwd, config.length_norm), fwd.caption(), bwd.caption()});
  }
  return out;
}

MetricRow score_captions(const std::vector<IdSeq>& candidates, const std::vector<std::vector<IdSeq>>& references,
                         CiderVariant variant) {
  MetricRow row;
  row.bleu = bleu(candidates, references, 4).bleu;
  CiderResult c = cider(candidates, references, variant);
  row.cider = c.corpus;
  row.cider_per_image = std::move(c.per_image);
  return row;
}

EvalReport score_decoded(const std::vector<DecodedImage>& decoded, const std::vector<std::vector<IdSeq>>& references,
                         CiderVariant variant) {
  std::vector<IdSeq> l2r, r2l, ens;
  for (const auto& d : decoded) {
    l2r.push_back(d.fwd_caption);
    r2l.push_back(d.bwd_caption);
    ens.push_back(d.selection.caption);
  }
  return {score_captions(l2r, references, variant), score_captions(r2l, references, variant),
          score_captions(ens, references, variant)};
}

EvalReport evaluate(const Ensemble& model, const std::vector<EncodedImage>& split, const DecodeConfig& config,
                    CiderVariant variant, bool greedy) {
  std::vector<std::vector<IdSeq>> refs;
  for (const auto& img : split) refs.push_back(img.refs);
  return score_decoded(decode_split(model, split, config, greedy), refs, variant);
}

std::string format_report(const EvalReport& report) {
  std::string out = "variant      BLEU-1  BLEU-2  BLEU-3  BLEU-4   CIDEr\n";
  auto row = [&](const char* name, const MetricRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %7.1f %7.1f %7.1f %7.1f %7.1f\n", name, 100 * r.bleu.at(0),
                  100 * r.bleu.at(1), 100 * r.bleu.at(2), 100 * r.bleu.at(3), 100 * r.cider);
    out += buf;
  };
  row("l2r-only", report.l2r);
  row("r2l-only", report.r2l);
  row("ensemble", report.ensemble);
  return out;
}

void save_decoded(const std::vector<DecodedImage>& decoded, const Vocabulary& vocab,
                  const std::filesystem::path& path) {
  std::string text;
  for (const auto& d : decoded) {
    nlohmann::json j = {{"image_id", d.image_id},
                        {"caption", vocab.decode(d.selection.caption)},
                        {"flow", to_string(d.selection.flow)},
                        {"fwd_score", d.selection.fwd_score},
                        {"bwd_score", d.selection.bwd_score},
                        {"fwd_caption", vocab.decode(d.fwd_caption)},
                        {"bwd_caption", vocab.decode(d.bwd_caption)}};
    text += j.dump() + "\n";
  }
  write_file_atomically(path, text);
}

std::vector<DecodeRecord> load_decoded(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open decode records " + path.string());
  std::vector<DecodeRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DecodeRecord r;
      r.image_id = j.at("image_id").get<std::string>();
      r.caption = j.at("caption").get<TokenSeq>();
      const auto flow = j.at("flow").get<std::string>();
      if (flow != "l2r" && flow != "r2l") throw DatasetError("unknown flow '" + flow + "'");
      r.flow = flow == "l2r" ? Flow::kL2R : Flow::kR2L;
      r.fwd_score = j.at("fwd_score").get<double>();
      r.bwd_score = j.at("bwd_score").get<double>();
      r.fwd_caption = j.at("fwd_caption").get<TokenSeq>();
      r.bwd_caption = j.at("bwd_caption").get<TokenSeq>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

EvalReport score_records(const std::vector<DecodeRecord>& records, const Dataset& data, CiderVariant variant) {
  std::map<std::string, const ImageExample*> by_id;
  for (const auto& ex : data) by_id[ex.captions.image_id] = &ex;
  std::unordered_map<std::string, int> ids;
  auto intern = [&](const TokenSeq& s) {
    IdSeq out;
    for (const auto& t : s) out.push_back(ids.emplace(t, static_cast<int>(ids.size())).first->second);
    return out;
  };
  std::vector<std::vector<IdSeq>> refs;
  std::vector<DecodedImage> decoded;
  for (const auto& r : records) {
    auto it = by_id.find(r.image_id);
    if (it == by_id.end()) throw DatasetError("decode record for unknown image '" + r.image_id + "'");
    refs.emplace_back();
    for (const auto& ref : it->second->captions.refs) refs.back().push_back(truncate(intern(ref)));
    DecodedImage d;
    d.image_id = r.image_id;
    d.selection.caption = intern(r.caption);
    d.selection.flow = r.flow;
    d.selection.fwd_score = r.fwd_score;
    d.selection.bwd_score = r.bwd_score;
    d.fwd_caption = intern(r.fwd_caption);
    d.bwd_caption = intern(r.bwd_caption);
    decoded.push_back(std::move(d));
  }
  if (decoded.empty()) throw DatasetError("no decode records to score");
  return score_decoded(decoded, refs, variant);
}

}  // namespace cbt
