#include "cbt/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "cbt/checkpoint.hpp"
#include "json.hpp"

namespace cbt {

namespace {

bool is_reserved(const std::string& t) {
  return t == Vocabulary::kPad || t == Vocabulary::kEos || t == Vocabulary::kUnk || t == Vocabulary::kL2R ||
         t == Vocabulary::kR2L;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words, std::size_t min_count) : min_count_(min_count) {
  tokens_ = {kPad, kEos, kUnk};
  tokens_.insert(tokens_.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (i >= static_cast<std::size_t>(kFirstWordId) && is_reserved(tokens_[i])) {
      throw VocabularyError("reserved token '" + tokens_[i] + "' listed as a word");
    }
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw VocabularyError("duplicate token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  static const std::string l2r = kL2R, r2l = kR2L;
  if (id == l2r_id(size())) return l2r;
  if (id == r2l_id(size())) return r2l;
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

IdSeq Vocabulary::encode(const TokenSeq& tokens) const {
  IdSeq ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TokenSeq Vocabulary::decode(const IdSeq& ids) const {
  TokenSeq out;
  for (int id : strip_special(ids, size())) out.push_back(token(id));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["min_count"] = min_count_;
  j["words"] = std::vector<std::string>(tokens_.begin() + kFirstWordId, tokens_.end());
  write_file_atomically(path, j.dump(1) + "\n");
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw VocabularyError("cannot open vocabulary " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    return Vocabulary(j.at("words").get<std::vector<std::string>>(), j.at("min_count").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw VocabularyError("malformed vocabulary " + path.string() + ": " + e.what());
  }
}

Vocabulary build_vocab(const std::vector<CaptionRecord>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  std::size_t tokens = 0;
  for (const auto& rec : corpus) {
    for (const auto& ref : rec.refs) {
      for (const auto& t : ref) {
        if (is_reserved(t)) continue;
        ++counts[t];
        ++tokens;
      }
    }
  }
  if (tokens == 0) throw VocabularyError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [word, n] : counts) {
    if (n >= min_count) kept.emplace_back(word, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(w);
  return Vocabulary(std::move(words), min_count);
}

IdSeq strip_special(const IdSeq& ids, std::size_t vocab_size) {
  IdSeq out;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id == kPadId || id == l2r_id(vocab_size) || id == r2l_id(vocab_size)) continue;
    out.push_back(id);
  }
  return out;
}

}  // namespace cbt
