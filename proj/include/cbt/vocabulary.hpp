#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbt/captions.hpp"

namespace cbt {

class VocabularyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Token/id bijection over output classes.
///
/// Ids 0..2 are <pad>, <eos>, <unk>; words follow in (descending count,
/// lexicographic) order. The prefixes <l2r> and <r2l> take ids size() and
/// size() + 1; they are input-only and never predicted.
class Vocabulary {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kEos = "<eos>";
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kL2R = "<l2r>";
  static constexpr const char* kR2L = "<r2l>";

  Vocabulary();

  /// `words` excludes reserved tokens; throws on duplicates.
  explicit Vocabulary(std::vector<std::string> words, std::size_t min_count = 5);

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  /// Unknown tokens map to <unk>.
  int id(const std::string& token) const;
  const std::string& token(int id) const;

  IdSeq encode(const TokenSeq& tokens) const;

  /// Stops at the first eos; drops pad and prefix ids.
  TokenSeq decode(const IdSeq& ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.min_count_ == b.min_count_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t min_count_ = 5;
};

/// Counts every token of every reference; keeps words seen >= min_count times.
/// Throws VocabularyError on an empty corpus.
Vocabulary build_vocab(const std::vector<CaptionRecord>& corpus, std::size_t min_count = 5);

/// Ids with eos/pad/prefix tokens removed, stopping at the first eos.
IdSeq strip_special(const IdSeq& ids, std::size_t vocab_size);

}  // namespace cbt
