#pragma once

#include <cstddef>

namespace cbt {

// Output-capable reserved ids. The two flow prefixes are input-only and sit
// after every output id, so the output projection covers [0, vocab_size) and
// the embedding table has vocab_size + 2 rows.
inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kFirstWordId = 3;

enum class Flow { kL2R, kR2L };

inline int l2r_id(std::size_t vocab_size) { return static_cast<int>(vocab_size); }
inline int r2l_id(std::size_t vocab_size) { return static_cast<int>(vocab_size) + 1; }
inline int prefix_id(Flow flow, std::size_t vocab_size) {
  return flow == Flow::kL2R ? l2r_id(vocab_size) : r2l_id(vocab_size);
}

inline const char* to_string(Flow f) { return f == Flow::kL2R ? "l2r" : "r2l"; }

}  // namespace cbt
