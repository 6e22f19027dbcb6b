#include <algorithm>
#include <cmath>
#include <random>

#include "cbt/bleu.hpp"
#include "cbt/cider.hpp"
#include "doctest.h"
#include "metric_oracles.hpp"

using namespace cbt;

namespace {

struct Toy {
  std::vector<TokenSeq> cands;
  std::vector<std::vector<TokenSeq>> refs;
};

// Ten images over a small word pool so n-grams recur across images.
Toy toy_corpus(std::uint64_t seed) {
  const std::vector<std::string> pool = {"a", "red", "car", "on", "the", "road", "two", "blue", "dogs", "park"};
  std::mt19937_64 rng(seed);
  auto sentence = [&](std::size_t lo, std::size_t hi) {
    std::uniform_int_distribution<std::size_t> len(lo, hi), word(0, pool.size() - 1);
    TokenSeq s(len(rng));
    for (auto& w : s) w = pool[word(rng)];
    return s;
  };
  Toy t;
  for (int i = 0; i < 10; ++i) {
    std::vector<TokenSeq> r;
    for (int k = 0; k < 3 + i % 3; ++k) r.push_back(sentence(3, 9));
    t.refs.push_back(r);
    // some candidates copy a reference prefix to guarantee higher-order matches
    TokenSeq c = sentence(2, 10);
    if (i % 2 == 0) c.insert(c.begin(), r[0].begin(), r[0].begin() + 3);
    t.cands.push_back(c);
  }
  return t;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("CIDEr and CIDEr-D match the brute-force scorer") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Toy t = toy_corpus(seed);
      for (bool d : {false, true}) {
        const auto expect = oracle::cider(t.cands, t.refs, d);
        const auto got = cider(t.cands, t.refs, d ? CiderVariant::kCiderD : CiderVariant::kCider);
        REQUIRE(got.per_image.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got.per_image[i] == doctest::Approx(expect[i]).epsilon(1e-9));
        CHECK(got.corpus == doctest::Approx(oracle::mean(expect)).epsilon(1e-9));
        CHECK(std::abs(got.corpus - oracle::mean(expect)) < 1e-6);
      }
    }
  }

  TEST_CASE("BLEU matches the brute-force scorer") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Toy t = toy_corpus(seed);
      const auto expect = oracle::bleu(t.cands, t.refs);
      const auto got = bleu(t.cands, t.refs);
      REQUIRE(got.bleu.size() == 4);
      for (std::size_t n = 0; n < 4; ++n) CHECK(std::abs(got.bleu[n] - expect[n]) < 1e-6);
    }
  }

  TEST_CASE("CIDEr of a reference with n-grams unique to its image is 10") {
    // each image has one reference whose every n-gram occurs in no other image
    std::vector<std::vector<TokenSeq>> refs = {
        {{"alpha", "beta", "gamma", "delta", "eps"}},
        {{"one", "two", "three", "four", "five"}},
        {{"red", "green", "blue", "cyan", "pink"}},
    };
    std::vector<TokenSeq> cands = {refs[0][0], refs[1][0], refs[2][0]};
    const auto r = cider(cands, refs);
    CHECK(r.corpus == doctest::Approx(10.0).epsilon(1e-12));
    for (double s : r.per_image) CHECK(s == doctest::Approx(10.0).epsilon(1e-12));
    const auto rd = cider(cands, refs, CiderVariant::kCiderD);
    CHECK(rd.corpus == doctest::Approx(10.0).epsilon(1e-12));
  }

  TEST_CASE("CIDEr with no overlapping n-gram is 0") {
    std::vector<std::vector<TokenSeq>> refs = {{{"a", "b", "c"}}, {{"d", "e", "f"}}};
    const auto r = cider(std::vector<TokenSeq>{{"x", "y"}, {"z"}}, refs);
    CHECK(r.corpus == 0.0);
  }

  TEST_CASE("empty candidate scores zero") {
    const Toy t = toy_corpus(3);
    auto cands = t.cands;
    cands[4].clear();
    const auto r = cider(cands, t.refs);
    CHECK(r.per_image[4] == 0.0);
    CHECK(cider(cands, t.refs, CiderVariant::kCiderD).per_image[4] == 0.0);
  }

  TEST_CASE("scores are invariant to image order") {
    const Toy t = toy_corpus(4);
    std::vector<std::size_t> perm(t.cands.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::mt19937_64 rng(9);
    std::shuffle(perm.begin(), perm.end(), rng);
    Toy p;
    for (std::size_t i : perm) {
      p.cands.push_back(t.cands[i]);
      p.refs.push_back(t.refs[i]);
    }
    const auto a = cider(t.cands, t.refs), b = cider(p.cands, p.refs);
    CHECK(std::abs(a.corpus - b.corpus) < 1e-12);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(std::abs(b.per_image[i] - a.per_image[perm[i]]) < 1e-12);
    const auto ba = bleu(t.cands, t.refs), bb = bleu(p.cands, p.refs);
    for (std::size_t n = 0; n < 4; ++n) CHECK(std::abs(ba.bleu[n] - bb.bleu[n]) < 1e-12);
  }

  TEST_CASE("score bounds") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Toy t = toy_corpus(seed);
      for (double s : cider(t.cands, t.refs).per_image) CHECK(s >= 0.0);
      for (double s : cider(t.cands, t.refs, CiderVariant::kCiderD).per_image) {
        CHECK(s >= 0.0);
        CHECK(s <= 10.0 + 1e-9);
      }
      for (double b : bleu(t.cands, t.refs).bleu) {
        CHECK(b >= 0.0);
        CHECK(b <= 1.0 + 1e-12);
      }
    }
  }

  TEST_CASE("BLEU of a candidate equal to a reference is 1") {
    std::vector<std::vector<TokenSeq>> refs = {{{"a", "dog", "runs", "in", "the", "park"}, {"dog", "runs"}}};
    const auto r = bleu(std::vector<TokenSeq>{refs[0][0]}, refs);
    for (double b : r.bleu) CHECK(b == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.brevity_penalty == 1.0);
  }

  TEST_CASE("BLEU has no brevity penalty for longer candidates") {
    std::vector<std::vector<TokenSeq>> refs = {{{"a", "b", "c"}}};
    const auto r = bleu(std::vector<TokenSeq>{{"a", "b", "c", "a", "b", "c"}}, refs);
    CHECK(r.brevity_penalty == 1.0);
    CHECK(r.bleu[0] == doctest::Approx(0.5));
    const auto s = bleu(std::vector<TokenSeq>{{"a", "b"}}, refs);
    CHECK(s.brevity_penalty == doctest::Approx(std::exp(1.0 - 3.0 / 2.0)));
  }

  TEST_CASE("BLEU uses the shorter reference on a length tie") {
    std::vector<std::vector<TokenSeq>> refs = {{{"x", "y"}, {"a", "b", "c", "d", "e", "f"}}};
    // candidate length 4: distance 2 to both; shorter (2) wins, so no penalty
    const auto r = bleu(std::vector<TokenSeq>{{"a", "b", "c", "d"}}, refs);
    CHECK(r.reference_length == 2);
    CHECK(r.brevity_penalty == 1.0);
  }

  TEST_CASE("scorer refuses ids beyond the packing range") {
    CHECK_THROWS(CiderScorer({{{1, 70000}}}));
  }
}
