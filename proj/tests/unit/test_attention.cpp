#include <cmath>

#include "cbt/attention.hpp"
#include "cbt/ops.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "reference_model.hpp"

using namespace cbt;
using cbt::testing::bit_equal;
using cbt::testing::max_abs_diff;
using cbt::testing::random_matrix;

namespace {

HeadProjection random_projection(std::size_t d_model, std::size_t heads, std::size_t dk, Rng& rng) {
  HeadProjection p;
  p.heads = heads;
  p.w_q = random_matrix(d_model, heads * dk, rng, 0.5);
  p.w_k = random_matrix(d_model, heads * dk, rng, 0.5);
  p.w_v = random_matrix(d_model, heads * dk, rng, 0.5);
  p.w_o = random_matrix(heads * dk, d_model, rng, 0.5);
  return p;
}

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor::from_values({n, n}, std::move(v));
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("scaled dot attention special cases") {
    Rng rng(1);
    const Tensor v = Tensor::from_values({1, 3}, {0.25, -2.0, 7.5});
    const Tensor out = scaled_dot_attention(random_matrix(1, 4, rng), random_matrix(1, 4, rng), v);
    CHECK(bit_equal(out.values(), v.values()));

    PrecisionScope f64(Precision::kFloat64);
    const Tensor q = Tensor::from_values({1, 2}, {1, 0});
    const Tensor k = Tensor::from_values({3, 2}, {0, 1, 0, -2, 0, 3});
    const Tensor vals = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 9});
    const Tensor mean = scaled_dot_attention(q, k, vals);
    CHECK(mean[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(mean[1] == doctest::Approx(5.0).epsilon(1e-14));
  }

  TEST_CASE("scaled dot attention 2x2 against a direct evaluation") {
    PrecisionScope f64(Precision::kFloat64);
    const long double q[2][2] = {{0.3L, -1.2L}, {0.7L, 0.4L}};
    const long double k[2][2] = {{1.1L, 0.2L}, {-0.5L, 0.9L}};
    const long double v[2][2] = {{2.0L, -1.0L}, {0.5L, 3.0L}};
    auto t = [](const long double (&m)[2][2]) {
      return Tensor::from_values({2, 2}, {double(m[0][0]), double(m[0][1]), double(m[1][0]), double(m[1][1])});
    };
    const Tensor out = scaled_dot_attention(t(q), t(k), t(v));
    for (int i = 0; i < 2; ++i) {
      long double s[2];
      for (int j = 0; j < 2; ++j) s[j] = (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / std::sqrt(2.0L);
      const long double z = std::exp(s[0]) + std::exp(s[1]);
      for (int c = 0; c < 2; ++c) {
        const long double expect = (std::exp(s[0]) * v[0][c] + std::exp(s[1]) * v[1][c]) / z;
        CHECK(std::abs(out.at(i, c) - double(expect)) < 1e-14);
      }
    }
  }

  TEST_CASE("scaled dot attention errors") {
    CHECK_THROWS_AS(scaled_dot_attention(Tensor::zeros({2, 3}), Tensor::zeros({2, 4}), Tensor::zeros({2, 4})),
                    ShapeError);
    const AttentionMask causal = AttentionMask::causal(2, 2, 0);
    CHECK_THROWS_AS(scaled_dot_attention(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), causal),
                    ContractError);
  }

  TEST_CASE("mask shapes") {
    const AttentionMask m = AttentionMask::causal(3, 4, 2);
    CHECK(m.allows(0, 0));
    CHECK_FALSE(m.allows(0, 1));
    CHECK(m.allows(2, 1));
    CHECK_FALSE(m.allows(2, 2));
    CHECK_FALSE(m.allows(3 - 1, 3));
    CHECK(AttentionMask::none().allows(0, 9));
  }

  TEST_CASE("multi-head reductions") {
    Rng rng(2);
    const Tensor x = random_matrix(3, 4, rng);
    HeadProjection id;
    id.heads = 1;
    id.w_q = id.w_k = id.w_v = id.w_o = identity(4);
    const Tensor single = multi_head(x, x, x, {}, id);
    const Tensor direct = scaled_dot_attention(matmul(x, id.w_q), matmul(x, id.w_k), matmul(x, id.w_v));
    CHECK(bit_equal(single.values(), matmul(direct, id.w_o).values()));

    HeadProjection zero = random_projection(4, 2, 2, rng);
    zero.w_o = Tensor::zeros({4, 4});
    const Tensor out = multi_head(x, x, x, {}, zero);
    for (double v : out.values()) CHECK(v == 0.0);
  }

  TEST_CASE("multi-head h=2 against per-head brute force") {
    PrecisionScope f64(Precision::kFloat64);
    Rng rng(3);
    const HeadProjection p = random_projection(4, 2, 2, rng);
    const Tensor xq = random_matrix(3, 4, rng), xkv = random_matrix(5, 4, rng);
    const Tensor got = multi_head(xq, xkv, xkv, {}, p);
    const auto expect = reference::multi_head(reference::of(xq), reference::of(xkv), p,
                                              [](std::size_t, std::size_t) { return true; });
    CHECK(max_abs_diff(got.values(), expect.v) < 1e-12);
  }

  TEST_CASE("bad projections are shape errors") {
    Rng rng(4);
    HeadProjection p = random_projection(4, 2, 2, rng);
    p.w_o = Tensor::zeros({3, 4});
    const Tensor x = random_matrix(2, 4, rng);
    CHECK_THROWS_AS(multi_head(x, x, x, {}, p), ShapeError);
  }

  TEST_CASE("lambda = 0 reduces to two masked multi-head self-attentions, bit-exact") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const HeadProjection p = random_projection(8, 2, 4, rng);
      const Tensor xf = random_matrix(5, 8, rng), xb = random_matrix(5, 8, rng);
      const AttentionMask causal = AttentionMask::causal(5);
      for (Activation af : {Activation::kRelu, Activation::kTanh}) {
        const FlowPair h = bidir_interactive_attention(xf, xb, p, 0.0, af);
        CHECK(bit_equal(h.fwd.values(), multi_head(xf, xf, xf, causal, p).values()));
        CHECK(bit_equal(h.bwd.values(), multi_head(xb, xb, xb, causal, p).values()));
      }
      const FlowPair same = bidir_interactive_attention(xf, xf, p, 0.0, Activation::kRelu);
      CHECK(bit_equal(same.fwd.values(), same.bwd.values()));
    }
  }

  TEST_CASE("T=2, d_model=2, h=1, lambda=0.1 against a direct evaluation") {
    PrecisionScope f64(Precision::kFloat64);
    HeadProjection p;
    p.heads = 1;
    p.w_q = Tensor::from_values({2, 2}, {0.5, -0.3, 0.8, 0.1});
    p.w_k = Tensor::from_values({2, 2}, {-0.2, 0.7, 0.4, 0.9});
    p.w_v = Tensor::from_values({2, 2}, {1.0, 0.3, -0.6, 0.5});
    p.w_o = Tensor::from_values({2, 2}, {0.9, -0.4, 0.2, 1.1});
    const Tensor xf = Tensor::from_values({2, 2}, {1.0, -0.5, 0.3, 2.0});
    const Tensor xb = Tensor::from_values({2, 2}, {-1.2, 0.4, 0.6, 0.6});
    const FlowPair h = bidir_interactive_attention(xf, xb, p, 0.1, Activation::kRelu);
    const auto ef = reference::interactive(reference::of(xf), reference::of(xb), 2, p, 0.1, Activation::kRelu);
    const auto eb = reference::interactive(reference::of(xb), reference::of(xf), 2, p, 0.1, Activation::kRelu);
    CHECK(max_abs_diff(h.fwd.values(), ef.v) < 1e-14);
    CHECK(max_abs_diff(h.bwd.values(), eb.v) < 1e-14);
  }

  TEST_CASE("interactive attention against the loop oracle with padding masks") {
    PrecisionScope f64(Precision::kFloat64);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(100 + seed);
      const HeadProjection p = random_projection(6, 3, 2, rng);
      const Tensor xf = random_matrix(5, 6, rng), xb = random_matrix(5, 6, rng);
      const Activation af = seed % 2 ? Activation::kTanh : Activation::kRelu;
      const auto masks = InteractiveMasks::causal(5, 3, 4);
      const FlowPair h = bidir_interactive_attention(xf, xb, p, 0.4, af, masks);
      CHECK(max_abs_diff(h.fwd.values(),
                         reference::interactive(reference::of(xf), reference::of(xb), 4, p, 0.4, af).v) < 1e-12);
      CHECK(max_abs_diff(h.bwd.values(),
                         reference::interactive(reference::of(xb), reference::of(xf), 3, p, 0.4, af).v) < 1e-12);
    }
  }

  TEST_CASE("causality of both flows") {
    Rng rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
      const HeadProjection p = random_projection(8, 2, 4, rng);
      const std::size_t T = 6, t = static_cast<std::size_t>(trial % 5);
      const Tensor xf = random_matrix(T, 8, rng), xb = random_matrix(T, 8, rng);
      const FlowPair base = bidir_interactive_attention(xf, xb, p, 0.5, Activation::kTanh);
      std::vector<double> vf(xf.values().begin(), xf.values().end()), vb(xb.values().begin(), xb.values().end());
      for (std::size_t i = (t + 1) * 8; i < T * 8; ++i) {
        vf[i] += g(rng);
        vb[i] += g(rng);
      }
      const FlowPair moved = bidir_interactive_attention(Tensor::from_values({T, 8}, vf), Tensor::from_values({T, 8}, vb),
                                                         p, 0.5, Activation::kTanh);
      for (std::size_t r = 0; r <= t; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
          CHECK(std::abs(base.fwd.at(r, c) - moved.fwd.at(r, c)) <= 1e-6);
          CHECK(std::abs(base.bwd.at(r, c) - moved.bwd.at(r, c)) <= 1e-6);
        }
      }
    }
  }

  TEST_CASE("swapping the flows swaps the outputs") {
    Rng rng(6);
    const HeadProjection p = random_projection(8, 2, 4, rng);
    const Tensor a = random_matrix(4, 8, rng), b = random_matrix(4, 8, rng);
    const FlowPair ab = bidir_interactive_attention(a, b, p, 0.3, Activation::kRelu);
    const FlowPair ba = bidir_interactive_attention(b, a, p, 0.3, Activation::kRelu);
    CHECK(bit_equal(ab.fwd.values(), ba.bwd.values()));
    CHECK(bit_equal(ab.bwd.values(), ba.fwd.values()));
  }

  TEST_CASE("relu fusion is continuous at lambda = 0") {
    PrecisionScope f64(Precision::kFloat64);
    Rng rng(7);
    const HeadProjection p = random_projection(8, 2, 4, rng);
    const Tensor a = random_matrix(4, 8, rng), b = random_matrix(4, 8, rng);
    const FlowPair zero = bidir_interactive_attention(a, b, p, 0.0, Activation::kRelu);
    const FlowPair tiny = bidir_interactive_attention(a, b, p, 1e-8, Activation::kRelu);
    CHECK(max_abs_diff(zero.fwd.values(), tiny.fwd.values()) < 1e-6);
    CHECK(max_abs_diff(zero.bwd.values(), tiny.bwd.values()) < 1e-6);
  }

  TEST_CASE("flow shape mismatch is a contract error") {
    Rng rng(8);
    const HeadProjection p = random_projection(8, 2, 4, rng);
    CHECK_THROWS_AS(bidir_interactive_attention(random_matrix(3, 8, rng), random_matrix(4, 8, rng), p, 0.1,
                                                Activation::kRelu),
                    ContractError);
    CHECK_THROWS_AS(parse_activation("gelu"), std::invalid_argument);
    CHECK(parse_activation(to_string(Activation::kTanh)) == Activation::kTanh);
  }
}
