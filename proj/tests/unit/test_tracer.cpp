// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ekt/ops.hpp"
#include "ekt/tracer.hpp"
#include "support.hpp"

using namespace ekt;
using ekt::test::check_tape;
using ekt::test::probe;
using ekt::test::random_vec;

namespace {

double sg(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Toy {
  ParamStore store;
  TracerParams p;
  Hyper h;
};

Toy make_toy(std::size_t dv, std::size_t dh, std::size_t slots, bool per_slot, std::uint64_t seed) {
  Toy t;
  t.h.dv = dv;
  t.h.dh = dh;
  Rng rng(seed);
  t.p = TracerParams::create(t.store, t.h, slots, per_slot, rng);
  return t;
}

void zero(ParamStore& s, std::size_t i) {
  for (auto& v : s[i].value.vec()) v = 0.0;
}

// Scalar LSTM with dh = 1: gate pre-activations from Zx (4 x n), Zh (4), b (4).
std::pair<double, double> scalar_cell(const std::vector<double>& x, double h, double c, const std::vector<double>& Zx,
                                      const std::vector<double>& Zh, const std::vector<double>& b) {
  const std::size_t n = x.size();
  double g[4];
  for (std::size_t q = 0; q < 4; ++q) {
    double z = b[q] + Zh[q] * h;
    for (std::size_t k = 0; k < n; ++k) z += Zx[q * n + k] * x[k];
    g[q] = z;
  }
  const double cn = sg(g[1]) * c + sg(g[0]) * std::tanh(g[3]);
  return {sg(g[2]) * std::tanh(cn), cn};
}

}  // namespace

TEST_CASE("combine_input examples") {
  const std::vector<double> x = {0.2, -0.1};
  CHECK(combine_input(x, 1) == std::vector<double>{0.2, -0.1, 0, 0});
  CHECK(combine_input(x, 0) == std::vector<double>{0, 0, 0.2, -0.1});
  const auto a = combine_input(x, 1), b = combine_input(x, 0);
  CHECK(std::vector<double>(a.begin(), a.begin() + 2) == std::vector<double>(b.begin() + 2, b.end()));
  CHECK_THROWS_AS(combine_input(x, 2), std::invalid_argument);
  CHECK_THROWS_AS(combine_input(x, -1), std::invalid_argument);
}

TEST_CASE("step_eernn: zero weights give zero state") {
  Toy t = make_toy(2, 3, 1, false, 1);
  for (std::size_t i = 0; i < t.store.size(); ++i) zero(t.store, i);
  const auto s0 = initial_state(t.store, t.p);
  const auto s1 = step_eernn(combine_input(std::vector<double>{0.5, 0.1, -0.3, 0.2}, 1), s0, t.store, t.p);
  CHECK(s1.step == 1);
  for (double v : s1.h) CHECK(v == 0.0);
  CHECK(s1.input.size() == 8);
}

TEST_CASE("step_eernn: dh = 1 equals the scalar formula") {
  Toy t = make_toy(1, 1, 1, false, 2);
  const auto& s = t.store;
  const std::vector<double> xt = combine_input(std::vector<double>{0.4, -0.7}, 0);
  const auto s0 = initial_state(s, t.p);
  const auto s1 = step_eernn(xt, s0, s, t.p);
  const auto [h, c] = scalar_cell(xt, s0.h[0], 0.0, s[t.p.Zx].value.vec(), s[t.p.Zh].value.vec(), s[t.p.b].value.vec());
  CHECK(std::abs(s1.h[0] - h) <= 1e-12);
  CHECK(std::abs(s1.c[0] - c) <= 1e-12);
}

TEST_CASE("step_eernn: constant input converges") {
  Toy t = make_toy(2, 3, 1, false, 3);
  const std::vector<double> xt = combine_input(std::vector<double>{0.3, 0.1, -0.2, 0.5}, 1);
  auto s = initial_state(t.store, t.p);
  double delta = 1.0;
  for (int k = 0; k < 500; ++k) {
    auto next = step_eernn(xt, s, t.store, t.p);
    delta = 0.0;
    for (std::size_t i = 0; i < next.h.size(); ++i) {
      delta = std::max(delta, std::abs(next.h[i] - s.h[i]));
      CHECK(std::abs(next.h[i]) < 1.0);
    }
    s = std::move(next);
  }
  CHECK(delta < 1e-6);
}

TEST_CASE("step_ekt: one-hot beta feeds only its slot") {
  Toy t = make_toy(1, 2, 3, false, 4);
  zero(t.store, t.p.b);
  const std::vector<double> xt = combine_input(std::vector<double>{0.6, -0.2}, 1);
  const auto s0 = initial_state(t.store, t.p);
  const auto s1 = step_ekt(xt, std::vector<double>{0, 1, 0}, s0, t.store, t.p);
  const auto zero_in = step_ekt(std::vector<double>(4, 0.0), std::vector<double>{0, 1, 0}, s0, t.store, t.p);
  for (std::size_t slot : {0u, 2u})
    for (std::size_t j = 0; j < 2; ++j) CHECK(s1.h[slot * 2 + j] == zero_in.h[slot * 2 + j]);
  CHECK(s1.h[2] != zero_in.h[2]);
}

TEST_CASE("step_ekt: K = 2, dh = 1 per-slot unroll") {
  Toy t = make_toy(1, 1, 2, false, 5);
  const auto& s = t.store;
  const std::vector<double> xt = combine_input(std::vector<double>{-0.3, 0.9}, 1);
  const std::vector<double> beta = {0.3, 0.7};
  const auto s0 = initial_state(s, t.p);
  const auto s1 = step_ekt(xt, beta, s0, s, t.p);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> xi = xt;
    for (auto& v : xi) v *= beta[k];
    const auto [h, c] = scalar_cell(xi, s0.h[k], 0.0, s[t.p.Zx].value.vec(), s[t.p.Zh].value.vec(), s[t.p.b].value.vec());
    CHECK(std::abs(s1.h[k] - h) <= 1e-12);
    CHECK(std::abs(s1.c[k] - c) <= 1e-12);
  }
}

TEST_CASE("step_ekt: uniform beta keeps equal slots equal") {
  Toy t = make_toy(2, 3, 4, false, 6);
  auto s = initial_state(t.store, t.p);
  for (std::size_t k = 1; k < 4; ++k)
    for (std::size_t j = 0; j < 3; ++j) s.h[k * 3 + j] = s.h[j];
  const std::vector<double> beta(4, 0.25);
  for (int step = 0; step < 3; ++step) s = step_ekt(combine_input(std::vector<double>{0.1, 0.2, 0.3, 0.4}, step % 2), beta, s, t.store, t.p);
  for (std::size_t k = 1; k < 4; ++k)
    for (std::size_t j = 0; j < 3; ++j) CHECK(s.h[k * 3 + j] == s.h[j]);
}

TEST_CASE("step_ekt rejects a non-distribution") {
  Toy t = make_toy(1, 2, 2, false, 7);
  const auto s0 = initial_state(t.store, t.p);
  const std::vector<double> xt(4, 0.1);
  CHECK_THROWS_AS(step_ekt(xt, std::vector<double>{0.5, 0.6}, s0, t.store, t.p), std::invalid_argument);
  CHECK_THROWS_AS(step_ekt(xt, std::vector<double>{1.2, -0.2}, s0, t.store, t.p), std::invalid_argument);
  CHECK_THROWS_AS(step_ekt(xt, std::vector<double>{1.0}, s0, t.store, t.p), std::invalid_argument);
  CHECK_NOTHROW(step_ekt(xt, std::vector<double>{0.5, 0.5 + 1e-9}, s0, t.store, t.p));
}

TEST_CASE("aggregate_state examples") {
  const std::vector<double> H = {1, 2, 3, 4, 5, 6};  // 3 slots x 2
  CHECK(aggregate_state(H, 3, std::vector<double>{0, 1, 0}) == std::vector<double>{3, 4});
  const std::vector<double> same = {0.3, -0.1, 0.3, -0.1, 0.3, -0.1};
  const auto s = aggregate_state(same, 3, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(s[0] == doctest::Approx(0.3));
  CHECK(s[1] == doctest::Approx(-0.1));
  Rng rng(8);
  const auto Hr = random_vec(12, rng), beta = std::vector<double>{0.2, 0.5, 0.3};
  const auto got = aggregate_state(Hr, 3, beta);
  for (std::size_t j = 0; j < 4; ++j) {
    const double want = beta[0] * Hr[j] + beta[1] * Hr[4 + j] + beta[2] * Hr[8 + j];
    CHECK(std::abs(got[j] - want) <= 1e-15);
  }
  CHECK_THROWS_AS(aggregate_state(H, 3, std::vector<double>{1, 0}), std::invalid_argument);
}

TEST_CASE("EKT with one slot reproduces EERNN bit for bit") {
  Toy a = make_toy(2, 3, 1, false, 9);
  Rng rng(10);
  auto s_eernn = initial_state(a.store, a.p);
  auto s_ekt = s_eernn;
  for (int step = 0; step < 6; ++step) {
    const auto xt = combine_input(random_vec(4, rng), step % 2);
    s_eernn = step_eernn(xt, s_eernn, a.store, a.p);
    s_ekt = step_ekt(xt, std::vector<double>{1.0}, s_ekt, a.store, a.p);
    CHECK(s_eernn.h == s_ekt.h);
    CHECK(s_eernn.c == s_ekt.c);
  }
}

TEST_CASE("replay determinism and bounds") {
  Toy t = make_toy(2, 3, 3, false, 11);
  Rng rng(12);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(combine_input(random_vec(4, rng), i % 2));
  const std::vector<double> beta = {0.2, 0.3, 0.5};
  auto run = [&] {
    auto s = initial_state(t.store, t.p);
    for (const auto& x : xs) s = step_ekt(x, beta, s, t.store, t.p);
    return s.h;
  };
  const auto h = run();
  CHECK(h == run());
  for (double v : h) CHECK(std::abs(v) < 1.0);
}

TEST_CASE("split weights: the unused half of the input gets exactly zero gradient") {
  for (std::size_t slots : {1u, 3u}) {
    for (int r : {0, 1}) {
      CAPTURE(slots);
      CAPTURE(r);
      Toy t = make_toy(2, 3, slots, false, 13);
      const std::vector<double> x = {0.3, -0.4, 0.2, 0.9};
      const std::vector<double> beta = slots == 1 ? std::vector<double>{1.0} : std::vector<double>{0.2, 0.5, 0.3};
      Tape tape(&t.store);
      Var xt = combine_input(tape, tape.constant(x, 4), r);
      auto prev = prior_state(tape, t.p);
      auto next = slots == 1 ? step_eernn(tape, xt, prev, t.p) : step_ekt(tape, xt, tape.constant(beta, slots), prev, t.p);
      tape.backward(probe(tape, next.h));
      const auto g = tape.param_grad(t.p.Zx);
      const std::size_t in = 8, rows = 4 * 3;
      double used = 0.0;
      for (std::size_t row = 0; row < rows; ++row) {
        for (std::size_t col = 0; col < in; ++col) {
          const bool first_half = col < 4;
          const double v = g[row * in + col];
          if (first_half == (r == 1)) used += std::abs(v);
          else CHECK(v == 0.0);
        }
      }
      CHECK(used > 0.0);
    }
  }
}

TEST_CASE("tracer gradients pass grad_check, shared and per-slot") {
  for (bool per_slot : {false, true}) {
    CAPTURE(per_slot);
    Toy t = make_toy(2, 3, 3, per_slot, 14);
    CHECK(t.p.per_slot == per_slot);
    Rng rng(15);
    const auto x1 = random_vec(4, rng), x2 = random_vec(4, rng);
    auto build = [&](Tape& tape) {
      const std::vector<double> b1 = {0.2, 0.5, 0.3}, b2 = {0.6, 0.1, 0.3};
      auto st = prior_state(tape, t.p);
      st = step_ekt(tape, combine_input(tape, tape.constant(x1, 4), 1), tape.constant(b1, 3), st, t.p);
      st = step_ekt(tape, combine_input(tape, tape.constant(x2, 4), 0), tape.constant(b2, 3), st, t.p);
      return probe(tape, st.h);
    };
    CHECK(check_tape(t.store, build) <= 1e-4);
  }
  Toy e = make_toy(2, 3, 1, false, 16);
  auto build = [&](Tape& tape) {
    const std::vector<double> x = {0.1, 0.7, -0.3, 0.2};
    auto st = prior_state(tape, e.p);
    st = step_eernn(tape, combine_input(tape, tape.constant(x, 4), 1), st, e.p);
    st = step_eernn(tape, combine_input(tape, tape.constant(x, 4), 0), st, e.p);
    return probe(tape, st.h);
  };
  CHECK(check_tape(e.store, build) <= 1e-4);
}

TEST_CASE("per-slot weights with identical copies equal shared weights") {
  Toy shared = make_toy(1, 2, 3, false, 17);
  Toy per = make_toy(1, 2, 3, true, 17);
  for (std::size_t k = 0; k < 3; ++k) {
    for (auto [src, dst] : {std::pair{shared.p.Zx, per.p.Zx}, std::pair{shared.p.Zh, per.p.Zh}, std::pair{shared.p.b, per.p.b}}) {
      const auto& sv = shared.store[src].value.vec();
      auto& dv = per.store[dst].value.vec();
      std::copy(sv.begin(), sv.end(), dv.begin() + static_cast<std::ptrdiff_t>(k * sv.size()));
    }
  }
  per.store[per.p.prior].value = shared.store[shared.p.prior].value;
  const auto xt = combine_input(std::vector<double>{0.4, -0.6}, 1);
  const std::vector<double> beta = {0.1, 0.6, 0.3};
  const auto a = step_ekt(xt, beta, initial_state(shared.store, shared.p), shared.store, shared.p);
  const auto b = step_ekt(xt, beta, initial_state(per.store, per.p), per.store, per.p);
  for (std::size_t i = 0; i < a.h.size(); ++i) CHECK(a.h[i] == doctest::Approx(b.h[i]).epsilon(1e-14));
  CHECK(TracerParams::bind(per.store).per_slot);
  CHECK_FALSE(TracerParams::bind(shared.store).per_slot);
}
