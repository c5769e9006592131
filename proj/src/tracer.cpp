// SPDX-License-Identifier: Apache-2.0
#include "ekt/tracer.hpp"

#include <cmath>
#include <stdexcept>

namespace ekt {

TracerParams TracerParams::create(ParamStore& store, const Hyper& h, std::size_t slots, bool per_slot, Rng& rng) {
  if (slots == 0) throw std::invalid_argument("tracer needs at least one slot");
  TracerParams p;
  p.slots = slots;
  p.per_slot = per_slot && slots > 1;
  const std::size_t reps = p.per_slot ? slots : 1;
  const std::size_t in = 4 * h.dv;
  p.Zx = store.add("trace.Zx", xavier_init(in, h.dh, {reps * 4 * h.dh, in}, rng));
  p.Zh = store.add("trace.Zh", xavier_init(h.dh, h.dh, {reps * 4 * h.dh, h.dh}, rng));
  p.b = store.add("trace.b", xavier_init(1, 4 * h.dh, {reps * 4 * h.dh}, rng));
  if (slots == 1) {
    p.prior = store.add("trace.h0", xavier_init(1, h.dh, {1, h.dh}, rng));
  } else {
    p.prior = store.add("trace.H0", xavier_init(h.dh, slots, {slots, h.dh}, rng));
  }
  return p;
}

TracerParams TracerParams::bind(const ParamStore& store) {
  TracerParams p;
  p.Zx = store.index("trace.Zx");
  p.Zh = store.index("trace.Zh");
  p.b = store.index("trace.b");
  if (store.contains("trace.h0")) {
    p.prior = store.index("trace.h0");
    p.slots = 1;
  } else {
    p.prior = store.index("trace.H0");
    p.slots = store[p.prior].value.rows();
  }
  const std::size_t dh = store[p.Zh].value.cols();
  p.per_slot = store[p.Zh].value.rows() == p.slots * 4 * dh && p.slots > 1;
  return p;
}

std::vector<double> combine_input(std::span<const double> x, int score) {
  if (score != 0 && score != 1) throw std::invalid_argument("score must be 0 or 1");
  std::vector<double> out(2 * x.size(), 0.0);
  const std::size_t off = score == 1 ? 0 : x.size();
  for (std::size_t i = 0; i < x.size(); ++i) out[off + i] = x[i];
  return out;
}

Var combine_input(Tape& t, Var x, int score) {
  if (score != 0 && score != 1) throw std::invalid_argument("score must be 0 or 1");
  const std::vector<double> zeros(t.size(x), 0.0);
  Var z = t.constant(zeros, zeros.size());
  const Var parts[] = {score == 1 ? x : z, score == 1 ? z : x};
  return ops::concat(t, parts);
}

ops::LstmState prior_state(Tape& t, const TracerParams& p) {
  Var prior = t.param(p.prior);
  const std::vector<double> zeros(t.size(prior), 0.0);
  return {prior, t.constant(zeros, t.rows(prior), t.cols(prior))};
}

ops::LstmState step_eernn(Tape& t, Var x_tilde, ops::LstmState prev, const TracerParams& p) {
  if (p.slots != 1) throw std::invalid_argument("step_eernn needs a single-slot tracer");
  Var Zx = t.param(p.Zx);
  if (t.size(x_tilde) != t.cols(Zx)) throw std::invalid_argument("step_eernn: input length mismatch");
  return ops::lstm(t, ops::matvec(t, Zx, x_tilde), prev.h, prev.c, t.param(p.Zh), t.param(p.b), 1);
}

ops::LstmState step_ekt(Tape& t, Var x_tilde, Var beta, ops::LstmState prev, const TracerParams& p) {
  if (t.size(beta) != p.slots) throw std::invalid_argument("step_ekt: beta length must equal K");
  Var Zx = t.param(p.Zx);
  if (t.size(x_tilde) != t.cols(Zx)) throw std::invalid_argument("step_ekt: input length mismatch");
  Var u = ops::matvec(t, Zx, x_tilde);
  Var pre;
  if (p.per_slot) {
    // Row i of the stacked projection belongs to slot i; scale it by beta_i.
    const std::size_t g4 = t.size(u) / p.slots;
    std::vector<Var> rows;
    rows.reserve(p.slots);
    for (std::size_t s = 0; s < p.slots; ++s) {
      Var bs = ops::slice(t, beta, s, 1);
      Var us = ops::slice(t, u, s * g4, g4);
      rows.push_back(ops::matvec(t, us, bs));
    }
    pre = ops::concat(t, rows);
  } else {
    pre = ops::outer(t, beta, u);
  }
  return ops::lstm(t, pre, prev.h, prev.c, t.param(p.Zh), t.param(p.b), p.slots);
}

namespace {

StateSnapshot run_step(std::span<const double> x_tilde, const std::vector<double>* beta, const StateSnapshot& prev,
                       const ParamStore& store, const TracerParams& p) {
  const std::size_t dh = store[p.Zh].value.cols();
  if (prev.h.size() != p.slots * dh || prev.c.size() != p.slots * dh) {
    throw std::invalid_argument("state shape mismatch");
  }
  Tape t(&store, false);
  Var x = t.constant(x_tilde, x_tilde.size());
  ops::LstmState st{t.constant(prev.h, p.slots, dh), t.constant(prev.c, p.slots, dh)};
  ops::LstmState next = beta ? step_ekt(t, x, t.constant(*beta, beta->size()), st, p) : step_eernn(t, x, st, p);
  StateSnapshot out;
  out.step = prev.step + 1;
  out.slots = p.slots;
  auto h = t.value(next.h), c = t.value(next.c);
  out.h.assign(h.begin(), h.end());
  out.c.assign(c.begin(), c.end());
  out.input.assign(x_tilde.begin(), x_tilde.end());
  return out;
}

}  // namespace

StateSnapshot initial_state(const ParamStore& store, const TracerParams& p) {
  StateSnapshot s;
  s.slots = p.slots;
  s.h = store[p.prior].value.vec();
  s.c.assign(s.h.size(), 0.0);
  return s;
}

StateSnapshot step_eernn(std::span<const double> x_tilde, const StateSnapshot& prev, const ParamStore& store,
                         const TracerParams& p) {
  return run_step(x_tilde, nullptr, prev, store, p);
}

StateSnapshot step_ekt(std::span<const double> x_tilde, std::span<const double> beta, const StateSnapshot& prev,
                       const ParamStore& store, const TracerParams& p) {
  double total = 0.0;
  for (double b : beta) {
    if (!(b >= 0.0)) throw std::invalid_argument("step_ekt: beta must be non-negative");
    total += b;
  }
  if (beta.size() != p.slots || std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("step_ekt: beta is not a distribution over the K slots");
  }
  const std::vector<double> b(beta.begin(), beta.end());
  return run_step(x_tilde, &b, prev, store, p);
}

std::vector<double> aggregate_state(std::span<const double> H, std::size_t slots, std::span<const double> beta) {
  if (slots == 0 || beta.size() != slots || H.size() % slots != 0) {
    throw std::invalid_argument("aggregate_state: shape mismatch");
  }
  const std::size_t d = H.size() / slots;
  std::vector<double> s(d, 0.0);
  for (std::size_t k = 0; k < slots; ++k)
    for (std::size_t i = 0; i < d; ++i) s[i] += beta[k] * H[k * d + i];
  return s;
}

}  // namespace ekt
