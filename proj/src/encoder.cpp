// SPDX-License-Identifier: Apache-2.0
#include "ekt/encoder.hpp"

#include <stdexcept>

namespace ekt {

namespace {

Tensor bias_init(std::size_t n, Rng& rng) { return xavier_init(1, n, {n}, rng); }

}  // namespace

EncoderParams EncoderParams::create(ParamStore& store, const Hyper& h, std::size_t vocab_size, Rng& rng,
                                    bool freeze_words) {
  if (vocab_size < 2) throw std::invalid_argument("vocabulary must hold at least the reserved tokens");
  EncoderParams p;
  p.word_table = store.add("enc.word_table", xavier_init(vocab_size, h.d0, {vocab_size, h.d0}, rng), !freeze_words);
  p.fwd_Zw = store.add("enc.fwd.Zw", xavier_init(h.d0, h.dv, {4 * h.dv, h.d0}, rng));
  p.fwd_Zv = store.add("enc.fwd.Zv", xavier_init(h.dv, h.dv, {4 * h.dv, h.dv}, rng));
  p.fwd_b = store.add("enc.fwd.b", bias_init(4 * h.dv, rng));
  p.bwd_Zw = store.add("enc.bwd.Zw", xavier_init(h.d0, h.dv, {4 * h.dv, h.d0}, rng));
  p.bwd_Zv = store.add("enc.bwd.Zv", xavier_init(h.dv, h.dv, {4 * h.dv, h.dv}, rng));
  p.bwd_b = store.add("enc.bwd.b", bias_init(4 * h.dv, rng));
  return p;
}

EncoderParams EncoderParams::bind(const ParamStore& store) {
  EncoderParams p;
  p.word_table = store.index("enc.word_table");
  p.fwd_Zw = store.index("enc.fwd.Zw");
  p.fwd_Zv = store.index("enc.fwd.Zv");
  p.fwd_b = store.index("enc.fwd.b");
  p.bwd_Zw = store.index("enc.bwd.Zw");
  p.bwd_Zv = store.index("enc.bwd.Zv");
  p.bwd_b = store.index("enc.bwd.b");
  return p;
}

ops::LstmState lstm_cell(Tape& t, Var w, ops::LstmState prev, Var Zw, Var Zv, Var b) {
  return ops::lstm(t, ops::matvec(t, Zw, w), prev.h, prev.c, Zv, b, 1);
}

CellState lstm_cell(std::span<const double> w, const CellState& prev, const LstmWeights& wt) {
  const std::size_t d = wt.hidden, n = wt.input_dim;
  if (d == 0 || n == 0) throw std::invalid_argument("lstm_cell: zero dimension");
  if (w.size() != n || prev.h.size() != d || prev.c.size() != d || wt.Zw.size() != 4 * d * n ||
      wt.Zv.size() != 4 * d * d || wt.b.size() != 4 * d) {
    throw std::invalid_argument("lstm_cell: dimension mismatch");
  }
  Tape t;
  Var Zw = t.constant(wt.Zw, 4 * d, n);
  Var Zv = t.constant(wt.Zv, 4 * d, d);
  Var b = t.constant(wt.b, 4 * d);
  Var x = t.constant(w, n);
  ops::LstmState st{t.constant(prev.h, 1, d), t.constant(prev.c, 1, d)};
  auto next = lstm_cell(t, x, st, Zw, Zv, b);
  auto h = t.value(next.h);
  auto c = t.value(next.c);
  return {{h.begin(), h.end()}, {c.begin(), c.end()}};
}

Var encode_exercise(Tape& t, std::span<const int> tokens, const EncoderParams& p) {
  if (tokens.empty()) throw std::invalid_argument("encode_exercise: empty token list");
  Var table = t.param(p.word_table);
  const std::size_t vocab = t.rows(table);
  std::vector<Var> words;
  words.reserve(tokens.size());
  for (int tok : tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= vocab) throw std::invalid_argument("token id out of range");
    words.push_back(ops::row(t, table, static_cast<std::size_t>(tok)));
  }
  const std::size_t dv = t.cols(t.param(p.fwd_Zv));
  const std::vector<double> zeros(dv, 0.0);

  auto run = [&](std::size_t Zw_i, std::size_t Zv_i, std::size_t b_i, bool reverse) {
    Var Zw = t.param(Zw_i), Zv = t.param(Zv_i), b = t.param(b_i);
    ops::LstmState st{t.constant(zeros, 1, dv), t.constant(zeros, 1, dv)};
    std::vector<Var> hs;
    hs.reserve(words.size());
    for (std::size_t k = 0; k < words.size(); ++k) {
      const std::size_t m = reverse ? words.size() - 1 - k : k;
      st = lstm_cell(t, words[m], st, Zw, Zv, b);
      hs.push_back(st.h);
    }
    return hs;
  };
  // max over m of [fwd_m ; bwd_m] equals [max fwd ; max bwd].
  const auto fwd = run(p.fwd_Zw, p.fwd_Zv, p.fwd_b, false);
  const auto bwd = run(p.bwd_Zw, p.bwd_Zv, p.bwd_b, true);
  const Var parts[] = {ops::max_pool(t, fwd), ops::max_pool(t, bwd)};
  return ops::concat(t, parts);
}

std::vector<double> encode_exercise(std::span<const int> tokens, const ParamStore& store, const EncoderParams& p) {
  Tape t(&store, false);
  Var x = encode_exercise(t, tokens, p);
  auto v = t.value(x);
  return {v.begin(), v.end()};
}

}  // namespace ekt
