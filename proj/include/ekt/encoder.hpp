// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "ekt/ops.hpp"
#include "ekt/params.hpp"
#include "ekt/tape.hpp"

namespace ekt {

/// Exercise Embedding weights: a word table and one LSTM per direction.
/// Gate weights are stacked row-wise in the order i, f, o, g (the candidate
/// cell input), so Zw is 4dv x d0, Zv is 4dv x dv and b has 4dv entries.
struct EncoderParams {
  std::size_t word_table = 0;
  std::size_t fwd_Zw = 0, fwd_Zv = 0, fwd_b = 0;
  std::size_t bwd_Zw = 0, bwd_Zv = 0, bwd_b = 0;

  static EncoderParams create(ParamStore& store, const Hyper& hyper, std::size_t vocab_size, Rng& rng,
                              bool freeze_words = false);
  static EncoderParams bind(const ParamStore& store);
};

struct LstmWeights {
  std::span<const double> Zw;  // 4d x input
  std::span<const double> Zv;  // 4d x d
  std::span<const double> b;   // 4d
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
};

struct CellState {
  std::vector<double> h;
  std::vector<double> c;
};

/// One LSTM step on plain vectors.
CellState lstm_cell(std::span<const double> w, const CellState& prev, const LstmWeights& weights);

ops::LstmState lstm_cell(Tape& t, Var w, ops::LstmState prev, Var Zw, Var Zv, Var b);

/// Bidirectional LSTM over the token embeddings followed by element-wise
/// max pooling of [forward ; backward] states. Returns 2dv values.
Var encode_exercise(Tape& t, std::span<const int> tokens, const EncoderParams& p);
std::vector<double> encode_exercise(std::span<const int> tokens, const ParamStore& store, const EncoderParams& p);

}  // namespace ekt
