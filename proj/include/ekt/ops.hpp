// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "ekt/tape.hpp"

/// Differentiable operations on a Tape. Vectors are treated as flat data;
/// matrices are row-major. Every op checks shapes and throws
/// std::invalid_argument on mismatch.
namespace ekt::ops {

Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// W (r x c) times x (c values) -> r values.
Var matvec(Tape& t, Var W, Var x);
/// W^T (c x r) times x (r values) -> c values.
Var matvec_t(Tape& t, Var W, Var x);
Var affine(Tape& t, Var W, Var x, Var b);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var concat(Tape& t, std::span<const Var> parts);
/// Flat slice [begin, begin+len) as a column vector.
Var slice(Tape& t, Var a, std::size_t begin, std::size_t len);
/// Columns [begin, begin+width) of every row.
Var block(Tape& t, Var a, std::size_t begin, std::size_t width);
Var row(Tape& t, Var M, std::size_t r);
/// Mean of the selected rows of M.
Var mean_rows(Tape& t, Var M, std::span<const int> rows);
Var softmax(Tape& t, Var a);
/// cos(query, key_j) for each key; 0 whenever either norm is below 1e-12.
Var cosine_scores(Tape& t, Var query, std::span<const Var> keys);
/// sum_j w_j * item_j; items share one shape, which the result keeps.
Var weighted_sum(Tape& t, Var weights, std::span<const Var> items);
/// H is slots x d; returns sum_i beta_i * H_i (d values).
Var aggregate_slots(Tape& t, Var H, Var beta);
/// Outer product a b^T with shape len(a) x len(b).
Var outer(Tape& t, Var a, Var b);
/// Element-wise maximum; gradient routes to the first arg-max.
Var max_pool(Tape& t, std::span<const Var> items);
/// Multiplies by a fixed mask (already scaled by 1/(1-p)).
Var dropout(Tape& t, Var a, std::span<const double> mask);
Var sum(Tape& t, std::span<const Var> scalars);
/// Binary cross-entropy of probability p against target in {0,1}; p is
/// clamped to [eps, 1-eps] before the logs.
Var bce(Tape& t, Var p, double target, double eps = 1e-7);

struct LstmState {
  Var h;  // slots x d
  Var c;  // slots x d
};

/// LSTM update for `slots` cells stepping together. input_pre holds the
/// input-path pre-activations (slots x 4d, gate blocks i, f, o, g). Zh and b
/// are shared (4d x d, 4d) or stacked per slot (slots*4d x d, slots*4d).
///   pre = input_pre + Zh h_prev + b
///   c = sigmoid(f) * c_prev + sigmoid(i) * tanh(g)
///   h = sigmoid(o) * tanh(c)
LstmState lstm(Tape& t, Var input_pre, Var h_prev, Var c_prev, Var Zh, Var b, std::size_t slots);

}  // namespace ekt::ops
