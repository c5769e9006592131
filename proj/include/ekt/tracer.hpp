// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "ekt/ops.hpp"
#include "ekt/params.hpp"
#include "ekt/tape.hpp"

namespace ekt {

/// Student Embedding weights. The input matrix Zx (4dh x 4dv, gates i,f,o,g)
/// acts on the score-split input [x ; 0] or [0 ; x], so its first 2dv
/// columns learn from correct answers and the last 2dv from wrong ones.
///
/// `slots` is 1 for the integrated state and K for the per-concept state
/// matrix, stored slot-major (K x dh; row i is the state of concept i).
/// With per_slot set, Zx, Zh and b are stacked once per slot.
struct TracerParams {
  std::size_t Zx = 0, Zh = 0, b = 0, prior = 0;
  std::size_t slots = 1;
  bool per_slot = false;

  static TracerParams create(ParamStore& store, const Hyper& hyper, std::size_t slots, bool per_slot, Rng& rng);
  static TracerParams bind(const ParamStore& store);
};

/// r = 1 -> [x ; 0], r = 0 -> [0 ; x].
std::vector<double> combine_input(std::span<const double> x, int score);
Var combine_input(Tape& t, Var x, int score);

struct StateSnapshot {
  std::size_t step = 0;
  std::size_t slots = 1;
  std::vector<double> h;      // slots x dh
  std::vector<double> c;      // slots x dh
  std::vector<double> input;  // combined input consumed at this step (empty at step 0)
};

StateSnapshot initial_state(const ParamStore& store, const TracerParams& p);
StateSnapshot step_eernn(std::span<const double> x_tilde, const StateSnapshot& prev, const ParamStore& store,
                         const TracerParams& p);
/// Each slot i runs the LSTM on beta_i * x_tilde. beta must sum to 1 within 1e-6.
StateSnapshot step_ekt(std::span<const double> x_tilde, std::span<const double> beta, const StateSnapshot& prev,
                       const ParamStore& store, const TracerParams& p);
/// s = sum_i beta_i H_i for H stored slot-major.
std::vector<double> aggregate_state(std::span<const double> H, std::size_t slots, std::span<const double> beta);

ops::LstmState prior_state(Tape& t, const TracerParams& p);
ops::LstmState step_eernn(Tape& t, Var x_tilde, ops::LstmState prev, const TracerParams& p);
ops::LstmState step_ekt(Tape& t, Var x_tilde, Var beta, ops::LstmState prev, const TracerParams& p);

}  // namespace ekt
