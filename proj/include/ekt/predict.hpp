// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ekt/params.hpp"
#include "ekt/tape.hpp"

namespace ekt {

/// Two-layer prediction head: y = ReLU(W_hidden [s ; x] + b_hidden),
/// r = sigmoid(W_out y + b_out). The integrated-state models use the
/// W1/b1/W2/b2 set, the concept-state models W3/b3/W4/b4.
struct HeadParams {
  std::size_t W_hidden = 0, b_hidden = 0, W_out = 0, b_out = 0;

  static HeadParams create(ParamStore& store, const Hyper& hyper, bool concept_state, Rng& rng);
  static HeadParams bind(const ParamStore& store, bool concept_state);
};

/// Head on the tape. `mask` (dy values, possibly empty) is applied to y.
Var head_forward(Tape& t, Var state, Var x, const HeadParams& p, std::span<const double> mask = {});

/// Integrated-state Markov prediction from h_T and x_{T+1}.
double predict_markov(std::span<const double> h, std::span<const double> x_next, const ParamStore& store,
                      const HeadParams& p);
/// Concept-state Markov prediction: s = sum_i beta_i H_i, then the head.
double predict_markov(std::span<const double> H, std::size_t slots, std::span<const double> beta,
                      std::span<const double> x_next, const ParamStore& store, const HeadParams& p);

/// alpha_j = cos(x_next, x_j), left unnormalized.
std::vector<double> attention_weights(std::span<const double> x_next, std::span<const std::vector<double>> history);

/// sum_j alpha_j * state_j. Works slot-wise for matrix states stored flat.
std::vector<double> attend_state(std::span<const double> alpha, std::span<const std::vector<double>> states);

/// Mastery of concept i: the concept-state head applied to one-hot(i)
/// aggregation of H with the exercise input masked to zeros.
Var estimate_mastery(Tape& t, Var H, std::size_t concept_id, const HeadParams& p);
double estimate_mastery(std::span<const double> H, std::size_t slots, std::size_t concept_id, const ParamStore& store,
                        const HeadParams& p);

}  // namespace ekt
