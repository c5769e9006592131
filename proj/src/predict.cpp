// SPDX-License-Identifier: Apache-2.0
#include "ekt/predict.hpp"

#include <stdexcept>
#include <string>

#include "ekt/functions.hpp"
#include "ekt/ops.hpp"

namespace ekt {

HeadParams HeadParams::create(ParamStore& store, const Hyper& h, bool concept_state, Rng& rng) {
  const std::string w1 = concept_state ? "head.W3" : "head.W1";
  const std::string b1 = concept_state ? "head.b3" : "head.b1";
  const std::string w2 = concept_state ? "head.W4" : "head.W2";
  const std::string b2 = concept_state ? "head.b4" : "head.b2";
  const std::size_t in = h.dh + 2 * h.dv;
  HeadParams p;
  p.W_hidden = store.add(w1, xavier_init(in, h.dy, {h.dy, in}, rng));
  p.b_hidden = store.add(b1, xavier_init(1, h.dy, {h.dy}, rng));
  p.W_out = store.add(w2, xavier_init(h.dy, 1, {1, h.dy}, rng));
  p.b_out = store.add(b2, xavier_init(1, 1, {1}, rng));
  return p;
}

HeadParams HeadParams::bind(const ParamStore& store, bool concept_state) {
  HeadParams p;
  p.W_hidden = store.index(concept_state ? "head.W3" : "head.W1");
  p.b_hidden = store.index(concept_state ? "head.b3" : "head.b1");
  p.W_out = store.index(concept_state ? "head.W4" : "head.W2");
  p.b_out = store.index(concept_state ? "head.b4" : "head.b2");
  return p;
}

Var head_forward(Tape& t, Var state, Var x, const HeadParams& p, std::span<const double> mask) {
  Var W = t.param(p.W_hidden);
  if (t.size(state) + t.size(x) != t.cols(W)) throw std::invalid_argument("head: input length mismatch");
  const Var parts[] = {state, x};
  Var y = ops::relu(t, ops::affine(t, W, ops::concat(t, parts), t.param(p.b_hidden)));
  if (!mask.empty()) y = ops::dropout(t, y, mask);
  return ops::sigmoid(t, ops::affine(t, t.param(p.W_out), y, t.param(p.b_out)));
}

double predict_markov(std::span<const double> h, std::span<const double> x_next, const ParamStore& store,
                      const HeadParams& p) {
  Tape t(&store, false);
  return t.scalar(head_forward(t, t.constant(h, h.size()), t.constant(x_next, x_next.size()), p));
}

double predict_markov(std::span<const double> H, std::size_t slots, std::span<const double> beta,
                      std::span<const double> x_next, const ParamStore& store, const HeadParams& p) {
  if (slots == 0 || H.size() % slots != 0 || beta.size() != slots) {
    throw std::invalid_argument("predict_markov: shape mismatch");
  }
  Tape t(&store, false);
  Var Hv = t.constant(H, slots, H.size() / slots);
  Var s = ops::aggregate_slots(t, Hv, t.constant(beta, slots));
  return t.scalar(head_forward(t, s, t.constant(x_next, x_next.size()), p));
}

std::vector<double> attention_weights(std::span<const double> x_next, std::span<const std::vector<double>> history) {
  if (history.empty()) throw std::invalid_argument("attention_weights: empty history");
  std::vector<double> alpha;
  alpha.reserve(history.size());
  for (const auto& xj : history) alpha.push_back(cosine(x_next, xj));
  return alpha;
}

std::vector<double> attend_state(std::span<const double> alpha, std::span<const std::vector<double>> states) {
  if (states.empty()) throw std::invalid_argument("attend_state: empty history (use the prior state)");
  if (alpha.size() != states.size()) throw std::invalid_argument("attend_state: length mismatch");
  std::vector<double> out(states[0].size(), 0.0);
  for (std::size_t j = 0; j < states.size(); ++j) {
    if (states[j].size() != out.size()) throw std::invalid_argument("attend_state: state shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha[j] * states[j][i];
  }
  return out;
}

Var estimate_mastery(Tape& t, Var H, std::size_t concept_id, const HeadParams& p) {
  const std::size_t slots = t.rows(H);
  if (concept_id >= slots) throw std::invalid_argument("concept id " + std::to_string(concept_id) + " out of range");
  std::vector<double> onehot(slots, 0.0);
  onehot[concept_id] = 1.0;
  Var s = ops::aggregate_slots(t, H, t.constant(onehot, slots));
  const std::size_t x_len = t.cols(t.param(p.W_hidden)) - t.size(s);
  const std::vector<double> zeros(x_len, 0.0);
  return head_forward(t, s, t.constant(zeros, x_len), p);
}

double estimate_mastery(std::span<const double> H, std::size_t slots, std::size_t concept_id, const ParamStore& store,
                        const HeadParams& p) {
  if (slots == 0 || H.size() % slots != 0) throw std::invalid_argument("estimate_mastery: shape mismatch");
  Tape t(&store, false);
  return t.scalar(estimate_mastery(t, t.constant(H, slots, H.size() / slots), concept_id, p));
}

}  // namespace ekt
