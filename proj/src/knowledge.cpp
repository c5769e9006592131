// SPDX-License-Identifier: Apache-2.0
#include "ekt/knowledge.hpp"

#include <stdexcept>
#include <string>

#include "ekt/ops.hpp"

namespace ekt {

KnowledgeParams KnowledgeParams::create(ParamStore& store, const Hyper& h, Rng& rng, bool freeze_memory) {
  KnowledgeParams p;
  p.Wk = store.add("know.Wk", xavier_init(h.K, h.dk, {h.K, h.dk}, rng));
  p.M = store.add("know.M", xavier_init(h.dk, h.K, {h.dk, h.K}, rng), !freeze_memory);
  return p;
}

KnowledgeParams KnowledgeParams::bind(const ParamStore& store) {
  return {store.index("know.Wk"), store.index("know.M")};
}

Var concept_embed(Tape& t, std::span<const int> concepts, const KnowledgeParams& p) {
  if (concepts.empty()) throw std::invalid_argument("concept_embed: empty concept set");
  Var Wk = t.param(p.Wk);
  for (int k : concepts) {
    if (k < 0 || static_cast<std::size_t>(k) >= t.rows(Wk)) {
      throw std::invalid_argument("concept id " + std::to_string(k) + " out of range");
    }
  }
  return ops::mean_rows(t, Wk, concepts);
}

Var knowledge_impact(Tape& t, Var v, const KnowledgeParams& p) {
  return ops::softmax(t, ops::matvec_t(t, t.param(p.M), v));
}

std::vector<double> concept_embed(std::span<const int> concepts, const ParamStore& store, const KnowledgeParams& p) {
  Tape t(&store, false);
  auto v = t.value(concept_embed(t, concepts, p));
  return {v.begin(), v.end()};
}

std::vector<double> knowledge_impact(std::span<const double> v, const ParamStore& store, const KnowledgeParams& p) {
  Tape t(&store, false);
  if (v.size() != store[p.M].value.rows()) throw std::invalid_argument("knowledge_impact: length mismatch");
  auto beta = t.value(knowledge_impact(t, t.constant(v, v.size()), p));
  return {beta.begin(), beta.end()};
}

}  // namespace ekt
