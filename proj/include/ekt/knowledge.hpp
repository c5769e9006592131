// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "ekt/params.hpp"
#include "ekt/tape.hpp"

namespace ekt {

/// Knowledge Embedding: concept embedding W_k (K x dk) and the concept
/// memory M (dk x K, column i is concept i's key).
struct KnowledgeParams {
  std::size_t Wk = 0;
  std::size_t M = 0;

  static KnowledgeParams create(ParamStore& store, const Hyper& hyper, Rng& rng, bool freeze_memory = false);
  static KnowledgeParams bind(const ParamStore& store);
};

/// Mean of the W_k rows selected by `concepts` (the normalized multi-hot
/// k times W_k); a single concept selects its row exactly.
Var concept_embed(Tape& t, std::span<const int> concepts, const KnowledgeParams& p);
/// beta_i = softmax_i(v . M_i).
Var knowledge_impact(Tape& t, Var v, const KnowledgeParams& p);

std::vector<double> concept_embed(std::span<const int> concepts, const ParamStore& store, const KnowledgeParams& p);
std::vector<double> knowledge_impact(std::span<const double> v, const ParamStore& store, const KnowledgeParams& p);

}  // namespace ekt
