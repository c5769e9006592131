// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ekt/corpus.hpp"
#include "ekt/model.hpp"

namespace ekt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  Vocabulary vocab;
  nlohmann::json meta;
  std::string rng_state;
};

/// Layout: "EKTCKPT1", u32 version, u64 header length, JSON header, then
/// every tensor's value, first and second moment as little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const Model& m, const Vocabulary& vocab,
                     const nlohmann::json& meta = nlohmann::json::object(), const std::string& rng_state = {});

/// Throws DataError on a corrupt, truncated or foreign file, and when
/// `expected` is given and its hash differs from the stored vocabulary.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected = nullptr);

}  // namespace ekt
