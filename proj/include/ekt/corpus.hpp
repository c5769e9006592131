// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace ekt {

/// Splits exercise text into tokens. Prose is split on whitespace and
/// punctuation; $...$ (and $$...$$) formulas are expanded into TeX lexical
/// tokens: control words (\sqrt), digit runs, single letters and symbols.
/// Throws DataError naming the byte offset of an unmatched delimiter.
std::vector<std::string> tokenize(std::string_view content);

struct Exercise {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<int> concepts;
};

struct Interaction {
  std::size_t exercise = 0;  // index into Dataset::exercises
  int score = 0;
};

struct StudentSequence {
  std::string student_id;
  std::vector<Interaction> interactions;
};

/// Token to id map with PAD=0 and UNK=1 reserved. Ids of regular tokens are
/// assigned in lexicographic token order so they do not depend on corpus
/// order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  static Vocabulary build(std::span<const std::vector<std::string>> token_lists, std::size_t min_count = 1);

  int id(std::string_view token) const;
  std::vector<int> encode(std::span<const std::string> tokens) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }
  /// FNV-1a over the id-ordered token list and min_count.
  std::uint64_t hash() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.min_count_ == b.min_count_;
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
  std::size_t min_count_ = 1;
};

Vocabulary build_vocab(std::span<const Exercise> exercises, std::size_t min_count = 1);

struct Dataset {
  std::vector<Exercise> exercises;
  std::unordered_map<std::string, std::size_t> exercise_index;
  std::vector<StudentSequence> sequences;  // sorted by student_id

  std::size_t find_exercise(std::string_view id) const;
  const StudentSequence* find_student(std::string_view id) const;
};

struct LoadOptions {
  std::size_t min_len = 10;
  std::optional<std::size_t> K;  // when set, concept ids must be < K
  bool drop_unused_exercises = true;
};

/// Reads the line-delimited JSON exercise and record files. Students with
/// fewer than min_len interactions are dropped first; exercises nobody
/// practiced are dropped afterwards.
Dataset load_dataset(const std::filesystem::path& exercises_path, const std::filesystem::path& records_path,
                     const LoadOptions& options = {});
Dataset parse_dataset(std::istream& exercises, std::istream& records, const LoadOptions& options = {});

enum class SplitMode { general, cold_start_exercise, cold_start_student };
std::string to_string(SplitMode mode);
SplitMode parse_split_mode(std::string_view name);

/// A prediction point: step `step` (0-based) of dataset sequence `sequence`.
struct Target {
  std::size_t sequence = 0;
  std::size_t step = 0;
};

struct Split {
  SplitMode mode = SplitMode::general;
  double train_frac = 0.0;
  std::vector<StudentSequence> train;
  std::vector<Target> targets;
};

/// Number of leading interactions used for training: ceil(frac * T).
std::size_t train_prefix_length(std::size_t T, double frac);

Split split_general(std::span<const StudentSequence> sequences, double train_frac);

/// Same truncation as split_general; targets restricted to exercises that
/// occur in no training prefix. Warns on stderr when nothing remains.
Split split_cold_start(std::span<const StudentSequence> sequences, double train_frac);

/// Cold-start variant with an explicit held-out exercise pool: a seeded
/// holdout_frac of the exercises is removed from every training prefix and
/// the targets are the post-prefix interactions on those exercises.
Split split_cold_start(std::span<const StudentSequence> sequences, double train_frac, double holdout_frac,
                       std::uint64_t seed);

/// New-student protocol: a seeded holdout_frac of the students contribute
/// nothing to training; every one of their interactions is a target.
Split split_cold_student(std::span<const StudentSequence> sequences, double train_frac, double holdout_frac,
                         std::uint64_t seed);

}  // namespace ekt
