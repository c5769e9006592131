// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ekt {

/// Synthetic students with latent per-concept mastery.
/// P(correct) = (1 - slip) * sigmoid(a (m - d)) + guess * (1 - sigmoid(a (m - d)))
/// where m is the mean mastery over the exercise's concepts and d its
/// difficulty. A correct answer raises the mastery of those concepts by
/// learn_rate (capped at 1).
struct SynthConfig {
  std::size_t n_students = 500;
  std::size_t n_exercises = 300;
  std::size_t K = 6;
  std::size_t themes_per_concept = 6;  // theme words per concept
  std::size_t levels = 10;             // difficulty words lvl0..lvl{levels-1}
  double difficulty_lo = 0.0;
  double difficulty_hi = 1.0;
  double learn_rate = 0.03;
  double slip = 0.05;
  double guess = 0.1;
  double discrimination = 8.0;  // a
  double multi_concept = 0.2;   // chance of a second concept per exercise
  double stay = 0.75;           // chance the next exercise keeps the current concept
  double concept_spread = 0.5;  // initial mastery = student base +- spread per concept (clamped)
  std::size_t mean_len = 60;
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthExercise {
  std::string id;
  std::string content;
  std::vector<int> concepts;
  double difficulty = 0.0;
};

struct SynthStudent {
  std::string id;
  std::vector<std::size_t> exercises;      // index into SynthCorpus::exercises
  std::vector<int> scores;
  std::vector<double> p_correct;           // generator probability at each step
  std::vector<std::vector<double>> mastery;  // latent mastery before each step
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<SynthExercise> exercises;
  std::vector<SynthStudent> students;
};

double synth_p_correct(double mastery, double difficulty, const SynthConfig& cfg);

SynthCorpus generate(const SynthConfig& cfg);

/// Writes exercises.jsonl, records.jsonl, truth.jsonl and meta.json.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

/// AUC of the generator's own probabilities against the realized scores.
double bayes_optimal_auc(const SynthCorpus& corpus);
/// Same, read back from a truth file (p_correct per student) and records.
double bayes_optimal_auc(const std::filesystem::path& truth_path, const std::filesystem::path& records_path);

}  // namespace ekt
