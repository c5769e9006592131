// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ekt/corpus.hpp"
#include "ekt/model.hpp"

namespace ekt {

/// Mann-Whitney AUC with half credit for tied pairs; absent unless both
/// classes occur.
std::optional<double> auc(std::span<const double> pred, std::span<const int> truth);

struct MetricReport {
  double mae = 0.0;
  double rmse = 0.0;
  double acc = 0.0;
  std::optional<double> auc;
  std::size_t n = 0;
  std::string split;
  std::string variant;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// ACC counts p >= 0.5 as a predicted 1.
MetricReport metrics(std::span<const double> pred, std::span<const int> truth);

struct NullStats {
  double mean = 0.0;
  double sd = 0.0;
};

/// AUC distribution under label permutation.
NullStats permutation_null(std::span<const double> pred, std::span<const int> truth, std::size_t rounds,
                           std::uint64_t seed);

/// Predicted probability at every target of the split (target order).
std::vector<double> predict_targets(const Model& m, const ExerciseBank& bank,
                                    std::span<const StudentSequence> sequences, const Split& split, int threads = 1);

/// Teacher-forced predictions at the split's targets; parameters are only read.
MetricReport evaluate_split(const Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences,
                            const Split& split, int threads = 1);

struct AttentionRow {
  std::string student_id;
  std::size_t target_step = 0;
  std::string group;
  double distance = 0.0;  // |group mean score - target score|
};

struct AttentionReport {
  std::vector<AttentionRow> rows;
  /// Per student and group: root mean square of the per-step distances.
  std::map<std::string, std::map<std::string, double>> per_student;
  /// Mean over students of the per-student distance.
  std::map<std::string, double> mean_distance;

  static std::string csv_header();
  void write_csv(std::ostream& os) const;
};

/// Groups the history of every target by min-max normalized attention
/// (low [0, .33], mid (.33, .66], high (.66, 1]) plus a random control of up
/// to 10 history exercises, and compares each group's mean score with the
/// target's score.
AttentionReport attention_groups(const Model& m, const ExerciseBank& bank,
                                 std::span<const StudentSequence> sequences, const Split& split, std::uint64_t seed,
                                 int threads = 1);

struct MasteryRow {
  std::size_t t = 0;
  int concept_id = 0;
  double level = 0.0;
  std::string exercise_id;  // empty at t = 0
  int score = -1;           // -1 at t = 0
};

struct MasteryTrajectory {
  std::string student_id;
  std::vector<MasteryRow> rows;

  static std::string csv_header();
  void write_csv(std::ostream& os) const;
  /// Levels of one concept ordered by t.
  std::vector<double> levels(int concept_id) const;
};

enum class MasteryMode { incremental, recompute };

/// Mastery of each requested concept after every prefix, from t = 0 (the
/// prior) to the full sequence. Integrated-state variants are rejected.
MasteryTrajectory export_mastery(const Model& m, const ExerciseBank& bank, const StudentSequence& seq,
                                 std::span<const int> concepts, MasteryMode mode = MasteryMode::incremental);

}  // namespace ekt
