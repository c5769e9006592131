// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ekt/corpus.hpp"
#include "ekt/model.hpp"

namespace ekt {

/// -sum_t [r_t log p_t + (1 - r_t) log(1 - p_t)] with p clamped to [eps, 1 - eps].
double sequence_loss(std::span<const double> pred, std::span<const int> scores, double eps = 1e-7);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t patience = 5;  // epochs without validation improvement before stopping
  std::optional<double> clip_norm;
  std::size_t max_len = 200;
  double val_frac = 0.1;  // share of training students held out for early stopping
  int threads = 1;
  bool verbose = false;
  std::filesystem::path checkpoint;  // written by fit() when non-empty and a vocabulary is given

  void validate() const;
};

/// A training chunk of one sequence. Loss is counted from step loss_from
/// (relative to begin) so overlapping windows never count a step twice.
struct Window {
  std::size_t sequence = 0;
  std::size_t begin = 0;
  std::size_t len = 0;
  std::size_t loss_from = 0;
};

/// Windows of at most max_len steps with stride max_len / 2.
std::vector<Window> make_windows(std::span<const StudentSequence> sequences, std::size_t max_len);

struct BatchGradient {
  double loss_sum = 0.0;
  std::size_t steps = 0;
  std::vector<double> item_loss;                // per window
  std::vector<std::vector<double>> grads;       // by parameter index, of the mean step loss
};

/// Gradient of the mean step loss over a batch. Exercises are encoded once
/// per batch; sequences run on separate tapes (in parallel when threads > 1)
/// and are reduced in batch order, so the result does not depend on threads.
/// dropout_seed enables dropout; each window derives its own mask stream.
BatchGradient batch_gradient(const Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences,
                             std::span<const Window> batch, std::optional<std::uint64_t> dropout_seed,
                             int threads = 1);

/// Serial reference: the whole batch on one tape.
BatchGradient batch_gradient_reference(const Model& m, const ExerciseBank& bank,
                                       std::span<const StudentSequence> sequences, std::span<const Window> batch,
                                       std::optional<std::uint64_t> dropout_seed);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
  std::size_t batches = 0;
  std::size_t steps = 0;
  std::optional<double> val_auc;
};

/// One pass over shuffled windows with an Adam step per batch. Throws
/// NumericError on a non-finite loss or gradient.
EpochStats train_epoch(Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences,
                       const TrainConfig& cfg, Rng& rng);

struct FitResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_auc;
};

/// AUC over every step of the given sequences (teacher forced).
std::optional<double> sequence_auc(const Model& m, const ExerciseBank& bank,
                                   std::span<const StudentSequence> sequences, int threads = 1);

/// Trains with early stopping on held-out training students and restores
/// the best parameters. All randomness derives from the model's seed.
FitResult fit(Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences, const TrainConfig& cfg,
              const Vocabulary* vocab = nullptr, const nlohmann::json& meta = {});

}  // namespace ekt
