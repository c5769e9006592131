// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ekt/corpus.hpp"
#include "ekt/encoder.hpp"
#include "ekt/knowledge.hpp"
#include "ekt/predict.hpp"
#include "ekt/rng.hpp"
#include "ekt/tracer.hpp"

namespace ekt {

enum class Variant { eernnm, eernna, ektm, ekta };
std::string to_string(Variant v);
Variant parse_variant(std::string_view name);
inline bool is_ekt(Variant v) { return v == Variant::ektm || v == Variant::ekta; }
inline bool is_attention(Variant v) { return v == Variant::eernna || v == Variant::ekta; }

struct ModelOptions {
  bool per_slot_weights = false;     // separate tracer LSTM per concept slot
  bool normalize_attention = false;  // softmax over the cosine scores
  bool freeze_memory = false;        // keep M at its initial value
  bool freeze_words = false;         // keep the word table at its initial value
};

struct ModelConfig {
  Variant variant = Variant::ekta;
  Hyper hyper;
  ModelOptions options;
  std::size_t vocab_size = 2;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Token ids and concepts of every exercise of a dataset, by dataset index.
struct ExerciseBank {
  std::vector<std::string> ids;
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<int>> concepts;

  static ExerciseBank build(const Dataset& data, const Vocabulary& vocab);
  std::size_t size() const { return ids.size(); }
};

class Model {
 public:
  /// Fresh parameters drawn from config.hyper.seed.
  static Model create(const ModelConfig& config);
  /// Wraps existing parameters (e.g. from a checkpoint); names and shapes are checked.
  static Model bind(const ModelConfig& config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  std::size_t slots() const { return tracer_.slots; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const EncoderParams& encoder() const { return encoder_; }
  const KnowledgeParams& knowledge() const;
  const TracerParams& tracer() const { return tracer_; }
  const HeadParams& head() const { return head_; }

 private:
  Model() = default;
  void wire();

  ModelConfig config_;
  ParamStore params_;
  EncoderParams encoder_;
  std::optional<KnowledgeParams> knowledge_;
  TracerParams tracer_;
  HeadParams head_;
};

/// Inverted dropout mask source for the prediction head.
struct DropoutSource {
  Rng* rng = nullptr;
  double p = 0.0;
  std::vector<double> draw(std::size_t n) const;
};

struct SequenceGraph {
  std::vector<Var> predictions;       // one per step, made before the step's update
  std::vector<ops::LstmState> states;  // states[t] = state after t interactions
  std::vector<Var> alpha;              // per step (attention variants, t > 0)
  std::vector<Var> beta;               // per step (EKT)
};

/// Builds the unrolled model for one student on the tape. `x` holds the
/// encoding node of each step's exercise (repeated exercises may share a
/// node). With consume_last unset the final update is skipped since no
/// prediction reads it.
SequenceGraph build_sequence(Tape& t, const Model& m, const ExerciseBank& bank, std::span<const Interaction> seq,
                             std::span<const Var> x, const DropoutSource* dropout = nullptr,
                             bool consume_last = false);

/// Encodings of every exercise in the bank (no gradients).
std::vector<std::vector<double>> encode_all(const Model& m, const ExerciseBank& bank, int threads = 1);

struct PredictionTrace {
  Variant variant = Variant::ekta;
  std::vector<double> prob;
  std::vector<std::vector<double>> alpha;  // empty rows for Markov heads and at t = 0
  std::vector<std::vector<double>> beta;   // empty unless EKT
  std::vector<std::vector<double>> states;  // optional, states[t] after t interactions (slots x dh)
};

/// Teacher-forced forward pass over a whole sequence using precomputed encodings.
PredictionTrace predict_sequence(const Model& m, const ExerciseBank& bank,
                                 std::span<const std::vector<double>> encodings, std::span<const Interaction> seq,
                                 bool keep_states = false);

}  // namespace ekt
