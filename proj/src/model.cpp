// SPDX-License-Identifier: Apache-2.0
#include "ekt/model.hpp"

#include <map>
#include <stdexcept>

#include "ekt/ops.hpp"
#include "ekt/parallel.hpp"

namespace ekt {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::eernnm: return "eernnm";
    case Variant::eernna: return "eernna";
    case Variant::ektm: return "ektm";
    case Variant::ekta: return "ekta";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "eernnm") return Variant::eernnm;
  if (name == "eernna") return Variant::eernna;
  if (name == "ektm") return Variant::ektm;
  if (name == "ekta") return Variant::ekta;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

nlohmann::json ModelConfig::to_json() const {
  const Hyper& h = hyper;
  return {{"variant", ekt::to_string(variant)},
          {"vocab_size", vocab_size},
          {"hyper",
           {{"d0", h.d0}, {"dv", h.dv}, {"dh", h.dh}, {"dk", h.dk}, {"dy", h.dy}, {"K", h.K},
            {"lr", h.lr}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"eps", h.eps}, {"dropout_p", h.dropout_p},
            {"batch", h.batch}, {"seed", h.seed}}},
          {"options",
           {{"per_slot_weights", options.per_slot_weights},
            {"normalize_attention", options.normalize_attention},
            {"freeze_memory", options.freeze_memory},
            {"freeze_words", options.freeze_words}}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  const auto& h = j.at("hyper");
  c.hyper.d0 = h.at("d0");
  c.hyper.dv = h.at("dv");
  c.hyper.dh = h.at("dh");
  c.hyper.dk = h.at("dk");
  c.hyper.dy = h.at("dy");
  c.hyper.K = h.at("K");
  c.hyper.lr = h.at("lr");
  c.hyper.beta1 = h.at("beta1");
  c.hyper.beta2 = h.at("beta2");
  c.hyper.eps = h.at("eps");
  c.hyper.dropout_p = h.at("dropout_p");
  c.hyper.batch = h.at("batch");
  c.hyper.seed = h.at("seed");
  const auto& o = j.at("options");
  c.options.per_slot_weights = o.at("per_slot_weights");
  c.options.normalize_attention = o.at("normalize_attention");
  c.options.freeze_memory = o.at("freeze_memory");
  c.options.freeze_words = o.at("freeze_words");
  c.hyper.validate();
  return c;
}

ExerciseBank ExerciseBank::build(const Dataset& data, const Vocabulary& vocab) {
  ExerciseBank b;
  for (const auto& e : data.exercises) {
    b.ids.push_back(e.id);
    b.tokens.push_back(vocab.encode(e.tokens));
    b.concepts.push_back(e.concepts);
  }
  return b;
}

Model Model::create(const ModelConfig& config) {
  config.hyper.validate();
  if (config.vocab_size < 2) throw std::invalid_argument("vocabulary must hold at least PAD and UNK");
  Model m;
  m.config_ = config;
  Rng rng(config.hyper.seed);
  const bool ekt = is_ekt(config.variant);
  m.encoder_ = EncoderParams::create(m.params_, config.hyper, config.vocab_size, rng, config.options.freeze_words);
  if (ekt) m.knowledge_ = KnowledgeParams::create(m.params_, config.hyper, rng, config.options.freeze_memory);
  m.tracer_ = TracerParams::create(m.params_, config.hyper, ekt ? config.hyper.K : 1,
                                   config.options.per_slot_weights, rng);
  m.head_ = HeadParams::create(m.params_, config.hyper, ekt, rng);
  return m;
}

Model Model::bind(const ModelConfig& config, ParamStore params) {
  const Model ref = create(config);
  if (params.size() != ref.params_.size()) throw std::invalid_argument("parameter set does not match the config");
  for (const auto& p : ref.params_) {
    if (!params.contains(p.name)) throw std::invalid_argument("missing parameter " + p.name);
    const Param& q = params.get(p.name);
    if (q.value.shape() != p.value.shape()) throw std::invalid_argument("shape mismatch for parameter " + p.name);
    params.get(p.name).trainable = p.trainable;
  }
  Model m;
  m.config_ = config;
  m.params_ = std::move(params);
  const bool ekt = is_ekt(config.variant);
  m.encoder_ = EncoderParams::bind(m.params_);
  if (ekt) m.knowledge_ = KnowledgeParams::bind(m.params_);
  m.tracer_ = TracerParams::bind(m.params_);
  m.head_ = HeadParams::bind(m.params_, ekt);
  return m;
}

const KnowledgeParams& Model::knowledge() const {
  if (!knowledge_) throw std::logic_error("integrated-state variants have no knowledge embedding");
  return *knowledge_;
}

std::vector<double> DropoutSource::draw(std::size_t n) const {
  if (!rng || p <= 0.0) return {};
  std::vector<double> mask(n);
  const double keep = 1.0 - p;
  for (auto& m : mask) m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return mask;
}

SequenceGraph build_sequence(Tape& t, const Model& m, const ExerciseBank& bank, std::span<const Interaction> seq,
                             std::span<const Var> x, const DropoutSource* dropout, bool consume_last) {
  if (x.size() != seq.size()) throw std::invalid_argument("build_sequence: one encoding per step expected");
  const bool ekt = is_ekt(m.variant());
  const bool att = is_attention(m.variant());
  const std::size_t T = seq.size();

  SequenceGraph g;
  g.states.reserve(T + 1);
  g.states.push_back(prior_state(t, m.tracer()));
  std::map<std::size_t, Var> beta_memo;

  for (std::size_t step = 0; step < T; ++step) {
    const Interaction& it = seq[step];
    if (it.exercise >= bank.size()) throw std::invalid_argument("build_sequence: exercise index out of range");
    Var xt = x[step];

    Var beta;
    if (ekt) {
      auto found = beta_memo.find(it.exercise);
      if (found == beta_memo.end()) {
        Var v = concept_embed(t, bank.concepts[it.exercise], m.knowledge());
        found = beta_memo.emplace(it.exercise, knowledge_impact(t, v, m.knowledge())).first;
      }
      beta = found->second;
    }
    g.beta.push_back(beta);

    Var state = g.states.back().h;
    Var alpha;
    if (att && step > 0) {
      alpha = ops::cosine_scores(t, xt, x.subspan(0, step));
      if (m.config().options.normalize_attention) alpha = ops::softmax(t, alpha);
      std::vector<Var> hs;
      hs.reserve(step);
      for (std::size_t j = 1; j <= step; ++j) hs.push_back(g.states[j].h);
      state = ops::weighted_sum(t, alpha, hs);
    }
    g.alpha.push_back(alpha);

    Var s = ekt ? ops::aggregate_slots(t, state, beta) : state;
    const std::vector<double> mask = dropout ? dropout->draw(m.config().hyper.dy) : std::vector<double>{};
    g.predictions.push_back(head_forward(t, s, xt, m.head(), mask));

    if (step + 1 < T || consume_last) {
      Var xtil = combine_input(t, xt, it.score);
      g.states.push_back(ekt ? step_ekt(t, xtil, beta, g.states.back(), m.tracer())
                             : step_eernn(t, xtil, g.states.back(), m.tracer()));
    }
  }
  return g;
}

std::vector<std::vector<double>> encode_all(const Model& m, const ExerciseBank& bank, int threads) {
  std::vector<std::vector<double>> out(bank.size());
  parallel_for(bank.size(), threads, [&](std::size_t i) {
    Tape t(&m.params(), false);
    auto v = t.value(encode_exercise(t, bank.tokens[i], m.encoder()));
    out[i].assign(v.begin(), v.end());
  });
  return out;
}

PredictionTrace predict_sequence(const Model& m, const ExerciseBank& bank,
                                 std::span<const std::vector<double>> encodings, std::span<const Interaction> seq,
                                 bool keep_states) {
  Tape t(&m.params(), false);
  std::map<std::size_t, Var> memo;
  std::vector<Var> x;
  x.reserve(seq.size());
  for (const auto& it : seq) {
    if (it.exercise >= encodings.size()) throw std::invalid_argument("predict_sequence: exercise has no encoding");
    auto found = memo.find(it.exercise);
    if (found == memo.end()) {
      const auto& e = encodings[it.exercise];
      found = memo.emplace(it.exercise, t.constant(e, e.size())).first;
    }
    x.push_back(found->second);
  }
  const SequenceGraph g = build_sequence(t, m, bank, seq, x, nullptr, keep_states);

  PredictionTrace tr;
  tr.variant = m.variant();
  for (std::size_t step = 0; step < seq.size(); ++step) {
    tr.prob.push_back(t.scalar(g.predictions[step]));
    std::vector<double> a, b;
    if (g.alpha[step].valid()) {
      auto v = t.value(g.alpha[step]);
      a.assign(v.begin(), v.end());
    }
    if (g.beta[step].valid()) {
      auto v = t.value(g.beta[step]);
      b.assign(v.begin(), v.end());
    }
    tr.alpha.push_back(std::move(a));
    tr.beta.push_back(std::move(b));
  }
  if (keep_states) {
    for (const auto& s : g.states) {
      auto v = t.value(s.h);
      tr.states.emplace_back(v.begin(), v.end());
    }
  }
  return tr;
}

}  // namespace ekt
