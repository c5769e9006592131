// SPDX-License-Identifier: Apache-2.0
#include "ekt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ekt/errors.hpp"
#include "ekt/eval.hpp"
#include "ekt/functions.hpp"
#include "ekt/rng.hpp"

namespace ekt {

void SynthConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
  };
  prob(slip, "slip");
  prob(guess, "guess");
  prob(multi_concept, "multi_concept");
  prob(stay, "stay");
  prob(learn_rate, "learn_rate");
  prob(concept_spread, "concept_spread");
  if (K < 1) throw std::invalid_argument("K must be at least 1");
  if (n_students < 1 || n_exercises < K) throw std::invalid_argument("need students and at least K exercises");
  if (themes_per_concept < 1 || levels < 1) throw std::invalid_argument("themes and levels must be positive");
  if (!(difficulty_lo <= difficulty_hi)) throw std::invalid_argument("difficulty range is empty");
  if (!(discrimination >= 0.0)) throw std::invalid_argument("discrimination must be non-negative");
  if (mean_len < 10) throw std::invalid_argument("mean_len must be at least 10");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"n_students", n_students}, {"n_exercises", n_exercises}, {"K", K},
          {"themes_per_concept", themes_per_concept}, {"levels", levels},
          {"difficulty_lo", difficulty_lo}, {"difficulty_hi", difficulty_hi}, {"learn_rate", learn_rate},
          {"slip", slip}, {"guess", guess}, {"discrimination", discrimination},
          {"multi_concept", multi_concept}, {"stay", stay}, {"concept_spread", concept_spread}, {"mean_len", mean_len}, {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.n_students = j.value("n_students", c.n_students);
  c.n_exercises = j.value("n_exercises", c.n_exercises);
  c.K = j.value("K", c.K);
  c.themes_per_concept = j.value("themes_per_concept", c.themes_per_concept);
  c.levels = j.value("levels", c.levels);
  c.difficulty_lo = j.value("difficulty_lo", c.difficulty_lo);
  c.difficulty_hi = j.value("difficulty_hi", c.difficulty_hi);
  c.learn_rate = j.value("learn_rate", c.learn_rate);
  c.slip = j.value("slip", c.slip);
  c.guess = j.value("guess", c.guess);
  c.discrimination = j.value("discrimination", c.discrimination);
  c.multi_concept = j.value("multi_concept", c.multi_concept);
  c.stay = j.value("stay", c.stay);
  c.concept_spread = j.value("concept_spread", c.concept_spread);
  c.mean_len = j.value("mean_len", c.mean_len);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

double synth_p_correct(double mastery, double difficulty, const SynthConfig& cfg) {
  const double s = sigmoid(cfg.discrimination * (mastery - difficulty));
  return (1.0 - cfg.slip) * s + cfg.guess * (1.0 - s);
}

namespace {

const char* const kFiller[] = {"find",  "the",   "value", "of",    "given", "that",   "compute", "let",
                               "show",  "when",  "each",  "then",  "what",  "number", "which",   "is",
                               "if",    "and",   "for",   "all",   "such",  "a",      "point",   "result"};
const char* const kThemeSuffix[] = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"};
const char* const kVars[] = {"x", "y", "z", "n"};

std::string theme_word(std::size_t concept_id, std::size_t j) {
  std::string w = "k" + std::to_string(concept_id);
  if (j < std::size(kThemeSuffix)) return w + kThemeSuffix[j];
  return w + "t" + std::to_string(j);
}

// Formula whose length grows with the difficulty level.
std::string formula(std::size_t level, Rng& rng) {
  std::string f;
  const std::size_t terms = 1 + level / 2;
  for (std::size_t i = 0; i < terms; ++i) {
    if (i > 0) f += rng.bernoulli(0.5) ? "+" : "-";
    f += std::to_string(1 + rng.below(9));
    f += kVars[rng.below(std::size(kVars))];
    if (level >= 4 && rng.bernoulli(0.5)) f += "^{" + std::to_string(2 + rng.below(3)) + "}";
  }
  if (level >= 7) f = "\\frac{" + f + "}{" + std::to_string(2 + rng.below(8)) + "}";
  if (level >= 9) f = "\\sqrt{" + f + "}";
  return "$" + f + "$";
}

std::string pad_id(char prefix, std::size_t i, std::size_t width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, static_cast<int>(width), i);
  return buf;
}

}  // namespace

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus c;
  c.config = cfg;
  Rng erng(derive_seed(cfg.seed, 0xE));
  std::vector<std::vector<std::size_t>> by_concept(cfg.K);
  for (std::size_t e = 0; e < cfg.n_exercises; ++e) {
    SynthExercise ex;
    ex.id = pad_id('e', e, 4);
    const int primary = static_cast<int>(e % cfg.K);
    ex.concepts.push_back(primary);
    if (cfg.K > 1 && erng.bernoulli(cfg.multi_concept)) {
      int second = static_cast<int>(erng.below(cfg.K - 1));
      if (second >= primary) ++second;
      ex.concepts.push_back(second);
    }
    const double u = erng.uniform();
    const std::size_t level = std::min(cfg.levels - 1, static_cast<std::size_t>(u * static_cast<double>(cfg.levels)));
    ex.difficulty = cfg.difficulty_lo + (cfg.difficulty_hi - cfg.difficulty_lo) * u;

    std::vector<std::string> words;
    for (int k : ex.concepts) {
      const std::size_t n = k == primary ? 3 : 1;
      for (std::size_t i = 0; i < n; ++i) words.push_back(theme_word(k, erng.below(cfg.themes_per_concept)));
    }
    words.push_back("lvl" + std::to_string(level));
    for (std::size_t i = 0; i < 3; ++i) words.push_back(kFiller[erng.below(std::size(kFiller))]);
    shuffle(words, erng);
    words.push_back(formula(level, erng));
    for (std::size_t i = 0; i < words.size(); ++i) ex.content += (i ? " " : "") + words[i];
    by_concept[static_cast<std::size_t>(primary)].push_back(e);
    c.exercises.push_back(std::move(ex));
  }

  c.students.resize(cfg.n_students);
  for (std::size_t s = 0; s < cfg.n_students; ++s) {
    Rng rng(derive_seed(cfg.seed, 0x5, s));
    SynthStudent& st = c.students[s];
    st.id = pad_id('s', s, 4);
    const std::size_t T = cfg.mean_len / 2 + rng.below(cfg.mean_len + 1);
    const double base = rng.uniform(0.1, 0.6);
    std::vector<double> m(cfg.K);
    for (auto& v : m) v = std::clamp(base + rng.uniform(-cfg.concept_spread, cfg.concept_spread), 0.0, 1.0);
    std::size_t concept_id = rng.below(cfg.K);
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0 && !rng.bernoulli(cfg.stay)) concept_id = rng.below(cfg.K);
      const auto& pool = by_concept[concept_id];
      const std::size_t e = pool[rng.below(pool.size())];
      const auto& ex = c.exercises[e];
      double mm = 0.0;
      for (int k : ex.concepts) mm += m[static_cast<std::size_t>(k)];
      mm /= static_cast<double>(ex.concepts.size());
      const double p = synth_p_correct(mm, ex.difficulty, cfg);
      const int r = rng.bernoulli(p) ? 1 : 0;
      st.mastery.push_back(m);
      st.exercises.push_back(e);
      st.p_correct.push_back(p);
      st.scores.push_back(r);
      if (r == 1)
        for (int k : ex.concepts) m[static_cast<std::size_t>(k)] = std::min(1.0, m[static_cast<std::size_t>(k)] + cfg.learn_rate);
    }
  }
  return c;
}

void write_corpus(const SynthCorpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("exercises.jsonl");
    for (const auto& e : c.exercises) {
      f << nlohmann::json{{"id", e.id}, {"content", e.content}, {"concepts", e.concepts}}.dump() << '\n';
    }
  }
  {
    auto f = open("records.jsonl");
    for (const auto& s : c.students) {
      nlohmann::json inter = nlohmann::json::array();
      for (std::size_t t = 0; t < s.exercises.size(); ++t) {
        inter.push_back({{"exercise_id", c.exercises[s.exercises[t]].id}, {"score", s.scores[t]}});
      }
      f << nlohmann::json{{"student_id", s.id}, {"interactions", inter}}.dump() << '\n';
    }
  }
  {
    auto f = open("truth.jsonl");
    for (const auto& e : c.exercises) {
      f << nlohmann::json{{"type", "exercise"}, {"id", e.id}, {"difficulty", e.difficulty}, {"concepts", e.concepts}}
               .dump()
        << '\n';
    }
    for (const auto& s : c.students) {
      f << nlohmann::json{{"type", "student"}, {"student_id", s.id}, {"p_correct", s.p_correct}, {"mastery", s.mastery}}
               .dump()
        << '\n';
    }
  }
  {
    auto f = open("meta.json");
    f << nlohmann::json{{"K", c.config.K}, {"config", c.config.to_json()}, {"bayes_optimal_auc", bayes_optimal_auc(c)}}
             .dump(2)
      << '\n';
  }
}

double bayes_optimal_auc(const SynthCorpus& c) {
  std::vector<double> p;
  std::vector<int> r;
  for (const auto& s : c.students) {
    p.insert(p.end(), s.p_correct.begin(), s.p_correct.end());
    r.insert(r.end(), s.scores.begin(), s.scores.end());
  }
  return auc(p, r).value_or(0.5);
}

double bayes_optimal_auc(const std::filesystem::path& truth_path, const std::filesystem::path& records_path) {
  std::map<std::string, std::vector<double>> probs;
  std::ifstream tf(truth_path);
  if (!tf) throw DataError("cannot open " + truth_path.string());
  std::string line;
  while (std::getline(tf, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.value("type", "") == "student") probs[j.at("student_id")] = j.at("p_correct").get<std::vector<double>>();
  }
  std::ifstream rf(records_path);
  if (!rf) throw DataError("cannot open " + records_path.string());
  std::vector<double> p;
  std::vector<int> r;
  while (std::getline(rf, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto found = probs.find(j.at("student_id").get<std::string>());
    if (found == probs.end()) throw DataError("student missing from truth file");
    const auto& inter = j.at("interactions");
    if (inter.size() != found->second.size()) throw DataError("truth and records disagree on sequence length");
    for (std::size_t t = 0; t < inter.size(); ++t) {
      p.push_back(found->second[t]);
      r.push_back(inter[t].at("score").get<int>());
    }
  }
  return auc(p, r).value_or(0.5);
}

}  // namespace ekt
