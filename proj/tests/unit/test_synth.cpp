// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ekt/corpus.hpp"
#include "ekt/synth.hpp"
#include "reference_values.hpp"

using namespace ekt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

SynthConfig small() {
  SynthConfig c;
  c.n_students = 60;
  c.n_exercises = 48;
  c.mean_len = 30;
  return c;
}

}  // namespace

TEST_CASE("p_correct examples") {
  const SynthConfig c;
  CHECK(synth_p_correct(0.4, 0.4, c) == doctest::Approx(0.5 * (1 - c.slip) + 0.5 * c.guess));
  CHECK(synth_p_correct(1.0, 0.0, c) == doctest::Approx(1 - c.slip).epsilon(1e-3));
  CHECK(synth_p_correct(0.0, 1.0, c) == doctest::Approx(c.guess).epsilon(1e-3));
  CHECK(synth_p_correct(0.7, 0.3, c) > synth_p_correct(0.5, 0.3, c));
  CHECK(synth_p_correct(0.5, 0.2, c) > synth_p_correct(0.5, 0.6, c));
}

TEST_CASE("a fixed seed gives byte-identical files") {
  const fs::path a = fs::temp_directory_path() / "ekt_synth_a", b = fs::temp_directory_path() / "ekt_synth_b";
  write_corpus(generate(small()), a);
  write_corpus(generate(small()), b);
  for (const char* name : {"exercises.jsonl", "records.jsonl", "truth.jsonl", "meta.json"}) {
    CAPTURE(name);
    const std::string x = slurp(a / name);
    CHECK_FALSE(x.empty());
    CHECK(x == slurp(b / name));
  }
  SynthConfig other = small();
  other.seed = 8;
  write_corpus(generate(other), b);
  CHECK(slurp(a / "records.jsonl") != slurp(b / "records.jsonl"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("generated files load and agree with the generator") {
  const SynthConfig cfg = small();
  const SynthCorpus c = generate(cfg);
  const fs::path dir = fs::temp_directory_path() / "ekt_synth_load";
  write_corpus(c, dir);
  LoadOptions lo;
  lo.K = cfg.K;
  const Dataset d = load_dataset(dir / "exercises.jsonl", dir / "records.jsonl", lo);
  CHECK(d.sequences.size() == cfg.n_students);
  std::ifstream mf(dir / "meta.json");
  const auto meta = nlohmann::json::parse(mf);
  CHECK(meta.at("K") == cfg.K);
  CHECK(meta.at("bayes_optimal_auc").get<double>() == bayes_optimal_auc(c));
  CHECK(bayes_optimal_auc(dir / "truth.jsonl", dir / "records.jsonl") == bayes_optimal_auc(c));
  CHECK(SynthConfig::from_json(meta.at("config")).to_json() == cfg.to_json());
  fs::remove_all(dir);
}

TEST_CASE("corpus structure") {
  const SynthConfig cfg = small();
  const SynthCorpus c = generate(cfg);
  for (std::size_t e = 0; e < c.exercises.size(); ++e) {
    const auto& ex = c.exercises[e];
    CHECK(ex.concepts.front() == static_cast<int>(e % cfg.K));
    CHECK(ex.concepts.size() <= 2);
    CHECK(ex.difficulty >= cfg.difficulty_lo);
    CHECK(ex.difficulty <= cfg.difficulty_hi);
    CHECK(!tokenize(ex.content).empty());
  }
  for (const auto& s : c.students) {
    const std::size_t T = s.exercises.size();
    CHECK(T >= cfg.mean_len / 2);
    CHECK(T <= cfg.mean_len / 2 + cfg.mean_len);
    CHECK(s.scores.size() == T);
    for (std::size_t t = 1; t < T; ++t)
      for (std::size_t k = 0; k < cfg.K; ++k) CHECK(s.mastery[t][k] >= s.mastery[t - 1][k]);
  }
}

TEST_CASE("realized scores are calibrated to the generator probabilities") {
  const SynthCorpus c = generate(SynthConfig{});
  std::vector<double> expected(10, 0.0), n(10, 0.0), observed(10, 0.0);
  for (const auto& s : c.students) {
    for (std::size_t t = 0; t < s.scores.size(); ++t) {
      const std::size_t b = std::min<std::size_t>(9, static_cast<std::size_t>(s.p_correct[t] * 10));
      expected[b] += s.p_correct[t];
      observed[b] += s.scores[t];
      n[b] += 1.0;
    }
  }
  double chi2 = 0.0;
  int df = 0;
  for (std::size_t b = 0; b < 10; ++b) {
    if (n[b] < 20) continue;
    const double var = expected[b] * (1.0 - expected[b] / n[b]);
    chi2 += (observed[b] - expected[b]) * (observed[b] - expected[b]) / var;
    ++df;
  }
  REQUIRE(df >= 5);
  CHECK(chi2 < 2.0 * df + 15.0);
}

TEST_CASE("ceiling extremes") {
  SynthConfig sharp = small();
  sharp.slip = 0.0;
  sharp.guess = 0.0;
  sharp.discrimination = 400.0;
  CHECK(bayes_optimal_auc(generate(sharp)) > 0.97);

  SynthConfig flat = small();
  flat.discrimination = 0.0;
  CHECK(bayes_optimal_auc(generate(flat)) == 0.5);
}

TEST_CASE("the default corpus reproduces the recorded ceiling") {
  CHECK(bayes_optimal_auc(generate(SynthConfig{})) == doctest::Approx(ekt::test::kDefaultCeiling).epsilon(1e-12));
}

TEST_CASE("config validation") {
  SynthConfig c;
  c.slip = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.n_exercises = 2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.mean_len = 4;
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
}
