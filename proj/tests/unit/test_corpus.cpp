// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "ekt/corpus.hpp"
#include "ekt/errors.hpp"
#include "ekt/synth.hpp"

using namespace ekt;
using Tokens = std::vector<std::string>;

TEST_CASE("tokenize: formulas, prose and mixtures") {
  CHECK(tokenize("$\\sqrt{x-1}$") == Tokens{"\\sqrt", "{", "x", "-", "1", "}"});
  CHECK(tokenize("solve it") == Tokens{"solve", "it"});
  CHECK(tokenize("f $x+1$ g") == Tokens{"f", "x", "+", "1", "g"});
  CHECK(tokenize("Find x, then y.") == Tokens{"Find", "x", "then", "y"});
  CHECK(tokenize("$$12x^{2}$$") == Tokens{"12", "x", "^", "{", "2", "}"});
  CHECK(tokenize("$\\frac{a}{b}\\,c$") == Tokens{"\\frac", "{", "a", "}", "{", "b", "}", "\\,", "c"});
}

TEST_CASE("tokenize: unbalanced delimiter names its position") {
  try {
    tokenize("abc $x+1");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
  CHECK_THROWS_AS(tokenize("$$x$"), DataError);
}

TEST_CASE("tokenize: prose concatenation property") {
  const std::vector<std::string> parts = {"one two", "three, four", "five six seven", "x y"};
  for (const auto& a : parts) {
    for (const auto& b : parts) {
      Tokens ab = tokenize(a);
      const Tokens tb = tokenize(b);
      ab.insert(ab.end(), tb.begin(), tb.end());
      CHECK(ab == tokenize(a + " " + b));
    }
  }
}

TEST_CASE("vocabulary: build, min_count, round trip") {
  std::vector<Exercise> ex = {{"e1", {"a", "b"}, {0}}, {"e2", {"a"}, {0}}};
  const Vocabulary v = build_vocab(ex);
  CHECK(v.size() == 4);
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("a") > 1);
  CHECK(v.id("b") > 1);
  CHECK(v.id("zzz") == Vocabulary::kUnk);

  const Vocabulary v2 = build_vocab(ex, 2);
  CHECK(v2.id("b") == Vocabulary::kUnk);
  CHECK(v2.id("a") > 1);
  CHECK(v.hash() != v2.hash());

  const auto path = std::filesystem::temp_directory_path() / "ekt_vocab_test.json";
  v.save(path);
  const Vocabulary back = Vocabulary::load(path);
  CHECK(back == v);
  CHECK(back.hash() == v.hash());
  CHECK(back.id("b") == v.id("b"));
  std::filesystem::remove(path);

  // ids do not depend on corpus order
  std::vector<Exercise> rev(ex.rbegin(), ex.rend());
  CHECK(build_vocab(rev) == v);
}

namespace {

std::string records_line(const std::string& sid, const std::vector<std::pair<std::string, int>>& inter) {
  std::string s = "{\"student_id\":\"" + sid + "\",\"interactions\":[";
  for (std::size_t i = 0; i < inter.size(); ++i) {
    if (i) s += ",";
    s += "{\"exercise_id\":\"" + inter[i].first + "\",\"score\":" + std::to_string(inter[i].second) + "}";
  }
  return s + "]}\n";
}

std::vector<std::pair<std::string, int>> repeat(const std::string& id, std::size_t n) {
  std::vector<std::pair<std::string, int>> v;
  for (std::size_t i = 0; i < n; ++i) v.emplace_back(id, static_cast<int>(i % 2));
  return v;
}

}  // namespace

TEST_CASE("load_dataset: examples") {
  std::istringstream ex("{\"id\":\"q1\",\"content\":\"add $1+1$\",\"concepts\":[0]}\n");
  std::istringstream rec(records_line("s1", repeat("q1", 12)));
  const Dataset d = parse_dataset(ex, rec);
  REQUIRE(d.sequences.size() == 1);
  CHECK(d.sequences[0].interactions.size() == 12);
  CHECK(d.exercises[0].tokens == Tokens{"add", "1", "+", "1"});

  std::istringstream ex2("{\"id\":\"q1\",\"content\":\"add\",\"concepts\":[0]}\n");
  std::istringstream rec2(records_line("s1", repeat("q1", 5)) + records_line("s2", repeat("q1", 10)));
  const Dataset d2 = parse_dataset(ex2, rec2);
  REQUIRE(d2.sequences.size() == 1);
  CHECK(d2.sequences[0].student_id == "s2");
}

TEST_CASE("load_dataset: errors carry the line and id") {
  {
    std::istringstream ex("{\"id\":\"q1\",\"content\":\"add\",\"concepts\":[0]}\n");
    std::istringstream rec(records_line("s1", repeat("q1", 10)) + records_line("s2", repeat("nope", 10)));
    try {
      parse_dataset(ex, rec);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("nope") != std::string::npos);
      CHECK(msg.find("2") != std::string::npos);
    }
  }
  {
    std::istringstream ex("{\"id\":\"q1\",\"content\":\"add\",\"concepts\":[0]}\n");
    std::istringstream rec("{\"student_id\":\"s\",\"interactions\":[{\"exercise_id\":\"q1\",\"score\":2}]}\n");
    CHECK_THROWS_AS(parse_dataset(ex, rec), DataError);
  }
  {
    std::istringstream ex("{\"id\":\"q1\",\"content\":\"add\",\"concepts\":[5]}\n");
    std::istringstream rec(records_line("s1", repeat("q1", 10)));
    LoadOptions lo;
    lo.K = 3;
    CHECK_THROWS_AS(parse_dataset(ex, rec, lo), DataError);
  }
  {
    std::istringstream ex("{\"id\":\"q1\",\"content\":\"add\",\"concepts\":[0]}\nnot json\n");
    std::istringstream rec(records_line("s1", repeat("q1", 10)));
    CHECK_THROWS_AS(parse_dataset(ex, rec), DataError);
  }
}

TEST_CASE("load_dataset: students are filtered before exercises; output sorted") {
  std::istringstream ex(
      "{\"id\":\"q1\",\"content\":\"a\",\"concepts\":[0]}\n"
      "{\"id\":\"q2\",\"content\":\"b\",\"concepts\":[1]}\n");
  std::istringstream rec(records_line("zz", repeat("q1", 10)) + records_line("aa", repeat("q1", 11)) +
                         records_line("short", repeat("q2", 3)));
  const Dataset d = parse_dataset(ex, rec);
  REQUIRE(d.sequences.size() == 2);
  CHECK(d.sequences[0].student_id == "aa");
  CHECK(d.sequences[1].student_id == "zz");
  CHECK(d.exercises.size() == 1);  // q2 was practiced only by the dropped student
  CHECK(d.find_exercise("q1") == 0);
}

TEST_CASE("split_general: prefix lengths and coverage") {
  CHECK(train_prefix_length(10, 0.6) == 6);
  CHECK(train_prefix_length(10, 0.9) == 9);
  CHECK(train_prefix_length(7, 0.6) == 5);  // ceil(4.2)

  StudentSequence s{"s", {}};
  for (std::size_t i = 0; i < 10; ++i) s.interactions.push_back({i % 3, static_cast<int>(i % 2)});
  const std::vector<StudentSequence> seqs = {s};
  Split sp = split_general(seqs, 0.6);
  CHECK(sp.train[0].interactions.size() == 6);
  CHECK(sp.targets.size() == 4);
  sp = split_general(seqs, 0.9);
  CHECK(sp.train[0].interactions.size() == 9);
  CHECK(sp.targets.size() == 1);
  CHECK_THROWS_AS(split_general(seqs, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(split_general(seqs, 0.0), std::invalid_argument);
}

TEST_CASE("splits on the synthetic corpus") {
  SynthConfig cfg;
  cfg.n_students = 80;
  cfg.n_exercises = 60;
  const auto dir = std::filesystem::temp_directory_path() / "ekt_corpus_split";
  write_corpus(generate(cfg), dir);
  LoadOptions lo;
  lo.K = cfg.K;
  const Dataset d = load_dataset(dir / "exercises.jsonl", dir / "records.jsonl", lo);
  CHECK(d.sequences.size() == cfg.n_students);

  for (double frac : {0.6, 0.7, 0.8, 0.9}) {
    const Split g = split_general(d.sequences, frac);
    std::vector<std::size_t> per(d.sequences.size(), 0);
    for (const auto& t : g.targets) ++per[t.sequence];
    for (std::size_t s = 0; s < d.sequences.size(); ++s) {
      CHECK(per[s] >= 1);
      // disjoint and covering
      CHECK(g.train[s].interactions.size() + per[s] == d.sequences[s].interactions.size());
    }

    const Split c = split_cold_start(d.sequences, frac);
    std::set<std::size_t> train_ex;
    for (const auto& s : c.train)
      for (const auto& it : s.interactions) train_ex.insert(it.exercise);
    std::set<std::pair<std::size_t, std::size_t>> general_targets;
    for (const auto& t : g.targets) general_targets.insert({t.sequence, t.step});
    for (const auto& t : c.targets) {
      CHECK_FALSE(train_ex.contains(d.sequences[t.sequence].interactions[t.step].exercise));
      CHECK(general_targets.contains({t.sequence, t.step}));
    }
  }

  const Split h = split_cold_start(d.sequences, 0.8, 0.1, 3);
  CHECK(h.mode == SplitMode::cold_start_exercise);
  CHECK_FALSE(h.targets.empty());
  std::set<std::size_t> train_ex;
  for (const auto& s : h.train)
    for (const auto& it : s.interactions) train_ex.insert(it.exercise);
  for (const auto& t : h.targets) CHECK_FALSE(train_ex.contains(d.sequences[t.sequence].interactions[t.step].exercise));

  const Split cs = split_cold_student(d.sequences, 0.8, 0.25, 3);
  std::set<std::string> trained;
  for (const auto& s : cs.train) trained.insert(s.student_id);
  CHECK(trained.size() == 60);
  for (const auto& t : cs.targets) CHECK_FALSE(trained.contains(d.sequences[t.sequence].student_id));
  std::filesystem::remove_all(dir);
}

TEST_CASE("cold-start split warns and returns empty when nothing is cold") {
  StudentSequence s{"s", {}};
  for (std::size_t i = 0; i < 10; ++i) s.interactions.push_back({0, 1});
  const std::vector<StudentSequence> seqs = {s};
  const Split c = split_cold_start(seqs, 0.6);
  CHECK(c.targets.empty());
}

TEST_CASE("split mode names") {
  CHECK(parse_split_mode("general") == SplitMode::general);
  CHECK(parse_split_mode("cold_exercise") == SplitMode::cold_start_exercise);
  CHECK(parse_split_mode("cold_student") == SplitMode::cold_start_student);
  CHECK(to_string(SplitMode::cold_start_exercise) == "cold_exercise");
  CHECK_THROWS_AS(parse_split_mode("other"), std::invalid_argument);
}
