// SPDX-License-Identifier: Apache-2.0
#include "ekt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "ekt/errors.hpp"
#include "ekt/rng.hpp"

namespace ekt {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::size_t utf8_length(unsigned char lead) {
  if (lead >= 0xF0) return 4;
  if (lead >= 0xE0) return 3;
  if (lead >= 0xC0) return 2;
  return 1;
}

void tokenize_prose(std::string_view s, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && !is_word_byte(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && is_word_byte(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
}

void tokenize_tex(std::string_view s, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (c == '\\') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
      if (j == i + 1 && j < s.size()) ++j;  // control symbol such as \{ or \,
      out.emplace_back(s.substr(i, j - i));
      i = j;
    } else if (std::isdigit(c)) {
      std::size_t j = i;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      out.emplace_back(s.substr(i, j - i));
      i = j;
    } else {
      const std::size_t len = std::min(utf8_length(c), s.size() - i);
      out.emplace_back(s.substr(i, len));
      i += len;
    }
  }
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view content) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < content.size()) {
    const std::size_t dollar = content.find('$', i);
    if (dollar == std::string_view::npos) {
      tokenize_prose(content.substr(i), out);
      break;
    }
    tokenize_prose(content.substr(i, dollar - i), out);
    const bool display = dollar + 1 < content.size() && content[dollar + 1] == '$';
    const std::string_view delim = display ? "$$" : "$";
    const std::size_t body = dollar + delim.size();
    const std::size_t close = content.find(delim, body);
    if (close == std::string_view::npos) {
      throw DataError("unbalanced formula delimiter at position " + std::to_string(dollar));
    }
    tokenize_tex(content.substr(body, close - body), out);
    i = close + delim.size();
  }
  return out;
}

// --- Vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"} {
  ids_.emplace("<pad>", kPad);
  ids_.emplace("<unk>", kUnk);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> token_lists, std::size_t min_count) {
  std::map<std::string, std::size_t, std::less<>> counts;
  for (const auto& list : token_lists)
    for (const auto& tok : list) ++counts[tok];
  Vocabulary v;
  v.min_count_ = min_count;
  for (const auto& [tok, n] : counts) {
    if (n < min_count || v.ids_.contains(tok)) continue;
    v.ids_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, std::to_string(min_count_));
  for (const auto& t : tokens_) {
    h = fnv1a(h, t);
    h = fnv1a(h, std::string_view("\0", 1));
  }
  return h;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json tokens = nlohmann::json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) tokens[tokens_[i]] = i;
  return {{"min_count", min_count_}, {"size", tokens_.size()}, {"tokens", tokens}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    const std::size_t size = j.at("size").get<std::size_t>();
    std::vector<std::string> tokens(size);
    std::vector<bool> seen(size, false);
    for (const auto& [tok, idj] : j.at("tokens").items()) {
      const auto id = idj.get<std::size_t>();
      if (id >= size || seen[id]) throw DataError("vocabulary ids are not a bijection");
      tokens[id] = tok;
      seen[id] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw DataError("vocabulary has gaps");
    if (size < 2 || tokens[kPad] != "<pad>" || tokens[kUnk] != "<unk>") {
      throw DataError("vocabulary lacks reserved PAD/UNK entries");
    }
    Vocabulary v;
    v.min_count_ = j.at("min_count").get<std::size_t>();
    v.tokens_ = std::move(tokens);
    v.ids_.clear();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_.emplace(v.tokens_[i], static_cast<int>(i));
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary to " + path.string());
  out << to_json().dump(1) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary from " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  }
}

Vocabulary build_vocab(std::span<const Exercise> exercises, std::size_t min_count) {
  if (exercises.empty()) throw std::invalid_argument("build_vocab needs at least one exercise");
  std::vector<std::vector<std::string>> lists;
  lists.reserve(exercises.size());
  for (const auto& e : exercises) lists.push_back(e.tokens);
  return Vocabulary::build(lists, min_count);
}

// --- Dataset ---------------------------------------------------------------

std::size_t Dataset::find_exercise(std::string_view id) const {
  auto it = exercise_index.find(std::string(id));
  if (it == exercise_index.end()) throw DataError("unknown exercise id: " + std::string(id));
  return it->second;
}

const StudentSequence* Dataset::find_student(std::string_view id) const {
  auto it = std::lower_bound(sequences.begin(), sequences.end(), id,
                             [](const StudentSequence& s, std::string_view v) { return s.student_id < v; });
  if (it == sequences.end() || it->student_id != id) return nullptr;
  return &*it;
}

namespace {

std::string where(const char* file, std::size_t line) {
  return std::string(file) + " line " + std::to_string(line);
}

}  // namespace

Dataset parse_dataset(std::istream& exercises, std::istream& records, const LoadOptions& options) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(exercises, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Exercise ex;
    std::string content;
    try {
      auto j = nlohmann::json::parse(line);
      ex.id = j.at("id").get<std::string>();
      content = j.at("content").get<std::string>();
      ex.concepts = j.at("concepts").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed exercise at " + where("exercises", lineno) + ": " + e.what());
    }
    try {
      ex.tokens = tokenize(content);
    } catch (const DataError& e) {
      throw DataError("exercise " + ex.id + " at " + where("exercises", lineno) + ": " + e.what());
    }
    if (ex.tokens.empty()) throw DataError("exercise " + ex.id + " has no tokens (" + where("exercises", lineno) + ")");
    std::sort(ex.concepts.begin(), ex.concepts.end());
    ex.concepts.erase(std::unique(ex.concepts.begin(), ex.concepts.end()), ex.concepts.end());
    for (int k : ex.concepts) {
      if (k < 0 || (options.K && static_cast<std::size_t>(k) >= *options.K)) {
        throw DataError("concept id " + std::to_string(k) + " out of range at " + where("exercises", lineno));
      }
    }
    if (ds.exercise_index.contains(ex.id)) throw DataError("duplicate exercise id " + ex.id);
    ds.exercise_index.emplace(ex.id, ds.exercises.size());
    ds.exercises.push_back(std::move(ex));
  }

  std::set<std::string> students;
  lineno = 0;
  while (std::getline(records, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    StudentSequence seq;
    try {
      auto j = nlohmann::json::parse(line);
      seq.student_id = j.at("student_id").get<std::string>();
      for (const auto& it : j.at("interactions")) {
        const auto ex_id = it.at("exercise_id").get<std::string>();
        const int score = it.at("score").get<int>();
        if (score != 0 && score != 1) {
          throw DataError("score must be 0 or 1 at " + where("records", lineno));
        }
        auto found = ds.exercise_index.find(ex_id);
        if (found == ds.exercise_index.end()) {
          throw DataError("interaction references unknown exercise id " + ex_id + " at " + where("records", lineno));
        }
        seq.interactions.push_back({found->second, score});
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed record at " + where("records", lineno) + ": " + e.what());
    }
    if (!students.insert(seq.student_id).second) {
      throw DataError("duplicate student id " + seq.student_id + " at " + where("records", lineno));
    }
    if (seq.interactions.size() < std::max<std::size_t>(options.min_len, 1)) continue;
    ds.sequences.push_back(std::move(seq));
  }
  std::sort(ds.sequences.begin(), ds.sequences.end(),
            [](const StudentSequence& a, const StudentSequence& b) { return a.student_id < b.student_id; });

  if (options.drop_unused_exercises) {
    std::vector<bool> used(ds.exercises.size(), false);
    for (const auto& s : ds.sequences)
      for (const auto& it : s.interactions) used[it.exercise] = true;
    std::vector<std::size_t> remap(ds.exercises.size(), SIZE_MAX);
    std::vector<Exercise> kept;
    for (std::size_t i = 0; i < ds.exercises.size(); ++i) {
      if (!used[i]) continue;
      remap[i] = kept.size();
      kept.push_back(std::move(ds.exercises[i]));
    }
    ds.exercises = std::move(kept);
    ds.exercise_index.clear();
    for (std::size_t i = 0; i < ds.exercises.size(); ++i) ds.exercise_index.emplace(ds.exercises[i].id, i);
    for (auto& s : ds.sequences)
      for (auto& it : s.interactions) it.exercise = remap[it.exercise];
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& exercises_path, const std::filesystem::path& records_path,
                     const LoadOptions& options) {
  std::ifstream ex(exercises_path);
  if (!ex) throw DataError("cannot open exercises file " + exercises_path.string());
  std::ifstream rec(records_path);
  if (!rec) throw DataError("cannot open records file " + records_path.string());
  return parse_dataset(ex, rec, options);
}

// --- Splits ----------------------------------------------------------------

std::string to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::general: return "general";
    case SplitMode::cold_start_exercise: return "cold_exercise";
    case SplitMode::cold_start_student: return "cold_student";
  }
  return "general";
}

SplitMode parse_split_mode(std::string_view name) {
  if (name == "general") return SplitMode::general;
  if (name == "cold_exercise") return SplitMode::cold_start_exercise;
  if (name == "cold_student") return SplitMode::cold_start_student;
  throw std::invalid_argument("unknown split mode: " + std::string(name));
}

std::size_t train_prefix_length(std::size_t T, double frac) {
  if (!(frac > 0.0 && frac < 1.0)) throw std::invalid_argument("train fraction must lie in (0, 1)");
  // The small offset keeps products such as 0.7 * 10 from rounding up.
  return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(T) - 1e-9));
}

namespace {

void check_frac(double f, const char* what) {
  if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument(std::string(what) + " must lie in (0, 1)");
}

StudentSequence prefix_of(const StudentSequence& s, std::size_t n) {
  StudentSequence p;
  p.student_id = s.student_id;
  p.interactions.assign(s.interactions.begin(), s.interactions.begin() + static_cast<std::ptrdiff_t>(n));
  return p;
}

}  // namespace

Split split_general(std::span<const StudentSequence> sequences, double train_frac) {
  check_frac(train_frac, "train fraction");
  Split split;
  split.mode = SplitMode::general;
  split.train_frac = train_frac;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const std::size_t T = sequences[s].interactions.size();
    const std::size_t n = train_prefix_length(T, train_frac);
    if (n > 0) split.train.push_back(prefix_of(sequences[s], n));
    for (std::size_t t = n; t < T; ++t) split.targets.push_back({s, t});
  }
  return split;
}

Split split_cold_start(std::span<const StudentSequence> sequences, double train_frac) {
  Split split = split_general(sequences, train_frac);
  split.mode = SplitMode::cold_start_exercise;
  std::set<std::size_t> seen;
  for (const auto& s : split.train)
    for (const auto& it : s.interactions) seen.insert(it.exercise);
  std::erase_if(split.targets, [&](const Target& t) {
    return seen.contains(sequences[t.sequence].interactions[t.step].exercise);
  });
  if (split.targets.empty()) std::cerr << "warning: cold-start split has no target exercises\n";
  return split;
}

Split split_cold_start(std::span<const StudentSequence> sequences, double train_frac, double holdout_frac,
                       std::uint64_t seed) {
  check_frac(train_frac, "train fraction");
  if (holdout_frac <= 0.0) return split_cold_start(sequences, train_frac);
  check_frac(holdout_frac, "holdout fraction");
  std::set<std::size_t> pool;
  for (const auto& s : sequences)
    for (const auto& it : s.interactions) pool.insert(it.exercise);
  std::vector<std::size_t> ids(pool.begin(), pool.end());
  Rng rng(derive_seed(seed, 0xC01D));
  shuffle(ids, rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_frac * static_cast<double>(ids.size())));
  const std::set<std::size_t> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_hold));

  Split split;
  split.mode = SplitMode::cold_start_exercise;
  split.train_frac = train_frac;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    const std::size_t T = seq.interactions.size();
    const std::size_t n = train_prefix_length(T, train_frac);
    StudentSequence p;
    p.student_id = seq.student_id;
    for (std::size_t t = 0; t < n; ++t)
      if (!held.contains(seq.interactions[t].exercise)) p.interactions.push_back(seq.interactions[t]);
    if (!p.interactions.empty()) split.train.push_back(std::move(p));
    for (std::size_t t = n; t < T; ++t)
      if (held.contains(seq.interactions[t].exercise)) split.targets.push_back({s, t});
  }
  if (split.targets.empty()) std::cerr << "warning: cold-start split has no target exercises\n";
  return split;
}

Split split_cold_student(std::span<const StudentSequence> sequences, double train_frac, double holdout_frac,
                         std::uint64_t seed) {
  check_frac(train_frac, "train fraction");
  check_frac(holdout_frac, "holdout fraction");
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x57D));
  shuffle(order, rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_frac * static_cast<double>(order.size())));
  const std::set<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));

  Split split;
  split.mode = SplitMode::cold_start_student;
  split.train_frac = train_frac;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const std::size_t T = sequences[s].interactions.size();
    if (held.contains(s)) {
      for (std::size_t t = 0; t < T; ++t) split.targets.push_back({s, t});
    } else {
      const std::size_t n = train_prefix_length(T, train_frac);
      if (n > 0) split.train.push_back(prefix_of(sequences[s], n));
    }
  }
  return split;
}

}  // namespace ekt
