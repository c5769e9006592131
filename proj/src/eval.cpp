// SPDX-License-Identifier: Apache-2.0
#include "ekt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ekt/parallel.hpp"
#include "ekt/predict.hpp"

namespace ekt {

std::optional<double> auc(std::span<const double> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("auc: length mismatch");
  const std::size_t n = pred.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pred[a] < pred[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pred[idx[j]] == pred[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (truth[idx[k]] == 1) {
        rank_sum += avg;
        ++pos;
      } else if (truth[idx[k]] != 0) {
        throw std::invalid_argument("auc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

MetricReport metrics(std::span<const double> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("metrics: length mismatch");
  if (pred.empty()) throw std::invalid_argument("metrics: no predictions");
  MetricReport r;
  r.n = pred.size();
  double abs_err = 0.0, sq = 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    abs_err += std::abs(e);
    sq += e * e;
    hit += (pred[i] >= 0.5 ? 1 : 0) == truth[i];
  }
  const double n = static_cast<double>(r.n);
  r.mae = abs_err / n;
  r.rmse = std::sqrt(sq / n);
  r.acc = static_cast<double>(hit) / n;
  r.auc = auc(pred, truth);
  return r;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"mae", mae}, {"rmse", rmse}, {"acc", acc}, {"n", n}, {"split", split}, {"variant", variant}};
  j["auc"] = auc ? nlohmann::json(*auc) : nlohmann::json(nullptr);
  return j;
}

std::string MetricReport::csv_header() { return "variant,split,n,mae,rmse,acc,auc"; }

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os << std::setprecision(10) << variant << ',' << split << ',' << n << ',' << mae << ',' << rmse << ',' << acc
     << ',';
  if (auc) os << *auc;
  return os.str();
}

NullStats permutation_null(std::span<const double> pred, std::span<const int> truth, std::size_t rounds,
                           std::uint64_t seed) {
  if (rounds < 2) throw std::invalid_argument("permutation_null needs at least two rounds");
  Rng rng(seed);
  std::vector<int> labels(truth.begin(), truth.end());
  std::vector<double> vals;
  for (std::size_t r = 0; r < rounds; ++r) {
    shuffle(labels, rng);
    if (auto a = auc(pred, labels)) vals.push_back(*a);
  }
  if (vals.size() < 2) throw std::invalid_argument("permutation_null: AUC undefined for these labels");
  NullStats s;
  s.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  double v = 0.0;
  for (double a : vals) v += (a - s.mean) * (a - s.mean);
  s.sd = std::sqrt(v / static_cast<double>(vals.size() - 1));
  return s;
}

namespace {

// Targets grouped by sequence, in target order within each group.
std::map<std::size_t, std::vector<std::size_t>> targets_by_sequence(const Split& split, std::size_t n_seq) {
  std::map<std::size_t, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < split.targets.size(); ++i) {
    if (split.targets[i].sequence >= n_seq) throw std::invalid_argument("split target refers to an unknown sequence");
    out[split.targets[i].sequence].push_back(i);
  }
  return out;
}

void check_bank(const ExerciseBank& bank, std::span<const StudentSequence> sequences) {
  for (const auto& s : sequences)
    for (const auto& it : s.interactions)
      if (it.exercise >= bank.size() || bank.tokens[it.exercise].empty()) {
        throw std::invalid_argument("exercise without content in student " + s.student_id);
      }
}

}  // namespace

std::vector<double> predict_targets(const Model& m, const ExerciseBank& bank,
                                    std::span<const StudentSequence> sequences, const Split& split, int threads) {
  check_bank(bank, sequences);
  const auto groups = targets_by_sequence(split, sequences.size());
  const auto enc = encode_all(m, bank, threads);
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> work(groups.begin(), groups.end());
  std::vector<double> pred(split.targets.size(), 0.0);
  parallel_for(work.size(), threads, [&](std::size_t w) {
    const auto& [s, idx] = work[w];
    std::size_t last = 0;
    for (std::size_t i : idx) last = std::max(last, split.targets[i].step);
    const auto& inter = sequences[s].interactions;
    if (last >= inter.size()) throw std::invalid_argument("split target step beyond the sequence");
    const auto tr = predict_sequence(m, bank, enc, std::span<const Interaction>(inter).subspan(0, last + 1));
    for (std::size_t i : idx) pred[i] = tr.prob[split.targets[i].step];
  });
  return pred;
}

MetricReport evaluate_split(const Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences,
                            const Split& split, int threads) {
  if (split.targets.empty()) throw std::invalid_argument("evaluate_split: split has no targets");
  const auto pred = predict_targets(m, bank, sequences, split, threads);
  std::vector<int> truth;
  truth.reserve(pred.size());
  for (const auto& t : split.targets) truth.push_back(sequences[t.sequence].interactions[t.step].score);
  MetricReport r = metrics(pred, truth);
  r.split = to_string(split.mode);
  r.variant = to_string(m.variant());
  return r;
}

std::string AttentionReport::csv_header() { return "student_id,target_step,group,distance"; }

void AttentionReport::write_csv(std::ostream& os) const {
  os << csv_header() << '\n' << std::setprecision(10);
  for (const auto& r : rows) os << r.student_id << ',' << r.target_step << ',' << r.group << ',' << r.distance << '\n';
}

AttentionReport attention_groups(const Model& m, const ExerciseBank& bank,
                                 std::span<const StudentSequence> sequences, const Split& split, std::uint64_t seed,
                                 int threads) {
  if (!is_attention(m.variant())) throw std::invalid_argument("attention_groups needs an attention variant");
  check_bank(bank, sequences);
  const auto groups = targets_by_sequence(split, sequences.size());
  const auto enc = encode_all(m, bank, threads);
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> work(groups.begin(), groups.end());
  std::vector<std::vector<AttentionRow>> per(work.size());

  parallel_for(work.size(), threads, [&](std::size_t w) {
    const auto& [s, idx] = work[w];
    const auto& seq = sequences[s];
    std::size_t last = 0;
    for (std::size_t i : idx) last = std::max(last, split.targets[i].step);
    const auto tr = predict_sequence(m, bank, enc, std::span<const Interaction>(seq.interactions).subspan(0, last + 1));
    for (std::size_t i : idx) {
      const std::size_t step = split.targets[i].step;
      if (step == 0) continue;  // no history
      const auto& alpha = tr.alpha[step];
      const auto [lo_it, hi_it] = std::minmax_element(alpha.begin(), alpha.end());
      const double lo = *lo_it, span = *hi_it - *lo_it;
      double sum[3] = {0, 0, 0};
      std::size_t cnt[3] = {0, 0, 0};
      for (std::size_t j = 0; j < alpha.size(); ++j) {
        const double a = span > 0.0 ? (alpha[j] - lo) / span : 0.0;
        const int g = a <= 0.33 ? 0 : (a <= 0.66 ? 1 : 2);
        sum[g] += seq.interactions[j].score;
        ++cnt[g];
      }
      const double target = seq.interactions[step].score;
      static const char* names[3] = {"low", "mid", "high"};
      for (int g = 0; g < 3; ++g) {
        if (cnt[g] == 0) continue;
        per[w].push_back({seq.student_id, step, names[g], std::abs(sum[g] / static_cast<double>(cnt[g]) - target)});
      }
      Rng rng(derive_seed(seed, s, step));
      std::vector<std::size_t> pool(step);
      std::iota(pool.begin(), pool.end(), 0);
      shuffle(pool, rng);
      const std::size_t take = std::min<std::size_t>(10, pool.size());
      double rs = 0.0;
      for (std::size_t k = 0; k < take; ++k) rs += seq.interactions[pool[k]].score;
      per[w].push_back({seq.student_id, step, "random", std::abs(rs / static_cast<double>(take) - target)});
    }
  });

  AttentionReport rep;
  for (auto& rows : per) rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> acc;
  for (const auto& r : rep.rows) {
    auto& a = acc[r.student_id][r.group];
    a.first += r.distance * r.distance;
    ++a.second;
  }
  std::map<std::string, std::pair<double, std::size_t>> mean;
  for (const auto& [student, gs] : acc) {
    for (const auto& [g, a] : gs) {
      const double d = std::sqrt(a.first / static_cast<double>(a.second));
      rep.per_student[student][g] = d;
      mean[g].first += d;
      ++mean[g].second;
    }
  }
  for (const auto& [g, a] : mean) rep.mean_distance[g] = a.first / static_cast<double>(a.second);
  return rep;
}

std::string MasteryTrajectory::csv_header() { return "student_id,t,concept,level,exercise_id,score"; }

void MasteryTrajectory::write_csv(std::ostream& os) const {
  os << csv_header() << '\n' << std::setprecision(10);
  for (const auto& r : rows) {
    os << student_id << ',' << r.t << ',' << r.concept_id << ',' << r.level << ',' << r.exercise_id << ',';
    if (r.score >= 0) os << r.score;
    os << '\n';
  }
}

std::vector<double> MasteryTrajectory::levels(int concept_id) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.concept_id == concept_id) out.push_back(r.level);
  return out;
}

MasteryTrajectory export_mastery(const Model& m, const ExerciseBank& bank, const StudentSequence& seq,
                                 std::span<const int> concepts, MasteryMode mode) {
  if (!is_ekt(m.variant())) throw std::invalid_argument("mastery export needs an EKT variant");
  for (int c : concepts) {
    if (c < 0 || static_cast<std::size_t>(c) >= m.slots()) {
      throw std::invalid_argument("concept id " + std::to_string(c) + " out of range");
    }
  }
  check_bank(bank, std::span<const StudentSequence>(&seq, 1));
  const std::size_t T = seq.interactions.size();
  std::vector<std::vector<double>> states;
  if (T == 0) {
    states.push_back(initial_state(m.params(), m.tracer()).h);
  } else {
    const auto enc = encode_all(m, bank, 1);
    const std::span<const Interaction> all(seq.interactions);
    if (mode == MasteryMode::incremental) {
      states = predict_sequence(m, bank, enc, all, true).states;
    } else {
      states.push_back(initial_state(m.params(), m.tracer()).h);
      for (std::size_t t = 1; t <= T; ++t) states.push_back(predict_sequence(m, bank, enc, all.subspan(0, t), true).states.back());
    }
  }

  MasteryTrajectory out;
  out.student_id = seq.student_id;
  for (std::size_t t = 0; t < states.size(); ++t) {
    for (int c : concepts) {
      MasteryRow r;
      r.t = t;
      r.concept_id = c;
      r.level = estimate_mastery(states[t], m.slots(), static_cast<std::size_t>(c), m.params(), m.head());
      if (t > 0) {
        r.exercise_id = bank.ids[seq.interactions[t - 1].exercise];
        r.score = seq.interactions[t - 1].score;
      }
      out.rows.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace ekt
