// SPDX-License-Identifier: Apache-2.0
#include "ekt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>

#include "ekt/checkpoint.hpp"
#include "ekt/errors.hpp"
#include "ekt/eval.hpp"
#include "ekt/ops.hpp"
#include "ekt/parallel.hpp"

namespace ekt {

double sequence_loss(std::span<const double> pred, std::span<const int> scores, double eps) {
  if (pred.size() != scores.size()) throw std::invalid_argument("sequence_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (scores[i] != 0 && scores[i] != 1) throw std::invalid_argument("sequence_loss: score must be 0 or 1");
    const double p = std::clamp(pred[i], eps, 1.0 - eps);
    loss -= scores[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (max_len < 2) throw std::invalid_argument("max_len must be at least 2");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) throw std::invalid_argument("val_frac must lie in [0, 1)");
  if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
}

std::vector<Window> make_windows(std::span<const StudentSequence> sequences, std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("max_len must be at least 2");
  const std::size_t stride = max_len / 2;
  std::vector<Window> out;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const std::size_t T = sequences[s].interactions.size();
    if (T == 0) continue;
    if (T <= max_len) {
      out.push_back({s, 0, T, 0});
      continue;
    }
    std::size_t covered = 0;
    for (std::size_t begin = 0;; begin += stride) {
      const std::size_t len = std::min(max_len, T - begin);
      out.push_back({s, begin, len, covered - begin});
      covered = begin + len;
      if (covered == T) break;
    }
  }
  return out;
}

namespace {

std::span<const Interaction> window_steps(std::span<const StudentSequence> seqs, const Window& w) {
  const auto& it = seqs[w.sequence].interactions;
  if (w.begin + w.len > it.size() || w.loss_from >= w.len) throw std::invalid_argument("window out of range");
  return std::span<const Interaction>(it).subspan(w.begin, w.len);
}

std::vector<std::size_t> unique_exercises(std::span<const StudentSequence> seqs, std::span<const Window> batch) {
  std::vector<std::size_t> ex;
  for (const auto& w : batch)
    for (const auto& it : window_steps(seqs, w)) ex.push_back(it.exercise);
  std::sort(ex.begin(), ex.end());
  ex.erase(std::unique(ex.begin(), ex.end()), ex.end());
  return ex;
}

// Sum of the counted step losses of one window on tape t.
Var window_loss(Tape& t, const Model& m, const ExerciseBank& bank, std::span<const Interaction> steps,
                std::span<const Var> x, std::size_t loss_from, Rng* rng) {
  DropoutSource drop{rng, m.config().hyper.dropout_p};
  const SequenceGraph g = build_sequence(t, m, bank, steps, x, rng ? &drop : nullptr, false);
  std::vector<Var> terms;
  for (std::size_t k = loss_from; k < steps.size(); ++k) {
    terms.push_back(ops::bce(t, g.predictions[k], static_cast<double>(steps[k].score)));
  }
  return ops::sum(t, terms);
}

std::size_t counted_steps(std::span<const Window> batch) {
  std::size_t n = 0;
  for (const auto& w : batch) n += w.len - w.loss_from;
  return n;
}

void accumulate(std::vector<double>& into, std::span<const double> g) {
  if (g.empty()) return;
  if (into.empty()) into.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

}  // namespace

BatchGradient batch_gradient(const Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences,
                             std::span<const Window> batch, std::optional<std::uint64_t> dropout_seed, int threads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const ParamStore& params = m.params();
  const std::vector<std::size_t> ex = unique_exercises(sequences, batch);
  const std::size_t steps = counted_steps(batch);
  const double seed = 1.0 / static_cast<double>(steps);

  // Exercise encodings, one tape each.
  std::vector<Tape> enc_tapes;
  enc_tapes.reserve(ex.size());
  for (std::size_t u = 0; u < ex.size(); ++u) enc_tapes.emplace_back(&params);
  std::vector<Var> enc_out(ex.size());
  parallel_for(ex.size(), threads, [&](std::size_t u) {
    enc_out[u] = encode_exercise(enc_tapes[u], bank.tokens[ex[u]], m.encoder());
  });

  // Sequences, one tape each, with the encodings as inputs.
  struct ItemResult {
    double loss = 0.0;
    std::vector<std::vector<double>> grads;
    std::vector<std::pair<std::size_t, std::vector<double>>> dx;  // (unique index, dL/dx)
  };
  std::vector<ItemResult> items(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t b) {
    const Window& w = batch[b];
    const auto steps_b = window_steps(sequences, w);
    Tape t(&params);
    std::map<std::size_t, Var> local;
    std::vector<Var> x;
    for (const auto& it : steps_b) {
      auto found = local.find(it.exercise);
      if (found == local.end()) {
        const std::size_t u = static_cast<std::size_t>(std::lower_bound(ex.begin(), ex.end(), it.exercise) - ex.begin());
        auto v = enc_tapes[u].value(enc_out[u]);
        found = local.emplace(it.exercise, t.input(v, v.size())).first;
      }
      x.push_back(found->second);
    }
    std::optional<Rng> rng;
    if (dropout_seed) rng.emplace(derive_seed(*dropout_seed, b));
    Var loss = window_loss(t, m, bank, steps_b, x, w.loss_from, rng ? &*rng : nullptr);
    t.backward(loss, seed);
    ItemResult& r = items[b];
    r.loss = t.scalar(loss);
    r.grads.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto g = t.param_grad(p);
      r.grads[p].assign(g.begin(), g.end());
    }
    for (const auto& [exercise, var] : local) {
      const std::size_t u = static_cast<std::size_t>(std::lower_bound(ex.begin(), ex.end(), exercise) - ex.begin());
      auto g = t.grad(var);
      r.dx.emplace_back(u, std::vector<double>(g.begin(), g.end()));
    }
  });

  BatchGradient out;
  out.grads.resize(params.size());
  out.steps = steps;
  std::vector<std::vector<double>> dx(ex.size());
  for (auto& r : items) {
    out.loss_sum += r.loss;
    out.item_loss.push_back(r.loss);
    for (std::size_t p = 0; p < params.size(); ++p) accumulate(out.grads[p], r.grads[p]);
    for (auto& [u, g] : r.dx) accumulate(dx[u], g);
  }

  std::vector<std::vector<std::vector<double>>> enc_grads(ex.size());
  parallel_for(ex.size(), threads, [&](std::size_t u) {
    if (dx[u].empty()) dx[u].assign(enc_tapes[u].size(enc_out[u]), 0.0);
    const Var outs[] = {enc_out[u]};
    const std::vector<double> seeds[] = {dx[u]};
    enc_tapes[u].backward(outs, seeds);
    enc_grads[u].resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto g = enc_tapes[u].param_grad(p);
      enc_grads[u][p].assign(g.begin(), g.end());
    }
  });
  for (std::size_t u = 0; u < ex.size(); ++u)
    for (std::size_t p = 0; p < params.size(); ++p) accumulate(out.grads[p], enc_grads[u][p]);
  return out;
}

BatchGradient batch_gradient_reference(const Model& m, const ExerciseBank& bank,
                                       std::span<const StudentSequence> sequences, std::span<const Window> batch,
                                       std::optional<std::uint64_t> dropout_seed) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const ParamStore& params = m.params();
  const std::vector<std::size_t> ex = unique_exercises(sequences, batch);
  const std::size_t steps = counted_steps(batch);

  Tape t(&params);
  std::map<std::size_t, Var> enc;
  for (std::size_t e : ex) enc.emplace(e, encode_exercise(t, bank.tokens[e], m.encoder()));
  std::vector<Var> losses;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto steps_b = window_steps(sequences, batch[b]);
    std::vector<Var> x;
    for (const auto& it : steps_b) x.push_back(enc.at(it.exercise));
    std::optional<Rng> rng;
    if (dropout_seed) rng.emplace(derive_seed(*dropout_seed, b));
    losses.push_back(window_loss(t, m, bank, steps_b, x, batch[b].loss_from, rng ? &*rng : nullptr));
  }
  Var total = ops::sum(t, losses);
  t.backward(total, 1.0 / static_cast<double>(steps));

  BatchGradient out;
  out.steps = steps;
  for (Var l : losses) {
    out.item_loss.push_back(t.scalar(l));
    out.loss_sum += t.scalar(l);
  }
  out.grads.resize(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto g = t.param_grad(p);
    out.grads[p].assign(g.begin(), g.end());
  }
  return out;
}

EpochStats train_epoch(Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences,
                       const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Window> windows = make_windows(sequences, cfg.max_len);
  if (windows.empty()) throw std::invalid_argument("train_epoch: empty training split");
  shuffle(windows, rng);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t bs = m.config().hyper.batch;

  EpochStats st;
  double loss = 0.0;
  for (std::size_t start = 0; start < windows.size(); start += bs) {
    const std::size_t n = std::min(bs, windows.size() - start);
    const std::uint64_t drop_seed = rng.next_u64();
    std::span<const Window> batch(windows.data() + start, n);
    const std::optional<std::uint64_t> ds =
        m.config().hyper.dropout_p > 0.0 ? std::optional<std::uint64_t>(drop_seed) : std::nullopt;
    BatchGradient g = batch_gradient(m, bank, sequences, batch, ds, cfg.threads);
    if (!std::isfinite(g.loss_sum)) {
      throw NumericError("non-finite loss in batch " + std::to_string(st.batches) + " (windows " +
                         std::to_string(start) + ".." + std::to_string(start + n - 1) + ")");
    }
    adam_step(m.params(), g.grads, m.config().hyper, cfg.clip_norm);
    loss += g.loss_sum;
    st.steps += g.steps;
    ++st.batches;
  }
  st.mean_loss = loss / static_cast<double>(st.steps);
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st;
}

std::optional<double> sequence_auc(const Model& m, const ExerciseBank& bank,
                                   std::span<const StudentSequence> sequences, int threads) {
  const auto enc = encode_all(m, bank, threads);
  std::vector<PredictionTrace> traces(sequences.size());
  parallel_for(sequences.size(), threads, [&](std::size_t i) {
    traces[i] = predict_sequence(m, bank, enc, sequences[i].interactions);
  });
  std::vector<double> pred;
  std::vector<int> truth;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    pred.insert(pred.end(), traces[i].prob.begin(), traces[i].prob.end());
    for (const auto& it : sequences[i].interactions) truth.push_back(it.score);
  }
  if (pred.empty()) return std::nullopt;
  return auc(pred, truth);
}

FitResult fit(Model& m, const ExerciseBank& bank, std::span<const StudentSequence> sequences, const TrainConfig& cfg,
              const Vocabulary* vocab, const nlohmann::json& meta) {
  cfg.validate();
  const std::uint64_t seed = m.config().hyper.seed;

  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(seed, 2));
  shuffle(order, split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.val_frac * static_cast<double>(order.size())));
  if (n_val >= order.size()) n_val = 0;
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(val_idx.begin(), val_idx.end());
  std::vector<StudentSequence> train, val;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    (std::binary_search(val_idx.begin(), val_idx.end(), i) ? val : train).push_back(sequences[i]);
  }
  if (train.empty()) throw std::invalid_argument("fit: no training sequences");

  Rng rng(derive_seed(seed, 1));
  FitResult res;
  std::optional<ParamStore> best;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochStats st = train_epoch(m, bank, train, cfg, rng);
    st.epoch = epoch;
    if (!val.empty()) st.val_auc = sequence_auc(m, bank, val, cfg.threads);
    if (cfg.verbose) {
      std::cerr << "epoch " << epoch << " loss " << st.mean_loss << " time " << st.seconds << "s";
      if (st.val_auc) std::cerr << " val_auc " << *st.val_auc;
      std::cerr << '\n';
    }
    res.history.push_back(st);
    if (val.empty()) {
      res.best_epoch = epoch;
      continue;
    }
    const double score = st.val_auc.value_or(0.5);
    if (!res.best_val_auc || score > *res.best_val_auc) {
      res.best_val_auc = score;
      res.best_epoch = epoch;
      best = m.params();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      if (cfg.verbose) std::cerr << "early stop after epoch " << epoch << '\n';
      break;
    }
  }
  if (best) m.params() = std::move(*best);
  if (!cfg.checkpoint.empty() && vocab) save_checkpoint(cfg.checkpoint, m, *vocab, meta, {});
  return res;
}

}  // namespace ekt
