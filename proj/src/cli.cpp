// SPDX-License-Identifier: Apache-2.0
#include "ekt/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ekt/checkpoint.hpp"
#include "ekt/corpus.hpp"
#include "ekt/errors.hpp"
#include "ekt/eval.hpp"
#include "ekt/model.hpp"
#include "ekt/synth.hpp"
#include "ekt/train.hpp"

namespace ekt::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct DataOpts {
  std::string dir;
  std::optional<std::size_t> K;
  std::size_t min_len = 10;
};

struct SplitOpts {
  std::string mode = "general";
  double frac = 0.6;
  std::optional<double> holdout;
};

std::optional<std::size_t> k_from_meta(const fs::path& dir) {
  std::ifstream f(dir / "meta.json");
  if (!f) return std::nullopt;
  try {
    const json j = json::parse(f);
    if (j.contains("K")) return j.at("K").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError("malformed " + (dir / "meta.json").string() + ": " + e.what());
  }
  return std::nullopt;
}

std::size_t resolve_k(const DataOpts& d) {
  if (d.K) return *d.K;
  if (auto k = k_from_meta(d.dir)) return *k;
  throw std::invalid_argument("concept count unknown: pass --K or provide meta.json in the data directory");
}

Dataset load(const DataOpts& d, std::size_t K) {
  LoadOptions lo;
  lo.min_len = d.min_len;
  lo.K = K;
  return load_dataset(fs::path(d.dir) / "exercises.jsonl", fs::path(d.dir) / "records.jsonl", lo);
}

Split make_split(const SplitOpts& s, std::span<const StudentSequence> seqs, std::uint64_t seed) {
  const SplitMode mode = parse_split_mode(s.mode);
  switch (mode) {
    case SplitMode::general: return split_general(seqs, s.frac);
    case SplitMode::cold_start_exercise: return split_cold_start(seqs, s.frac, s.holdout.value_or(0.1), seed);
    case SplitMode::cold_start_student: return split_cold_student(seqs, s.frac, s.holdout.value_or(0.1), seed);
  }
  throw std::logic_error("unreachable split mode");
}

json split_json(const SplitOpts& s) {
  json j = {{"split", s.mode}, {"frac", s.frac}};
  j["holdout"] = s.holdout ? json(*s.holdout) : json(nullptr);
  return j;
}

void add_data_opts(CLI::App* c, DataOpts& d, bool required) {
  auto* o = c->add_option("--data", d.dir, "dataset directory (exercises.jsonl, records.jsonl)");
  if (required) o->required();
  c->add_option("--K", d.K, "concept count (default: meta.json of the data directory)");
  c->add_option("--min-len", d.min_len, "drop students with fewer interactions")->check(CLI::PositiveNumber);
}

void add_split_opts(CLI::App* c, SplitOpts& s) {
  c->add_option("--split", s.mode, "general | cold_exercise | cold_student")
      ->check(CLI::IsMember({"general", "cold_exercise", "cold_student"}));
  c->add_option("--frac", s.frac, "training prefix fraction")->check(CLI::IsMember({0.6, 0.7, 0.8, 0.9}));
  c->add_option("--holdout", s.holdout, "held-out exercise or student share for the cold-start splits")
      ->check(CLI::Range(0.0, 1.0));
}

struct Loaded {
  Checkpoint ckpt;
  Dataset data;
  ExerciseBank bank;
};

// Checkpoint plus its dataset (the one recorded at training time unless overridden).
Loaded load_model_and_data(const std::string& model_path, DataOpts d) {
  Checkpoint ck = load_checkpoint(model_path);
  const json& meta = ck.meta;
  if (d.dir.empty()) {
    if (!meta.contains("data")) throw std::invalid_argument("--data is required: the checkpoint records no dataset");
    d.dir = meta.at("data").get<std::string>();
  }
  if (!d.K) d.K = ck.model.config().hyper.K;
  if (*d.K != ck.model.config().hyper.K) throw std::invalid_argument("--K differs from the checkpoint's concept count");
  Dataset data = load(d, *d.K);
  const Vocabulary rebuilt = build_vocab(data.exercises, ck.vocab.min_count());
  if (rebuilt.hash() != ck.vocab.hash()) {
    throw DataError("vocabulary of " + d.dir + " differs from the checkpoint's (hash mismatch)");
  }
  ExerciseBank bank = ExerciseBank::build(data, ck.vocab);
  return {std::move(ck), std::move(data), std::move(bank)};
}

const StudentSequence& find_student_or_throw(const Dataset& data, const std::string& id) {
  const StudentSequence* s = data.find_student(id);
  if (!s) throw DataError("unknown student '" + id + "'");
  return *s;
}

std::vector<int> parse_concepts(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0) throw std::invalid_argument("bad concept id '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--concepts needs at least one id");
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exercise-enhanced knowledge tracing: train, evaluate and inspect EERNN/EKT models"};
  app.name("ekt");
  app.require_subcommand(1);

  std::uint64_t seed = 7;
  int threads = 1;
  app.add_option("--seed", seed, "random seed (all randomness derives from it)");
  app.add_option("--threads", threads, "worker threads for parallel-safe phases")->check(CLI::PositiveNumber);

  // synth
  SynthConfig sc;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with ground truth");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--students", sc.n_students, "number of students")->check(CLI::PositiveNumber);
  synth->add_option("--exercises", sc.n_exercises, "number of exercises")->check(CLI::PositiveNumber);
  synth->add_option("--concepts", sc.K, "number of concepts K")->check(CLI::PositiveNumber);
  synth->add_option("--mean-len", sc.mean_len, "mean sequence length")->check(CLI::Range(10, 100000));
  synth->add_option("--learn-rate", sc.learn_rate, "mastery gain per correct answer")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--slip", sc.slip, "slip probability")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--guess", sc.guess, "guess probability")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--discrimination", sc.discrimination, "logistic slope a")->check(CLI::NonNegativeNumber);
  synth->add_option("--stay", sc.stay, "chance of staying on the current concept")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--concept-spread", sc.concept_spread, "per-concept spread of initial mastery")
      ->check(CLI::Range(0.0, 1.0));

  // train
  DataOpts td;
  SplitOpts ts;
  Hyper hy;
  ModelOptions mo;
  TrainConfig tc;
  std::string variant = "ekta";
  std::string train_out;
  std::optional<double> clip;
  auto* train = app.add_subcommand("train", "train a model on the training part of a split");
  add_data_opts(train, td, true);
  add_split_opts(train, ts);
  train->add_option("--variant", variant, "eernnm | eernna | ektm | ekta")
      ->check(CLI::IsMember({"eernnm", "eernna", "ektm", "ekta"}));
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--epochs", tc.epochs, "maximum epochs")->check(CLI::PositiveNumber);
  train->add_option("--patience", tc.patience, "early-stopping patience in epochs");
  train->add_option("--val-frac", tc.val_frac, "training students held out for early stopping")
      ->check(CLI::Range(0.0, 0.9));
  train->add_option("--max-len", tc.max_len, "training window length")->check(CLI::Range(2, 1 << 20));
  train->add_option("--clip", clip, "global gradient-norm clip")->check(CLI::PositiveNumber);
  train->add_option("--lr", hy.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--seed", seed, "random seed");
  train->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  train->add_option("--d0", hy.d0, "word embedding size")->check(CLI::PositiveNumber);
  train->add_option("--dv", hy.dv, "exercise encoder hidden size")->check(CLI::PositiveNumber);
  train->add_option("--dh", hy.dh, "student state size")->check(CLI::PositiveNumber);
  train->add_option("--dk", hy.dk, "concept embedding size")->check(CLI::PositiveNumber);
  train->add_option("--dy", hy.dy, "prediction hidden size")->check(CLI::PositiveNumber);
  train->add_option("--batch", hy.batch, "mini-batch size")->check(CLI::PositiveNumber);
  train->add_option("--dropout", hy.dropout_p, "dropout probability")->check(CLI::Range(0.0, 0.99));
  train->add_flag("--freeze-memory", mo.freeze_memory, "keep the concept memory M fixed");
  train->add_flag("--freeze-words", mo.freeze_words, "keep the word table fixed");
  train->add_flag("--normalize-attention", mo.normalize_attention, "softmax-normalize attention scores");
  train->add_flag("--per-slot-weights", mo.per_slot_weights, "separate tracer weights per concept slot");
  train->add_flag("--verbose", tc.verbose, "log per-epoch progress");

  // eval
  DataOpts ed;
  SplitOpts es;
  std::string eval_model, eval_csv, attention_csv;
  std::optional<std::size_t> null_rounds;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--model", eval_model, "checkpoint path")->required();
  add_data_opts(eval, ed, false);
  add_split_opts(eval, es);
  eval->add_option("--seed", seed, "random seed (split and attention control)");
  eval->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  eval->add_option("--csv", eval_csv, "also append the report as CSV to this file");
  eval->add_option("--attention-csv", attention_csv, "write the attention-group analysis (attention variants)");
  eval->add_option("--null-rounds", null_rounds, "permutation-null rounds for the AUC")->check(CLI::Range(2, 100000));

  // predict
  DataOpts pd;
  std::string pred_model, pred_student, pred_exercise;
  auto* predict = app.add_subcommand("predict", "per-step predictions for one student");
  predict->add_option("--model", pred_model, "checkpoint path")->required();
  add_data_opts(predict, pd, false);
  predict->add_option("--student", pred_student, "student id")->required();
  predict->add_option("--exercise", pred_exercise, "also predict this exercise after the full history");

  // track
  DataOpts kd;
  std::string track_model, track_student, track_concepts, track_out, track_mode = "incremental";
  auto* track = app.add_subcommand("track", "mastery trajectory of one student (EKT variants)");
  track->add_option("--model", track_model, "checkpoint path")->required();
  add_data_opts(track, kd, false);
  track->add_option("--student", track_student, "student id")->required();
  track->add_option("--concepts", track_concepts, "comma-separated concept ids")->required();
  track->add_option("--out", track_out, "CSV path (default: stdout)");
  track->add_option("--mode", track_mode, "incremental | recompute")
      ->check(CLI::IsMember({"incremental", "recompute"}));

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) {
      sc.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      const SynthCorpus corpus = generate(sc);
      write_corpus(corpus, synth_out);
      json j = {{"command", "synth"},
                {"config", {{"out", synth_out}, {"synth", sc.to_json()}}},
                {"students", corpus.students.size()},
                {"exercises", corpus.exercises.size()},
                {"bayes_optimal_auc", bayes_optimal_auc(corpus)},
                {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
      out << j.dump(2) << '\n';
      return kOk;
    }

    if (*train) {
      hy.K = resolve_k(td);
      hy.seed = seed;
      hy.validate();
      tc.threads = threads;
      tc.clip_norm = clip;
      tc.checkpoint = train_out;
      const Dataset data = load(td, hy.K);
      const Vocabulary vocab = build_vocab(data.exercises);
      const ExerciseBank bank = ExerciseBank::build(data, vocab);
      const Split split = make_split(ts, data.sequences, seed);
      ModelConfig mc;
      mc.variant = parse_variant(variant);
      mc.hyper = hy;
      mc.options = mo;
      mc.vocab_size = vocab.size();
      json config = {{"data", td.dir}, {"min_len", td.min_len}, {"model", mc.to_json()},
                     {"epochs", tc.epochs}, {"patience", tc.patience}, {"val_frac", tc.val_frac},
                     {"max_len", tc.max_len}, {"threads", threads}, {"seed", seed}};
      config["clip"] = clip ? json(*clip) : json(nullptr);
      config.update(split_json(ts));
      err << "train " << variant << " on " << split.train.size() << " sequences, vocabulary " << vocab.size()
          << ", seed " << seed << '\n';
      Model m = Model::create(mc);
      const auto t0 = std::chrono::steady_clock::now();
      const FitResult fr = fit(m, bank, split.train, tc, &vocab, config);
      json hist = json::array();
      for (const auto& e : fr.history) {
        json h = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"seconds", e.seconds}};
        h["val_auc"] = e.val_auc ? json(*e.val_auc) : json(nullptr);
        hist.push_back(h);
      }
      json j = {{"command", "train"},
                {"config", config},
                {"checkpoint", train_out},
                {"history", hist},
                {"best_epoch", fr.best_epoch},
                {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
      j["best_val_auc"] = fr.best_val_auc ? json(*fr.best_val_auc) : json(nullptr);
      out << j.dump(2) << '\n';
      return kOk;
    }

    if (*eval) {
      Loaded L = load_model_and_data(eval_model, ed);
      const json& meta = L.ckpt.meta;
      if (meta.contains("split") && (meta.at("split") != es.mode || meta.at("frac") != es.frac)) {
        err << "warning: model was trained on split " << meta.at("split") << " frac " << meta.at("frac")
            << "; evaluating on " << es.mode << " frac " << es.frac << '\n';
      }
      const Split split = make_split(es, L.data.sequences, seed);
      const MetricReport rep = evaluate_split(L.ckpt.model, L.bank, L.data.sequences, split, threads);
      json config = {{"model", eval_model}, {"data", ed.dir.empty() ? meta.value("data", "") : ed.dir},
                     {"seed", seed}, {"threads", threads}};
      config.update(split_json(es));
      json j = {{"command", "eval"}, {"config", config}, {"report", rep.to_json()}};
      if (null_rounds) {
        const auto pred = predict_targets(L.ckpt.model, L.bank, L.data.sequences, split, threads);
        std::vector<int> truth;
        for (const auto& t : split.targets) truth.push_back(L.data.sequences[t.sequence].interactions[t.step].score);
        const NullStats ns = permutation_null(pred, truth, *null_rounds, seed);
        j["permutation_null"] = {{"rounds", *null_rounds}, {"mean", ns.mean}, {"sd", ns.sd}};
      }
      if (!eval_csv.empty()) {
        const bool fresh = !fs::exists(eval_csv);
        std::ofstream f(eval_csv, std::ios::app);
        if (!f) throw DataError("cannot write " + eval_csv);
        if (fresh) f << MetricReport::csv_header() << '\n';
        f << rep.csv_row() << '\n';
      }
      if (!attention_csv.empty()) {
        const AttentionReport ar = attention_groups(L.ckpt.model, L.bank, L.data.sequences, split, seed, threads);
        std::ofstream f(attention_csv);
        if (!f) throw DataError("cannot write " + attention_csv);
        ar.write_csv(f);
        j["attention_mean_distance"] = ar.mean_distance;
      }
      out << j.dump(2) << '\n';
      return kOk;
    }

    if (*predict) {
      Loaded L = load_model_and_data(pred_model, pd);
      const StudentSequence& s = find_student_or_throw(L.data, pred_student);
      std::vector<Interaction> seq = s.interactions;
      if (!pred_exercise.empty()) {
        const auto found = L.data.exercise_index.find(pred_exercise);
        if (found == L.data.exercise_index.end()) throw DataError("unknown exercise '" + pred_exercise + "'");
        seq.push_back({found->second, 0});  // the score of the appended step is never read
      }
      const auto enc = encode_all(L.ckpt.model, L.bank, threads);
      const PredictionTrace tr = predict_sequence(L.ckpt.model, L.bank, enc, seq);
      json steps = json::array();
      for (std::size_t t = 0; t < s.interactions.size(); ++t) {
        json st = {{"t", t + 1},
                   {"exercise_id", L.bank.ids[seq[t].exercise]},
                   {"score", seq[t].score},
                   {"prob", tr.prob[t]}};
        if (!tr.alpha[t].empty()) st["alpha"] = tr.alpha[t];
        if (!tr.beta[t].empty()) st["beta"] = tr.beta[t];
        steps.push_back(st);
      }
      json j = {{"command", "predict"},
                {"config", {{"model", pred_model}, {"student", pred_student}, {"exercise", pred_exercise}}},
                {"variant", to_string(tr.variant)},
                {"student_id", s.student_id},
                {"steps", steps}};
      if (!pred_exercise.empty()) {
        j["next"] = {{"exercise_id", pred_exercise}, {"prob", tr.prob.back()}};
        if (!tr.beta.back().empty()) j["next"]["beta"] = tr.beta.back();
      }
      out << j.dump(2) << '\n';
      return kOk;
    }

    if (*track) {
      const std::vector<int> concepts = parse_concepts(track_concepts);
      Loaded L = load_model_and_data(track_model, kd);
      const StudentSequence& s = find_student_or_throw(L.data, track_student);
      const MasteryTrajectory mt =
          export_mastery(L.ckpt.model, L.bank, s, concepts,
                         track_mode == "recompute" ? MasteryMode::recompute : MasteryMode::incremental);
      err << json{{"command", "track"},
                  {"config", {{"model", track_model}, {"student", track_student}, {"concepts", concepts},
                              {"mode", track_mode}}}}
                 .dump()
          << '\n';
      if (track_out.empty()) {
        mt.write_csv(out);
      } else {
        std::ofstream f(track_out);
        if (!f) throw DataError("cannot write " + track_out);
        mt.write_csv(f);
      }
      return kOk;
    }
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace ekt::cli
