// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ekt/checkpoint.hpp"
#include "ekt/errors.hpp"
#include "ekt/synth.hpp"
#include "ekt/train.hpp"

using namespace ekt;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  Dataset data;
  Vocabulary vocab;
  ExerciseBank bank;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    SynthConfig cfg;
    cfg.n_students = 24;
    cfg.n_exercises = 30;
    cfg.K = 3;
    cfg.mean_len = 20;
    cfg.seed = 3;
    const fs::path dir = fs::temp_directory_path() / "ekt_train_fixture";
    write_corpus(generate(cfg), dir);
    LoadOptions lo;
    lo.K = cfg.K;
    Fixture x;
    x.data = load_dataset(dir / "exercises.jsonl", dir / "records.jsonl", lo);
    x.vocab = build_vocab(x.data.exercises);
    x.bank = ExerciseBank::build(x.data, x.vocab);
    fs::remove_all(dir);
    return x;
  }();
  return f;
}

Model small_model(Variant v, std::uint64_t seed = 1) {
  ModelConfig c;
  c.variant = v;
  c.hyper.d0 = 4;
  c.hyper.dv = 3;
  c.hyper.dh = 5;
  c.hyper.dk = 3;
  c.hyper.dy = 6;
  c.hyper.K = 3;
  c.hyper.lr = 0.01;
  c.hyper.batch = 4;
  c.hyper.seed = seed;
  c.vocab_size = fixture().vocab.size();
  return Model::create(c);
}

constexpr Variant kAll[] = {Variant::eernnm, Variant::eernna, Variant::ektm, Variant::ekta};

double grad_at(const BatchGradient& g, std::size_t p, std::size_t i) { return g.grads[p].empty() ? 0.0 : g.grads[p][i]; }

}  // namespace

TEST_CASE("sequence_loss examples") {
  CHECK(sequence_loss(std::vector<double>{0.5}, std::vector<int>{1}) == doctest::Approx(std::log(2.0)));
  CHECK(sequence_loss(std::vector<double>{0.9, 0.2}, std::vector<int>{1, 0}) ==
        doctest::Approx(-std::log(0.9) - std::log(0.8)));
  const double clamped = sequence_loss(std::vector<double>{0.0}, std::vector<int>{1});
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-std::log(1e-7)));
  CHECK_THROWS_AS(sequence_loss(std::vector<double>{0.5}, std::vector<int>{1, 0}), std::invalid_argument);
}

TEST_CASE("windows cover every step exactly once") {
  std::vector<StudentSequence> seqs;
  for (std::size_t n : {1u, 7u, 8u, 9u, 20u, 33u}) {
    StudentSequence s{"s" + std::to_string(n), {}};
    for (std::size_t i = 0; i < n; ++i) s.interactions.push_back({0, 1});
    seqs.push_back(s);
  }
  for (std::size_t max_len : {2u, 5u, 8u, 200u}) {
    const auto ws = make_windows(seqs, max_len);
    std::vector<std::vector<int>> count(seqs.size());
    for (std::size_t s = 0; s < seqs.size(); ++s) count[s].assign(seqs[s].interactions.size(), 0);
    for (const auto& w : ws) {
      CHECK(w.len <= max_len);
      CHECK(w.loss_from < w.len);
      CHECK(w.begin + w.len <= seqs[w.sequence].interactions.size());
      for (std::size_t t = w.begin + w.loss_from; t < w.begin + w.len; ++t) ++count[w.sequence][t];
    }
    for (const auto& c : count)
      for (int v : c) CHECK(v == 1);
  }
  CHECK_THROWS_AS(make_windows(seqs, 1), std::invalid_argument);
}

TEST_CASE("batched loss and gradient equal the per-sequence sums") {
  const Fixture& f = fixture();
  for (Variant v : kAll) {
    CAPTURE(to_string(v));
    const Model m = small_model(v);
    const auto ws = make_windows(f.data.sequences, 12);
    const std::vector<Window> batch(ws.begin(), ws.begin() + 5);
    const BatchGradient all = batch_gradient(m, f.bank, f.data.sequences, batch, std::nullopt);
    double loss = 0.0;
    std::size_t steps = 0;
    std::vector<BatchGradient> parts;
    for (const auto& w : batch) {
      parts.push_back(batch_gradient(m, f.bank, f.data.sequences, std::span<const Window>(&w, 1), std::nullopt));
      loss += parts.back().loss_sum;
      steps += parts.back().steps;
    }
    CHECK(all.steps == steps);
    CHECK(std::abs(all.loss_sum - loss) <= 1e-10);
    double worst = 0.0;
    for (std::size_t p = 0; p < m.params().size(); ++p) {
      for (std::size_t i = 0; i < m.params()[p].value.size(); ++i) {
        double want = 0.0;
        for (const auto& g : parts) want += grad_at(g, p, i) * static_cast<double>(g.steps);
        want /= static_cast<double>(steps);
        worst = std::max(worst, std::abs(grad_at(all, p, i) - want));
      }
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("parallel gradient matches serial bit for bit and the single-tape reference") {
  const Fixture& f = fixture();
  for (Variant v : kAll) {
    CAPTURE(to_string(v));
    const Model m = small_model(v);
    const auto ws = make_windows(f.data.sequences, 10);
    const std::vector<Window> batch(ws.begin(), ws.begin() + 8);
    for (std::optional<std::uint64_t> seed : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{42}}) {
      const BatchGradient a = batch_gradient(m, f.bank, f.data.sequences, batch, seed, 1);
      const BatchGradient b = batch_gradient(m, f.bank, f.data.sequences, batch, seed, 4);
      const BatchGradient r = batch_gradient_reference(m, f.bank, f.data.sequences, batch, seed);
      CHECK(a.loss_sum == b.loss_sum);
      CHECK(a.item_loss == b.item_loss);
      CHECK(a.grads == b.grads);
      CHECK(std::abs(a.loss_sum - r.loss_sum) <= 1e-12 * std::max(1.0, std::abs(r.loss_sum)));
      double worst = 0.0;
      for (std::size_t p = 0; p < m.params().size(); ++p)
        for (std::size_t i = 0; i < m.params()[p].value.size(); ++i)
          worst = std::max(worst, std::abs(grad_at(a, p, i) - grad_at(r, p, i)));
      CHECK(worst <= 1e-12);
    }
  }
}

TEST_CASE("training on one student lowers its loss") {
  const Fixture& f = fixture();
  const std::vector<StudentSequence> one = {f.data.sequences[0]};
  Model m = small_model(Variant::ekta);
  TrainConfig cfg;
  Rng rng(9);
  const double first = train_epoch(m, f.bank, one, cfg, rng).mean_loss;
  double last = first;
  for (int e = 1; e < 20; ++e) last = train_epoch(m, f.bank, one, cfg, rng).mean_loss;
  CHECK(last < first);
}

TEST_CASE("a fixed seed reproduces a full fit bit for bit") {
  const Fixture& f = fixture();
  TrainConfig cfg;
  cfg.epochs = 3;
  auto run = [&](int threads) {
    Model m = small_model(Variant::ekta, 11);
    cfg.threads = threads;
    const FitResult r = fit(m, f.bank, f.data.sequences, cfg);
    return std::pair{m.params(), r};
  };
  const auto [pa, ra] = run(1);
  const auto [pb, rb] = run(1);
  const auto [pc, rc] = run(3);
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t e = 0; e < ra.history.size(); ++e) {
    CHECK(ra.history[e].mean_loss == rb.history[e].mean_loss);
    CHECK(ra.history[e].mean_loss == rc.history[e].mean_loss);
  }
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].value.vec() == pb[i].value.vec());
    CHECK(pa[i].value.vec() == pc[i].value.vec());
  }
  CHECK(ra.best_val_auc.has_value());
}

TEST_CASE("early stopping restores the best epoch") {
  const Fixture& f = fixture();
  TrainConfig cfg;
  cfg.epochs = 4;
  Model m = small_model(Variant::eernnm, 2);
  const FitResult r = fit(m, f.bank, f.data.sequences, cfg);
  REQUIRE(r.best_val_auc);
  CHECK(r.best_epoch >= 1);
  CHECK(r.best_epoch <= r.history.size());
  double best = 0.0;
  for (const auto& e : r.history) best = std::max(best, e.val_auc.value_or(0.0));
  CHECK(*r.best_val_auc == best);
}

TEST_CASE("non-finite parameters stop training with a numeric error") {
  const Fixture& f = fixture();
  Model m = small_model(Variant::eernnm);
  m.params().get("head.b2").value.vec()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  Rng rng(1);
  CHECK_THROWS_AS(train_epoch(m, f.bank, f.data.sequences, cfg, rng), NumericError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.val_frac = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.max_len = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.clip_norm = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const Fixture& f = fixture();
  Model m = small_model(Variant::ekta, 4);
  TrainConfig cfg;
  Rng rng(5);
  train_epoch(m, f.bank, f.data.sequences, cfg, rng);
  const fs::path path = fs::temp_directory_path() / "ekt_ckpt_test.bin";
  save_checkpoint(path, m, f.vocab, {{"data", "somewhere"}}, rng.state());
  const Checkpoint ck = load_checkpoint(path, &f.vocab);
  CHECK(ck.meta.at("data") == "somewhere");
  CHECK(ck.rng_state == rng.state());
  CHECK(ck.vocab == f.vocab);
  CHECK(ck.model.config().to_json() == m.config().to_json());
  CHECK(ck.model.params().step() == m.params().step());
  REQUIRE(ck.model.params().size() == m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const Param& a = m.params()[i];
    const Param& b = ck.model.params()[i];
    CHECK(a.name == b.name);
    CHECK(a.trainable == b.trainable);
    CHECK(a.value.vec() == b.value.vec());
    CHECK(a.m1.vec() == b.m1.vec());
    CHECK(a.m2.vec() == b.m2.vec());
  }
  const auto enc = encode_all(m, f.bank);
  CHECK(predict_sequence(m, f.bank, enc, f.data.sequences[1].interactions).prob ==
        predict_sequence(ck.model, f.bank, encode_all(ck.model, f.bank), f.data.sequences[1].interactions).prob);
  fs::remove(path);
}

TEST_CASE("corrupt, truncated and foreign checkpoints are rejected") {
  const Fixture& f = fixture();
  const Model m = small_model(Variant::ektm);
  const fs::path path = fs::temp_directory_path() / "ekt_ckpt_bad.bin";
  save_checkpoint(path, m, f.vocab);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  write(bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  write(flipped);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  std::string magic = bytes;
  magic[0] = 'X';
  write(magic);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  write(bytes);
  CHECK_NOTHROW(load_checkpoint(path, &f.vocab));
  std::vector<Exercise> other = {{"q", {"unrelated", "words"}, {0}}};
  const Vocabulary foreign = build_vocab(other);
  CHECK_THROWS_AS(load_checkpoint(path, &foreign), DataError);
  CHECK_THROWS_AS(load_checkpoint(fs::temp_directory_path() / "ekt_no_such_ckpt.bin"), DataError);
  fs::remove(path);
}
