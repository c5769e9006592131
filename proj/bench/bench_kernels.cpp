// SPDX-License-Identifier: Apache-2.0
// Serial reference vs parallel kernels on a small synthetic corpus.
#include <benchmark/benchmark.h>

#include <filesystem>

#include "ekt/eval.hpp"
#include "ekt/synth.hpp"
#include "ekt/train.hpp"

using namespace ekt;

namespace {

struct World {
  Dataset data;
  Vocabulary vocab;
  ExerciseBank bank;
  std::vector<Window> batch;
};

const World& world() {
  static const World w = [] {
    SynthConfig cfg;
    cfg.n_students = 120;
    cfg.n_exercises = 120;
    const auto dir = std::filesystem::temp_directory_path() / "ekt_bench_corpus";
    write_corpus(generate(cfg), dir);
    LoadOptions lo;
    lo.K = cfg.K;
    World x;
    x.data = load_dataset(dir / "exercises.jsonl", dir / "records.jsonl", lo);
    x.vocab = build_vocab(x.data.exercises);
    x.bank = ExerciseBank::build(x.data, x.vocab);
    const auto ws = make_windows(x.data.sequences, 200);
    x.batch.assign(ws.begin(), ws.begin() + 32);
    return x;
  }();
  return w;
}

Model desk_model(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.hyper.d0 = 16;
  c.hyper.dv = 16;
  c.hyper.dh = 24;
  c.hyper.dk = 8;
  c.hyper.dy = 24;
  c.hyper.K = 6;
  c.hyper.seed = 1;
  c.vocab_size = world().vocab.size();
  return Model::create(c);
}

Variant variant_arg(const benchmark::State& s) { return static_cast<Variant>(s.range(0)); }

void BM_BatchGradientReference(benchmark::State& state) {
  const World& w = world();
  const Model m = desk_model(variant_arg(state));
  for (auto _ : state) {
    auto g = batch_gradient_reference(m, w.bank, w.data.sequences, w.batch, 7);
    benchmark::DoNotOptimize(g.loss_sum);
  }
  state.SetLabel(to_string(m.variant()));
}

void BM_BatchGradient(benchmark::State& state) {
  const World& w = world();
  const Model m = desk_model(variant_arg(state));
  const int threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto g = batch_gradient(m, w.bank, w.data.sequences, w.batch, 7, threads);
    benchmark::DoNotOptimize(g.loss_sum);
  }
  state.SetLabel(to_string(m.variant()) + " threads=" + std::to_string(threads));
}

void BM_EvaluateSplit(benchmark::State& state) {
  const World& w = world();
  const Model m = desk_model(variant_arg(state));
  const int threads = static_cast<int>(state.range(1));
  const Split split = split_general(w.data.sequences, 0.8);
  for (auto _ : state) {
    auto r = evaluate_split(m, w.bank, w.data.sequences, split, threads);
    benchmark::DoNotOptimize(r.mae);
  }
  state.SetLabel(to_string(m.variant()) + " threads=" + std::to_string(threads));
}

void BM_EncodeAll(benchmark::State& state) {
  const World& w = world();
  const Model m = desk_model(Variant::ekta);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(encode_all(m, w.bank, threads));
  state.SetLabel("threads=" + std::to_string(threads));
}

}  // namespace

BENCHMARK(BM_BatchGradientReference)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient)->ArgsProduct({{0, 3}, {1, 2, 4}})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EvaluateSplit)->ArgsProduct({{0, 3}, {1, 4}})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EncodeAll)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
