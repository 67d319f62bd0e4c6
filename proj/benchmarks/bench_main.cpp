#include <benchmark/benchmark.h>

#include "hack/certainty.hpp"
#include "hack/cm_analysis.hpp"
#include "hack/probe.hpp"
#include "hack/rng.hpp"
#include "hack/synth.hpp"

using namespace hack;

namespace {

std::vector<double> scores(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform();
    return v;
}

void BM_OptimizeThreshold(benchmark::State& state) {
    Rng rng(1);
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto h = scores(rng, n);
    const auto f = scores(rng, n);
    for (auto _ : state) benchmark::DoNotOptimize(optimize_threshold(h, f));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_OptimizeThreshold)->RangeMultiplier(4)->Range(64, 65536)->Complexity();

void BM_PermutationTest(benchmark::State& state) {
    IdSet pool;
    for (int i = 0; i < 500; ++i) pool.insert("p" + std::to_string(i));
    IdSet a;
    IdSet b;
    auto it = pool.begin();
    for (int i = 0; i < 75; ++i, ++it) {
        if (i < 50) a.insert(*it);
        if (i >= 25) b.insert(*it);
    }
    for (auto _ : state) benchmark::DoNotOptimize(permutation_test(a, b, pool, pool, state.range(0), 42));
}
BENCHMARK(BM_PermutationTest)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_TrainLogreg(benchmark::State& state) {
    Rng rng(3);
    const auto n = static_cast<std::size_t>(state.range(0));
    Matrix x(n, Vector(64));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        for (auto& v : x[i]) v = rng.normal() + (y[i] ? 0.3 : -0.3);
    }
    LogregOptions o;
    o.iters = 500;
    for (auto _ : state) benchmark::DoNotOptimize(train_logreg(x, y, o));
}
BENCHMARK(BM_TrainLogreg)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_SemanticEntropy(benchmark::State& state) {
    std::vector<GenerationRecord> samples(11);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].text = "answer " + std::to_string(i % 3);
        samples[i].tokens = {{"answer", -0.2}, {" x", -0.1 * static_cast<double>(i)}};
    }
    for (auto _ : state) benchmark::DoNotOptimize(semantic_entropy(cluster_generations(samples)));
}
BENCHMARK(BM_SemanticEntropy);

void BM_SynthGenerate(benchmark::State& state) {
    SynthConfig c;
    c.n_items = state.range(0);
    for (auto _ : state) benchmark::DoNotOptimize(synth_generate(c));
}
BENCHMARK(BM_SynthGenerate)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
