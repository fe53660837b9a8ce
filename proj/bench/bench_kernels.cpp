// Scalar reference implementations against the batched OpenMP kernels.
// Thread count follows OMP_NUM_THREADS.

#include "wearad/explain.hpp"
#include "wearad/lstm_ae.hpp"
#include "wearad/rng.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

namespace {

using namespace wearad;

std::vector<WindowValues> windows(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<WindowValues> out(n);
    for (auto &w : out) {
        for (auto &v : w.cells) {
            v = rng.normal();
        }
    }
    return out;
}

LstmAutoencoder model(int hidden) {
    TrainConfig c;
    c.hidden_size = hidden;
    c.seed = 1;
    return init_model(c);
}

void set_counters(benchmark::State &state, std::size_t windows_per_iteration) {
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * windows_per_iteration));
    state.counters["threads"] = omp_get_max_threads();
}

void BM_ErrorsReference(benchmark::State &state) {
    const auto m = model(static_cast<int>(state.range(0)));
    const auto w = windows(static_cast<std::size_t>(state.range(1)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::reconstruction_errors(m.params, m.activation(), w));
    }
    set_counters(state, w.size());
}

void BM_ErrorsKernel(benchmark::State &state) {
    const auto m = model(static_cast<int>(state.range(0)));
    const auto w = windows(static_cast<std::size_t>(state.range(1)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::parallel_reconstruction_errors(m.params, m.activation(), w));
    }
    set_counters(state, w.size());
}

void BM_GradientReference(benchmark::State &state) {
    const auto m = model(static_cast<int>(state.range(0)));
    const auto w = windows(static_cast<std::size_t>(state.range(1)), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::loss_and_gradient(m.params, m.activation(), w));
    }
    set_counters(state, w.size());
}

void BM_GradientKernel(benchmark::State &state) {
    const auto m = model(static_cast<int>(state.range(0)));
    const auto w = windows(static_cast<std::size_t>(state.range(1)), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::parallel_loss_and_gradient(m.params, m.activation(), w));
    }
    set_counters(state, w.size());
}

// Sampled attributions of a set of windows: one window at a time versus the
// OpenMP loop over windows used by the explain stage.
struct AttributionFixture {
    LstmAutoencoder m = model(32);
    std::vector<WindowValues> targets = windows(8, 4);
    std::vector<WindowValues> background = windows(20, 5);
    ShapleyOptions options(std::size_t k) const {
        ShapleyOptions o;
        o.permutations = 50;
        o.seed = k;
        return o;
    }
};

void BM_AttributionsSerial(benchmark::State &state) {
    const AttributionFixture f;
    const auto scorer = model_scorer(f.m);
    for (auto _ : state) {
        std::vector<AttributionMatrix> out(f.targets.size());
        for (std::size_t k = 0; k < f.targets.size(); ++k) {
            out[k] = shapley_attributions(scorer, f.targets[k], f.background, f.options(k));
        }
        benchmark::DoNotOptimize(out);
    }
    set_counters(state, f.targets.size());
}

void BM_AttributionsParallel(benchmark::State &state) {
    const AttributionFixture f;
    const auto scorer = model_scorer(f.m);
    for (auto _ : state) {
        std::vector<AttributionMatrix> out(f.targets.size());
#pragma omp parallel for schedule(dynamic)
        for (std::size_t k = 0; k < f.targets.size(); ++k) {
            out[k] = shapley_attributions(scorer, f.targets[k], f.background, f.options(k));
        }
        benchmark::DoNotOptimize(out);
    }
    set_counters(state, f.targets.size());
}

void sizes(benchmark::internal::Benchmark *b) {
    for (int hidden : {16, 64}) {
        for (int n : {256, 4096}) {
            b->Args({hidden, n});
        }
    }
    b->ArgNames({"hidden", "windows"})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_ErrorsReference)->Apply(sizes);
BENCHMARK(BM_ErrorsKernel)->Apply(sizes);
BENCHMARK(BM_GradientReference)->Apply(sizes);
BENCHMARK(BM_GradientKernel)->Apply(sizes);
BENCHMARK(BM_AttributionsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttributionsParallel)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
