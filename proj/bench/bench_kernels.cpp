// Serial reference kernels against their OpenMP counterparts.
// Thread count comes from OMP_NUM_THREADS.

#include "ensemble/stacking.hpp"
#include "ensemble/synthetic.hpp"
#include "ensemble/theory.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace ensemble;

namespace {

int workers() { return std::max(1, omp_get_max_threads()); }

const Cohort& cohort() {
    static const Cohort c = generate_cohort(benchmark_spec());
    return c;
}

const BaseBank& bank() {
    static const BaseBank b = pretrain_bases(cohort(), cohort().subject_ids().front(), Penalty::l2, workers());
    return b;
}

MonteCarloConfig mc_config() {
    MonteCarloConfig c;
    c.n_subjects = 14;
    c.n_samples = 100;
    c.n_features = 100;
    c.n_trials = 50;
    return c;
}

void BM_TrainBases_Serial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(reference::train_subject_bases(cohort(), {}));
}

void BM_TrainBases_Parallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(train_subject_bases(cohort(), {}, workers()));
}

void BM_Stack_Serial(benchmark::State& state) {
    const Matrix X = cohort().subjects().front().as_matrix();
    const BaseBank& b = bank();
    for (auto _ : state) benchmark::DoNotOptimize(reference::stack_features(b, X, StackEncoding::one_hot_labels));
}

void BM_Stack_Parallel(benchmark::State& state) {
    const Matrix X = cohort().subjects().front().as_matrix();
    const BaseBank& b = bank();
    for (auto _ : state) benchmark::DoNotOptimize(stack_features(b, X, StackEncoding::one_hot_labels, workers()));
}

void BM_MonteCarlo_Serial(benchmark::State& state) {
    const auto c = mc_config();
    for (auto _ : state) benchmark::DoNotOptimize(reference::monte_carlo_ensemble_error(c));
}

void BM_MonteCarlo_Parallel(benchmark::State& state) {
    const auto c = mc_config();
    for (auto _ : state) benchmark::DoNotOptimize(monte_carlo_ensemble_error(c, workers()));
}

void BM_Forest(benchmark::State& state) {
    const auto& ds = cohort().subjects().front();
    const Matrix X = ds.as_matrix();
    ForestConfig cfg;
    cfg.n_trees = 200;
    const int w = state.range(0) == 0 ? 1 : workers();
    for (auto _ : state) benchmark::DoNotOptimize(fit_forest(X, ds.labels, cohort().n_classes(), cfg, w));
}

}  // namespace

BENCHMARK(BM_TrainBases_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainBases_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Stack_Serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Stack_Parallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MonteCarlo_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarlo_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forest)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
