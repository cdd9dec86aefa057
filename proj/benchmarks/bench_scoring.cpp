#include <benchmark/benchmark.h>

#include "rangead/rangead.hpp"

using namespace rangead;

namespace {

struct Fixture {
    Dataset train;
    Dataset test;
    MlpModel model;
    ActivationRanges ranges;
    KnnDetector knn;
};

// Untrained model: inference cost does not depend on the weights.
Fixture make_fixture(std::size_t width, std::size_t n_test) {
    SynthParams p;
    p.n_per_class = 500;
    p.dims = 50;
    p.anomaly_n = n_test;
    const Dataset data = synth_blobs(p);
    const Split split = split_protocol(data, 0.2, 1);
    const std::size_t hidden[] = {width, width};
    MlpModel model = init_model(mlp_specs(data.dims(), hidden, data.num_classes()), 3);
    const auto layers = all_hidden_layers(model);
    ActivationRanges ranges = extract_ranges(model, split.prep, layers, Quantile{0.01});
    KnnDetector knn = knn_fit(split.train, 5);
    return {split.train, split.test, std::move(model), std::move(ranges), std::move(knn)};
}

const Fixture& fixture() {
    static const Fixture f = make_fixture(500, 2000);
    return f;
}

void BM_RangeScoreBatch(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) {
        auto report = score_batch(f.model, f.ranges, f.test.features);
        benchmark::DoNotOptimize(report.scores.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.test.size()));
}
BENCHMARK(BM_RangeScoreBatch)->Unit(benchmark::kMillisecond);

void BM_KnnScoreBatch(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) {
        auto scores = knn_score_batch(f.knn, f.test.features);
        benchmark::DoNotOptimize(scores.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.test.size()));
}
BENCHMARK(BM_KnnScoreBatch)->Unit(benchmark::kMillisecond);

void BM_ExtractRanges(benchmark::State& state) {
    const auto& f = fixture();
    const auto layers = all_hidden_layers(f.model);
    for (auto _ : state) {
        auto ranges = extract_ranges(f.model, f.train, layers, Quantile{0.01});
        benchmark::DoNotOptimize(ranges.intervals().data());
    }
}
BENCHMARK(BM_ExtractRanges)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
    const auto& f = fixture();
    const auto width = static_cast<std::size_t>(state.range(0));
    const std::size_t hidden[] = {width, width};
    const MlpModel initial = init_model(mlp_specs(f.train.dims(), hidden, f.train.num_classes()), 5);
    for (auto _ : state) {
        auto trained = train(initial, f.train, {.epochs = 1, .learning_rate = 0.001, .batch_size = 128, .seed = 0});
        benchmark::DoNotOptimize(trained.layers().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.train.size()));
}
BENCHMARK(BM_TrainEpoch)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_AucRoc(benchmark::State& state) {
    const auto& f = fixture();
    const auto scores = score_batch(f.model, f.ranges, f.test.features).real_scores();
    for (auto _ : state) benchmark::DoNotOptimize(auc_roc(scores, f.test.anomaly_flags));
}
BENCHMARK(BM_AucRoc);

}  // namespace

BENCHMARK_MAIN();
