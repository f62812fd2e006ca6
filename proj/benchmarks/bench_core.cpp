#include <benchmark/benchmark.h>

#include "epseg/epseg.hpp"

namespace {

using namespace epseg;

Tensor random_matrix(int r, int c, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({r, c});
    for (double& v : t.data) v = rng.normal();
    return t;
}

void BM_MatmulNN(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state) {
        Tape t;
        Var out = t.matmul(t.constant(a), t.constant(b));
        benchmark::DoNotOptimize(t.val(out).data.data());
    }
}
BENCHMARK(BM_MatmulNN)->Arg(64)->Arg(128)->Arg(256);

void BM_KnnGraph(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const Tensor x = random_matrix(m, 6, 3);
    for (auto _ : state) {
        std::vector<int> idx = knn_graph(x, 20);
        benchmark::DoNotOptimize(idx.data());
    }
}
BENCHMARK(BM_KnnGraph)->Arg(256)->Arg(512)->Arg(1024);

void BM_Encode(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    BackboneConfig cfg;
    ParamStore store;
    Rng rng(4);
    init_backbone(store, cfg, rng);
    const Tensor input = random_matrix(m, 6, 5);
    for (auto _ : state) {
        Tape t;
        Bound p = bind(t, store);
        Var out = encode(p, input, cfg);
        benchmark::DoNotOptimize(t.val(out).data.data());
    }
}
BENCHMARK(BM_Encode)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_EpisodeForwardBackward(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    CorpusPair corpus = build_synthetic_corpus(11, 10, 4, 2.0, m);
    Model model;
    model.cfg.n_p = 10;
    model.cfg.lgpe.d_text = 64;
    Rng init_rng(6);
    init_model(model, init_rng);
    Rng rng(7);
    Episode ep = sample_episode(corpus.train, 2, 1, rng);
    for (auto _ : state) {
        Tape t;
        Rng loss_rng(8);
        ForwardResult f = episode_forward(t, model, ep, 0.1, loss_rng, false, true);
        t.backward(f.total);
        benchmark::DoNotOptimize(t.grad(f.bound.vars[0]).data.data());
    }
}
BENCHMARK(BM_EpisodeForwardBackward)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_SpectrumProfile(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    CorpusPair corpus = build_synthetic_corpus(12, 6, 4, 2.0, m);
    const PointCloud& cloud = corpus.train.blocks.front();
    const Tensor feats = random_matrix(m, 64, 9);
    for (auto _ : state) {
        std::vector<double> p = spectrum_profile(feats, cloud);
        benchmark::DoNotOptimize(p.data());
    }
}
BENCHMARK(BM_SpectrumProfile)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
