#include <specalign/align.hpp>
#include <specalign/dataset.hpp>
#include <specalign/graph.hpp>
#include <specalign/metrics.hpp>
#include <specalign/net.hpp>
#include <specalign/spectral.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace specalign;

namespace {

Matrix moons(Eigen::Index n) { return generate_toy({ToyKind::kThreeMoons, n, 0.05, 1}).features(); }

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Seed seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

GraphConfig knn(int k) {
  GraphConfig g;
  g.k_neighbors = k;
  return g;
}

void BM_BuildGraph(benchmark::State& state) {
  const Matrix x = moons(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(x, knn(15)));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BuildGraph)->RangeMultiplier(2)->Range(128, 1024)->Complexity();

void BM_EigSymmetric(benchmark::State& state) {
  const Matrix a = laplacian(build_graph(moons(state.range(0)), knn(15)), LaplacianKind::kSymNormalized).matrix;
  for (auto _ : state) benchmark::DoNotOptimize(eig_symmetric(a, 4));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EigSymmetric)->RangeMultiplier(2)->Range(128, 1024)->Complexity();

void BM_EmbedBatch(benchmark::State& state) {
  const Graph g = build_graph(moons(256), knn(15));
  for (auto _ : state) benchmark::DoNotOptimize(embed(g, 3, {LaplacianKind::kSymNormalized, false, 0.0}));
}
BENCHMARK(BM_EmbedBatch);

void BM_FitAffine(benchmark::State& state) {
  const Eigen::Index k = state.range(0);
  const Matrix src = gaussian(30, k, 1), dst = gaussian(30, k, 2);
  for (auto _ : state) benchmark::DoNotOptimize(fit_affine(src, dst));
}
BENCHMARK(BM_FitAffine)->Arg(2)->Arg(3)->Arg(10);

void BM_FitAffineRansac(benchmark::State& state) {
  const Matrix src = gaussian(30, 3, 1);
  Matrix dst = src * 2.0;
  dst.topRows(6).array() += 5.0;
  RansacConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fit_affine_ransac(src, dst, cfg));
}
BENCHMARK(BM_FitAffineRansac);

void BM_MlpStep(benchmark::State& state) {
  MlpParams p = init_mlp(make_mlp_spec(2, static_cast<int>(state.range(0)), 3, 5, 1));
  const Matrix x = gaussian(256, 2, 3), target = gaussian(256, 3, 4);
  for (auto _ : state) {
    const auto cache = forward(p, x);
    adam_step(p, backward(p, cache, mse_loss_grad(cache.output, target).grad), {});
  }
}
BENCHMARK(BM_MlpStep)->Arg(64)->Arg(256);

void BM_KMeans(benchmark::State& state) {
  const Matrix x = moons(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(x, {3, 10, 300, 1}));
}
BENCHMARK(BM_KMeans)->Arg(1800);

void BM_KuhnMunkres(benchmark::State& state) {
  const Matrix cost = gaussian(state.range(0), state.range(0), 5);
  for (auto _ : state) benchmark::DoNotOptimize(kuhn_munkres(cost));
}
BENCHMARK(BM_KuhnMunkres)->Arg(10)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
