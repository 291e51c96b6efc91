#include <benchmark/benchmark.h>

#include <pathmed/density.hpp>
#include <pathmed/learners.hpp>
#include <pathmed/rng.hpp>
#include <pathmed/simulation.hpp>

#include <random>

using namespace pathmed;

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed)
{
    Rng rng = make_rng(seed, {});
    std::normal_distribution<double> d;
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = d(rng);
    return X;
}

std::vector<std::string> names(Eigen::Index p)
{
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < p; ++j) out.push_back("x" + std::to_string(j));
    return out;
}

} // namespace

static void BM_GlmGaussian(benchmark::State& state)
{
    const auto n = state.range(0);
    const auto X = normal_matrix(n, 10, 1);
    const Eigen::VectorXd y = X * Eigen::VectorXd::LinSpaced(10, -1, 1) + normal_matrix(n, 1, 2);
    for (auto _ : state) benchmark::DoNotOptimize(fit_glm(X, names(10), y));
    state.SetComplexityN(n);
}
BENCHMARK(BM_GlmGaussian)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

static void BM_MarsForwardBackward(benchmark::State& state)
{
    const auto n = state.range(0);
    const auto X = normal_matrix(n, 6, 3);
    const Eigen::VectorXd y = (X.col(0).array() - 0.3).max(0.0) * 2.0 + X.col(1).array() * X.col(2).array() +
                              0.1 * normal_matrix(n, 1, 4).col(0).array();
    for (auto _ : state) benchmark::DoNotOptimize(fit_mars(X, names(6), y));
    state.SetComplexityN(n);
}
BENCHMARK(BM_MarsForwardBackward)->RangeMultiplier(2)->Range(250, 2000)->Unit(benchmark::kMillisecond);

static void BM_LassoPath(benchmark::State& state)
{
    const auto X = normal_matrix(state.range(0), 3, 5);
    const auto bases = hal_bases(X, HalOptions{});
    Eigen::MatrixXd B(X.rows(), static_cast<Eigen::Index>(bases.size()));
    std::vector<double> row(3);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (int j = 0; j < 3; ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        for (std::size_t s = 0; s < bases.size(); ++s) B(i, static_cast<Eigen::Index>(s)) = bases[s].eval(row);
    }
    const Eigen::VectorXd y = X.col(0).array().square().matrix() + normal_matrix(X.rows(), 1, 6);
    for (auto _ : state) {
        Eigen::VectorXd warm;
        for (double lambda : {0.5, 0.2, 0.1, 0.05, 0.02}) {
            auto r = lasso_cd(B, y, lambda, {}, warm.size() ? &warm : nullptr);
            warm = r.beta;
        }
        benchmark::DoNotOptimize(warm);
    }
}
BENCHMARK(BM_LassoPath)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_CategoricalPmf(benchmark::State& state)
{
    const auto sim = gen_dgp1(static_cast<std::size_t>(state.range(0)), 1.0, 7, 10);
    for (auto _ : state) benchmark::DoNotOptimize(fit_categorical_pmf(sim.data, "A", {"W1", "W2", "W3", "W4", "W5"}));
}
BENCHMARK(BM_CategoricalPmf)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
