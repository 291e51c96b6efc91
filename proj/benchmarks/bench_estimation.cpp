#include <benchmark/benchmark.h>

#include <pathmed/crossfit.hpp>
#include <pathmed/eif.hpp>
#include <pathmed/simulation.hpp>

using namespace pathmed;

namespace {

const Pathway kAZ{"A", "Z", Provenance::stage1_match, 0};

struct Fitted {
    Dataset est;
    NuisanceBundle bundle;
};

Fitted fitted(std::size_t n, std::optional<int> bins)
{
    const auto sim = gen_dgp1(n, 1.0, 11, bins);
    const auto plan = make_folds(sim.data.n(), 2, 3);
    ShiftSpec shift;
    shift.exposure = "A";
    if (bins) {
        shift.discrete = true;
        shift.n_bins = *bins;
    }
    const auto train = sim.data.subset(plan.parameter_ids(0));
    return {sim.data.subset(plan.estimation_ids(0)), fit_nuisances(train, kAZ, shift)};
}

} // namespace

// Continuous exposures integrate over a 4n-point grid per row; binned ones sum
// over the bins.
static void BM_ComponentsContinuous(benchmark::State& state)
{
    const auto f = fitted(static_cast<std::size_t>(state.range(0)), std::nullopt);
    const auto grid = make_mc_grid(4 * f.est.n(), 1);
    for (auto _ : state) benchmark::DoNotOptimize(compute_components(f.bundle, f.est, PhiMethod::integration, grid));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ComponentsContinuous)->RangeMultiplier(2)->Range(250, 1000)->Unit(benchmark::kMillisecond)->Complexity();

static void BM_ComponentsQuantized(benchmark::State& state)
{
    const auto f = fitted(static_cast<std::size_t>(state.range(0)), 10);
    const auto grid = make_mc_grid(4 * f.est.n(), 1);
    for (auto _ : state) benchmark::DoNotOptimize(compute_components(f.bundle, f.est, PhiMethod::integration, grid));
}
BENCHMARK(BM_ComponentsQuantized)->RangeMultiplier(2)->Range(250, 1000)->Unit(benchmark::kMillisecond);

static void BM_FitNuisances(benchmark::State& state)
{
    const auto sim = gen_dgp1(static_cast<std::size_t>(state.range(0)), 1.0, 12, 10);
    ShiftSpec shift;
    shift.exposure = "A";
    shift.discrete = true;
    shift.n_bins = 10;
    for (auto _ : state) benchmark::DoNotOptimize(fit_nuisances(sim.data, kAZ, shift));
}
BENCHMARK(BM_FitNuisances)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_CrossfitQuantized(benchmark::State& state)
{
    const auto sim = gen_dgp1(1000, 1.0, 13, 10);
    RunConfig cfg;
    cfg.n_bins.reset();
    cfg.var_sets = {kAZ};
    cfg.workers = static_cast<unsigned>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_crossfit(sim.data, cfg));
}
BENCHMARK(BM_CrossfitQuantized)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

static void BM_DiscoveryDgp2(benchmark::State& state)
{
    const auto sim = gen_dgp2(static_cast<std::size_t>(state.range(0)), 14);
    for (auto _ : state) benchmark::DoNotOptimize(discover_pathways(sim.data, DiscoveryConfig{}));
}
BENCHMARK(BM_DiscoveryDgp2)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);
