#include <doctest.h>

#include "test_support.hpp"

#include <pathmed/crossfit.hpp>
#include <pathmed/error.hpp>
#include <pathmed/simulation.hpp>
#include <pathmed/stats.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace pathmed;
using testing_support::column;

namespace {

/// Standard normal exposure density with no conditioners.
ConditionalDensity standard_normal()
{
    ConditionalDensity g;
    g.target = "A";
    g.form = DensityForm::hose;
    g.sigma = 1.0;
    g.support_min = -10.0;
    g.support_max = 10.0;
    g.mean_model.learner = "glm";
    return g;
}

Dataset exposure_rows(const std::vector<double>& a)
{
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    return Dataset({column("A", Role::exposure, v), column("Y", Role::outcome, v)});
}

ShiftSpec up(double delta)
{
    ShiftSpec s;
    s.exposure = "A";
    s.delta = delta;
    return s;
}

RunConfig quick_config()
{
    RunConfig cfg;
    cfg.k = 3;
    cfg.seed = 11;
    cfg.var_sets = {Pathway{"A", "Z", Provenance::stage1_match, -1}};
    return cfg;
}

} // namespace

TEST_CASE("delta adaptation")
{
    // Under N(0, 1) an up shift has ratio exp(delta a - delta^2 / 2).
    const double hot = std::log(60.0) + 0.5;
    const auto rows = exposure_rows({-1.0, 0.0, 0.5, hot});
    const auto g = standard_normal();

    const auto cool = adapt_delta(g, exposure_rows({-1.0, 0.0, 0.5, 1.0}), up(1.0), 50.0, 0.1);
    CHECK(cool.delta == 1.0);
    CHECK(cool.iterations == 0);

    const auto one = adapt_delta(g, rows, up(1.0), 50.0, 0.1);
    CHECK(one.delta == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(one.iterations == 1);
    CHECK(one.max_ratio <= 50.0);
    CHECK(adapt_delta(g, rows, up(0.9), 50.0, 0.1).iterations == 0);

    const auto inf = adapt_delta(g, rows, up(1.0), std::numeric_limits<double>::infinity(), 0.1);
    CHECK(inf.delta == 1.0);
    CHECK(inf.iterations == 0);

    double previous = 0.0;
    for (double lambda : {2.0, 5.0, 20.0, 50.0, 100.0}) {
        const double d = adapt_delta(g, rows, up(1.0), lambda, 0.1).delta;
        CHECK(d >= previous);
        previous = d;
    }

    ShiftSpec binned = up(1.0);
    binned.discrete = true;
    binned.n_bins = 10;
    CHECK(adapt_delta(g, rows, binned, 50.0, 0.1).delta == 1.0);
    CHECK_THROWS_AS(adapt_delta(g, rows, up(1.0), 1.0, 0.1), ValidationError);
    CHECK_THROWS_AS(adapt_delta(g, rows, up(1.0), 50.0, 1.0), ValidationError);
}

TEST_CASE("run configuration validation")
{
    RunConfig cfg;
    cfg.k = 1;
    try {
        cfg.validate();
        FAIL("K = 1 accepted");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("K ≥ 2") != std::string::npos);
    }
    cfg = {};
    cfg.lambda = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.epsilon_frac = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.phi_methods.clear();
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.discover_only = true;
    CHECK_NOTHROW(cfg.validate());

    cfg = {};
    cfg.deltas["A2"] = 0.5;
    CHECK(cfg.delta_for("A2") == 0.5);
    CHECK(cfg.delta_for("A1") == 1.0);
}

TEST_CASE("stacked pooling")
{
    EifComponents c1, c2;
    c1.dY = {1.0, 2.0};
    c1.dA = {0.0, 0.0};
    c1.dZW = {3.0, 3.0};
    c2 = c1;
    const std::vector<double> y1{1.0, 2.0}, y2{1.0, 2.0};
    const std::vector<const EifComponents*> same{&c1, &c2};
    const std::vector<const std::vector<double>*> ys{&y1, &y2};
    const auto e1 = direct_effect(estimate_theta_shift(c1), y1, PhiMethod::integration);
    const auto pooled = pool_direct_effect(same, ys, PhiMethod::integration);
    CHECK(pooled.psi == doctest::Approx(e1.psi).epsilon(1e-15));
    CHECK(pooled.n == 4);

    c2.dY = {10.0, 20.0};
    const auto p2 = pool_direct_effect(same, ys, PhiMethod::integration);
    // (sum c1 + sum c2) / 4 - mean(y)
    CHECK(p2.psi == doctest::Approx((9.0 + 36.0) / 4.0 - 1.5).epsilon(1e-15));

    const std::vector<const std::vector<double>*> short_y{&y1};
    CHECK_THROWS_AS(pool_direct_effect(same, short_y, PhiMethod::integration), ValidationError);
}

TEST_CASE("fixed var_sets skip discovery and estimate in every fold")
{
    const auto sim = gen_dgp1(600, 1.0, 201, 10);
    const auto cfg = quick_config();
    const auto res = run_crossfit(sim.data, cfg);
    REQUIRE(res.estimated);
    REQUIRE(res.pathways.size() == 1);
    const auto& p = res.pathways[0];
    CHECK(p.pathway.key() == "A-Z");
    CHECK(p.folds == std::vector<int>{0, 1, 2});
    CHECK_FALSE(p.low_consistency);
    CHECK(res.discovery.frequency("A-Z") == 1.0);
    CHECK(p.fold_deltas == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(p.per_fold.size() == 15);
    CHECK(p.pooled.size() == 5);

    std::size_t fold_n = 0;
    double weighted_nde = 0.0;
    for (const auto& e : p.per_fold) {
        if (e.type() == "NDE-integration") {
            fold_n += e.n;
            weighted_nde += e.psi * static_cast<double>(e.n);
        }
    }
    CHECK(fold_n == 600);
    const auto* nde = res.find("A-Z", EffectKind::nde, EstimationMethod::integration);
    const auto* nie = res.find("A-Z", EffectKind::nie, EstimationMethod::integration);
    const auto* te = res.find("A-Z", EffectKind::te, EstimationMethod::tmle);
    REQUIRE(nde);
    REQUIRE(nie);
    REQUIRE(te);
    CHECK(nde->n == 600);
    CHECK(nde->psi == doctest::Approx(weighted_nde / 600.0).epsilon(1e-12));
    CHECK(te->psi - nde->psi - nie->psi == 0.0);
    for (std::size_t i = 0; i < te->eif.size(); ++i) REQUIRE(te->eif[i] - nde->eif[i] == nie->eif[i]);
    CHECK(res.find("A-Z", EffectKind::nde, EstimationMethod::pseudo_regression, "2"));

    const auto csv = res.results_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
    CHECK(csv.find(",pooled,TE-tmle,A-Z,600,1\n") != std::string::npos);

    for (const auto& f : res.folds) {
        REQUIRE(f.pathways.size() == 1);
        CHECK(f.pathways[0].fold == f.fold);
    }
}

TEST_CASE("discover_only returns the discovery report alone")
{
    const auto sim = gen_dgp2(400, 202);
    RunConfig cfg;
    cfg.k = 3;
    cfg.discover_only = true;
    const auto res = run_crossfit(sim.data, cfg);
    CHECK_FALSE(res.estimated);
    CHECK(res.pathways.empty());
    CHECK(res.discovery.k == 3);
    CHECK(!res.discovery.frequencies.empty());
    CHECK(res.results_csv() == "psi,variance,se,lower_ci,upper_ci,p_value,fold,type,variables,n,delta\n");
}

TEST_CASE("continuous exposures are binned before the split")
{
    const auto sim = gen_dgp1(300, 1.0, 203);
    RunConfig cfg;
    std::map<std::string, QuantizationMap> maps;
    const auto d = prepare_exposures(sim.data, cfg, &maps);
    CHECK(d.column("A").kind.kind == Kind::quantized);
    CHECK(maps.at("A").n_bins == 10);
    cfg.n_bins.reset();
    CHECK(prepare_exposures(sim.data, cfg).column("A").kind.kind == Kind::continuous);
}

TEST_CASE("estimation rows never reach their own fold's fits")
{
    const auto sim = gen_dgp1(450, 1.0, 204);
    auto cfg = quick_config();
    cfg.n_bins.reset();
    const FoldPlan plan = make_folds(sim.data.n(), 3, 5);

    auto y = std::vector<double>(sim.data.values("Y").begin(), sim.data.values("Y").end());
    for (auto i : plan.estimation_ids(0)) y[i] = 1e6;
    auto col = sim.data.column("Y");
    col.values = y;
    const Dataset poisoned = sim.data.with_column(col);

    const auto clean = run_fold(sim.data, plan, 0, cfg, true);
    const auto dirty = run_fold(poisoned, plan, 0, cfg, true);
    const auto& a = clean.bundles.at("A-Z");
    const auto& b = dirty.bundles.at("A-Z");
    CHECK(a.Q.to_json() == b.Q.to_json());
    CHECK(a.Q_total.to_json() == b.Q_total.to_json());
    CHECK(a.g.to_json() == b.g.to_json());
    CHECK(a.e.to_json() == b.e.to_json());
    CHECK(a.r.to_json() == b.r.to_json());
    REQUIRE(a.phi);
    CHECK(a.phi->to_json() == b.phi->to_json());
    CHECK(clean.estimates[0].delta == dirty.estimates[0].delta);

    // Discovery sees only T_k as well.
    cfg.var_sets.clear();
    cfg.discover_only = true;
    const auto d1 = run_fold(sim.data, plan, 0, cfg);
    const auto d2 = run_fold(poisoned, plan, 0, cfg);
    REQUIRE(d1.pathways.size() == d2.pathways.size());
    for (std::size_t i = 0; i < d1.pathways.size(); ++i) CHECK(d1.pathways[i].key() == d2.pathways[i].key());
}

TEST_CASE("a pathway from a single fold is pooled but flagged")
{
    const auto sim = gen_dgp1(450, 1.0, 205, 10);
    const auto cfg = quick_config();
    const FoldPlan plan = make_folds(sim.data.n(), 3, 6);
    std::vector<FoldResult> folds{run_fold(sim.data, plan, 1, cfg)};
    const auto pooled = pool_estimates(folds, 3, false);
    REQUIRE(pooled.size() == 1);
    CHECK(pooled[0].low_consistency);
    CHECK(pooled[0].folds == std::vector<int>{1});
    CHECK(pooled[0].pooled.size() == 5);
}

TEST_CASE("results do not depend on the worker count")
{
    const auto sim = gen_dgp1(450, 1.0, 206);
    auto cfg = quick_config();
    cfg.n_bins.reset();
    cfg.workers = 1;
    const auto serial = run_crossfit(sim.data, cfg);
    cfg.workers = 3;
    const auto parallel = run_crossfit(sim.data, cfg);
    CHECK(serial.results_csv() == parallel.results_csv());
    CHECK(serial.discovery.to_csv() == parallel.discovery.to_csv());
}

TEST_CASE("binary exposures are refused for estimation")
{
    Rng rng = make_rng(9, {});
    const auto w = testing_support::normal_vector(rng, 60);
    Eigen::VectorXd a(60);
    for (Eigen::Index i = 0; i < 60; ++i) a(i) = w(i) > 0 ? 1.0 : 0.0;
    const Dataset d({column("W", Role::covariate, w), column("A", Role::exposure, a, VariableKind::binary()),
                     column("Y", Role::outcome, w)});
    RunConfig cfg;
    cfg.k = 2;
    CHECK_THROWS_AS(run_crossfit(d, cfg), ValidationError);
    cfg.var_sets = {Pathway{"W", "", Provenance::direct_only, -1}};
    cfg.discover_only = true;
    CHECK_THROWS_AS(run_crossfit(d, cfg), ValidationError);
}
