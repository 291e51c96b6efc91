#include <doctest.h>

#include "test_support.hpp"

#include <pathmed/density.hpp>
#include <pathmed/error.hpp>
#include <pathmed/stats.hpp>

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>

using namespace pathmed;
using namespace pathmed::stats;
using testing_support::column;
using testing_support::normal_vector;
using testing_support::uniform_vector;

namespace {

// A ~ N(1 + 0.5 W1, 1), W1 ~ N(20, 2^2).
Dataset exposure_data(std::uint64_t seed, Eigen::Index n)
{
    Rng rng = make_rng(seed, {});
    const Eigen::VectorXd w1 = normal_vector(rng, n, 20, 2);
    const Eigen::VectorXd a = (1.0 + 0.5 * w1.array()).matrix() + normal_vector(rng, n);
    return Dataset({column("W1", Role::covariate, w1), column("A", Role::exposure, a), column("Y", Role::outcome, a)});
}

ConditionalDensity fixed_normal(double mu, double sigma)
{
    ConditionalDensity cd;
    cd.target = "A";
    cd.form = DensityForm::hose;
    cd.mean_model.intercept = mu;
    cd.sigma = sigma;
    cd.support_min = -5;
    cd.support_max = 5;
    return cd;
}

ConditionalDensity uniform_pmf(int k)
{
    ConditionalDensity cd;
    cd.target = "A";
    cd.form = DensityForm::categorical_pmf;
    cd.n_classes = k;
    cd.logit_weights = Eigen::MatrixXd::Zero(k - 1, 1);
    return cd;
}

} // namespace

TEST_CASE("hose recovers the residual SD")
{
    const auto d = exposure_data(1, 2000);
    const auto cd = fit_hose(d, "A", {"W1"});
    CHECK(cd.sigma >= 0.9);
    CHECK(cd.sigma <= 1.1);
    CHECK(cd.form == DensityForm::hose);
}

TEST_CASE("hose with an independent target reduces to the marginal normal")
{
    Rng rng = make_rng(2, {});
    const Eigen::Index n = 1000;
    const Eigen::VectorXd w = normal_vector(rng, n);
    const Eigen::VectorXd a = normal_vector(rng, n, 3, 2);
    Dataset d({column("W", Role::covariate, w), column("A", Role::exposure, a), column("Y", Role::outcome, a)});
    const auto cd = fit_hose(d, "A", {"W"});
    for (double x : {-2.0, 0.0, 1.5}) {
        const std::vector<double> row{x};
        CHECK(cd.at(row).mu == doctest::Approx(a.mean()).epsilon(0.05));
    }
    CHECK(cd.sigma == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("hose density integrates to one")
{
    const auto d = exposure_data(3, 500);
    const auto cd = fit_hose(d, "A", {"W1"});
    Rng rng = make_rng(4, {});
    std::normal_distribution<double> w(20, 2);
    for (int r = 0; r < 100; ++r) {
        const std::vector<double> x{w(rng)};
        const auto row = cd.at(x);
        const double lo = row.mu - 6 * row.sigma, hi = row.mu + 6 * row.sigma;
        const double mass = boost::math::quadrature::gauss<double, 30>::integrate(
            [&](double a) { return eval_density(cd, a, x); }, lo, hi);
        CHECK(std::abs(mass - 1.0) <= 1e-6);
    }
}

TEST_CASE("hose rejects zero residual variance")
{
    Eigen::VectorXd w(20);
    for (int i = 0; i < 20; ++i) w(i) = i;
    const Eigen::VectorXd a = 2.0 * w;
    Dataset d({column("W", Role::covariate, w), column("A", Role::exposure, a), column("Y", Role::outcome, a)});
    DensityOptions glm_only;
    glm_only.library = {LearnerSpec::glm()};
    CHECK_THROWS_AS(fit_hose(d, "A", {"W"}, glm_only), EstimationError);
}

TEST_CASE("hese agrees with hose on homoscedastic data")
{
    const auto d = exposure_data(5, 2000);
    const auto hose = fit_hose(d, "A", {"W1"});
    const auto hese = fit_hese(d, "A", {"W1"});
    const auto w = d.values("W1");
    int close = 0;
    for (double x : w) {
        const std::vector<double> row{x};
        const double s = hese.at(row).sigma;
        CHECK(s > 0.0);
        if (std::abs(s / hose.sigma - 1.0) <= 0.2) ++close;
    }
    CHECK(close >= static_cast<int>(0.95 * static_cast<double>(w.size())));
}

TEST_CASE("hese resolves a two-group variance difference")
{
    Rng rng = make_rng(6, {});
    const Eigen::Index n = 2000;
    const Eigen::VectorXd x = normal_vector(rng, n);
    Eigen::VectorXd a(n);
    std::normal_distribution<double> e;
    for (Eigen::Index i = 0; i < n; ++i) a(i) = x(i) + (x(i) > 0 ? std::sqrt(2.0) : 1.0) * e(rng);
    Dataset d({column("X", Role::covariate, x), column("A", Role::exposure, a), column("Y", Role::outcome, a)});
    const auto cd = fit_hese(d, "A", {"X"});
    double pos = 0, neg = 0;
    int np = 0, nm = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::vector<double> row{x(i)};
        (x(i) > 0 ? pos : neg) += cd.at(row).sigma;
        (x(i) > 0 ? np : nm) += 1;
    }
    const double ratio = (pos / np) / (neg / nm);
    MESSAGE("hese sigma ratio " << ratio);
    CHECK(ratio >= 1.2);
    CHECK(ratio <= 1.7);
}

TEST_CASE("categorical pmf without conditioners returns class frequencies")
{
    Eigen::VectorXd codes(40);
    for (int i = 0; i < 40; ++i) codes(i) = i < 10 ? 1 : (i < 25 ? 2 : 3);
    Dataset d({column("A", Role::exposure, codes, VariableKind::categorical(3)), column("Y", Role::outcome, codes)});
    const auto cd = fit_categorical_pmf(d, "A", {});
    const auto row = cd.at(std::vector<double>{});
    CHECK(std::abs(row.pmf[0] - 10.0 / 40) <= 1e-8);
    CHECK(std::abs(row.pmf[1] - 15.0 / 40) <= 1e-8);
    CHECK(std::abs(row.pmf[2] - 15.0 / 40) <= 1e-8);
}

TEST_CASE("categorical pmf rows sum to one")
{
    const auto q = quantize_exposure(exposure_data(7, 2000), "A", 10);
    const auto cd = fit_categorical_pmf(q.data, "A", {"W1"});
    Rng rng = make_rng(8, {});
    std::normal_distribution<double> w(20, 4);
    for (int r = 0; r < 1000; ++r) {
        const auto row = cd.at(std::vector<double>{w(rng)});
        double s = 0;
        for (double p : row.pmf) {
            CHECK(p >= cd.floor);
            s += p;
        }
        CHECK(std::abs(s - 1.0) <= 1e-8);
    }
}

TEST_CASE("categorical pmf mode follows the Bayes rule")
{
    // Bayes rule under the generating law A | W1 ~ N(1 + 0.5 W1, 1) with the
    // empirical cut points. The bin containing the conditional mean is
    // reported too; with a conditional SD spanning several bins it is not
    // the modal bin in general. Single datasets vary a lot, so the rate is
    // averaged over five.
    double bayes_rate = 0.0, mean_rate = 0.0;
    const int datasets = 5;
    for (int s = 1; s <= datasets; ++s) {
        const auto q = quantize_exposure(exposure_data(static_cast<std::uint64_t>(s), 2000), "A", 10);
        const auto cd = fit_categorical_pmf(q.data, "A", {"W1"});
        const auto& cuts = q.map.cut_points;
        const auto w1 = q.data.values("W1");
        int bayes_hits = 0, mean_hits = 0;
        for (double x : w1) {
            const auto row = cd.at(std::vector<double>{x});
            const auto mode = std::max_element(row.pmf.begin(), row.pmf.end()) - row.pmf.begin() + 1;
            const double mu = 1.0 + 0.5 * x;
            int bayes = 1;
            double best = -1.0;
            for (int b = 1; b <= 10; ++b) {
                const double lo = b == 1 ? -INFINITY : cuts[static_cast<std::size_t>(b - 1)];
                const double hi = b == 10 ? INFINITY : cuts[static_cast<std::size_t>(b)];
                const double p = normal_cdf(hi - mu) - normal_cdf(lo - mu);
                if (p > best) {
                    best = p;
                    bayes = b;
                }
            }
            if (mode == bayes) ++bayes_hits;
            if (mode == q.map.assign(mu)) ++mean_hits;
        }
        bayes_rate += bayes_hits / static_cast<double>(w1.size()) / datasets;
        mean_rate += mean_hits / static_cast<double>(w1.size()) / datasets;
    }
    MESSAGE("modal bin agreement: Bayes rule " << bayes_rate << ", bin of the conditional mean " << mean_rate);
    CHECK(bayes_rate >= 0.6);
}

TEST_CASE("categorical pmf requires five observations per class")
{
    Eigen::VectorXd codes(12);
    codes << 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2;
    Dataset d({column("A", Role::exposure, codes, VariableKind::categorical(2)), column("Y", Role::outcome, codes)});
    CHECK_THROWS_AS(fit_categorical_pmf(d, "A", {}), ValidationError);
}

TEST_CASE("eval_density closed forms and floor")
{
    const auto cd = fixed_normal(1.0, 1.0);
    const std::vector<double> none;
    CHECK(eval_density(cd, 1.5, none) == doctest::Approx(0.3520653267642995).epsilon(1e-12));
    CHECK(eval_density(cd, 1e6, none) == kDensityFloor);
    const auto u = uniform_pmf(4);
    for (int c = 1; c <= 4; ++c) CHECK(eval_density(u, c, none) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(eval_density(u, 5, none) == kDensityFloor);
    CHECK(eval_density(u, 1.5, none) == kDensityFloor);
}

TEST_CASE("eval_shifted with delta zero is the density")
{
    const auto d = exposure_data(9, 300);
    const auto cd = fit_hese(d, "A", {"W1"});
    const auto q = quantize_exposure(d, "A", 10);
    const auto pmf = fit_categorical_pmf(q.data, "A", {"W1"});
    Rng rng = make_rng(10, {});
    std::normal_distribution<double> w(20, 2), a(11, 2);
    std::uniform_int_distribution<int> bin(1, 10);
    const ShiftSpec zero{"A", 0.0};
    const ShiftSpec zero_bins{"A", 0.0, ShiftDirection::up, true, 10};
    for (int r = 0; r < 1000; ++r) {
        const std::vector<double> x{w(rng)};
        const double av = a(rng);
        CHECK(eval_shifted(cd, av, x, zero, shift_bounds(cd)) == eval_density(cd, av, x));
        const int b = bin(rng);
        CHECK(eval_shifted(pmf, b, x, zero_bins, shift_bounds(pmf)) == eval_density(pmf, b, x));
    }
}

TEST_CASE("eval_shifted gives the law of the shifted exposure")
{
    const auto cd = fixed_normal(0.0, 1.0);
    const std::vector<double> none;
    const ShiftSpec up{"A", 1.0};
    const Bounds b{-5, 5};
    CHECK(eval_shifted(cd, 0.5, none, up, b) == doctest::Approx(normal_pdf(-0.5)).epsilon(1e-12));
    CHECK(eval_shifted(cd, 0.5, none, up, b) == doctest::Approx(0.3520653267642995).epsilon(1e-12));
    // In [u - delta, u) both the shifted and the unshifted mass land.
    CHECK(eval_shifted(cd, 4.5, none, up, b) == doctest::Approx(normal_pdf(3.5) + normal_pdf(4.5)));
    const ShiftSpec down{"A", 1.0, ShiftDirection::down};
    CHECK(eval_shifted(cd, 0.5, none, down, b) == doctest::Approx(normal_pdf(1.5)));

    // The shifted density integrates to one over the support.
    const auto mass = boost::math::quadrature::gauss<double, 30>::integrate(
                          [&](double a) { return eval_shifted(cd, a, none, up, b); }, -5.0, 4.0) +
                      boost::math::quadrature::gauss<double, 30>::integrate(
                          [&](double a) { return eval_shifted(cd, a, none, up, b); }, 4.0, 5.0);
    CHECK(mass == doctest::Approx(normal_cdf(5.0) - normal_cdf(-5.0)).epsilon(1e-6));
}

TEST_CASE("discrete shifts on a 10-bin exposure")
{
    ConditionalDensity cd = uniform_pmf(10);
    cd.logit_weights.col(0) = Eigen::VectorXd::LinSpaced(9, 0.1, 0.9);
    const std::vector<double> none;
    const auto row = cd.at(none);
    const ShiftSpec up{"A", 1.0, ShiftDirection::up, true, 10};
    const Bounds b{1, 10};
    CHECK(eval_at_shift(cd, 1.0, none, up, b) == row.pmf[1]);
    CHECK(eval_shifted(cd, 2.0, none, up, b) == row.pmf[0]);
    CHECK(eval_shifted(cd, 10.0, none, up, b) == doctest::Approx(row.pmf[8] + row.pmf[9]));
    CHECK(eval_shifted(cd, 1.0, none, up, b) == cd.floor);
    double total = 0;
    for (int c = 1; c <= 10; ++c) total += eval_shifted(cd, c, none, up, b);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("density_ratio closed forms and bounds")
{
    const auto cd = fixed_normal(0.0, 1.0);
    const std::vector<double> none;
    const Bounds b{-5, 5};
    CHECK(density_ratio(cd, 0.3, none, ShiftSpec{"A", 0.0}, b) == 1.0);
    CHECK(density_ratio(cd, 0.0, none, ShiftSpec{"A", 1.0}, b) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(density_ratio(cd, 0.0, none, ShiftSpec{"A", 1.0}, b) == doctest::Approx(0.6065306597).epsilon(1e-9));

    ConditionalDensity sharp = uniform_pmf(3);
    sharp.logit_weights.col(0) << 200.0, -200.0;
    const ShiftSpec up{"A", 1.0, ShiftDirection::up, true, 3};
    for (int c = 1; c <= 3; ++c) CHECK(density_ratio(sharp, c, none, up, {1, 3}) <= 1.0 / sharp.floor);

    auto rescaled = cd;
    rescaled.floor = 3e-11;
    for (double a : {-1.0, 0.0, 2.0}) {
        CHECK(density_ratio(cd, a, none, ShiftSpec{"A", 0.7}, b) == density_ratio(rescaled, a, none, ShiftSpec{"A", 0.7}, b));
    }
}

TEST_CASE("density JSON round trip")
{
    const auto d = exposure_data(11, 300);
    const auto q = quantize_exposure(d, "A", 5);
    for (const auto& cd : {fit_hose(d, "A", {"W1"}), fit_hese(d, "A", {"W1"}), fit_categorical_pmf(q.data, "A", {"W1"})}) {
        const auto back = ConditionalDensity::from_json(cd.to_json());
        CHECK(back.to_json() == cd.to_json());
        for (double x : {15.0, 20.0, 23.5}) {
            const std::vector<double> row{x};
            for (double a : {1.0, 2.0, 11.3}) CHECK(eval_density(back, a, row) == eval_density(cd, a, row));
        }
    }
}
