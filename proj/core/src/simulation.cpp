#include <pathmed/error.hpp>
#include <pathmed/rng.hpp>
#include <pathmed/simulation.hpp>

#include <random>

namespace pathmed {

namespace {

struct Covariates {
    std::vector<double> w1, w2, w3, w4, w5;
};

Covariates draw_covariates(std::size_t n, Rng& rng)
{
    Covariates c;
    std::normal_distribution<double> w1(20.0, 2.0), w4(30.0, 3.0);
    std::bernoulli_distribution bern(0.5);
    std::poisson_distribution<int> pois(1.2);
    c.w1.resize(n);
    c.w2.resize(n);
    c.w3.resize(n);
    c.w4.resize(n);
    c.w5.resize(n);
    for (auto& v : c.w1) v = w1(rng);
    for (auto& v : c.w2) v = bern(rng) ? 1.0 : 0.0;
    for (auto& v : c.w3) v = bern(rng) ? 1.0 : 0.0;
    for (auto& v : c.w4) v = w4(rng);
    for (auto& v : c.w5) v = static_cast<double>(pois(rng));
    return c;
}

std::vector<double> normals(std::size_t n, Rng& rng)
{
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

void push_covariates(std::vector<Column>& cols, Covariates c)
{
    cols.push_back({"W1", Role::covariate, VariableKind::continuous(), std::move(c.w1)});
    cols.push_back({"W2", Role::covariate, VariableKind::binary(), std::move(c.w2)});
    cols.push_back({"W3", Role::covariate, VariableKind::binary(), std::move(c.w3)});
    cols.push_back({"W4", Role::covariate, VariableKind::continuous(), std::move(c.w4)});
    cols.push_back({"W5", Role::covariate, VariableKind::continuous(), std::move(c.w5)});
}

} // namespace

std::string to_string(Generator g)
{
    return g == Generator::dgp1 ? "dgp1" : "dgp2";
}

Generator parse_generator(std::string_view text)
{
    if (text == "dgp1") return Generator::dgp1;
    if (text == "dgp2") return Generator::dgp2;
    throw ValidationError("unknown generator '" + std::string(text) + "' (expected dgp1 or dgp2)");
}

SimDataset gen_dgp1(std::size_t n, double delta, std::uint64_t seed, std::optional<int> bins)
{
    if (n < 10) throw ValidationError("DGP 1 needs n >= 10");
    Rng rng = make_rng(seed, {1});
    auto cov = draw_covariates(n, rng);
    const auto ea = normals(n, rng);
    const auto ez = normals(n, rng);
    const auto ey = normals(n, rng);

    SimDataset sim;
    sim.generator = Generator::dgp1;
    sim.seed = seed;
    sim.delta = delta;
    sim.shifted_exposure = "A";

    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = 1.0 + 0.5 * cov.w1[i] + ea[i];
    VariableKind a_kind = VariableKind::continuous();
    sim.a_shift.resize(n);
    if (bins) {
        Dataset tmp({{"A", Role::exposure, VariableKind::continuous(), a}, {"Y", Role::outcome, VariableKind::continuous(), a}});
        auto q = quantize_exposure(tmp, "A", *bins);
        const auto codes = q.data.values("A");
        a.assign(codes.begin(), codes.end());
        a_kind = VariableKind::quantized(*bins);
        const ShiftSpec spec{"A", delta, ShiftDirection::up, true, *bins};
        for (std::size_t i = 0; i < n; ++i) sim.a_shift[i] = apply_shift(a[i], spec, {1.0, static_cast<double>(*bins)});
        sim.quantization = std::move(q.map);
    } else {
        for (std::size_t i = 0; i < n; ++i) sim.a_shift[i] = a[i] + delta;
    }

    std::vector<double> z(n), y(n);
    sim.z_shift.resize(n);
    sim.y_shift_a.resize(n);
    sim.y_shift_az.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = 2.0 * a[i] + cov.w1[i] + ez[i];
        y[i] = 10.0 * z[i] + 40.0 * a[i] + ey[i];
        sim.z_shift[i] = 2.0 * sim.a_shift[i] + cov.w1[i] + ez[i];
        sim.y_shift_a[i] = 10.0 * z[i] + 40.0 * sim.a_shift[i] + ey[i];
        sim.y_shift_az[i] = 10.0 * sim.z_shift[i] + 40.0 * sim.a_shift[i] + ey[i];
    }

    std::vector<Column> cols;
    push_covariates(cols, std::move(cov));
    cols.push_back({"A", Role::exposure, a_kind, std::move(a)});
    cols.push_back({"Z", Role::mediator, VariableKind::continuous(), std::move(z)});
    cols.push_back({"Y", Role::outcome, VariableKind::continuous(), std::move(y)});
    sim.data = Dataset(std::move(cols));
    return sim;
}

Eigen::Matrix<double, 5, 5> dgp2_sigma()
{
    Eigen::Matrix<double, 5, 5> s;
    s << 1.0, 0.8, 0.3, 0.3, 0.2,
         0.8, 1.0, 0.3, 0.3, 0.2,
         0.3, 0.3, 1.0, 0.8, 0.2,
         0.3, 0.3, 0.8, 1.0, 0.2,
         0.2, 0.2, 0.2, 0.2, 1.0;
    return s;
}

SimDataset gen_dgp2(std::size_t n, std::uint64_t seed, double delta, const std::string& shifted_exposure)
{
    if (n < 50) throw ValidationError("DGP 2 needs n >= 50");
    int shifted = -1;
    for (int j = 0; j < 5; ++j) {
        if (shifted_exposure == "A" + std::to_string(j + 1)) shifted = j;
    }
    if (shifted < 0) throw ValidationError("DGP 2 has no exposure named '" + shifted_exposure + "'");

    Rng rng = make_rng(seed, {2});
    auto cov = draw_covariates(n, rng);
    const Eigen::Matrix<double, 5, 5> L = dgp2_sigma().llt().matrixL();
    std::normal_distribution<double> sn;
    std::vector<Eigen::Matrix<double, 5, 1>> noise(n);
    for (auto& e : noise) {
        Eigen::Matrix<double, 5, 1> u;
        for (int j = 0; j < 5; ++j) u(j) = sn(rng);
        e = L * u;
    }
    std::vector<std::vector<double>> ez(5);
    for (auto& v : ez) v = normals(n, rng);

    auto exposures = [&](std::size_t i) {
        const double w1 = cov.w1[i], w2 = cov.w2[i], w3 = cov.w3[i], w4 = cov.w4[i], w5 = cov.w5[i];
        Eigen::Matrix<double, 5, 1> m;
        m << 1.0 + 0.5 * w1, 2.0 * w2 * w3, 1.5 * w4 / 20.0 * w1 / 3.0, 3.0 * w4 / 2.0 * w2 / 3.0, 2.0 * w5;
        return Eigen::Matrix<double, 5, 1>(m + noise[i]);
    };
    auto mediators = [&](std::size_t i, const Eigen::Matrix<double, 5, 1>& a) {
        Eigen::Matrix<double, 5, 1> z;
        z << 2.0 * a(0) + cov.w1[i], 2.0 * a(1) + cov.w2[i], 5.0 * a(2) * a(3) + cov.w3[i], 3.0 * a(3) * cov.w4[i],
            4.0 * a(4) * cov.w5[i];
        for (int j = 0; j < 5; ++j) z(j) += ez[static_cast<std::size_t>(j)][i];
        return z;
    };
    auto outcome = [&](std::size_t i, const Eigen::Matrix<double, 5, 1>& a, const Eigen::Matrix<double, 5, 1>& z) {
        return 10.0 * z(0) + 40.0 * a(0) + 15.0 * cov.w3[i] - 6.0 * a(1) + 7.0 * z(1);
    };

    SimDataset sim;
    sim.generator = Generator::dgp2;
    sim.seed = seed;
    sim.delta = delta;
    sim.shifted_exposure = shifted_exposure;
    std::vector<std::vector<double>> A(5, std::vector<double>(n)), Z(5, std::vector<double>(n));
    std::vector<double> y(n);
    sim.a_shift.resize(n);
    sim.z_shift.resize(n);
    sim.y_shift_a.resize(n);
    sim.y_shift_az.resize(n);
    // Z_j is the mediator whose equation carries A_j.
    const int reported_z = shifted;
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = exposures(i);
        const auto z = mediators(i, a);
        for (int j = 0; j < 5; ++j) {
            A[static_cast<std::size_t>(j)][i] = a(j);
            Z[static_cast<std::size_t>(j)][i] = z(j);
        }
        y[i] = outcome(i, a, z);
        auto as = a;
        as(shifted) += delta;
        const auto zs = mediators(i, as);
        sim.a_shift[i] = as(shifted);
        sim.z_shift[i] = zs(reported_z);
        sim.y_shift_a[i] = outcome(i, as, z);
        sim.y_shift_az[i] = outcome(i, as, zs);
    }

    std::vector<Column> cols;
    push_covariates(cols, std::move(cov));
    for (int j = 0; j < 5; ++j) {
        cols.push_back({"A" + std::to_string(j + 1), Role::exposure, VariableKind::continuous(), std::move(A[static_cast<std::size_t>(j)])});
    }
    for (int j = 0; j < 5; ++j) {
        cols.push_back({"Z" + std::to_string(j + 1), Role::mediator, VariableKind::continuous(), std::move(Z[static_cast<std::size_t>(j)])});
    }
    cols.push_back({"Y", Role::outcome, VariableKind::continuous(), std::move(y)});
    sim.data = Dataset(std::move(cols));
    return sim;
}

GroundTruth ground_truth(const SimDataset& sim)
{
    const auto y = sim.data.values(sim.data.outcome());
    const auto n = static_cast<double>(y.size());
    double nde = 0.0, nie = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        nde += sim.y_shift_a[i] - y[i];
        nie += sim.y_shift_az[i] - sim.y_shift_a[i];
    }
    GroundTruth t;
    t.nde = nde / n;
    t.nie = nie / n;
    t.ate = t.nde + t.nie;
    return t;
}

GroundTruth ground_truth(Generator generator, double delta, std::size_t oracle_n, std::uint64_t seed, std::optional<int> bins)
{
    if (generator == Generator::dgp1) return ground_truth(gen_dgp1(oracle_n, delta, seed, bins));
    return ground_truth(gen_dgp2(oracle_n, seed, delta));
}

} // namespace pathmed
