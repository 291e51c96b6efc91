#include <pathmed/crossfit.hpp>
#include <pathmed/density.hpp>
#include <pathmed/eif.hpp>
#include <pathmed/experiment.hpp>
#include <pathmed/learners.hpp>
#include <pathmed/rng.hpp>
#include <pathmed/simulation.hpp>
#include <pathmed/stats.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace pathmed;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

unsigned workers()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double coverage(const ExperimentResult& res, std::size_t n, const std::string& parameter, const std::string& method)
{
    int hit = 0, total = 0;
    for (const auto& r : res.records) {
        if (r.n != n || r.parameter != parameter) continue;
        if (!method.empty() && r.method != method) continue;
        ++total;
        hit += r.covered;
    }
    return total ? static_cast<double>(hit) / total : 0.0;
}

ExperimentResult quantized_experiment()
{
    ExperimentConfig cfg;
    cfg.bins = 10;
    cfg.iterations = 20;
    cfg.workers = workers();
    return run_experiment(cfg);
}

Outcome convergence(const ExperimentResult& res)
{
    std::vector<double> mab;
    std::ostringstream os;
    for (auto n : res.config.sample_sizes) {
        const auto* m = res.metric(n, "NDE", "integration");
        if (!m) return {false, "no NDE integration metrics at n=" + std::to_string(n)};
        mab.push_back(m->mean_abs_bias);
        os << "n=" << n << " mean|bias|=" << fmt("%.4f", m->mean_abs_bias) << "; ";
    }
    int up = 0;
    for (std::size_t i = 1; i < mab.size(); ++i) up += mab[i] > mab[i - 1];
    const double ratio = mab.back() / mab.front();
    os << "ratio=" << fmt("%.3f", ratio) << " (need <= 0.25), increases=" << up << " (allow 1)";
    if (!res.failures.empty()) os << ", excluded iterations=" << res.failures.size();
    return {up <= 1 && ratio <= 0.25, os.str()};
}

Outcome quantized_coverage(const ExperimentResult& res)
{
    const double nde = coverage(res, 1000, "NDE", "integration");
    const double nie = coverage(res, 1000, "NIE", "integration");
    const double te = coverage(res, 1000, "TE", "");
    const double nie_pr = coverage(res, 1000, "NIE", "pseudo_regression");
    std::ostringstream os;
    os << "n=1000 NDE-int=" << fmt("%.2f", nde) << " NIE-int=" << fmt("%.2f", nie) << " TE=" << fmt("%.2f", te)
       << " NIE-pr=" << fmt("%.2f", nie_pr);
    return {nde >= 0.90 && nie >= 0.85 && te >= 0.90 && nie_pr >= 0.70, os.str()};
}

Outcome continuous_report()
{
    ExperimentConfig cfg;
    cfg.sample_sizes = {1000};
    cfg.iterations = 20;
    cfg.workers = workers();
    const auto res = run_experiment(cfg);
    std::ostringstream os;
    os << "reported, not gated:";
    for (const auto& m : res.metrics) {
        os << " " << m.parameter << "-" << m.method << " mean|bias|=" << fmt("%.3f", m.mean_abs_bias)
           << " cov=" << fmt("%.2f", m.coverage) << ";";
    }
    os << " excluded=" << res.failures.size();
    return {true, os.str()};
}

Outcome detection()
{
    DetectionConfig cfg;
    cfg.iterations = 20;
    cfg.workers = workers();
    const auto res = run_detection(cfg);
    bool ok = res.failures.empty();
    std::ostringstream os;
    for (auto n : cfg.sample_sizes) {
        double true_min = 1.0, false_max = 0.0;
        std::string worst;
        for (const auto& r : res.rows) {
            if (r.n != n) continue;
            if (r.true_pathway) {
                true_min = std::min(true_min, r.mean_frequency);
                if (!r.pathway.direct_only() && r.runs_detected < 0.95 * r.runs) ok = false;
            } else if (r.mean_frequency > false_max) {
                false_max = r.mean_frequency;
                worst = r.pathway.key();
            }
        }
        for (const char* key : {"A1-Z1", "A2-Z2"}) {
            const auto* r = res.find(n, key);
            if (!r) ok = false;
        }
        ok = ok && false_max < true_min;
        os << "n=" << n << " true min=" << fmt("%.2f", true_min) << " false max=" << fmt("%.3f", false_max) << " ("
           << worst << "); ";
    }
    if (!res.failures.empty()) os << res.failures.size() << " failed runs";
    return {ok, os.str()};
}

bool rel_close(double a, double b, double tol = 1e-10)
{
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

Outcome identities()
{
    std::ostringstream os;
    bool ok = true;
    const auto sim = gen_dgp1(1500, 1.0, 4242, 10);
    const auto plan = make_folds(sim.data.n(), 2, 7);
    const auto train = sim.data.subset(plan.parameter_ids(0));
    const auto est = sim.data.subset(plan.estimation_ids(0));
    const Pathway az{"A", "Z", Provenance::stage1_match, 0};
    ShiftSpec shift;
    shift.exposure = "A";
    shift.discrete = true;
    shift.n_bins = 10;
    const auto b = fit_nuisances(train, az, shift);
    const auto c = compute_components(b, est, PhiMethod::integration, make_mc_grid(4 * est.n(), 9));
    const auto theta = estimate_theta_shift(c);
    double scale = 0.0;
    for (double v : theta.eif) scale += std::abs(v);
    scale /= static_cast<double>(theta.eif.size());
    const bool centered = std::abs(stats::mean(theta.eif)) <= 1e-10 * std::max(1.0, scale);
    ok = ok && centered;
    os << "centered=" << centered;

    const auto y = est.values("Y");
    const auto nde = direct_effect(theta, y, PhiMethod::integration);
    const auto in = total_effect_inputs(b, est);
    const auto fl = fit_fluctuation(in, false);
    const auto te = total_effect(in, fl);
    const auto nie = indirect_effect(te, nde);
    bool additive = rel_close(te.psi, nde.psi + nie.psi);
    for (std::size_t i = 0; i < te.eif.size(); ++i) additive = additive && rel_close(te.eif[i], nde.eif[i] + nie.eif[i]);
    ok = ok && additive;
    os << " TE=NDE+NIE=" << additive;

    const double score = tmle_score(in, fl);
    const bool scored = score <= 1e-8 * std::sqrt(stats::variance_sample(in.y));
    ok = ok && scored;
    os << " score=" << fmt("%.1e", score);

    // δ = 0 leaves the exposure law untouched.
    ShiftSpec zero = shift;
    zero.delta = 0.0;
    const auto b0 = fit_nuisances(train, az, zero);
    const auto w = est.matrix(b0.covariates);
    bool unchanged = true;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(w.rows(), 200); ++i) {
        std::vector<double> x(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index j = 0; j < w.cols(); ++j) x[static_cast<std::size_t>(j)] = w(i, j);
        const auto row = b0.g.at(x);
        for (int k = 1; k <= 10; ++k)
            unchanged = unchanged && shifted_density(row, k, zero, b0.exposure_bounds) == row.density(k);
    }
    const auto in0 = total_effect_inputs(b0, est);
    unchanged = unchanged && in0.q_obs == in0.q_shift;
    const auto t0 = ground_truth(Generator::dgp1, 0.0, 20000, 5);
    unchanged = unchanged && t0.nde == 0.0 && t0.nie == 0.0 && t0.ate == 0.0;
    ok = ok && unchanged;
    os << " zero-shift=" << unchanged;

    const auto t1 = ground_truth(Generator::dgp1, 1.0, 20000, 5);
    const bool oracle = t1.ate == t1.nde + t1.nie;
    ok = ok && oracle;
    os << " oracle ATE=NDE+NIE=" << oracle;
    return {ok, os.str()};
}

Outcome oracle_truth()
{
    const auto t = ground_truth(Generator::dgp1, 1.0, 100000);
    const bool ok = std::abs(t.nde - 40) <= 0.15 && std::abs(t.nie - 20) <= 0.15 && std::abs(t.ate - 60) <= 0.15;
    return {ok, "NDE=" + fmt("%.3f", t.nde) + " NIE=" + fmt("%.3f", t.nie) + " ATE=" + fmt("%.3f", t.ate)};
}

Eigen::VectorXd normals(Rng& rng, Eigen::Index n)
{
    std::normal_distribution<double> d;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
    return v;
}

Eigen::VectorXd uniforms(Rng& rng, Eigen::Index n)
{
    std::uniform_real_distribution<double> d;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
    return v;
}

Outcome learners()
{
    std::ostringstream os;
    Rng rng = make_rng(31, {});

    Eigen::MatrixXd X(50, 2);
    X.col(0) = normals(rng, 50);
    X.col(1) = uniforms(rng, 50);
    const Eigen::VectorXd line = (1.5 - 2.0 * X.col(0).array() + 0.25 * X.col(1).array()).matrix();
    const auto glm = fit_glm(X, {"a", "b"}, line);
    const double glm_err = (glm.predict(X) - line).cwiseAbs().maxCoeff();
    os << "glm max error=" << fmt("%.1e", glm_err);

    const Eigen::Index n = 150;
    Eigen::MatrixXd H(n, 3);
    for (int j = 0; j < 3; ++j) H.col(j) = normals(rng, n);
    const auto bases = hal_bases(H, HalOptions{});
    Eigen::MatrixXd B(n, static_cast<Eigen::Index>(bases.size()));
    std::vector<double> row(3);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) row[static_cast<std::size_t>(j)] = H(i, j);
        for (std::size_t s = 0; s < bases.size(); ++s) B(i, static_cast<Eigen::Index>(s)) = bases[s].eval(row);
    }
    const Eigen::VectorXd hy = H.col(0).array().square().matrix() + normals(rng, n);
    const double lambda = 0.02;
    const auto lasso = lasso_cd(B, hy, lambda);
    const Eigen::VectorXd r = (hy - B * lasso.beta).array() - lasso.intercept;
    const Eigen::VectorXd grad = B.transpose() * r / static_cast<double>(n);
    double kkt = 0.0;
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
        const double v = lasso.beta(j) == 0.0 ? std::max(0.0, std::abs(grad(j)) - lambda)
                                              : std::abs(grad(j) - lambda * (lasso.beta(j) > 0 ? 1.0 : -1.0));
        kkt = std::max(kkt, v);
    }
    os << " lasso KKT violation=" << fmt("%.1e", kkt);

    Eigen::MatrixXd U(500, 1);
    U.col(0) = uniforms(rng, 500);
    const Eigen::VectorXd hinge = (U.col(0).array() - 0.5).max(0.0).matrix() + 0.01 * normals(rng, 500);
    const auto mars = fit_mars(U, {"x"}, hinge);
    double knot = std::nan("");
    for (const auto& t : mars.terms) {
        if (t.basis.degree() != 1) continue;
        const double k = t.basis.factors[0].knot;
        if (std::isnan(knot) || std::abs(k - 0.5) < std::abs(knot - 0.5)) knot = k;
    }
    const bool knot_ok = knot >= 0.4 && knot <= 0.6;
    os << " mars knot=" << fmt("%.3f", knot);

    const auto sim = gen_dgp1(2000, 1.0, 32, 10);
    const auto pmf = fit_categorical_pmf(sim.data, "A", {"W1"});
    double worst = 0.0;
    std::normal_distribution<double> w1(20, 4);
    for (int i = 0; i < 1000; ++i) {
        const auto p = pmf.at(std::vector<double>{w1(rng)});
        double s = 0.0;
        for (double v : p.pmf) s += v;
        worst = std::max(worst, std::abs(s - 1.0));
    }
    os << " pmf row-sum error=" << fmt("%.1e", worst);
    return {glm_err <= 1e-10 && kkt <= 1e-6 && knot_ok && worst <= 1e-8, os.str()};
}

Outcome determinism()
{
    const unsigned many = std::max(4u, workers());
    std::ostringstream os;
    bool ok = true;

    const auto sim = gen_dgp1(400, 1.0, 77);
    RunConfig run;
    run.k = 5;
    run.seed = 11;
    run.workers = 1;
    const auto a = run_crossfit(sim.data, run).results_csv();
    run.workers = many;
    const auto b = run_crossfit(sim.data, run).results_csv();
    ok = ok && a == b;
    os << "analysis csv " << (a == b ? "identical" : "differs");

    ExperimentConfig ec;
    ec.bins = 10;
    ec.sample_sizes = {250};
    ec.iterations = 3;
    ec.oracle_n = 10000;
    ec.workers = 1;
    const auto e1 = run_experiment(ec);
    ec.workers = many;
    const auto e2 = run_experiment(ec);
    const bool same_exp = e1.records_csv() == e2.records_csv() && e1.bias_csv() == e2.bias_csv();
    ok = ok && same_exp;
    os << ", simulation csv " << (same_exp ? "identical" : "differs");

    DetectionConfig dc;
    dc.sample_sizes = {250};
    dc.iterations = 3;
    dc.run.k = 4;
    dc.workers = 1;
    const auto d1 = run_detection(dc).to_csv();
    dc.workers = many;
    const auto d2 = run_detection(dc).to_csv();
    ok = ok && d1 == d2;
    os << ", detection csv " << (d1 == d2 ? "identical" : "differs");
    os << " (1 vs " << many << " workers)";
    return {ok, os.str()};
}

Outcome guarded(const std::function<Outcome()>& f)
{
    try {
        return f();
    } catch (const std::exception& e) {
        return {false, std::string("threw: ") + e.what()};
    }
}

} // namespace

int main()
{
    using clock = std::chrono::steady_clock;
    std::optional<ExperimentResult> quantized;
    std::string quantized_error;
    // Convergence and coverage share one experiment, run by whichever asks first.
    const auto need_quantized = [&](Outcome (*f)(const ExperimentResult&)) {
        return [&, f] {
            if (!quantized && quantized_error.empty()) {
                try {
                    quantized = quantized_experiment();
                } catch (const std::exception& e) {
                    quantized_error = e.what();
                }
            }
            return quantized ? f(*quantized) : Outcome{false, "experiment threw: " + quantized_error};
        };
    };

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"quantized convergence", need_quantized(convergence)},
        {"quantized coverage", need_quantized(quantized_coverage)},
        {"continuous report", continuous_report},
        {"pathway detection", detection},
        {"exact identities", identities},
        {"ground-truth oracle", oracle_truth},
        {"learner correctness", learners},
        {"determinism", determinism},
    };

    int failed = 0;
    int id = 0;
    for (const auto& [name, f] : criteria) {
        const auto start = clock::now();
        const auto out = guarded(f);
        const double secs = std::chrono::duration<double>(clock::now() - start).count();
        failed += !out.pass;
        std::printf("[%s] %d %s: %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", ++id, name, out.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
