#include <pathmed/error.hpp>
#include <pathmed/experiment.hpp>
#include <pathmed/parallel.hpp>
#include <pathmed/rng.hpp>
#include <pathmed/stats.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace pathmed {

namespace {

constexpr std::uint64_t kDataStream = 0x64617461;
constexpr std::uint64_t kEstimatorStream = 0x65737469;

std::uint64_t job_seed(std::uint64_t master, std::uint64_t stream, std::size_t n, int iteration)
{
    return derive_seed(master, {stream, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(iteration)});
}

SimDataset generate(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed)
{
    if (cfg.generator == Generator::dgp1) return gen_dgp1(n, cfg.delta, seed, cfg.bins);
    return gen_dgp2(n, seed, cfg.delta);
}

double truth_for(const GroundTruth& t, const std::string& parameter)
{
    if (parameter == "NDE") return t.nde;
    if (parameter == "NIE") return t.nie;
    if (parameter == "TE") return t.ate;
    throw ValidationError("unknown parameter '" + parameter + "'");
}

EstimateRecord to_record(const EffectEstimate& e)
{
    return {to_string(e.kind), to_string(e.method), e.psi, e.se, e.ci_lower, e.ci_upper};
}

} // namespace

Estimator crossfit_estimator(RunConfig base, std::string pathway)
{
    return [base = std::move(base), pathway = std::move(pathway)](const SimDataset& sim, std::uint64_t seed) {
        RunConfig cfg = base;
        cfg.seed = seed;
        const auto res = run_crossfit(sim.data, cfg);
        const auto it = std::find_if(res.pathways.begin(), res.pathways.end(),
                                     [&](const PathwayResult& p) { return p.pathway.key() == pathway; });
        if (it == res.pathways.end()) throw EstimationError("pathway " + pathway + " was not estimated");
        std::vector<EstimateRecord> out;
        for (const auto& e : it->pooled) out.push_back(to_record(e));
        return out;
    };
}

Estimator oracle_estimator(GroundTruth truth)
{
    return [truth](const SimDataset&, std::uint64_t) {
        std::vector<EstimateRecord> out;
        for (const char* p : {"NDE", "NIE", "TE"}) {
            const double v = truth_for(truth, p);
            out.push_back({p, "oracle", v, 0.0, v, v});
        }
        return out;
    };
}

GroundTruth experiment_truth(const ExperimentConfig& cfg)
{
    return ground_truth(cfg.generator, cfg.delta, cfg.oracle_n, derive_seed(cfg.seed, {0x6f7261}), cfg.bins);
}

std::vector<MetricRow> compute_metrics(const std::vector<IterationRecord>& records)
{
    struct Group {
        std::vector<const IterationRecord*> rows;
    };
    std::vector<std::tuple<std::size_t, std::string, std::string>> order;
    std::map<std::tuple<std::size_t, std::string, std::string>, Group> groups;
    for (const auto& r : records) {
        const auto key = std::make_tuple(r.n, r.parameter, r.method);
        auto [it, fresh] = groups.try_emplace(key);
        if (fresh) order.push_back(key);
        it->second.rows.push_back(&r);
    }

    std::vector<MetricRow> out;
    for (const auto& key : order) {
        const auto& rows = groups.at(key).rows;
        MetricRow m;
        std::tie(m.n, m.parameter, m.method) = key;
        m.iterations = static_cast<int>(rows.size());
        std::vector<double> est, err, abs_err, se;
        double covered = 0.0;
        for (const auto* r : rows) {
            est.push_back(r->estimate);
            err.push_back(r->estimate - r->truth);
            abs_err.push_back(std::abs(r->estimate - r->truth));
            se.push_back(r->se);
            covered += r->covered ? 1.0 : 0.0;
        }
        m.bias = stats::mean(err);
        m.mean_abs_bias = stats::mean(abs_err);
        m.variance = stats::variance_pop(est);
        m.mse = m.bias * m.bias + m.variance;
        m.coverage = covered / static_cast<double>(rows.size());
        m.mean_se = stats::mean(se);
        const double sd = rows.size() > 1 ? std::sqrt(stats::variance_sample(est)) : 0.0;
        for (double e : err) m.standardized_bias.push_back(sd > 0.0 ? e / sd : 0.0);
        out.push_back(std::move(m));
    }

    // Root-n curve anchored at each (parameter, method)'s smallest n.
    for (auto& m : out) {
        const MetricRow* base = nullptr;
        for (const auto& o : out) {
            if (o.parameter == m.parameter && o.method == m.method && (!base || o.n < base->n)) base = &o;
        }
        m.root_n_projection = base->mean_abs_bias * std::sqrt(static_cast<double>(base->n) / static_cast<double>(m.n));
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Estimator& estimator)
{
    if (cfg.iterations < 2) throw ValidationError("an experiment needs at least two iterations");
    if (cfg.sample_sizes.empty()) throw ValidationError("an experiment needs at least one sample size");
    ExperimentResult res;
    res.config = cfg;
    res.truth = experiment_truth(cfg);

    Estimator est = estimator;
    if (!est) {
        RunConfig run;
        run.n_bins.reset();
        run.var_sets = {Pathway{cfg.generator == Generator::dgp1 ? "A" : "A1",
                                cfg.generator == Generator::dgp1 ? "Z" : "Z1", Provenance::stage1_match, -1}};
        est = crossfit_estimator(run, run.var_sets[0].key());
    }

    struct Job {
        std::size_t n;
        int iteration;
        std::vector<IterationRecord> records;
        std::optional<IterationFailure> failure;
    };
    std::vector<Job> jobs;
    for (auto n : cfg.sample_sizes) {
        for (int i = 0; i < cfg.iterations; ++i) jobs.push_back({n, i, {}, std::nullopt});
    }
    parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
        auto& job = jobs[j];
        try {
            const auto sim = generate(cfg, job.n, job_seed(cfg.seed, kDataStream, job.n, job.iteration));
            for (const auto& r : est(sim, job_seed(cfg.seed, kEstimatorStream, job.n, job.iteration))) {
                IterationRecord rec;
                rec.n = job.n;
                rec.iteration = job.iteration;
                rec.parameter = r.parameter;
                rec.method = r.method;
                rec.estimate = r.estimate;
                rec.truth = truth_for(res.truth, r.parameter);
                rec.se = r.se;
                rec.covered = r.ci_lower <= rec.truth && rec.truth <= r.ci_upper;
                job.records.push_back(std::move(rec));
            }
        } catch (const Error& e) {
            job.records.clear();
            job.failure = IterationFailure{job.n, job.iteration, e.what()};
        }
    });
    for (auto& job : jobs) {
        if (job.failure) res.failures.push_back(*job.failure);
        res.records.insert(res.records.end(), job.records.begin(), job.records.end());
    }
    res.metrics = compute_metrics(res.records);
    return res;
}

const MetricRow* ExperimentResult::metric(std::size_t n, const std::string& parameter, const std::string& method) const
{
    for (const auto& m : metrics) {
        if (m.n == n && m.parameter == parameter && m.method == method) return &m;
    }
    return nullptr;
}

std::string ExperimentResult::records_csv() const
{
    std::ostringstream os;
    os << "n,iteration,parameter,method,estimate,truth,se,covered\n";
    for (const auto& r : records) {
        os << r.n << ',' << r.iteration << ',' << r.parameter << ',' << r.method << ',' << format_double(r.estimate)
           << ',' << format_double(r.truth) << ',' << format_double(r.se) << ',' << (r.covered ? 1 : 0) << '\n';
    }
    return os.str();
}

std::string ExperimentResult::metrics_json() const
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : metrics) {
        rows.push_back({{"n", m.n},
                        {"parameter", m.parameter},
                        {"method", m.method},
                        {"iterations", m.iterations},
                        {"bias", m.bias},
                        {"mean_abs_bias", m.mean_abs_bias},
                        {"variance", m.variance},
                        {"mse", m.mse},
                        {"coverage", m.coverage},
                        {"mean_se", m.mean_se},
                        {"root_n_projection", m.root_n_projection},
                        {"standardized_bias", m.standardized_bias}});
    }
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& f : failures) failed.push_back({{"n", f.n}, {"iteration", f.iteration}, {"message", f.message}});
    nlohmann::json j{{"generator", to_string(config.generator)},
                     {"bins", config.bins ? nlohmann::json(*config.bins) : nlohmann::json(nullptr)},
                     {"delta", config.delta},
                     {"iterations", config.iterations},
                     {"sample_sizes", config.sample_sizes},
                     {"truth", {{"NDE", truth.nde}, {"NIE", truth.nie}, {"TE", truth.ate}}},
                     {"metrics", rows},
                     {"excluded_iterations", failures.size()},
                     {"failures", failed}};
    return j.dump(2) + "\n";
}

std::string ExperimentResult::bias_csv() const
{
    std::ostringstream os;
    os << "n,parameter,method,mean_abs_bias,root_n_projection,bias,variance,mse\n";
    for (const auto& m : metrics) {
        os << m.n << ',' << m.parameter << ',' << m.method << ',' << format_double(m.mean_abs_bias) << ','
           << format_double(m.root_n_projection) << ',' << format_double(m.bias) << ',' << format_double(m.variance)
           << ',' << format_double(m.mse) << '\n';
    }
    return os.str();
}

std::string ExperimentResult::coverage_csv() const
{
    std::ostringstream os;
    os << "n,parameter,method,coverage,iterations\n";
    for (const auto& m : metrics) {
        os << m.n << ',' << m.parameter << ',' << m.method << ',' << format_double(m.coverage) << ',' << m.iterations
           << '\n';
    }
    return os.str();
}

std::string ExperimentResult::standardized_bias_csv() const
{
    std::ostringstream os;
    os << "n,parameter,method,sample,standardized_bias\n";
    for (const auto& m : metrics) {
        for (std::size_t i = 0; i < m.standardized_bias.size(); ++i) {
            os << m.n << ',' << m.parameter << ',' << m.method << ',' << i << ',' << format_double(m.standardized_bias[i])
               << '\n';
        }
    }
    return os.str();
}

DetectionResult run_detection(const DetectionConfig& cfg)
{
    if (cfg.iterations < 1) throw ValidationError("detection needs at least one run");
    DetectionResult res;
    res.config = cfg;

    struct Job {
        std::size_t n;
        int iteration;
        std::optional<DiscoveryReport> report;
        std::optional<IterationFailure> failure;
    };
    std::vector<Job> jobs;
    for (auto n : cfg.sample_sizes) {
        for (int i = 0; i < cfg.iterations; ++i) jobs.push_back({n, i, std::nullopt, std::nullopt});
    }
    parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
        auto& job = jobs[j];
        try {
            const auto sim = gen_dgp2(job.n, job_seed(cfg.seed, kDataStream, job.n, job.iteration));
            RunConfig run = cfg.run;
            run.discover_only = true;
            run.var_sets.clear();
            run.workers = 1;
            run.seed = job_seed(cfg.seed, kEstimatorStream, job.n, job.iteration);
            job.report = run_crossfit(sim.data, run).discovery;
        } catch (const Error& e) {
            job.failure = IterationFailure{job.n, job.iteration, e.what()};
        }
    });

    std::vector<Pathway> candidates;
    for (int a = 1; a <= 5; ++a) {
        const std::string ex = "A" + std::to_string(a);
        for (int z = 1; z <= 5; ++z) {
            candidates.push_back({ex, "Z" + std::to_string(z), Provenance::stage1_match, -1});
        }
    }
    for (int a = 1; a <= 5; ++a) candidates.push_back({"A" + std::to_string(a), "", Provenance::direct_only, -1});
    const std::vector<std::string> truth{"A1-Z1", "A2-Z2", "A1", "A2"};

    for (auto n : cfg.sample_sizes) {
        for (const auto& p : candidates) {
            DetectionRow row;
            row.n = n;
            row.pathway = p;
            const auto key = p.key();
            row.true_pathway = std::find(truth.begin(), truth.end(), key) != truth.end();
            double total = 0.0;
            for (const auto& job : jobs) {
                if (job.n != n || !job.report) continue;
                const double f = job.report->frequency(key);
                total += f;
                row.runs_detected += f >= 0.5 ? 1 : 0;
                ++row.runs;
            }
            row.mean_frequency = row.runs > 0 ? total / row.runs : 0.0;
            res.rows.push_back(std::move(row));
        }
    }
    for (const auto& job : jobs) {
        if (job.failure) res.failures.push_back(*job.failure);
    }
    return res;
}

const DetectionRow* DetectionResult::find(std::size_t n, const std::string& key) const
{
    for (const auto& r : rows) {
        if (r.n == n && r.pathway.key() == key) return &r;
    }
    return nullptr;
}

std::string DetectionResult::to_csv() const
{
    std::ostringstream os;
    os << "n,pathway,exposure,mediator,true_pathway,mean_frequency,runs_detected,runs\n";
    for (const auto& r : rows) {
        os << r.n << ',' << r.pathway.key() << ',' << r.pathway.exposure << ',' << r.pathway.mediator << ','
           << (r.true_pathway ? 1 : 0) << ',' << format_double(r.mean_frequency) << ',' << r.runs_detected << ','
           << r.runs << '\n';
    }
    return os.str();
}

std::string DetectionResult::to_json() const
{
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"n", r.n},
                          {"pathway", r.pathway.key()},
                          {"true_pathway", r.true_pathway},
                          {"mean_frequency", r.mean_frequency},
                          {"runs_detected", r.runs_detected},
                          {"runs", r.runs}});
    }
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& f : failures) failed.push_back({{"n", f.n}, {"iteration", f.iteration}, {"message", f.message}});
    return nlohmann::json{{"folds", config.run.k},
                          {"iterations", config.iterations},
                          {"sample_sizes", config.sample_sizes},
                          {"detection", rows_j},
                          {"excluded_iterations", failures.size()},
                          {"failures", failed}}
               .dump(2) +
           "\n";
}

} // namespace pathmed
