#include "commands.hpp"

#include "config.hpp"
#include "digest.hpp"

#include <pathmed/crossfit.hpp>
#include <pathmed/error.hpp>
#include <pathmed/experiment.hpp>

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#ifndef PATHMED_VERSION
#define PATHMED_VERSION "unknown"
#endif

namespace pathmed::cli {

namespace {

using json = nlohmann::json;
using clock = std::chrono::steady_clock;

double seconds_since(clock::time_point t)
{
    return std::chrono::duration<double>(clock::now() - t).count();
}

/// Collects output files and writes the manifest last.
class Report {
public:
    Report(std::filesystem::path dir, std::string command) : dir_(std::move(dir))
    {
        manifest_["tool"] = "pathmed";
        manifest_["version"] = PATHMED_VERSION;
        manifest_["command"] = std::move(command);
        manifest_["warnings"] = json::array();
        manifest_["outputs"] = json::array();
        manifest_["timings"] = json::object();
    }

    json& operator[](const char* key) { return manifest_[key]; }

    void warn(const std::string& w) { manifest_["warnings"].push_back(w); }
    void time(const std::string& stage, double secs) { manifest_["timings"][stage] = secs; }

    void write(const std::string& name, const std::string& bytes)
    {
        std::filesystem::create_directories(dir_);
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        out << bytes;
        out.close();
        if (!out) throw Error("failed to write '" + path.string() + "'");
        manifest_["outputs"].push_back({{"file", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }

    void finish() { write_raw("manifest.json", manifest_.dump(2) + "\n"); }

private:
    void write_raw(const std::string& name, const std::string& bytes)
    {
        std::filesystem::create_directories(dir_);
        std::ofstream out(dir_ / name, std::ios::binary);
        out << bytes;
        if (!out) throw Error("failed to write '" + (dir_ / name).string() + "'");
    }

    std::filesystem::path dir_;
    json manifest_;
};

CliConfig resolve(const Options& o, Report& report, bool config_required)
{
    CliConfig c;
    if (!o.config.empty()) {
        c = load_config(o.config);
        report["config_file"] = {{"path", o.config.string()}, {"sha256", sha256_file(o.config)}};
    } else if (config_required) {
        throw ValidationError("--config is required");
    }
    if (o.seed) {
        c.run.seed = *o.seed;
        c.seed_given = true;
    }
    if (!c.seed_given) {
        c.run.seed = std::random_device{}();
        c.seed_given = true;
        report["seed_generated"] = true;
        report.warn("no seed configured; generated seed " + std::to_string(c.run.seed));
    } else {
        report["seed_generated"] = false;
    }
    if (o.workers) {
        if (*o.workers < 1) throw ValidationError("--workers must be at least 1");
        c.run.workers = *o.workers;
    } else if (!c.workers_given) {
        c.run.workers = std::max(1u, std::thread::hardware_concurrency());
    }
    if (o.scenario) c.simulation.scenario = *o.scenario;
    if (o.scale) c.simulation.scale = *o.scale;
    return c;
}

json fold_summary(const PooledResult& res)
{
    json folds = json::array();
    for (const auto& f : res.folds) {
        json paths = json::array();
        for (const auto& p : f.pathways) paths.push_back(p.key());
        json est = json::array();
        for (const auto& fp : f.estimates) {
            est.push_back({{"pathway", fp.pathway.key()},
                           {"delta", fp.delta},
                           {"delta_iterations", fp.delta_iterations},
                           {"outcome_learner", fp.q_learner},
                           {"outcome_cv_risk", fp.q_risk}});
        }
        folds.push_back({{"fold", f.fold + 1},
                         {"pathways", paths},
                         {"estimates", est},
                         {"discovery_seconds", f.discovery_seconds},
                         {"estimation_seconds", f.estimation_seconds}});
    }
    return folds;
}

json pathway_summary(const PooledResult& res)
{
    json out = json::array();
    for (const auto& p : res.pathways) {
        json folds = json::array();
        for (int f : p.folds) folds.push_back(f + 1);
        out.push_back({{"pathway", p.pathway.key()},
                       {"folds", folds},
                       {"fold_deltas", p.fold_deltas},
                       {"mean_delta", p.mean_delta},
                       {"low_consistency", p.low_consistency}});
    }
    return out;
}

json quantization_summary(const PooledResult& res)
{
    json out = json::object();
    for (const auto& [name, q] : res.quantization) {
        out[name] = {{"n_bins", q.n_bins}, {"cut_points", q.cut_points}, {"bin_counts", q.bin_counts}};
    }
    return out;
}

int run_data_command(const Options& o, bool discover)
{
    const auto start = clock::now();
    Report report(o.out, discover ? "discover" : "analyze");
    if (o.data.empty()) throw ValidationError("--data is required");
    CliConfig c = resolve(o, report, true);
    if (discover) c.run.discover_only = true;
    if (c.roles.empty()) throw ValidationError(o.config.string() + ": no column.<name> entries; declare the column roles");
    report["config"] = c.to_json();

    auto t = clock::now();
    const Dataset data = load_dataset(o.data, c.roles);
    report["input"] = {{"path", o.data.string()}, {"sha256", sha256_file(o.data)}, {"rows", data.n()}};
    report.time("load", seconds_since(t));

    t = clock::now();
    const PooledResult res = run_crossfit(data, c.run);
    report.time("crossfit", seconds_since(t));
    for (const auto& w : res.warnings) report.warn(w);
    report["discovery"] = json::parse(res.discovery.to_json());
    report["folds"] = fold_summary(res);
    report["quantization"] = quantization_summary(res);

    t = clock::now();
    report.write("discovery.csv", res.discovery.to_csv());
    if (!c.run.discover_only && res.estimated) {
        report["pathways"] = pathway_summary(res);
        report.write("results.csv", res.results_csv());
    }
    report.time("write", seconds_since(t));
    report.time("total", seconds_since(start));
    report.finish();
    return kExitOk;
}

struct Scale {
    std::vector<std::size_t> sample_sizes;
    int iterations;
};

Scale scale_for(const std::string& name)
{
    if (name == "desk") return {{250, 500, 1000}, 20};
    if (name == "paper") return {{250, 500, 1000, 1500, 2000, 2500, 3000}, 50};
    throw ValidationError("unknown scale '" + name + "' (expected desk or paper)");
}

int run_simulate(const Options& o)
{
    const auto start = clock::now();
    Report report(o.out, "simulate");
    CliConfig c = resolve(o, report, false);
    const std::string scenario = c.simulation.scenario.value_or("");
    if (scenario.empty()) throw ValidationError("--scenario is required (dgp1, dgp1_quantized or dgp2_discovery)");
    if (scenario != "dgp1" && scenario != "dgp1_quantized" && scenario != "dgp2_discovery") {
        throw ValidationError("unknown scenario '" + scenario + "' (expected dgp1, dgp1_quantized or dgp2_discovery)");
    }
    const std::string scale_name = c.simulation.scale.value_or("desk");
    Scale scale = scale_for(scale_name);
    if (c.simulation.sample_sizes) scale.sample_sizes = *c.simulation.sample_sizes;
    if (c.simulation.iterations) scale.iterations = *c.simulation.iterations;
    c.simulation.scenario = scenario;
    c.simulation.scale = scale_name;
    report["config"] = c.to_json();
    report["scenario"] = scenario;
    report["scale"] = {{"name", scale_name}, {"sample_sizes", scale.sample_sizes}, {"iterations", scale.iterations}};

    // The generator owns the exposure coding, so the estimator sees the
    // simulated columns as they are.
    RunConfig run = c.run;
    run.n_bins.reset();
    run.workers = 1;

    if (scenario == "dgp2_discovery") {
        DetectionConfig cfg;
        cfg.sample_sizes = scale.sample_sizes;
        cfg.iterations = scale.iterations;
        cfg.seed = c.run.seed;
        cfg.run = run;
        cfg.workers = c.run.workers;
        const auto t = clock::now();
        const auto res = run_detection(cfg);
        report.time("detection", seconds_since(t));
        for (const auto& f : res.failures) {
            report.warn("n=" + std::to_string(f.n) + " run " + std::to_string(f.iteration) + " excluded: " + f.message);
        }
        report["excluded_runs"] = res.failures.size();
        report.write("detection.csv", res.to_csv());
        report.write("detection.json", res.to_json());
    } else {
        ExperimentConfig cfg;
        cfg.generator = Generator::dgp1;
        if (scenario == "dgp1_quantized") cfg.bins = c.run.n_bins.value_or(10);
        cfg.delta = c.run.default_delta;
        cfg.sample_sizes = scale.sample_sizes;
        cfg.iterations = scale.iterations;
        cfg.seed = c.run.seed;
        cfg.oracle_n = c.simulation.oracle_n;
        cfg.workers = c.run.workers;
        run.default_delta = cfg.delta;
        if (run.var_sets.empty()) run.var_sets = {Pathway{"A", "Z", Provenance::stage1_match, -1}};
        const auto t = clock::now();
        const auto res = run_experiment(cfg, crossfit_estimator(run, run.var_sets[0].key()));
        report.time("experiment", seconds_since(t));
        report["truth"] = {{"NDE", res.truth.nde}, {"NIE", res.truth.nie}, {"TE", res.truth.ate}};
        for (const auto& f : res.failures) {
            report.warn("n=" + std::to_string(f.n) + " iteration " + std::to_string(f.iteration) +
                        " excluded: " + f.message);
        }
        report["excluded_iterations"] = res.failures.size();
        report.write("iterations.csv", res.records_csv());
        report.write("metrics.json", res.metrics_json());
        report.write("bias.csv", res.bias_csv());
        report.write("coverage.csv", res.coverage_csv());
        report.write("standardized_bias.csv", res.standardized_bias_csv());
    }
    report.time("total", seconds_since(start));
    report.finish();
    return kExitOk;
}

int guarded(const std::function<int()>& f, std::ostream& err)
{
    try {
        return f();
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const EstimationError& e) {
        err << "estimation failed: " << e.what() << '\n';
        return kExitEstimation;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitEstimation;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

} // namespace

int cmd_analyze(const Options& options, std::ostream& err)
{
    return guarded([&] { return run_data_command(options, false); }, err);
}

int cmd_discover(const Options& options, std::ostream& err)
{
    return guarded([&] { return run_data_command(options, true); }, err);
}

int cmd_simulate(const Options& options, std::ostream& err)
{
    return guarded([&] { return run_simulate(options); }, err);
}

} // namespace pathmed::cli
