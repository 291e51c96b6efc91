#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "commands.hpp"
#include "config.hpp"
#include "digest.hpp"

#include <pathmed/simulation.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace pathmed;
using namespace pathmed::cli;
namespace fs = std::filesystem;

namespace {

const char* kDgp1Roles = R"(column.W1 = covariate
column.W2 = covariate binary
column.W3 = covariate binary
column.W4 = covariate
column.W5 = covariate
column.A = exposure
column.Z = mediator
column.Y = outcome
)";

struct TempDir {
    fs::path path;
    TempDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() / ("pathmed_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path write_file(const fs::path& p, const std::string& text)
{
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

CliConfig parse(const std::string& text)
{
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

std::string error_of(const std::string& text)
{
    try {
        parse(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

int count_lines(const std::string& s)
{
    return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST_CASE("config keys map onto the run configuration")
{
    const auto c = parse(std::string(kDgp1Roles) + R"(
# comment line
k = 4          # trailing comment
seed = 17
delta = 0.5
delta.A = 2
direction = down
lambda = inf
n_bins = none
phi_methods = pseudo_regression
var_sets = A-Z, A
cv_folds = 3
outcome_library = glm, hal
)");
    CHECK(c.roles.size() == 8);
    CHECK(c.roles[1].kind.kind == Kind::binary);
    CHECK(c.roles[7].role == Role::outcome);
    CHECK(c.run.k == 4);
    CHECK(c.seed_given);
    CHECK(c.run.seed == 17);
    CHECK(c.run.delta_for("A") == 2.0);
    CHECK(c.run.default_delta == 0.5);
    CHECK(c.run.direction == ShiftDirection::down);
    CHECK(std::isinf(c.run.lambda));
    CHECK_FALSE(c.run.n_bins);
    REQUIRE(c.run.phi_methods.size() == 1);
    CHECK(c.run.phi_methods[0] == PhiMethod::pseudo_regression);
    REQUIRE(c.run.var_sets.size() == 2);
    CHECK(c.run.var_sets[0].key() == "A-Z");
    CHECK(c.run.var_sets[1].direct_only());
    CHECK(c.run.nuisance.cv.folds == 3);
    CHECK(c.run.nuisance.outcome_library[1].kind == LearnerKind::hal_lite);
}

TEST_CASE("resolved settings parse back to the same settings")
{
    const auto c = parse(std::string(kDgp1Roles) + "k = 5\nseed = 2\nvar_sets = A-Z\ndelta.A = 0.25\n");
    std::string text;
    for (const auto& [k, v] : c.resolved()) text += k + " = " + v + "\n";
    const auto again = parse(text);
    CHECK(again.resolved() == c.resolved());
    CHECK(c.to_json()["k"] == "5");
}

TEST_CASE("config diagnostics name the line and key")
{
    CHECK(error_of("k = 1\n") == "test.cfg:1: 'k': K ≥ 2 required (got K = 1)");
    CHECK(error_of("\n\nwhat = 1\n") == "test.cfg:3: 'what': unknown key");
    CHECK(error_of("k = 3\nk = 4\n") == "test.cfg:2: 'k': already set on line 1");
    CHECK(error_of("k 3\n") == "test.cfg:1: expected key = value");
    CHECK(error_of("alpha =\n") == "test.cfg:1: 'alpha': missing value");
    CHECK(error_of("lambda = big\n").find("'lambda': expected a number") != std::string::npos);
    CHECK(error_of("seed = -4\n").find("'seed': expected an integer") != std::string::npos);
    CHECK(error_of("adapt_delta = maybe\n").find("expected true or false") != std::string::npos);
    CHECK(error_of("column.A = exposure sideways\n").find("'column.A'") != std::string::npos);
    CHECK(error_of("column.A = treatment\n").find("'column.A'") != std::string::npos);
    CHECK(error_of("var_sets = A-\n").find("'var_sets'") != std::string::npos);
    CHECK(error_of("outcome_library = forest\n").find("unknown learner") != std::string::npos);
    // Cross-key checks run after parsing.
    CHECK(error_of("lambda = 0.5\n") == "test.cfg: lambda must be > 1");
}

TEST_CASE("sha256 matches a published test vector")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("analyze writes results, discovery and a manifest")
{
    TempDir tmp;
    const auto data = tmp.path / "dgp1.csv";
    write_dataset(gen_dgp1(300, 1.0, 5).data, data);
    const auto cfg = write_file(tmp.path / "run.cfg", std::string(kDgp1Roles) + "k = 3\nseed = 9\nvar_sets = A-Z\n");
    Options o;
    o.data = data;
    o.config = cfg;
    o.out = tmp.path / "out";
    o.workers = 2;
    std::ostringstream err;
    REQUIRE(cmd_analyze(o, err) == kExitOk);
    CHECK(err.str().empty());

    const auto results = read_file(o.out / "results.csv");
    CHECK(results.starts_with("psi,variance,se,lower_ci,upper_ci,p_value,fold,type,variables,n,delta\n"));
    // Three folds and the pooled set, five rows each.
    CHECK(count_lines(results) == 1 + 4 * 5);
    CHECK(results.find(",pooled,TE-") != std::string::npos);

    const auto manifest = nlohmann::json::parse(read_file(o.out / "manifest.json"));
    CHECK(manifest["command"] == "analyze");
    CHECK(manifest["seed_generated"] == false);
    CHECK(manifest["config"]["seed"] == "9");
    CHECK(manifest["input"]["sha256"] == sha256_file(data));
    CHECK(manifest["input"]["rows"] == 300);
    CHECK(manifest["folds"].size() == 3);
    CHECK(manifest["folds"][0]["estimates"][0].contains("outcome_cv_risk"));
    CHECK(manifest["pathways"][0]["fold_deltas"].size() == 3);
    CHECK(manifest["timings"].contains("crossfit"));
    REQUIRE(manifest["outputs"].size() == 2);
    for (const auto& f : manifest["outputs"]) {
        CHECK(f["sha256"] == sha256_file(o.out / f["file"].get<std::string>()));
    }

    // Same inputs and seed, different worker count: same bytes.
    o.workers = 1;
    o.out = tmp.path / "again";
    REQUIRE(cmd_analyze(o, err) == kExitOk);
    CHECK(read_file(o.out / "results.csv") == results);
}

TEST_CASE("discover_only writes only discovery and manifest")
{
    TempDir tmp;
    const auto data = tmp.path / "dgp2.csv";
    write_dataset(gen_dgp2(300, 7).data, data);
    std::string roles = "column.W1 = covariate\ncolumn.W2 = covariate binary\ncolumn.W3 = covariate binary\n"
                        "column.W4 = covariate\ncolumn.W5 = covariate\n";
    for (int i = 1; i <= 5; ++i) roles += "column.A" + std::to_string(i) + " = exposure\n";
    for (int i = 1; i <= 5; ++i) roles += "column.Z" + std::to_string(i) + " = mediator\n";
    roles += "column.Y = outcome\n";
    const auto cfg = write_file(tmp.path / "d.cfg", roles + "k = 3\nseed = 3\nn_bins = none\ndiscover_only = true\n");
    Options o;
    o.data = data;
    o.config = cfg;
    o.out = tmp.path / "out";
    std::ostringstream err;
    REQUIRE(cmd_analyze(o, err) == kExitOk);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(o.out)) files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    CHECK(files == std::vector<std::string>{"discovery.csv", "manifest.json"});
    const auto csv = read_file(o.out / "discovery.csv");
    CHECK(csv.starts_with("pathway,exposure,mediator,provenance,folds_found,frequency\n"));
    CHECK(csv.find("A1-Z1,A1,Z1,stage1_match,3,1\n") != std::string::npos);

    // The discover command gives the same table without the flag.
    const auto cfg2 = write_file(tmp.path / "d2.cfg", roles + "k = 3\nseed = 3\nn_bins = none\n");
    o.config = cfg2;
    o.out = tmp.path / "out2";
    REQUIRE(cmd_discover(o, err) == kExitOk);
    CHECK(read_file(o.out / "discovery.csv") == csv);
    CHECK_FALSE(fs::exists(o.out / "results.csv"));
}

TEST_CASE("exit codes")
{
    TempDir tmp;
    const auto data = tmp.path / "dgp1.csv";
    write_dataset(gen_dgp1(200, 1.0, 6).data, data);
    Options o;
    o.data = data;
    o.out = tmp.path / "out";
    std::ostringstream err;

    o.config = write_file(tmp.path / "k1.cfg", std::string(kDgp1Roles) + "k = 1\n");
    CHECK(cmd_analyze(o, err) == kExitValidation);
    CHECK(err.str().find("K ≥ 2") != std::string::npos);

    o.config = write_file(tmp.path / "noroles.cfg", "k = 3\n");
    CHECK(cmd_analyze(o, err) == kExitValidation);

    o.config = tmp.path / "missing.cfg";
    CHECK(cmd_analyze(o, err) == kExitValidation);

    Options s;
    s.scenario = "dgp3";
    s.out = tmp.path / "sim";
    CHECK(cmd_simulate(s, err) == kExitValidation);
    s.scenario = "dgp1";
    s.scale = "huge";
    CHECK(cmd_simulate(s, err) == kExitValidation);

    // Z is an exact function of A, so no mediator density can be fit and
    // nothing is estimable.
    Dataset d = gen_dgp1(200, 1.0, 6).data;
    std::vector<double> z(d.values("A").begin(), d.values("A").end());
    for (auto& v : z) v *= 2.0;
    d = d.with_column(Column{"Z", Role::mediator, VariableKind::continuous(), z});
    write_dataset(d, tmp.path / "degenerate.csv");
    o.data = tmp.path / "degenerate.csv";
    o.config = write_file(tmp.path / "ok.cfg", std::string(kDgp1Roles) + "k = 2\nseed = 1\nvar_sets = A-Z\nn_bins = none\n");
    std::ostringstream est_err;
    CHECK(cmd_analyze(o, est_err) == kExitEstimation);
    CHECK(est_err.str().starts_with("estimation failed"));
}

TEST_CASE("a missing seed is generated and recorded")
{
    TempDir tmp;
    const auto data = tmp.path / "dgp1.csv";
    write_dataset(gen_dgp1(200, 1.0, 8).data, data);
    Options o;
    o.data = data;
    o.config = write_file(tmp.path / "c.cfg", std::string(kDgp1Roles) + "k = 2\nvar_sets = A-Z\nn_bins = none\n");
    o.out = tmp.path / "out";
    std::ostringstream err;
    INFO(err.str());
    REQUIRE(cmd_analyze(o, err) == kExitOk);
    const auto m = nlohmann::json::parse(read_file(o.out / "manifest.json"));
    CHECK(m["seed_generated"] == true);
    const std::string seed = m["config"]["seed"];

    // Replaying with the recorded seed reproduces the results.
    o.seed = std::stoull(seed);
    o.out = tmp.path / "replay";
    REQUIRE(cmd_analyze(o, err) == kExitOk);
    CHECK(read_file(o.out / "results.csv") == read_file(tmp.path / "out" / "results.csv"));
}

TEST_CASE("simulate writes metrics and is reproducible")
{
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "s.cfg", "sample_sizes = 200\niterations = 2\noracle_n = 5000\nk = 3\nseed = 4\n");
    Options o;
    o.config = cfg;
    o.scenario = "dgp1_quantized";
    o.out = tmp.path / "a";
    o.workers = 1;
    std::ostringstream err;
    REQUIRE(cmd_simulate(o, err) == kExitOk);
    o.out = tmp.path / "b";
    o.workers = 2;
    REQUIRE(cmd_simulate(o, err) == kExitOk);
    for (const char* f : {"iterations.csv", "metrics.json", "bias.csv", "coverage.csv", "standardized_bias.csv"}) {
        CHECK(read_file(tmp.path / "a" / f) == read_file(tmp.path / "b" / f));
    }
    const auto metrics = nlohmann::json::parse(read_file(tmp.path / "a" / "metrics.json"));
    std::set<std::string> seen;
    for (const auto& m : metrics["metrics"]) {
        CHECK(m.contains("coverage"));
        seen.insert(m["parameter"].get<std::string>() + "-" + m["method"].get<std::string>());
    }
    CHECK(seen.count("NDE-integration"));
    CHECK(seen.count("NIE-pseudo_regression"));
    CHECK(seen.count("TE-tmle"));

    o.scenario = "dgp2_discovery";
    o.out = tmp.path / "c";
    REQUIRE(cmd_simulate(o, err) == kExitOk);
    const auto table = read_file(tmp.path / "c" / "detection.csv");
    CHECK(count_lines(table) == 1 + 30);
    CHECK(table.find("200,A1-Z1,A1,Z1,1,") != std::string::npos);
}
