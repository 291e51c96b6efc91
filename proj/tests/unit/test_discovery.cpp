#include <doctest.h>

#include "test_support.hpp"

#include <pathmed/discovery.hpp>
#include <pathmed/error.hpp>
#include <pathmed/simulation.hpp>

#include <algorithm>
#include <set>

using namespace pathmed;
using testing_support::column;
using testing_support::normal_vector;

namespace {

bool has(const std::vector<Pathway>& ps, const std::string& key)
{
    return std::any_of(ps.begin(), ps.end(), [&](const Pathway& p) { return p.key() == key; });
}

std::set<std::string> keys(const std::vector<Pathway>& ps)
{
    std::set<std::string> out;
    for (const auto& p : ps) out.insert(p.key());
    return out;
}

Dataset with_noise_outcome(const Dataset& d, std::uint64_t seed)
{
    auto cols = d.columns();
    Rng rng = make_rng(seed, {7});
    for (auto& c : cols) {
        if (c.role == Role::outcome) c.values = testing_support::to_std(normal_vector(rng, static_cast<Eigen::Index>(d.n())));
    }
    return Dataset(std::move(cols));
}

FScore score(std::string name, double f)
{
    FScore s;
    s.target = std::move(name);
    s.f_stat = f;
    return s;
}

} // namespace

TEST_CASE("true DGP 2 pathways and direct effects are found in every run")
{
    const int runs = 20;
    int true_paths = 0, direct = 0, a1_first = 0;
    for (int r = 0; r < runs; ++r) {
        const auto sim = gen_dgp2(1000, 300 + static_cast<std::uint64_t>(r));
        const auto res = discover_pathways(sim.data, {});
        true_paths += has(res.pathways, "A1-Z1") && has(res.pathways, "A2-Z2");
        direct += has(res.pathways, "A1") && has(res.pathways, "A2");

        // A1 carries the largest stage-1 score among exposures for Z1.
        std::string top;
        double best = -1;
        for (const auto& s : res.stage1_scores.at("Z1")) {
            if (s.target.starts_with("A") && s.f_stat > best) {
                best = s.f_stat;
                top = s.target;
            }
        }
        a1_first += top == "A1";

        for (const auto& p : res.pathways) {
            if (p.provenance != Provenance::stage1_match) continue;
            CHECK(std::find(res.stage2_variables.begin(), res.stage2_variables.end(), p.mediator) !=
                  res.stage2_variables.end());
        }
    }
    CHECK(true_paths == runs);
    CHECK(direct == runs);
    CHECK(a1_first >= 19);
}

TEST_CASE("pure-noise outcome yields no pathways")
{
    const int runs = 10;
    int empty = 0;
    for (int r = 0; r < runs; ++r) {
        const auto sim = gen_dgp2(500, 700 + static_cast<std::uint64_t>(r));
        empty += discover_pathways(with_noise_outcome(sim.data, static_cast<std::uint64_t>(r)), {}).pathways.empty();
    }
    CHECK(empty >= 8);
}

TEST_CASE("pathway order and provenance")
{
    const auto sim = gen_dgp2(600, 41);
    const auto res = discover_pathways(sim.data, {}, 3);
    REQUIRE(!res.pathways.empty());
    for (const auto& p : res.pathways) {
        CHECK(p.fold == 3);
        CHECK(p.direct_only() == (p.provenance == Provenance::direct_only));
    }
    // Exposure order first; within an exposure, direct-only comes last.
    for (std::size_t i = 1; i < res.pathways.size(); ++i) {
        const auto& a = res.pathways[i - 1];
        const auto& b = res.pathways[i];
        CHECK(a.exposure <= b.exposure);
        if (a.exposure == b.exposure) CHECK_FALSE(a.direct_only());
    }
    CHECK(keys(res.pathways).size() == res.pathways.size());
}

TEST_CASE("raising the F quantile never adds a pathway")
{
    const auto sim = gen_dgp2(500, 5);
    std::set<std::string> previous;
    bool first = true;
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        DiscoveryConfig cfg;
        cfg.f_quantile = q;
        const auto now = keys(discover_pathways(sim.data, cfg).pathways);
        if (!first) CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
        previous = now;
        first = false;
    }
}

TEST_CASE("stage-2 intercept-only model gives an empty list")
{
    Rng rng = make_rng(3, {});
    const auto a = normal_vector(rng, 200);
    const Eigen::VectorXd z = 2.0 * a + normal_vector(rng, 200);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(200, 4.0);
    const Dataset d({column("A", Role::exposure, a), column("Z", Role::mediator, z), column("Y", Role::outcome, y)});
    const auto res = discover_pathways(d, {});
    CHECK(res.pathways.empty());
    CHECK(res.stage1_exposures.at("Z") == std::vector<std::string>{"A"});
}

TEST_CASE("no mediators leaves only direct effects")
{
    Rng rng = make_rng(4, {});
    const auto a = normal_vector(rng, 300);
    const auto w = normal_vector(rng, 300);
    const Eigen::VectorXd y = 3.0 * a + w + normal_vector(rng, 300);
    const Dataset d({column("W", Role::covariate, w), column("A", Role::exposure, a), column("Y", Role::outcome, y)});
    const auto res = discover_pathways(d, {});
    REQUIRE(res.pathways.size() == 1);
    CHECK(res.pathways[0].key() == "A");
    CHECK(res.pathways[0].provenance == Provenance::direct_only);
}

TEST_CASE("data without an exposure never reaches discovery")
{
    Rng rng = make_rng(5, {});
    const auto z = normal_vector(rng, 50);
    CHECK_THROWS_AS(Dataset({column("Z", Role::mediator, z), column("Y", Role::outcome, z)}), ValidationError);
}

TEST_CASE("F quantile filter")
{
    const std::vector<FScore> s{score("A1", 5.0), score("A2", 3.0), score("A3", 1.0)};
    CHECK(filter_by_f_quantile(s, 0.5) == std::vector<std::string>{"A1", "A2"});
    CHECK(filter_by_f_quantile(s, 0.0) == std::vector<std::string>{"A1", "A2", "A3"});
    CHECK(filter_by_f_quantile(s, 1.0) == std::vector<std::string>{"A1"});
    const std::vector<FScore> tied{score("A1", 2.0), score("A2", 2.0), score("A3", 1.0)};
    CHECK(filter_by_f_quantile(tied, 1.0) == std::vector<std::string>{"A1", "A2"});
    CHECK(filter_by_f_quantile({}, 0.5).empty());
    CHECK_THROWS_AS(filter_by_f_quantile(s, 1.5), ValidationError);
    CHECK_THROWS_AS(filter_by_f_quantile(s, -0.1), ValidationError);
}

TEST_CASE("fold frequencies")
{
    const Pathway az{"A1", "Z1", Provenance::stage1_match, 0};
    const Pathway a{"A2", "", Provenance::direct_only, 0};
    std::vector<std::vector<Pathway>> folds(10);
    for (int k = 0; k < 10; ++k) {
        folds[static_cast<std::size_t>(k)].push_back(a);
        if (k < 8) folds[static_cast<std::size_t>(k)].push_back(az);
    }
    const auto rep = summarize_discovery(folds);
    CHECK(rep.k == 10);
    REQUIRE(rep.frequencies.size() == 2);
    CHECK(rep.frequencies[0].pathway.key() == "A2");
    CHECK(rep.frequencies[0].frequency == 1.0);
    CHECK(rep.frequency("A1-Z1") == doctest::Approx(0.8));
    CHECK(rep.frequencies[1].folds_found == 8);
    CHECK(rep.frequency("A9") == 0.0);

    const auto csv = rep.to_csv();
    CHECK(csv.starts_with("pathway,exposure,mediator,provenance,folds_found,frequency\n"));
    CHECK(csv.find("A1-Z1,A1,Z1,stage1_match,8,0.8") != std::string::npos);
    CHECK(rep.to_json().find("\"frequency\": 0.8") != std::string::npos);

    CHECK(summarize_discovery({}).frequencies.empty());
    CHECK(summarize_discovery({{}, {}}).frequencies.empty());
}

TEST_CASE("duplicates within a fold count once; modal provenance wins")
{
    const Pathway s1{"A1", "Z1", Provenance::stage1_match, 0};
    const Pathway s2{"A1", "Z1", Provenance::stage2_joint, 0};
    const auto rep = summarize_discovery({{s1, s1}, {s2}, {s2}});
    REQUIRE(rep.frequencies.size() == 1);
    CHECK(rep.frequencies[0].folds_found == 3);
    CHECK(rep.frequencies[0].pathway.provenance == Provenance::stage2_joint);
}
