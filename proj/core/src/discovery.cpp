#include <pathmed/discovery.hpp>
#include <pathmed/error.hpp>
#include <pathmed/stats.hpp>

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace pathmed {

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s)
{
    return std::find(v.begin(), v.end(), s) != v.end();
}

struct StageFit {
    BasisModel model;
    std::vector<FScore> scores;
    std::vector<std::string> retained;
};

StageFit fit_stage(const Dataset& data, const std::string& target, const std::vector<std::string>& predictors,
                   std::span<const LearnerSpec> library, const DiscoveryConfig& cfg, std::vector<std::string>& warnings)
{
    StageFit s;
    const Eigen::MatrixXd X = data.matrix(predictors);
    const auto yv = data.values(target);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));
    s.model = cv_select(library, X, predictors, y, ResponseKind::gaussian, cfg.cv);
    // Only bases with non-zero coefficients count as evidence.
    BasisModel nonzero = s.model;
    nonzero.terms.erase(std::remove_if(nonzero.terms.begin(), nonzero.terms.end(),
                                       [](const BasisTerm& t) { return t.coef == 0.0; }),
                        nonzero.terms.end());
    if (nonzero.terms.empty()) return s;
    std::vector<std::string> w;
    const auto per_basis = anova_f_stats(nonzero, X, y, &w);
    for (auto& msg : w) warnings.push_back(target + ": " + msg);
    s.scores = aggregate_f_by_variable(per_basis);
    s.retained = filter_by_f_quantile(s.scores, cfg.f_quantile);
    s.model = std::move(nonzero);
    return s;
}

void add_pathway(std::vector<Pathway>& out, Pathway p)
{
    for (auto& q : out) {
        if (q.exposure == p.exposure && q.mediator == p.mediator) {
            // Keep the strongest provenance (stage1_match first).
            if (static_cast<int>(p.provenance) < static_cast<int>(q.provenance)) q.provenance = p.provenance;
            return;
        }
    }
    out.push_back(std::move(p));
}

} // namespace

std::string to_string(Provenance p)
{
    switch (p) {
    case Provenance::stage1_match: return "stage1_match";
    case Provenance::stage2_joint: return "stage2_joint";
    case Provenance::direct_only: return "direct_only";
    }
    return "?";
}

std::string Pathway::key() const
{
    return mediator.empty() ? exposure : exposure + "-" + mediator;
}

std::vector<std::string> filter_by_f_quantile(std::span<const FScore> scores, double q)
{
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("f_quantile must lie in [0, 1]");
    if (scores.empty()) return {};
    std::vector<double> v;
    v.reserve(scores.size());
    for (const auto& s : scores) v.push_back(s.f_stat);
    const double cut = stats::quantile(v, q);
    std::vector<std::string> out;
    for (const auto& s : scores) {
        if (s.f_stat >= cut) out.push_back(s.target);
    }
    return out;
}

DiscoveryResult discover_pathways(const Dataset& train, const DiscoveryConfig& cfg, int fold)
{
    const auto exposures = train.names(Role::exposure);
    const auto mediators = train.names(Role::mediator);
    const auto covariates = train.names(Role::covariate);
    if (exposures.empty()) throw ValidationError("discovery needs at least one exposure");

    DiscoveryResult res;
    std::vector<std::string> stage1_predictors = exposures;
    stage1_predictors.insert(stage1_predictors.end(), covariates.begin(), covariates.end());
    for (const auto& z : mediators) {
        auto s = fit_stage(train, z, stage1_predictors, cfg.library, cfg, res.warnings);
        std::vector<std::string> drivers;
        for (const auto& a : exposures) {
            if (contains(s.retained, a)) drivers.push_back(a);
        }
        res.stage1_exposures[z] = std::move(drivers);
        res.stage1_scores[z] = std::move(s.scores);
    }

    std::vector<std::string> stage2_predictors = exposures;
    stage2_predictors.insert(stage2_predictors.end(), mediators.begin(), mediators.end());
    stage2_predictors.insert(stage2_predictors.end(), covariates.begin(), covariates.end());
    auto s2 = fit_stage(train, train.outcome(), stage2_predictors, cfg.outcome_library, cfg, res.warnings);
    res.stage2_scores = s2.scores;
    res.stage2_variables = s2.retained;
    const auto& kept = s2.retained;

    for (const auto& z : mediators) {
        if (!contains(kept, z)) continue;
        for (const auto& a : res.stage1_exposures[z]) add_pathway(res.pathways, {a, z, Provenance::stage1_match, fold});
    }
    for (const auto& t : s2.model.terms) {
        const auto vars = t.basis.variables(s2.model.predictors);
        std::vector<std::string> as, zs;
        for (const auto& v : vars) {
            if (!contains(kept, v)) continue;
            if (contains(exposures, v)) as.push_back(v);
            if (contains(mediators, v)) zs.push_back(v);
        }
        for (const auto& a : as) {
            if (zs.empty()) add_pathway(res.pathways, {a, "", Provenance::direct_only, fold});
            for (const auto& z : zs) add_pathway(res.pathways, {a, z, Provenance::stage2_joint, fold});
        }
    }

    // Deterministic order: exposure order, mediated before direct, mediator order.
    auto rank = [&](const Pathway& p) {
        const auto ai = std::find(exposures.begin(), exposures.end(), p.exposure) - exposures.begin();
        const auto zi = p.mediator.empty() ? static_cast<std::ptrdiff_t>(mediators.size())
                                           : std::find(mediators.begin(), mediators.end(), p.mediator) - mediators.begin();
        return std::pair{ai, zi};
    };
    std::sort(res.pathways.begin(), res.pathways.end(), [&](const Pathway& a, const Pathway& b) { return rank(a) < rank(b); });
    return res;
}

double DiscoveryReport::frequency(const std::string& key) const
{
    for (const auto& f : frequencies) {
        if (f.pathway.key() == key) return f.frequency;
    }
    return 0.0;
}

DiscoveryReport summarize_discovery(const std::vector<std::vector<Pathway>>& per_fold)
{
    DiscoveryReport rep;
    rep.k = static_cast<int>(per_fold.size());
    rep.per_fold = per_fold;
    if (per_fold.empty()) return rep;
    struct Tally {
        Pathway first;
        int folds = 0;
        int by_provenance[3] = {0, 0, 0};
    };
    std::vector<Tally> tallies;
    for (const auto& fold : per_fold) {
        std::set<std::string> seen;
        for (const auto& p : fold) {
            if (!seen.insert(p.key()).second) continue;
            auto it = std::find_if(tallies.begin(), tallies.end(), [&](const Tally& t) { return t.first.key() == p.key(); });
            if (it == tallies.end()) {
                tallies.push_back({p, 0, {0, 0, 0}});
                it = tallies.end() - 1;
            }
            ++it->folds;
            ++it->by_provenance[static_cast<int>(p.provenance)];
        }
    }
    for (const auto& t : tallies) {
        PathwayFrequency f;
        f.pathway = t.first;
        f.pathway.fold = -1;
        const auto best = std::max_element(std::begin(t.by_provenance), std::end(t.by_provenance)) - std::begin(t.by_provenance);
        f.pathway.provenance = static_cast<Provenance>(best);
        f.folds_found = t.folds;
        f.frequency = static_cast<double>(t.folds) / static_cast<double>(rep.k);
        rep.frequencies.push_back(std::move(f));
    }
    std::stable_sort(rep.frequencies.begin(), rep.frequencies.end(), [](const PathwayFrequency& a, const PathwayFrequency& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.pathway.key() < b.pathway.key();
    });
    return rep;
}

std::string DiscoveryReport::to_json() const
{
    nlohmann::json pathways = nlohmann::json::array();
    for (const auto& f : frequencies) {
        pathways.push_back({{"pathway", f.pathway.key()},
                            {"exposure", f.pathway.exposure},
                            {"mediator", f.pathway.mediator},
                            {"provenance", to_string(f.pathway.provenance)},
                            {"folds_found", f.folds_found},
                            {"frequency", f.frequency}});
    }
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& fold : per_fold) {
        nlohmann::json keys = nlohmann::json::array();
        for (const auto& p : fold) keys.push_back(p.key());
        folds.push_back(keys);
    }
    return nlohmann::json{{"k", k}, {"pathways", pathways}, {"per_fold", folds}}.dump(2);
}

std::string DiscoveryReport::to_csv() const
{
    std::ostringstream os;
    os << "pathway,exposure,mediator,provenance,folds_found,frequency\n";
    for (const auto& f : frequencies) {
        os << f.pathway.key() << ',' << f.pathway.exposure << ',' << f.pathway.mediator << ','
           << to_string(f.pathway.provenance) << ',' << f.folds_found << ',' << format_double(f.frequency) << '\n';
    }
    return os.str();
}

} // namespace pathmed
