#include <pathmed/crossfit.hpp>
#include <pathmed/error.hpp>
#include <pathmed/parallel.hpp>
#include <pathmed/rng.hpp>
#include <pathmed/stats.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace pathmed {

namespace {

// Stream ids for derive_seed; each fold gets its own family.
constexpr std::uint64_t kFoldStream = 0x666f6c64;
constexpr std::uint64_t kDiscoveryCv = 1;
constexpr std::uint64_t kNuisanceCv = 2;
constexpr std::uint64_t kMcGrid = 3;

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ShiftSpec shift_for(const Dataset& data, const std::string& exposure, const RunConfig& cfg)
{
    const auto& kind = data.column(exposure).kind;
    ShiftSpec s;
    s.exposure = exposure;
    s.delta = cfg.delta_for(exposure);
    s.direction = cfg.direction;
    if (kind.is_discrete()) {
        s.discrete = true;
        s.n_bins = kind.levels;
    }
    s.validate();
    return s;
}

std::string fold_label(int fold) { return std::to_string(fold + 1); }

void label(EffectEstimate& e, const std::string& pathway, const std::string& fold, double delta)
{
    e.pathway = pathway;
    e.fold = fold;
    e.delta = delta;
}

/// Exposure order, mediated pathways before the direct-only one, then mediator.
bool pathway_order(const Pathway& a, const Pathway& b)
{
    if (a.exposure != b.exposure) return a.exposure < b.exposure;
    if (a.direct_only() != b.direct_only()) return !a.direct_only();
    return a.mediator < b.mediator;
}

} // namespace

double RunConfig::delta_for(const std::string& exposure) const
{
    const auto it = deltas.find(exposure);
    return it == deltas.end() ? default_delta : it->second;
}

void RunConfig::validate() const
{
    if (k < 2) throw ValidationError("K ≥ 2 required (got K = " + std::to_string(k) + ")");
    if (!(lambda > 1.0)) throw ValidationError("lambda must be > 1");
    if (!(epsilon_frac > 0.0 && epsilon_frac < 1.0)) throw ValidationError("epsilon_frac must lie in (0, 1)");
    if (n_bins && *n_bins < 2) throw ValidationError("n_bins must be >= 2");
    if (!(discovery.f_quantile >= 0.0 && discovery.f_quantile <= 1.0)) {
        throw ValidationError("f_quantile must lie in [0, 1]");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    if (!discover_only && phi_methods.empty()) throw ValidationError("at least one phi method is required");
    if (!(default_delta >= 0.0) || !std::isfinite(default_delta)) throw ValidationError("delta must be finite and >= 0");
    for (const auto& [name, d] : deltas) {
        if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("delta for '" + name + "' must be finite and >= 0");
    }
}

DeltaAdaptation adapt_delta(const ConditionalDensity& g, const Dataset& rows, const ShiftSpec& spec, double lambda,
                            double epsilon_frac)
{
    if (!(lambda > 1.0)) throw ValidationError("lambda must be > 1");
    if (!(epsilon_frac > 0.0 && epsilon_frac < 1.0)) throw ValidationError("epsilon_frac must lie in (0, 1)");
    DeltaAdaptation out;
    out.delta = spec.delta;
    if (g.discrete() || spec.discrete || spec.delta == 0.0) return out;

    const auto a = rows.values(spec.exposure);
    const Eigen::MatrixXd W = rows.matrix(g.conditioners);
    const Bounds bounds = shift_bounds(g);
    std::vector<DensityRow> dens(rows.n());
    std::vector<double> x(static_cast<std::size_t>(W.cols()));
    for (std::size_t i = 0; i < rows.n(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        dens[i] = g.at(x);
    }
    auto max_ratio = [&](double delta) {
        ShiftSpec s = spec;
        s.delta = delta;
        double m = 0.0;
        for (std::size_t i = 0; i < rows.n(); ++i) {
            const double r = shifted_density(dens[i], a[i], s, bounds) / std::max(dens[i].density(a[i]), g.floor);
            m = std::max(m, std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
        }
        return m;
    };

    out.max_ratio = max_ratio(out.delta);
    while (out.max_ratio > lambda) {
        out.delta *= 1.0 - epsilon_frac;
        ++out.iterations;
        if (out.delta < 1e-6 * spec.delta) {
            throw EstimationError("no shift of '" + spec.exposure + "' keeps density ratios below lambda = " +
                                  format_double(lambda) + "; positivity fails");
        }
        out.max_ratio = max_ratio(out.delta);
    }
    return out;
}

FoldResult run_fold(const Dataset& data, const FoldPlan& plan, int fold, const RunConfig& cfg, bool keep_bundles)
{
    FoldResult out;
    out.fold = fold;
    const Dataset train = data.subset(plan.parameter_ids(fold));
    const Dataset est = data.subset(plan.estimation_ids(fold));
    const auto fold_u = static_cast<std::uint64_t>(fold);
    const std::string tag = "fold " + fold_label(fold) + ": ";

    auto t0 = std::chrono::steady_clock::now();
    if (cfg.var_sets.empty()) {
        DiscoveryConfig dc = cfg.discovery;
        dc.cv.seed = derive_seed(cfg.seed, {kFoldStream, fold_u, kDiscoveryCv});
        auto res = discover_pathways(train, dc, fold);
        out.pathways = std::move(res.pathways);
        for (auto& w : res.warnings) out.warnings.push_back(tag + w);
    } else {
        for (auto p : cfg.var_sets) {
            p.fold = fold;
            out.pathways.push_back(std::move(p));
        }
    }
    out.discovery_seconds = seconds_since(t0);
    if (cfg.discover_only) return out;
    if (out.pathways.empty()) out.warnings.push_back(tag + "no pathways; fold contributes no estimates");

    t0 = std::chrono::steady_clock::now();
    const McGrid grid = make_mc_grid(4 * est.n(), derive_seed(cfg.seed, {kFoldStream, fold_u, kMcGrid}));
    NuisanceOptions nopt = cfg.nuisance;
    nopt.cv.seed = derive_seed(cfg.seed, {kFoldStream, fold_u, kNuisanceCv});
    const auto y = est.values(est.outcome());

    for (const auto& p : out.pathways) {
        try {
            const ShiftSpec shift = shift_for(data, p.exposure, cfg);
            NuisanceBundle b = fit_nuisances(train, p, shift, nopt);
            FoldPathway fp;
            fp.pathway = p;
            fp.fold = fold;
            if (cfg.adapt_delta && !shift.discrete) {
                const auto ad = adapt_delta(b.g, train, shift, cfg.lambda, cfg.epsilon_frac);
                b.shift.delta = ad.delta;
                fp.delta_iterations = ad.iterations;
            }
            fp.delta = b.shift.delta;
            for (auto m : cfg.phi_methods) {
                if (m == PhiMethod::pseudo_regression && !b.phi) fit_phi_regression(b, train, nopt);
                fp.components.emplace_back(m, compute_components(b, est, m, grid));
            }
            fp.y.assign(y.begin(), y.end());
            fp.te = total_effect_inputs(b, est);
            fp.q_learner = b.Q.learner;
            fp.q_risk = b.Q.cv_risk;
            out.estimates.push_back(std::move(fp));
            if (keep_bundles) out.bundles.emplace(p.key(), std::move(b));
        } catch (const EstimationError& e) {
            out.warnings.push_back(tag + p.key() + " skipped: " + e.what());
        }
    }
    out.estimation_seconds = seconds_since(t0);
    return out;
}

EffectEstimate pool_direct_effect(std::span<const EifComponents* const> components,
                                  std::span<const std::vector<double>* const> outcomes, PhiMethod method, double alpha)
{
    if (components.size() != outcomes.size()) throw ValidationError("components and outcomes differ in fold count");
    if (components.empty()) throw EstimationError("nothing to pool");
    EifComponents stacked;
    stacked.method = method;
    std::vector<double> y;
    for (std::size_t k = 0; k < components.size(); ++k) {
        const auto& c = *components[k];
        if (c.size() != outcomes[k]->size()) throw ValidationError("fold components and outcomes differ in rows");
        stacked.dY.insert(stacked.dY.end(), c.dY.begin(), c.dY.end());
        stacked.dA.insert(stacked.dA.end(), c.dA.begin(), c.dA.end());
        stacked.dZW.insert(stacked.dZW.end(), c.dZW.begin(), c.dZW.end());
        stacked.mc_draws += c.mc_draws;
        y.insert(y.end(), outcomes[k]->begin(), outcomes[k]->end());
    }
    return direct_effect(estimate_theta_shift(stacked), y, method, alpha);
}

std::vector<PathwayResult> pool_estimates(const std::vector<FoldResult>& folds, int k, bool bounded, double alpha)
{
    std::vector<Pathway> order;
    for (const auto& f : folds) {
        for (const auto& fp : f.estimates) {
            const auto key = fp.pathway.key();
            if (std::none_of(order.begin(), order.end(), [&](const Pathway& p) { return p.key() == key; })) {
                order.push_back(fp.pathway);
            }
        }
    }
    std::sort(order.begin(), order.end(), pathway_order);

    std::vector<PathwayResult> out;
    for (const auto& p : order) {
        const auto key = p.key();
        std::vector<const FoldPathway*> parts;
        for (const auto& f : folds) {
            for (const auto& fp : f.estimates) {
                if (fp.pathway.key() == key) parts.push_back(&fp);
            }
        }
        PathwayResult r;
        r.pathway = p;
        r.pathway.fold = -1;
        r.low_consistency = parts.size() < 2 && k >= 2;

        TotalEffectInputs stacked;
        for (const auto* fp : parts) {
            r.folds.push_back(fp->fold);
            r.fold_deltas.push_back(fp->delta);
            stacked.append(fp->te);
        }
        r.mean_delta = stats::mean(r.fold_deltas);
        // One fluctuation on the stacked rows; fold TEs reuse its epsilon.
        const Fluctuation fl = fit_fluctuation(stacked, bounded);
        r.epsilon = fl.epsilon;

        for (const auto* fp : parts) {
            const auto fl_label = fold_label(fp->fold);
            auto te = total_effect(fp->te, fl, alpha);
            label(te, key, fl_label, fp->delta);
            for (const auto& [m, comps] : fp->components) {
                auto nde = direct_effect(estimate_theta_shift(comps), fp->y, m, alpha);
                label(nde, key, fl_label, fp->delta);
                auto nie = indirect_effect(te, nde, alpha);
                r.per_fold.push_back(std::move(nde));
                r.per_fold.push_back(std::move(nie));
            }
            r.per_fold.push_back(std::move(te));
        }

        auto te = total_effect(stacked, fl, alpha);
        label(te, key, "pooled", r.mean_delta);
        const auto& methods = parts.front()->components;
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            std::vector<const EifComponents*> comps;
            std::vector<const std::vector<double>*> ys;
            for (const auto* fp : parts) {
                comps.push_back(&fp->components[mi].second);
                ys.push_back(&fp->y);
            }
            auto nde = pool_direct_effect(comps, ys, methods[mi].first, alpha);
            label(nde, key, "pooled", r.mean_delta);
            auto nie = indirect_effect(te, nde, alpha);
            r.pooled.push_back(std::move(nde));
            r.pooled.push_back(std::move(nie));
        }
        r.pooled.push_back(std::move(te));
        out.push_back(std::move(r));
    }
    return out;
}

Dataset prepare_exposures(const Dataset& data, const RunConfig& cfg, std::map<std::string, QuantizationMap>* maps)
{
    if (!cfg.n_bins) return data;
    Dataset out = data;
    for (const auto& a : data.names(Role::exposure)) {
        if (data.column(a).kind.kind != Kind::continuous) continue;
        auto q = quantize_exposure(out, a, *cfg.n_bins);
        out = std::move(q.data);
        if (maps) (*maps)[a] = std::move(q.map);
    }
    return out;
}

std::vector<EffectEstimate> PooledResult::estimates() const
{
    std::vector<EffectEstimate> out;
    for (const auto& p : pathways) {
        out.insert(out.end(), p.per_fold.begin(), p.per_fold.end());
        out.insert(out.end(), p.pooled.begin(), p.pooled.end());
    }
    return out;
}

std::string PooledResult::results_csv() const
{
    const auto rows = estimates();
    return estimates_csv(rows);
}

const EffectEstimate* PooledResult::find(const std::string& pathway, EffectKind kind, EstimationMethod method,
                                         const std::string& fold) const
{
    for (const auto& p : pathways) {
        if (p.pathway.key() != pathway) continue;
        const auto& rows = fold == "pooled" ? p.pooled : p.per_fold;
        for (const auto& e : rows) {
            if (e.kind == kind && e.fold == fold && (kind == EffectKind::te || e.method == method)) return &e;
        }
    }
    return nullptr;
}

PooledResult run_crossfit(const Dataset& data, const RunConfig& cfg)
{
    cfg.validate();
    for (const auto& p : cfg.var_sets) {
        if (!data.contains(p.exposure) || data.column(p.exposure).role != Role::exposure) {
            throw ValidationError("var_sets names '" + p.exposure + "', which is not an exposure");
        }
        if (!p.mediator.empty() && (!data.contains(p.mediator) || data.column(p.mediator).role != Role::mediator)) {
            throw ValidationError("var_sets names '" + p.mediator + "', which is not a mediator");
        }
    }
    PooledResult result;
    const Dataset d = prepare_exposures(data, cfg, &result.quantization);
    if (!cfg.discover_only) {
        for (const auto& a : d.names(Role::exposure)) {
            if (d.column(a).kind.kind == Kind::binary) {
                throw ValidationError("exposure '" + a + "' is binary; shift estimation needs a continuous or " +
                                      "categorical exposure");
            }
        }
    }

    const FoldPlan plan = make_folds(d.n(), cfg.k, derive_seed(cfg.seed, {kFoldStream}));
    const unsigned outer = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(cfg.k)));
    std::vector<FoldResult> folds(static_cast<std::size_t>(cfg.k));
    parallel_for(folds.size(), outer, [&](std::size_t f) { folds[f] = run_fold(d, plan, static_cast<int>(f), cfg); });

    std::vector<std::vector<Pathway>> per_fold;
    for (const auto& f : folds) {
        per_fold.push_back(f.pathways);
        result.warnings.insert(result.warnings.end(), f.warnings.begin(), f.warnings.end());
    }
    result.discovery = summarize_discovery(per_fold);

    const bool any = std::any_of(folds.begin(), folds.end(), [](const FoldResult& f) { return !f.estimates.empty(); });
    if (!cfg.discover_only && !any) {
        const bool found = std::any_of(folds.begin(), folds.end(), [](const FoldResult& f) { return !f.pathways.empty(); });
        if (found) throw EstimationError("every pathway failed to estimate in every fold");
        result.warnings.push_back("no pathways discovered in any fold; reporting discovery only");
    }
    if (!cfg.discover_only && any) {
        const bool bounded = d.column(d.outcome()).kind.kind == Kind::binary;
        result.pathways = pool_estimates(folds, cfg.k, bounded, cfg.alpha);
        result.estimated = true;
        for (const auto& p : result.pathways) {
            if (p.low_consistency) {
                result.warnings.push_back("pathway " + p.pathway.key() + " found in " + std::to_string(p.folds.size()) +
                                          " fold(s); pooled estimate has low consistency");
            }
        }
    }
    // Keep fold metadata for the manifest but drop the per-row pieces.
    for (auto& f : folds) {
        for (auto& fp : f.estimates) {
            fp.components.clear();
            fp.y.clear();
            fp.te = {};
        }
    }
    result.folds = std::move(folds);
    return result;
}

} // namespace pathmed
