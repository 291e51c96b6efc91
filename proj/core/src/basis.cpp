#include "json_detail.hpp"

#include <pathmed/error.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pathmed {

double BasisFunction::eval(std::span<const double> x) const
{
    double v = 1.0;
    for (const auto& f : factors) {
        const double xv = x[static_cast<std::size_t>(f.column)];
        switch (kind) {
        case BasisKind::hinge: v *= std::max(0.0, f.sign * (xv - f.knot)); break;
        case BasisKind::indicator: v *= xv <= f.knot ? 1.0 : 0.0; break;
        case BasisKind::linear: v *= xv; break;
        }
        if (v == 0.0) return 0.0;
    }
    return v;
}

std::string BasisFunction::label(std::span<const std::string> predictors) const
{
    std::ostringstream os;
    os.precision(6);
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const auto& f = factors[i];
        const auto& name = predictors[static_cast<std::size_t>(f.column)];
        if (i) os << '*';
        switch (kind) {
        case BasisKind::hinge:
            if (f.sign > 0) os << "h(" << name << "-" << f.knot << ")";
            else os << "h(" << f.knot << "-" << name << ")";
            break;
        case BasisKind::indicator: os << "I(" << name << "<=" << f.knot << ")"; break;
        case BasisKind::linear: os << name; break;
        }
    }
    return os.str();
}

std::vector<std::string> BasisFunction::variables(std::span<const std::string> predictors) const
{
    std::vector<std::string> out;
    for (const auto& f : factors) {
        const auto& name = predictors[static_cast<std::size_t>(f.column)];
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    return out;
}

double BasisModel::linear_predictor(std::span<const double> x) const
{
    double eta = intercept;
    for (const auto& t : terms) eta += t.coef * t.basis.eval(x);
    return eta;
}

double BasisModel::predict(std::span<const double> x) const
{
    const double eta = linear_predictor(x);
    if (response == ResponseKind::binomial) return 1.0 / (1.0 + std::exp(-eta));
    return eta;
}

Eigen::VectorXd BasisModel::predict(const Eigen::MatrixXd& X) const
{
    if (X.cols() != static_cast<Eigen::Index>(predictors.size())) {
        throw ValidationError("model expects " + std::to_string(predictors.size()) + " predictors, got " +
                              std::to_string(X.cols()));
    }
    Eigen::VectorXd out(X.rows());
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        out(i) = predict(row);
    }
    return out;
}

Eigen::MatrixXd BasisModel::basis_matrix(const Eigen::MatrixXd& X) const
{
    Eigen::MatrixXd B(X.rows(), static_cast<Eigen::Index>(terms.size()));
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        for (std::size_t t = 0; t < terms.size(); ++t) B(i, static_cast<Eigen::Index>(t)) = terms[t].basis.eval(row);
    }
    return B;
}

namespace {

const char* kind_name(BasisKind k)
{
    switch (k) {
    case BasisKind::hinge: return "hinge";
    case BasisKind::indicator: return "indicator";
    case BasisKind::linear: return "linear";
    }
    return "?";
}

BasisKind kind_from(const std::string& s)
{
    if (s == "hinge") return BasisKind::hinge;
    if (s == "indicator") return BasisKind::indicator;
    if (s == "linear") return BasisKind::linear;
    throw ValidationError("unknown basis kind '" + s + "'");
}

} // namespace

namespace detail {

nlohmann::json model_to_json(const BasisModel& m)
{
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : m.terms) {
        nlohmann::json cols = nlohmann::json::array(), knots = nlohmann::json::array(),
                       signs = nlohmann::json::array(), vars = nlohmann::json::array();
        for (const auto& f : t.basis.factors) {
            cols.push_back(f.column);
            knots.push_back(f.knot);
            signs.push_back(f.sign);
            vars.push_back(m.predictors.at(static_cast<std::size_t>(f.column)));
        }
        terms.push_back({{"kind", kind_name(t.basis.kind)},
                         {"variables", vars},
                         {"columns", cols},
                         {"knots", knots},
                         {"signs", signs},
                         {"coefficient", t.coef}});
    }
    return {{"learner", m.learner},
            {"predictors", m.predictors},
            {"intercept", m.intercept},
            {"response", m.response == ResponseKind::binomial ? "binomial" : "gaussian"},
            {"n_train", m.n_train},
            {"cv_risk", m.cv_risk},
            {"terms", terms}};
}

BasisModel model_from_json(const nlohmann::json& j)
{
    BasisModel m;
    m.learner = j.at("learner").get<std::string>();
    m.predictors = j.at("predictors").get<std::vector<std::string>>();
    m.intercept = j.at("intercept").get<double>();
    m.response = j.at("response").get<std::string>() == "binomial" ? ResponseKind::binomial : ResponseKind::gaussian;
    m.n_train = j.at("n_train").get<std::size_t>();
    m.cv_risk = j.at("cv_risk").get<double>();
    for (const auto& t : j.at("terms")) {
        BasisTerm term;
        term.basis.kind = kind_from(t.at("kind").get<std::string>());
        const auto cols = t.at("columns").get<std::vector<int>>();
        const auto knots = t.at("knots").get<std::vector<double>>();
        const auto signs = t.at("signs").get<std::vector<int>>();
        if (cols.size() != knots.size() || cols.size() != signs.size()) {
            throw ValidationError("malformed basis term in model JSON");
        }
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= m.predictors.size()) {
                throw ValidationError("basis column out of range in model JSON");
            }
            term.basis.factors.push_back({cols[i], knots[i], signs[i]});
        }
        term.coef = t.at("coefficient").get<double>();
        m.terms.push_back(std::move(term));
    }
    return m;
}

} // namespace detail

std::string BasisModel::to_json() const
{
    return detail::model_to_json(*this).dump();
}

BasisModel BasisModel::from_json(std::string_view text)
{
    try {
        return detail::model_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid model JSON: ") + e.what());
    }
}

} // namespace pathmed
