#pragma once
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>

#include "glm.hpp"

namespace sptmle {

/// Rows the outcome regression is fit on.
enum class OutcomeFit { All, TreatedOnly };

inline std::string_view to_string(OutcomeFit f)
{
    return f == OutcomeFit::All ? "all" : "treated_only";
}

inline OutcomeFit parse_outcome_fit(std::string_view s)
{
    if (s == "all") return OutcomeFit::All;
    if (s == "treated_only") return OutcomeFit::TreatedOnly;
    throw std::invalid_argument("unknown outcome_fit '" + std::string(s) +
                                "' (expected all or treated_only)");
}

struct HalConfig
{
    std::size_t lambda_grid_size = 100;
    int cv_folds = 10;
    double lambda_min_ratio = 1e-4;
    double g_trunc_lower = 0.01;
    double g_trunc_upper = 0.99;
    OutcomeFit outcome_fit = OutcomeFit::All;
};

/// Relaxed-HAL outcome regression Q(1, W) together with its in-sample
/// state on the dataset it was fit to.
///
/// `targeting_offset` and `treated_offset` are the logit-scale adjustments
/// accumulated by targeting on the observed-A and A=1 prediction paths.
struct OutcomeModel
{
    BasisExpansion basis;
    std::vector<std::size_t> columns; ///< kept basis columns, design order
    OutcomeFit fit_population = OutcomeFit::All;
    double lambda = 0.0;
    Eigen::VectorXd lasso_beta;           ///< HAL coefficients over `columns`
    std::vector<std::size_t> active_set;  ///< positions in `columns` used by the refit
    Eigen::VectorXd beta;                 ///< relaxed coefficients over `active_set`
    bool ridge_fallback = false;
    double refit_max_score = 0.0;

    Eigen::MatrixXd active_x;   ///< Phi restricted to active_set on the fitting data
    Eigen::VectorXd lasso_logit; ///< in-sample Phi' beta_hat
    Eigen::VectorXd base_logit;  ///< in-sample Phi' beta_tilde
    Eigen::VectorXd targeting_offset;
    Eigen::VectorXd treated_offset;

    Eigen::Index n() const noexcept { return base_logit.size(); }

    /// Q(A_i, W_i) on the observed treatment path.
    Eigen::VectorXd q_observed() const { return clamped_expit(base_logit + targeting_offset); }
    /// Q(1, W_i).
    Eigen::VectorXd q_treated() const { return clamped_expit(base_logit + treated_offset); }
    /// HAL (lasso) fit Q(1, W_i), untargeted.
    Eigen::VectorXd q_lasso() const { return clamped_expit(lasso_logit); }

    /// Untargeted relaxed prediction at a new covariate value.
    double predict(double w1, double w2) const
    {
        double eta = 0.0;
        for (std::size_t t = 0; t < active_set.size(); ++t) {
            eta += beta[static_cast<Eigen::Index>(t)] *
                   basis.column(columns[active_set[t]]).evaluate(w1, w2);
        }
        return clamp_prob(expit(eta));
    }

    static Eigen::VectorXd clamped_expit(const Eigen::VectorXd& eta)
    {
        Eigen::VectorXd q(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) q[i] = clamp_prob(expit(eta[i]));
        return q;
    }
};

struct PropensityModel
{
    BasisExpansion basis;
    std::vector<std::size_t> columns;
    double lambda = 0.0;
    Eigen::VectorXd beta; ///< over `columns`
    double lower = 0.01;
    double upper = 0.99;
    Eigen::VectorXd fitted; ///< truncated in-sample g(W_i)

    double predict(double w1, double w2) const
    {
        double eta = 0.0;
        for (std::size_t j = 0; j < columns.size(); ++j) {
            const double b = beta[static_cast<Eigen::Index>(j)];
            if (b != 0.0) eta += b * basis.column(columns[j]).evaluate(w1, w2);
        }
        return std::clamp(expit(eta), lower, upper);
    }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t kOutcomeCvSalt = 1;
inline constexpr std::uint64_t kPropensityCvSalt = 2;

/// CV-selected lasso on the design, warm-started down the same grid.
inline std::pair<CvResult, Eigen::VectorXd> cv_lasso(const SplineDesign& design,
                                                     const Eigen::VectorXd& y,
                                                     const Eigen::VectorXd& weights,
                                                     const HalConfig& config, std::uint64_t seed)
{
    CvOptions cv;
    cv.n_folds = config.cv_folds;
    cv.grid_size = config.lambda_grid_size;
    cv.min_ratio = config.lambda_min_ratio;
    cv.seed = seed;
    cv.weights = weights;
    cv.unpenalized = {SplineDesign::kIntercept};
    auto result = select_lambda_cv(design, y, cv);

    LogisticLasso<SplineDesign> solver(design, y, LassoOptions{cv.unpenalized, cv.tol, 10000, weights});
    for (std::size_t l = 0; l <= result.selected; ++l) solver.solve(result.lambdas[l]);
    return {std::move(result), solver.beta()};
}

} // namespace detail

/// Design for the outcome regression: the basis is built on the fitting
/// population and evaluated on every row.
inline SplineDesign outcome_design(const Dataset& data, OutcomeFit fit)
{
    if (fit == OutcomeFit::All) return SplineDesign(build_basis(data), data);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.a()[i] == 1.0) rows.push_back(i);
    }
    if (rows.empty()) throw std::invalid_argument("outcome_design: no treated rows");
    Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t t = 0; t < rows.size(); ++t) w.row(static_cast<Eigen::Index>(t)) = data.w().row(rows[t]);
    const auto m = static_cast<Eigen::Index>(rows.size());
    Dataset treated(std::move(w), Eigen::VectorXd::Ones(m), Eigen::VectorXd::Zero(m), data.seed());
    return SplineDesign(build_basis(treated), data);
}

inline OutcomeModel fit_outcome_model(const SplineDesign& design, const Dataset& data,
                                      const HalConfig& config)
{
    if (data.size() < 20) throw std::invalid_argument("fit_outcome_model: need n >= 20");
    const auto n = data.size();
    const Eigen::VectorXd weights =
        config.outcome_fit == OutcomeFit::All ? Eigen::VectorXd::Ones(n) : data.a();

    auto [cv, lasso_beta] = detail::cv_lasso(design, data.y(), weights, config,
                                             detail::mix_seed(data.seed(), detail::kOutcomeCvSalt));

    OutcomeModel model;
    model.basis = design.basis();
    model.columns = design.design().columns;
    model.fit_population = config.outcome_fit;
    model.lambda = cv.lambda;
    model.lasso_beta = lasso_beta;
    model.lasso_logit = design.matrix() * lasso_beta;

    std::vector<Eigen::Index> nonzero;
    for (Eigen::Index j = 0; j < lasso_beta.size(); ++j) {
        if (j == SplineDesign::kIntercept || lasso_beta[j] != 0.0) nonzero.push_back(j);
    }
    RefitOptions ro;
    ro.weights = weights;
    const auto refit = relaxed_refit(design.matrix(), data.y(), nonzero, ro);
    model.ridge_fallback = refit.ridge_fallback;
    model.refit_max_score = refit.max_score;
    model.beta = refit.beta;
    model.active_x.resize(n, static_cast<Eigen::Index>(refit.columns.size()));
    for (std::size_t t = 0; t < refit.columns.size(); ++t) {
        model.active_set.push_back(static_cast<std::size_t>(refit.columns[t]));
        model.active_x.col(static_cast<Eigen::Index>(t)) = design.matrix().col(refit.columns[t]);
    }
    model.base_logit = model.active_x * model.beta;
    model.targeting_offset = Eigen::VectorXd::Zero(n);
    model.treated_offset = Eigen::VectorXd::Zero(n);
    return model;
}

inline OutcomeModel fit_outcome_model(const Dataset& data, const HalConfig& config = {})
{
    return fit_outcome_model(outcome_design(data, config.outcome_fit), data, config);
}

inline PropensityModel fit_propensity_model(const SplineDesign& design, const Dataset& data,
                                            const HalConfig& config)
{
    if (data.size() < 20) throw std::invalid_argument("fit_propensity_model: need n >= 20");
    if (!(config.g_trunc_lower > 0.0 && config.g_trunc_lower < config.g_trunc_upper &&
          config.g_trunc_upper < 1.0)) {
        throw std::invalid_argument("fit_propensity_model: need 0 < lower < upper < 1");
    }
    const auto n = data.size();
    auto [cv, beta] = detail::cv_lasso(design, data.a(), Eigen::VectorXd::Ones(n), config,
                                       detail::mix_seed(data.seed(), detail::kPropensityCvSalt));
    PropensityModel g;
    g.basis = design.basis();
    g.columns = design.design().columns;
    g.lambda = cv.lambda;
    g.beta = beta;
    g.lower = config.g_trunc_lower;
    g.upper = config.g_trunc_upper;
    const Eigen::VectorXd eta = design.matrix() * beta;
    g.fitted.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) g.fitted[i] = std::clamp(expit(eta[i]), g.lower, g.upper);
    return g;
}

inline PropensityModel fit_propensity_model(const Dataset& data, const HalConfig& config = {})
{
    return fit_propensity_model(SplineDesign(build_basis(data), data), data, config);
}

inline nlohmann::json to_json(const OutcomeModel& m)
{
    std::vector<double> relaxed(m.beta.data(), m.beta.data() + m.beta.size());
    std::vector<double> lasso(m.lasso_beta.data(), m.lasso_beta.data() + m.lasso_beta.size());
    return {{"basis", to_json(m.basis)},
            {"columns", m.columns},
            {"outcome_fit", std::string(to_string(m.fit_population))},
            {"lambda", m.lambda},
            {"lasso_beta", lasso},
            {"active_set", m.active_set},
            {"beta", relaxed},
            {"ridge_fallback", m.ridge_fallback}};
}

inline nlohmann::json to_json(const PropensityModel& g)
{
    std::vector<double> beta(g.beta.data(), g.beta.data() + g.beta.size());
    return {{"basis", to_json(g.basis)}, {"columns", g.columns}, {"lambda", g.lambda},
            {"beta", beta},              {"trunc_lower", g.lower}, {"trunc_upper", g.upper}};
}

/// Restores the coefficient part of a model. In-sample state (offsets and
/// cached design columns) is not persisted.
inline OutcomeModel outcome_model_from_json(const nlohmann::json& j)
{
    OutcomeModel m;
    m.basis = basis_from_json(j.at("basis"));
    m.columns = j.at("columns").get<std::vector<std::size_t>>();
    m.fit_population = parse_outcome_fit(j.at("outcome_fit").get<std::string>());
    m.lambda = j.at("lambda").get<double>();
    const auto lasso = j.at("lasso_beta").get<std::vector<double>>();
    m.lasso_beta = Eigen::Map<const Eigen::VectorXd>(lasso.data(), static_cast<Eigen::Index>(lasso.size()));
    m.active_set = j.at("active_set").get<std::vector<std::size_t>>();
    const auto beta = j.at("beta").get<std::vector<double>>();
    m.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    m.ridge_fallback = j.at("ridge_fallback").get<bool>();
    return m;
}

inline PropensityModel propensity_model_from_json(const nlohmann::json& j)
{
    PropensityModel g;
    g.basis = basis_from_json(j.at("basis"));
    g.columns = j.at("columns").get<std::vector<std::size_t>>();
    g.lambda = j.at("lambda").get<double>();
    const auto beta = j.at("beta").get<std::vector<double>>();
    g.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    g.lower = j.at("trunc_lower").get<double>();
    g.upper = j.at("trunc_upper").get<double>();
    return g;
}

} // namespace sptmle
