#pragma once
#include <cmath>
#include <optional>
#include <stdexcept>

#include "targeting.hpp"

namespace sptmle {

/// Estimated efficient influence function evaluated at each observation.
struct EifSample
{
    Eigen::VectorXd values;

    double mean() const { return values.mean(); }
};

/// D*(O_i) = (A_i/g_i)(Y_i - Q*(A_i, W_i)) + Q*(1, W_i) - psi_hat.
inline EifSample eif_values(const Eigen::VectorXd& q_observed, const Eigen::VectorXd& q_treated,
                            const Eigen::VectorXd& g_hat, const Dataset& data, double psi_hat)
{
    const auto n = data.size();
    EifSample out{Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values[i] = clever_covariate(data.a()[i], g_hat[i]) * (data.y()[i] - q_observed[i]) +
                        q_treated[i] - psi_hat;
    }
    return out;
}

inline EifSample eif_values(const OutcomeModel& model, const PropensityModel& g,
                            const Dataset& data, double psi_hat)
{
    return eif_values(model.q_observed(), model.q_treated(), g.fitted, data, psi_hat);
}

class InferenceError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Upper (1+level)/2 standard normal quantile by bisection on erfc.
inline double normal_quantile_two_sided(double level)
{
    if (level == 0.95) return kZ975;
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0,1)");
    const double tail = 0.5 * (1.0 - level);
    double lo = 0.0, hi = 40.0;
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(mid / std::sqrt(2.0)) > tail ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Wald interval psi_hat +/- z * sqrt(var(D*) / n), with the n-1 variance
/// divisor.
inline EstimateReport wald_interval(const EifSample& eif, double psi_hat, double level = 0.95)
{
    const auto n = eif.values.size();
    if (n < 2) throw InferenceError("wald_interval: need at least two EIF values");
    const double mean = eif.values.mean();
    const double var = (eif.values.array() - mean).square().sum() / static_cast<double>(n - 1);
    if (!(var > 0.0)) throw InferenceError("wald_interval: EIF sample has zero variance");
    const double se = std::sqrt(var / static_cast<double>(n));
    const double z = detail::normal_quantile_two_sided(level);

    EstimateReport r;
    r.psi_hat = psi_hat;
    r.se = se;
    r.ci_lower = psi_hat - z * se;
    r.ci_upper = psi_hat + z * se;
    r.eif_mean = mean;
    return r;
}

/// Report for a targeted estimator; `max_score_residual` and `iterations`
/// come from the targeting step.
inline EstimateReport targeted_report(const OutcomeModel& model, const PropensityModel& g,
                                      const Dataset& data, double max_score_residual,
                                      std::size_t iterations)
{
    const double psi = plug_in_psi(model, data);
    auto r = wald_interval(eif_values(model, g, data, psi), psi);
    r.max_score_residual = max_score_residual;
    r.iterations = iterations;
    return r;
}

/// Report for an untargeted plug-in. No standard error is attached; the
/// EIF mean is the plug-in-bias diagnostic and needs a propensity fit.
inline EstimateReport plugin_report(const Eigen::VectorXd& q_treated, const Dataset& data,
                                    const PropensityModel* g, double max_score_residual)
{
    EstimateReport r;
    r.psi_hat = q_treated.mean();
    if (g) {
        // Q(A, W) = Q(1, W) for an untargeted fit on W.
        r.eif_mean = eif_values(q_treated, q_treated, g->fitted, data, r.psi_hat).mean();
    }
    r.max_score_residual = max_score_residual;
    return r;
}

} // namespace sptmle
