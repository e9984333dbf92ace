#pragma once
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace sptmle {

/// Probabilities emitted by any fitted outcome regression are clamped to
/// [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-10;

/// Two-sided 95% normal quantile used for every Wald interval.
inline constexpr double kZ975 = 1.959964;

/// Logistic function. Evaluated on the sign-split form so that neither
/// branch exponentiates a positive argument.
inline double expit(double x) noexcept
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p)
{
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("logit: probability " + std::to_string(p) +
                                " outside (0,1); truncate upstream");
    }
    return std::log(p / (1.0 - p));
}

inline double clamp_prob(double p, double floor = kProbFloor) noexcept
{
    return p < floor ? floor : (p > 1.0 - floor ? 1.0 - floor : p);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) noexcept
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Negative Bernoulli log-likelihood of y at linear predictor eta.
inline double bernoulli_nll(double y, double eta) noexcept
{
    return softplus(eta) - y * eta;
}

/// Observed data O = (W, A, Y) with a fixed covariate dimension of two.
class Dataset
{
public:
    static constexpr int kCovariateDim = 2;

    Dataset() = default;

    Dataset(Eigen::MatrixXd w, Eigen::VectorXd a, Eigen::VectorXd y, std::uint64_t seed = 0)
        : w_(std::move(w)), a_(std::move(a)), y_(std::move(y)), seed_(seed)
    {
        const auto n = w_.rows();
        if (n < 1) {
            throw std::invalid_argument("Dataset: need at least one observation");
        }
        if (w_.cols() != kCovariateDim) {
            throw std::invalid_argument("Dataset: covariate matrix must have 2 columns");
        }
        if (a_.size() != n || y_.size() != n) {
            throw std::invalid_argument("Dataset: w, a, y lengths differ");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(a_[i] == 0.0 || a_[i] == 1.0)) {
                throw std::invalid_argument("Dataset: a[" + std::to_string(i) + "] is not 0/1");
            }
            if (!(y_[i] == 0.0 || y_[i] == 1.0)) {
                throw std::invalid_argument("Dataset: y[" + std::to_string(i) + "] is not 0/1");
            }
            if (!std::isfinite(w_(i, 0)) || !std::isfinite(w_(i, 1))) {
                throw std::invalid_argument("Dataset: w row " + std::to_string(i) + " not finite");
            }
        }
    }

    Eigen::Index size() const noexcept { return w_.rows(); }
    int dim() const noexcept { return kCovariateDim; }
    const Eigen::MatrixXd& w() const noexcept { return w_; }
    const Eigen::VectorXd& a() const noexcept { return a_; }
    const Eigen::VectorXd& y() const noexcept { return y_; }
    std::uint64_t seed() const noexcept { return seed_; }

private:
    Eigen::MatrixXd w_;
    Eigen::VectorXd a_;
    Eigen::VectorXd y_;
    std::uint64_t seed_ = 0;
};

/// Point estimate with EIF-based inference. Plug-in estimators carry no
/// standard error, so se and the interval are empty for them.
struct EstimateReport
{
    double psi_hat = 0.0;
    std::optional<double> se;
    std::optional<double> ci_lower;
    std::optional<double> ci_upper;
    double eif_mean = 0.0;
    double max_score_residual = 0.0;
    std::size_t iterations = 0;
};

} // namespace sptmle
