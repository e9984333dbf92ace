#pragma once
#include <algorithm>
#include <concepts>
#include <limits>
#include <utility>
#include <vector>

#include "basis.hpp"

namespace sptmle {

/// What the logistic solvers need from a design: dense column access for
/// coordinate updates and a full X^T v for gradient (KKT) sweeps.
template <class D>
concept LogisticDesign = requires(const D& d, const Eigen::VectorXd& v, Eigen::Index j) {
    { d.rows() } -> std::convertible_to<Eigen::Index>;
    { d.cols() } -> std::convertible_to<Eigen::Index>;
    { d.col(j) };
    { d.cross(v) } -> std::convertible_to<Eigen::VectorXd>;
    { d.matrix() } -> std::convertible_to<const Eigen::MatrixXd&>;
    { d.weighted_gram(std::vector<Eigen::Index>{}, v) } -> std::convertible_to<Eigen::MatrixXd>;
};

class DenseDesign
{
public:
    explicit DenseDesign(Eigen::MatrixXd x) : x_(std::move(x)) {}

    Eigen::Index rows() const noexcept { return x_.rows(); }
    Eigen::Index cols() const noexcept { return x_.cols(); }
    auto col(Eigen::Index j) const { return x_.col(j); }
    Eigen::VectorXd cross(const Eigen::VectorXd& v) const { return x_.transpose() * v; }
    const Eigen::MatrixXd& matrix() const noexcept { return x_; }

    /// X_S^T diag(v) X_S for the listed columns S.
    Eigen::MatrixXd weighted_gram(const std::vector<Eigen::Index>& cols, const Eigen::VectorXd& v) const
    {
        const auto m = static_cast<Eigen::Index>(cols.size());
        Eigen::MatrixXd xs(x_.rows(), m);
        const Eigen::VectorXd sv = v.cwiseSqrt();
        for (Eigen::Index c = 0; c < m; ++c) xs.col(c) = sv.cwiseProduct(x_.col(cols[c]));
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
        h.selfadjointView<Eigen::Lower>().rankUpdate(xs.transpose());
        h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
        return h;
    }

private:
    Eigen::MatrixXd x_;
};

/// Deduplicated spline design on the data it was built from, with the
/// structured X^T v.
class SplineDesign
{
public:
    SplineDesign(BasisExpansion basis, const Dataset& data)
        : basis_(std::move(basis)), dm_(design_matrix(basis_, data)),
          sums_(basis_, dm_.columns, data.w()), w_(data.w())
    {}

    Eigen::Index rows() const noexcept { return dm_.x.rows(); }
    Eigen::Index cols() const noexcept { return dm_.x.cols(); }
    auto col(Eigen::Index j) const { return dm_.x.col(j); }
    Eigen::VectorXd cross(const Eigen::VectorXd& v) const { return sums_(v); }
    const Eigen::MatrixXd& matrix() const noexcept { return dm_.x; }

    /// X_S^T diag(v) X_S in O(n log m + m^2). Every column is an orthant
    /// indicator 1{w1 >= a} 1{w2 >= b} (a or b may be -inf), and the product
    /// of two such columns is the orthant at the componentwise max, so each
    /// entry is one lookup in a 2-D suffix-sum table over the distinct
    /// thresholds of S.
    Eigen::MatrixXd weighted_gram(const std::vector<Eigen::Index>& cols, const Eigen::VectorXd& v) const
    {
        constexpr double lo = -std::numeric_limits<double>::infinity();
        const auto m = cols.size();
        std::vector<double> ta(m), tb(m);
        for (std::size_t c = 0; c < m; ++c) {
            const auto spec = basis_.column(dm_.columns[static_cast<std::size_t>(cols[c])]);
            ta[c] = tb[c] = lo;
            if (spec.kind == ColumnKind::Main) {
                (spec.coord == 0 ? ta[c] : tb[c]) = spec.knot1;
            } else if (spec.kind == ColumnKind::Interaction) {
                ta[c] = spec.knot1;
                tb[c] = spec.knot2;
            }
        }
        auto distinct = [](std::vector<double> t) {
            std::sort(t.begin(), t.end());
            t.erase(std::unique(t.begin(), t.end()), t.end());
            return t;
        };
        const auto a = distinct(ta), b = distinct(tb);
        const auto na = static_cast<Eigen::Index>(a.size()), nb = static_cast<Eigen::Index>(b.size());
        auto cell = [](const std::vector<double>& t, double x) {
            return static_cast<Eigen::Index>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
        };

        Eigen::MatrixXd table = Eigen::MatrixXd::Zero(na + 1, nb + 1);
        for (Eigen::Index i = 0; i < w_.rows(); ++i) {
            if (v[i] == 0.0) continue;
            const auto p = cell(a, w_(i, 0)), q = cell(b, w_(i, 1));
            if (p >= 0 && q >= 0) table(p, q) += v[i];
        }
        for (Eigen::Index p = 0; p < na; ++p)
            for (Eigen::Index q = nb - 1; q >= 0; --q) table(p, q) += table(p, q + 1);
        for (Eigen::Index q = 0; q < nb; ++q)
            for (Eigen::Index p = na - 1; p >= 0; --p) table(p, q) += table(p + 1, q);

        std::vector<Eigen::Index> ia(m), ib(m);
        for (std::size_t c = 0; c < m; ++c) {
            ia[c] = std::lower_bound(a.begin(), a.end(), ta[c]) - a.begin();
            ib[c] = std::lower_bound(b.begin(), b.end(), tb[c]) - b.begin();
        }
        const auto mm = static_cast<Eigen::Index>(m);
        Eigen::MatrixXd h(mm, mm);
        for (Eigen::Index j = 0; j < mm; ++j) {
            for (Eigen::Index k = 0; k <= j; ++k) {
                h(j, k) = h(k, j) = table(std::max(ia[j], ia[k]), std::max(ib[j], ib[k]));
            }
        }
        return h;
    }

    const BasisExpansion& basis() const noexcept { return basis_; }
    const DesignMatrix& design() const noexcept { return dm_; }
    /// Basis column index of kept column j.
    std::size_t basis_column(std::size_t j) const { return dm_.columns[j]; }

    /// Kept column holding the intercept (always column 0 for a basis with
    /// an intercept, since it is evaluated first).
    static constexpr Eigen::Index kIntercept = 0;

private:
    BasisExpansion basis_;
    DesignMatrix dm_;
    ColumnSums sums_;
    Eigen::MatrixXd w_;
};

} // namespace sptmle
