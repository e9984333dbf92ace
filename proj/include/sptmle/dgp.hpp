#pragma once
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "core.hpp"

namespace sptmle {

/// Seeded stream used everywhere randomness is needed.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Unit draws take the top 53 bits of one engine output, so a
/// given seed produces the same doubles on every conforming platform.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    bool bernoulli(double p) { return unit() < p; }

    /// Uniform integer in [0, bound) by rejection on the raw 64-bit output.
    std::uint64_t below(std::uint64_t bound)
    {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

private:
    std::mt19937_64 engine_;
};

enum class TreatmentMechanism { Linear, Sinusoidal, Step };

inline std::string_view to_string(TreatmentMechanism m)
{
    switch (m) {
    case TreatmentMechanism::Linear: return "linear";
    case TreatmentMechanism::Sinusoidal: return "sinusoidal";
    case TreatmentMechanism::Step: return "step";
    }
    return "?";
}

inline TreatmentMechanism parse_mechanism(std::string_view s)
{
    if (s == "linear") return TreatmentMechanism::Linear;
    if (s == "sinusoidal") return TreatmentMechanism::Sinusoidal;
    if (s == "step") return TreatmentMechanism::Step;
    throw std::invalid_argument("unknown dgp '" + std::string(s) +
                                "' (expected linear, sinusoidal or step)");
}

struct DgpSpec
{
    TreatmentMechanism treatment_mechanism = TreatmentMechanism::Linear;
    /// E[E[Y | A=1, W]]; the outcome mechanism does not depend on the
    /// treatment mechanism, so this is shared by all three.
    static constexpr double true_psi = 0.5;
};

inline double true_propensity(const DgpSpec& spec, double w1, double w2)
{
    switch (spec.treatment_mechanism) {
    case TreatmentMechanism::Linear:
        return expit(2.0 * w2 + w1);
    case TreatmentMechanism::Sinusoidal:
        return expit(3.0 * std::cos(2.0 * std::numbers::pi * std::sqrt(w1 * w1 + w2 * w2)));
    case TreatmentMechanism::Step: {
        // logit g = 1{same-sign quadrant}
        const bool same = (w1 > 0.0 && w2 > 0.0) || (w1 < 0.0 && w2 < 0.0);
        return expit(same ? 1.0 : 0.0);
    }
    }
    return 0.5;
}

inline double true_outcome_mean(double w1, double w2)
{
    return expit(w1 + 2.0 * w2);
}

/// Draws n rows. Each row consumes exactly four unit draws in the order
/// w1, w2, a, y; W is 2U - 1 and Bernoulli draws are U < p.
inline Dataset generate(const DgpSpec& spec, Eigen::Index n, std::uint64_t seed)
{
    if (n < 1) throw std::invalid_argument("generate: n must be positive");
    Rng rng(seed);
    Eigen::MatrixXd w(n, 2);
    Eigen::VectorXd a(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w1 = 2.0 * rng.unit() - 1.0;
        const double w2 = 2.0 * rng.unit() - 1.0;
        w(i, 0) = w1;
        w(i, 1) = w2;
        a[i] = rng.bernoulli(true_propensity(spec, w1, w2)) ? 1.0 : 0.0;
        y[i] = rng.bernoulli(true_outcome_mean(w1, w2)) ? 1.0 : 0.0;
    }
    return Dataset(std::move(w), std::move(a), std::move(y), seed);
}

} // namespace sptmle
