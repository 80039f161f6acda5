#pragma once

// Statistical kernels: normal distribution, two-proportion power and sample
// size, the pooled two-proportion z-test, an always-valid mixture SPRT on the
// difference of proportions, and CUPED covariate adjustment.
//
// All functions are pure. Invalid input throws std::invalid_argument (or
// std::domain_error for non-finite reals).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace metaexp {

using Count = std::int64_t;

// ---------------------------------------------------------------------------
// Normal distribution
// ---------------------------------------------------------------------------

/// Standard normal CDF, computed as erfc(-x / sqrt 2) / 2 (std::erfc is
/// accurate to a few ulp, well inside 1e-7 absolute error).
inline double normal_cdf(double x) {
    if (!std::isfinite(x)) throw std::domain_error("normal_cdf: non-finite argument");
    return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

inline double normal_pdf(double x) noexcept {
    return 0.39894228040143267794 * std::exp(-0.5 * x * x);
}

/// Inverse of normal_cdf. Acklam's rational approximation as a starting point,
/// then Halley steps on normal_cdf until the residual is below 1e-15.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0,1)");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Work on the lower tail so the residual keeps relative precision.
    const bool upper = p > 0.5;
    const double target = upper ? 1.0 - p : p;
    double z = upper ? -x : x;
    for (int i = 0; i < 4; ++i) {
        const double e = 0.5 * std::erfc(-z * 0.70710678118654752440) - target;
        const double pdf = normal_pdf(z);
        if (pdf <= 0.0) break;
        const double u = e / pdf;
        z -= u / (1.0 + 0.5 * z * u);
        if (std::abs(e) <= 1e-15 * target) break;
    }
    return upper ? -z : z;
}

// ---------------------------------------------------------------------------
// Power and sample size for two proportions
// ---------------------------------------------------------------------------

/// Design inputs for a two-arm binary-metric A/B test. The MDE is absolute
/// (percentage points on the probability scale); alpha is two-sided.
struct PowerSpec {
    double baseline_rate = 0.1;
    double mde_abs = 0.01;
    double alpha = 0.05;
    double target_power = 0.8;
    Count n_per_arm = 1;
};

inline void validate(const PowerSpec& s) {
    auto fail = [](const char* what) { throw std::invalid_argument(std::string("PowerSpec: ") + what); };
    if (!(s.baseline_rate >= 0.0 && s.baseline_rate < 1.0)) fail("baseline_rate must lie in [0,1)");
    if (!(s.mde_abs > 0.0)) fail("mde_abs must be > 0");
    if (!(s.baseline_rate + s.mde_abs < 1.0)) fail("baseline_rate + mde_abs must stay below 1");
    if (!(s.alpha > 0.0 && s.alpha < 1.0)) fail("alpha must lie in (0,1)");
    if (!(s.target_power > 0.0 && s.target_power < 1.0)) fail("target_power must lie in (0,1)");
    if (s.n_per_arm < 1) fail("n_per_arm must be >= 1");
}

namespace detail {

inline double power_at(double p1, double p2, double alpha, double n) {
    const double sigma = std::sqrt(p1 * (1.0 - p1) + p2 * (1.0 - p2));
    const double z_crit = normal_quantile(1.0 - alpha / 2.0);
    const double shift = std::abs(p2 - p1) * std::sqrt(n) / sigma;
    return normal_cdf(shift - z_crit) + normal_cdf(-shift - z_crit);
}

}  // namespace detail

/// Two-sided power of the two-proportion z-test (normal approximation with
/// unpooled variance) for n_per_arm units per arm. Both rejection tails are
/// counted, so power tends to alpha as the effect vanishes.
inline double power_two_proportions(const PowerSpec& s) {
    validate(s);
    return detail::power_at(s.baseline_rate, s.baseline_rate + s.mde_abs, s.alpha,
                            static_cast<double>(s.n_per_arm));
}

/// Smallest n per arm whose power reaches target_power.
///
/// Starts from the closed form
///   n = (z_{1-alpha/2} + z_power)^2 * (p1 q1 + p2 q2) / (p2 - p1)^2
/// rounded up, then steps so that power(n) >= target and power(n-1) < target.
inline Count required_sample_size(const PowerSpec& s) {
    validate(s);
    const double p1 = s.baseline_rate;
    const double p2 = s.baseline_rate + s.mde_abs;
    const double z_a = normal_quantile(1.0 - s.alpha / 2.0);
    const double z_b = normal_quantile(s.target_power);
    const double var = p1 * (1.0 - p1) + p2 * (1.0 - p2);
    const double zz = std::max(0.0, z_a + z_b);
    const double closed = std::ceil(zz * zz * var / (s.mde_abs * s.mde_abs));
    if (!(closed < 9.0e15)) throw std::invalid_argument("required_sample_size: sample size overflow");

    auto power = [&](Count n) { return detail::power_at(p1, p2, s.alpha, static_cast<double>(n)); };
    Count n = std::max<Count>(1, static_cast<Count>(closed));
    while (n > 1 && power(n - 1) >= s.target_power) --n;
    while (power(n) < s.target_power) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Fixed-horizon two-proportion z-test
// ---------------------------------------------------------------------------

struct TestResult {
    double estimate = 0.0;  ///< p2 - p1
    double z_score = 0.0;
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double alpha = 0.05;

    bool significant() const noexcept { return p_value <= alpha; }
};

/// Two-sided test of x2/n2 versus x1/n1 (arm 1 is the reference). The z
/// statistic uses the pooled variance; the (1 - alpha) interval uses the
/// unpooled variance. Rates of exactly 0 or 1 are floored to 0.5/n inside the
/// variance terms.
inline TestResult two_proportion_ztest(Count x1, Count n1, Count x2, Count n2, double alpha = 0.05) {
    if (n1 < 1 || n2 < 1) throw std::invalid_argument("two_proportion_ztest: arm sizes must be >= 1");
    if (x1 < 0 || x2 < 0 || x1 > n1 || x2 > n2)
        throw std::invalid_argument("two_proportion_ztest: conversions must lie in [0, n]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("two_proportion_ztest: alpha must lie in (0,1)");

    const double dn1 = static_cast<double>(n1);
    const double dn2 = static_cast<double>(n2);
    const double p1 = static_cast<double>(x1) / dn1;
    const double p2 = static_cast<double>(x2) / dn2;

    auto floored = [](double p, double n) { return std::clamp(p, 0.5 / n, 1.0 - 0.5 / n); };

    TestResult r;
    r.alpha = alpha;
    r.estimate = p2 - p1;

    const double pooled = floored(static_cast<double>(x1 + x2) / (dn1 + dn2), dn1 + dn2);
    const double se0 = std::sqrt(pooled * (1.0 - pooled) * (1.0 / dn1 + 1.0 / dn2));
    r.z_score = r.estimate / se0;
    r.p_value = std::clamp(std::erfc(std::abs(r.z_score) * 0.70710678118654752440), 0.0, 1.0);

    const double q1 = floored(p1, dn1);
    const double q2 = floored(p2, dn2);
    const double se1 = std::sqrt(q1 * (1.0 - q1) / dn1 + q2 * (1.0 - q2) / dn2);
    const double half = normal_quantile(1.0 - alpha / 2.0) * se1;
    r.ci_low = r.estimate - half;
    r.ci_high = r.estimate + half;
    return r;
}

// ---------------------------------------------------------------------------
// Always-valid sequential test (mixture SPRT)
// ---------------------------------------------------------------------------

/// Cumulative counts plus the running always-valid p-value.
struct SequentialState {
    Count n1 = 0, n2 = 0;
    Count x1 = 0, x2 = 0;
    double tau_sq = 1e-4;
    double running_p = 1.0;

    bool rejected(double alpha) const noexcept { return running_p <= alpha; }
};

/// One look's worth of new Bernoulli observations per arm.
struct SequentialBatch {
    Count n1 = 0, x1 = 0;
    Count n2 = 0, x2 = 0;
};

/// Mixture likelihood ratio for the difference of proportions under a normal
/// approximation, with a N(0, tau_sq) mixing distribution over the true
/// difference:
///   V = pbar (1 - pbar) (1/n1 + 1/n2)
///   log L = 0.5 log(V / (V + tau_sq)) + tau_sq d^2 / (2 V (V + tau_sq))
/// Returns log L, or 0 when an arm has no observations.
inline double msprt_log_likelihood_ratio(Count n1, Count x1, Count n2, Count x2, double tau_sq) {
    if (n1 < 1 || n2 < 1) return 0.0;
    const double dn1 = static_cast<double>(n1);
    const double dn2 = static_cast<double>(n2);
    const double n = dn1 + dn2;
    const double pooled = std::clamp(static_cast<double>(x1 + x2) / n, 0.5 / n, 1.0 - 0.5 / n);
    const double v = pooled * (1.0 - pooled) * (1.0 / dn1 + 1.0 / dn2);
    const double d = static_cast<double>(x2) / dn2 - static_cast<double>(x1) / dn1;
    return 0.5 * std::log(v / (v + tau_sq)) + tau_sq * d * d / (2.0 * v * (v + tau_sq));
}

/// Appends a batch and updates running_p = min(previous, 1 / L).
inline SequentialState sequential_update(SequentialState state, const SequentialBatch& batch) {
    if (batch.n1 < 0 || batch.n2 < 0 || batch.x1 < 0 || batch.x2 < 0 || batch.x1 > batch.n1 ||
        batch.x2 > batch.n2)
        throw std::invalid_argument("sequential_update: inconsistent batch counts");
    if (!(state.tau_sq > 0.0)) throw std::invalid_argument("sequential_update: tau_sq must be > 0");

    state.n1 += batch.n1;
    state.x1 += batch.x1;
    state.n2 += batch.n2;
    state.x2 += batch.x2;
    const double log_lr = msprt_log_likelihood_ratio(state.n1, state.x1, state.n2, state.x2, state.tau_sq);
    state.running_p = std::min(state.running_p, std::min(1.0, std::exp(-log_lr)));
    return state;
}

// ---------------------------------------------------------------------------
// Descriptive helpers
// ---------------------------------------------------------------------------

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("variance: need at least two values");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

inline double covariance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("covariance: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("covariance: need at least two pairs");
    const double mx = mean(x);
    const double my = mean(y);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(x.size() - 1);
}

// ---------------------------------------------------------------------------
// CUPED
// ---------------------------------------------------------------------------

struct CupedResult {
    std::vector<double> adjusted;
    double theta = 0.0;
};

/// y_i - theta (x_i - mean x) with theta = cov(x, y) / var(x).
inline CupedResult cuped_adjust(std::span<const double> y, std::span<const double> x) {
    if (y.size() != x.size()) throw std::invalid_argument("cuped_adjust: outcome and covariate lengths differ");
    if (y.size() < 2) throw std::invalid_argument("cuped_adjust: need at least two pairs");
    const double var_x = variance(x);
    if (!(var_x > 0.0)) throw std::invalid_argument("cuped_adjust: covariate has zero variance");

    CupedResult r;
    r.theta = covariance(x, y) / var_x;
    const double mx = mean(x);
    r.adjusted.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r.adjusted[i] = y[i] - r.theta * (x[i] - mx);
    return r;
}

// ---------------------------------------------------------------------------
// Two-sample comparisons on aggregates
// ---------------------------------------------------------------------------

struct IntervalEstimate {
    double estimate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;

    bool excludes_zero() const noexcept { return ci_low > 0.0 || ci_high < 0.0; }
};

/// Welch two-sample interval for mean(after) - mean(before).
inline IntervalEstimate welch_interval(std::span<const double> before, std::span<const double> after,
                                       double alpha = 0.05) {
    if (before.size() < 2 || after.size() < 2)
        throw std::invalid_argument("welch_interval: each sample needs at least two values");
    const double m0 = mean(before), m1 = mean(after);
    const double v0 = variance(before) / static_cast<double>(before.size());
    const double v1 = variance(after) / static_cast<double>(after.size());

    IntervalEstimate r;
    r.estimate = m1 - m0;
    const double se2 = v0 + v1;
    if (se2 <= 0.0) {
        r.ci_low = r.ci_high = r.estimate;
        r.p_value = r.estimate == 0.0 ? 1.0 : 0.0;
        return r;
    }
    const double df = se2 * se2 /
                      (v0 * v0 / static_cast<double>(before.size() - 1) +
                       v1 * v1 / static_cast<double>(after.size() - 1));
    const boost::math::students_t dist(df);
    const double t_crit = boost::math::quantile(dist, 1.0 - alpha / 2.0);
    const double se = std::sqrt(se2);
    r.ci_low = r.estimate - t_crit * se;
    r.ci_high = r.estimate + t_crit * se;
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.estimate) / se));
    return r;
}

/// Cochran's Q heterogeneity test across independent estimates with standard
/// errors. Returns the p-value; 1 when fewer than two usable estimates.
inline double heterogeneity_p_value(std::span<const double> estimates, std::span<const double> std_errors) {
    if (estimates.size() != std_errors.size())
        throw std::invalid_argument("heterogeneity_p_value: length mismatch");
    double sw = 0.0, swx = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (!(std_errors[i] > 0.0)) continue;
        const double w = 1.0 / (std_errors[i] * std_errors[i]);
        sw += w;
        swx += w * estimates[i];
        ++k;
    }
    if (k < 2) return 1.0;
    const double pooled = swx / sw;
    double q = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (!(std_errors[i] > 0.0)) continue;
        const double r = (estimates[i] - pooled) / std_errors[i];
        q += r * r;
    }
    const boost::math::chi_squared dist(static_cast<double>(k - 1));
    return boost::math::cdf(boost::math::complement(dist, q));
}

}  // namespace metaexp
