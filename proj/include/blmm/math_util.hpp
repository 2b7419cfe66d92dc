#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "blmm/errors.hpp"

namespace blmm {

inline constexpr double kLn10 = 2.302585092994045684;

// log(sum_i exp(x_i)), guarded against empty input and -inf entries.
inline double log_sum_exp(const std::vector<double>& xs) {
    if (xs.empty()) throw_input("empty-input", "log_sum_exp of empty vector");
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;  // all -inf (or a stray inf/nan propagates)
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

// log10 of a weighted sum of quantities given on the log10 scale.
// Weights must be nonnegative; zero-weight terms are skipped.
inline double log10_weighted_sum(const std::vector<double>& log10_values,
                                 const std::vector<double>& weights) {
    if (log10_values.size() != weights.size() || log10_values.empty())
        throw_input("dimension-mismatch", "log10_weighted_sum: size mismatch or empty");
    std::vector<double> terms;
    terms.reserve(log10_values.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0)
            throw_input("invalid-weight", "negative mixture weight");
        if (weights[i] == 0.0) continue;
        terms.push_back(std::log(weights[i]) + kLn10 * log10_values[i]);
    }
    if (terms.empty()) return -std::numeric_limits<double>::infinity();
    return log_sum_exp(terms) / kLn10;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + h, v.end());
    double hi = v[h];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + h);
    return 0.5 * (lo + hi);
}

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Standard normal quantile (Acklam's rational approximation plus one
// Halley refinement; good to ~1e-15 over (0,1)).
inline double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0))
        throw_input("invalid-probability", "normal_quantile requires u in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (u < plow) {
        double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - plow) {
        double q = u - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step on Phi(x) - u = 0.
    const double e = normal_cdf(x) - u;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const double w = e / pdf;
    x -= w / (1.0 + 0.5 * x * w);
    return x;
}

}  // namespace blmm
