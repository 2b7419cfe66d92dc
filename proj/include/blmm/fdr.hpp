#pragma once

// False discovery rate control.
//
// The Bayesian path ranks units by their posterior null probability
// P0_i = pi0 / (pi0 + (1 - pi0) BF_i) and rejects the longest prefix whose
// running mean stays at or below the target level. pi0 = 1 is the most
// conservative choice (it rejects nothing); estimated pi0 values come from
// the hierarchical EM. Benjamini-Hochberg and Storey step-up procedures are
// provided for the p-value baselines.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "blmm/errors.hpp"
#include "blmm/math_util.hpp"

namespace blmm {

enum class FdrMethod { BayesEbf, BH, Storey };

struct DiscoverySet {
    std::vector<bool> decisions;        // original input order
    std::vector<double> posterior_null; // Bayesian path only
    double threshold = std::numeric_limits<double>::quiet_NaN();
    double target_alpha = 0.0;
    FdrMethod method = FdrMethod::BayesEbf;
    int n_rejected = 0;
};

// Posterior null probability from a log10 Bayes factor, stable for huge BFs.
inline double posterior_null_prob(double log10_bf, double pi0) {
    if (pi0 >= 1.0) return 1.0;
    if (pi0 <= 0.0) return 0.0;
    // P0 = 1 / (1 + exp(t)), t = log((1-pi0)/pi0) + ln10 * log10BF
    const double t = std::log1p(-pi0) - std::log(pi0) + kLn10 * log10_bf;
    if (t > 700.0) return std::exp(-t);
    return 1.0 / (1.0 + std::exp(t));
}

inline DiscoverySet bayes_fdr(const std::vector<double>& log10_bfs, double pi0, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw_input("invalid-alpha", "alpha must lie in (0,1)");
    if (!(pi0 > 0.0 && pi0 <= 1.0)) throw_input("invalid-weight", "pi0 must lie in (0,1]");
    const std::size_t m = log10_bfs.size();
    DiscoverySet out;
    out.method = FdrMethod::BayesEbf;
    out.target_alpha = alpha;
    out.posterior_null.resize(m);
    out.decisions.assign(m, false);
    for (std::size_t i = 0; i < m; ++i) {
        if (!std::isfinite(log10_bfs[i]))
            throw_input("non-finite-entry", "non-finite Bayes factor");
        out.posterior_null[i] = posterior_null_prob(log10_bfs[i], pi0);
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.posterior_null[a] < out.posterior_null[b];
    });
    double running = 0.0;
    std::size_t n_rej = 0;
    for (std::size_t r = 0; r < m; ++r) {
        running += out.posterior_null[order[r]];
        if (running / (r + 1) <= alpha) n_rej = r + 1;
    }
    for (std::size_t r = 0; r < n_rej; ++r) out.decisions[order[r]] = true;
    out.n_rejected = static_cast<int>(n_rej);
    if (n_rej > 0) out.threshold = out.posterior_null[order[n_rej - 1]];
    return out;
}

namespace detail {

inline void check_pvalues(const std::vector<double>& ps) {
    for (double p : ps)
        if (!(p >= 0.0 && p <= 1.0))
            throw_input("invalid-probability", "p-value outside [0,1]");
}

inline DiscoverySet step_up(const std::vector<double>& pvalues, double alpha, double pi0,
                            FdrMethod method) {
    const std::size_t m = pvalues.size();
    DiscoverySet out;
    out.method = method;
    out.target_alpha = alpha;
    out.decisions.assign(m, false);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    std::size_t n_rej = 0;
    for (std::size_t r = 0; r < m; ++r)
        if (pvalues[order[r]] <= (r + 1) * alpha / (m * pi0)) n_rej = r + 1;
    for (std::size_t r = 0; r < n_rej; ++r) out.decisions[order[r]] = true;
    out.n_rejected = static_cast<int>(n_rej);
    if (n_rej > 0) out.threshold = pvalues[order[n_rej - 1]];
    return out;
}

}  // namespace detail

inline DiscoverySet bh_fdr(const std::vector<double>& pvalues, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw_input("invalid-alpha", "alpha must lie in (0,1)");
    detail::check_pvalues(pvalues);
    return detail::step_up(pvalues, alpha, 1.0, FdrMethod::BH);
}

inline DiscoverySet storey_fdr(const std::vector<double>& pvalues, double alpha,
                               double lambda_tuning = 0.5) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw_input("invalid-alpha", "alpha must lie in (0,1)");
    if (!(lambda_tuning > 0.0 && lambda_tuning < 1.0))
        throw_input("invalid-probability", "tuning parameter must lie in (0,1)");
    detail::check_pvalues(pvalues);
    const std::size_t m = pvalues.size();
    if (m == 0) return detail::step_up(pvalues, alpha, 1.0, FdrMethod::Storey);
    std::size_t tail = 0;
    for (double p : pvalues)
        if (p > lambda_tuning) ++tail;
    double pi0 = static_cast<double>(tail) / ((1.0 - lambda_tuning) * m);
    pi0 = std::min(pi0, 1.0);
    if (pi0 <= 0.0) pi0 = 1.0 / static_cast<double>(m);
    return detail::step_up(pvalues, alpha, pi0, FdrMethod::Storey);
}

}  // namespace blmm
