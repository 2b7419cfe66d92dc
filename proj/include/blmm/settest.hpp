#pragma once

// SNP-set Bayes factors and the hierarchical EM.
//
// Each set is scored against three alternative families at the null anchor
// (kappa = 0): the burden model (pooled sign-consistent effects), the SKAT
// model (independent effects) and the common-variant model (exactly one
// associated SNP). Component Bayes factors are phi-grid averaged, combined by
// model averaging, and the mixture weights (together with the null mass p0)
// can be estimated across many sets by EM.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "blmm/abf.hpp"
#include "blmm/errors.hpp"
#include "blmm/lmm.hpp"
#include "blmm/math_util.hpp"
#include "blmm/priors.hpp"
#include "blmm/types.hpp"

namespace blmm {

struct SetBfRecord {
    std::string set_id;
    double log10_bf_burden = 0.0;
    double log10_bf_skat = 0.0;
    double log10_bf_cv = 0.0;
    double log10_bf_combined = 0.0;
    std::array<double, 3> pis_used = {0.0, 0.0, 0.0};  // (burden, skat, cv)
};

// Common-variant set Bayes factor: uniform average over the p single-SNP
// alternative models, each phi-grid averaged through the scalar path.
// SNPs carrying no information (zero projected variance) contribute BF = 1.
inline double bf_cv(const Model& model, const VarianceFit& null_fit,
                    const std::vector<double>& phis, const std::vector<double>& phi_weights) {
    if (model.p() < 1) throw_input("empty-set", "common-variant BF needs p >= 1 SNPs");
    if (phis.empty()) throw_input("empty-grid", "phi grid is empty");
    const Model::Fit f = model.fit_at(null_fit.lambda);
    const double tau = null_fit.tau;
    std::vector<double> per_snp(model.p());
    std::vector<double> per_phi(phis.size());
    for (Eigen::Index j = 0; j < model.p(); ++j) {
        const double h = f.gram(j, j);
        if (h <= 0.0) {
            per_snp[j] = 0.0;
            continue;
        }
        const double beta = f.score[j] / h;
        const double v = 1.0 / (tau * h);
        for (std::size_t i = 0; i < phis.size(); ++i)
            per_phi[i] = abf_scalar(beta, v, phis[i] * phis[i] / tau);
        per_snp[j] = log10_weighted_sum(per_phi, phi_weights);
    }
    return log10_weighted_sum(per_snp,
                              std::vector<double>(per_snp.size(), 1.0 / per_snp.size()));
}

inline double bf_two_way(double log10_bf_burden, double log10_bf_skat, double pi_burden) {
    if (!(pi_burden >= 0.0 && pi_burden <= 1.0))
        throw_input("invalid-weight", "mixture weight must lie in [0,1]");
    return log10_weighted_sum({log10_bf_burden, log10_bf_skat}, {pi_burden, 1.0 - pi_burden});
}

inline double bf_three_way(double log10_bf_burden, double log10_bf_skat, double log10_bf_cv,
                           const std::array<double, 3>& pis) {
    double total = 0.0;
    for (double pi : pis) {
        if (pi < 0.0) throw_input("invalid-weight", "mixture weights must be nonnegative");
        total += pi;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw_input("invalid-weight", "mixture weights must sum to one");
    return log10_weighted_sum({log10_bf_burden, log10_bf_skat, log10_bf_cv},
                              {pis[0], pis[1], pis[2]});
}

// Burden / SKAT / CV component Bayes factors of one set, sharing a single
// GLS pass at the null anchor. Weights follow the set-test convention
// (Beta(1,25) in the MAF, renormalized to sum to one).
struct SetComponents {
    double log10_burden = 0.0;
    double log10_skat = 0.0;
    double log10_cv = 0.0;
};

inline SetComponents set_component_bfs(const Model& model, const VarianceFit& null_fit,
                                       const VectorXd& mafs, const std::vector<double>& phis,
                                       const std::vector<double>& phi_weights) {
    if (model.p() < 1) throw_input("empty-set", "set test needs p >= 1 SNPs");
    if (mafs.size() != model.p())
        throw_input("dimension-mismatch", "MAF vector does not match the SNP count");
    const Model::Fit f = model.fit_at(null_fit.lambda);
    const double tau = null_fit.tau;
    const MatrixXd precision = tau * f.gram;
    const VectorXd score = tau * f.score;

    EffectPrior prior;
    prior.weights = snp_weights(mafs, /*renormalize=*/true);
    prior.phi = 1.0;
    prior.standardized = true;

    SetComponents out;
    prior.kind = BurdenPrior{};
    out.log10_burden =
        abf_phi_grid(AbfKernel(score, precision, materialize(prior, tau, model.p())), phis,
                     phi_weights);
    prior.kind = SkatPrior{};
    out.log10_skat =
        abf_phi_grid(AbfKernel(score, precision, materialize(prior, tau, model.p())), phis,
                     phi_weights);
    out.log10_cv = bf_cv(model, null_fit, phis, phi_weights);
    return out;
}

struct EmOptions {
    double p0_init = 0.5;
    std::vector<double> pis_init;  // defaults to uniform over components
    bool estimate_p0 = true;
    bool estimate_pis = true;
    int max_iterations = 1000;
    double tol = 1e-8;
};

struct EmResult {
    double p0 = 0.5;
    std::vector<double> pis;
    std::vector<std::vector<double>> posteriors;  // per set: (null, comp 1..K)
    std::vector<double> loglik_trace;
    bool converged = false;
    bool flat_likelihood = false;
    int iterations = 0;
};

inline constexpr double kEmClamp = 1e-3;

// Hierarchical EM over per-set component Bayes factors. The observed-data
// likelihood of set s, relative to its null marginal, is
//   L_s = p0 + (1 - p0) * sum_k pi_k BF_{s,k},
// maximized over p0 and pi with latent null/component indicators.
inline EmResult em_estimate_weights(const std::vector<std::vector<double>>& log10_bfs,
                                    const EmOptions& opt = EmOptions()) {
    const std::size_t S = log10_bfs.size();
    if (S < 2) throw_input("dimension-mismatch", "EM needs at least two sets");
    const std::size_t K = log10_bfs[0].size();
    if (K < 2) throw_input("dimension-mismatch", "EM needs at least two components");
    for (const auto& row : log10_bfs) {
        if (row.size() != K) throw_input("dimension-mismatch", "ragged Bayes-factor table");
        for (double b : row)
            if (!std::isfinite(b)) throw_input("non-finite-entry", "non-finite Bayes factor");
    }

    EmResult res;
    res.p0 = opt.estimate_p0 ? std::clamp(opt.p0_init, kEmClamp, 1.0 - kEmClamp)
                             : opt.p0_init;
    if (!(res.p0 >= 0.0 && res.p0 <= 1.0))
        throw_input("invalid-weight", "p0 must lie in [0,1]");
    res.pis = opt.pis_init.empty() ? std::vector<double>(K, 1.0 / K) : opt.pis_init;
    if (res.pis.size() != K) throw_input("dimension-mismatch", "pis_init has the wrong length");

    std::vector<std::vector<double>> post(S, std::vector<double>(K + 1, 0.0));
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        // E-step
        double ll = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            std::vector<double> terms(K + 1);
            terms[0] = std::log(res.p0);
            const double log_alt = res.p0 < 1.0 ? std::log1p(-res.p0)
                                                : -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k)
                terms[k + 1] = log_alt + std::log(std::max(res.pis[k], 1e-300)) +
                               kLn10 * log10_bfs[s][k];
            const double z = log_sum_exp(terms);
            ll += z;
            for (std::size_t k = 0; k <= K; ++k) post[s][k] = std::exp(terms[k] - z);
        }
        res.loglik_trace.push_back(ll);
        res.iterations = iter;
        if (iter > 1 && ll - prev_ll < opt.tol) {
            res.converged = ll - prev_ll > -1e-10;  // EM can only gain
            break;
        }
        prev_ll = ll;
        // M-step
        if (opt.estimate_p0) {
            double r0 = 0.0;
            for (std::size_t s = 0; s < S; ++s) r0 += post[s][0];
            res.p0 = std::clamp(r0 / S, kEmClamp, 1.0 - kEmClamp);
        }
        if (opt.estimate_pis) {
            std::vector<double> rk(K, 0.0);
            double total = 0.0;
            for (std::size_t s = 0; s < S; ++s)
                for (std::size_t k = 0; k < K; ++k) {
                    rk[k] += post[s][k + 1];
                    total += post[s][k + 1];
                }
            if (total > 0.0) {
                double norm = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    rk[k] = std::max(rk[k] / total, kEmClamp);
                    norm += rk[k];
                }
                for (std::size_t k = 0; k < K; ++k) res.pis[k] = rk[k] / norm;
            }
        }
    }
    res.posteriors = std::move(post);
    // A flat likelihood (all BFs ~ 1) converges immediately at zero.
    res.flat_likelihood =
        res.iterations <= 2 && std::abs(res.loglik_trace.back()) < 1e-9;
    return res;
}

}  // namespace blmm
