#pragma once

// Effect-prior construction. Each alternative model is defined by the prior
// covariance W of the effect vector; the variants here cover pooled
// sign-consistent effects (burden), independent bidirectional effects (SKAT),
// their convex combination, single-common-variant models, spike-and-slab
// inclusion priors and the scaled-V implicit p-value prior. Priors flagged
// `standardized` are specified on the signal-to-noise scale and multiplied by
// 1/tau at materialization.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "blmm/errors.hpp"
#include "blmm/types.hpp"

namespace blmm {

struct BurdenPrior {};
struct SkatPrior {};
struct SkatOPrior {
    double rho = 0.0;
};
struct CvSingletonPrior {
    Eigen::Index index = 0;
};
struct SpikeSlabPrior {
    std::vector<std::uint8_t> gamma;
};
struct ScaledVPrior {
    double c = 1.0;
};

using PriorKind =
    std::variant<BurdenPrior, SkatPrior, SkatOPrior, CvSingletonPrior, SpikeSlabPrior, ScaledVPrior>;

struct EffectPrior {
    PriorKind kind;
    VectorXd weights;          // marginal per-SNP weights (burden/SKAT family)
    double phi = 1.0;          // standardized effect scale
    bool standardized = true;  // multiply W by 1/tau at materialization
};

// Default effect-size grid and its uniform weights.
inline std::vector<double> default_phi_grid() { return {0.1, 0.2, 0.4, 0.8, 1.6}; }

inline std::vector<double> uniform_weights(std::size_t k) {
    return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

// Beta(1,25) density at the minor allele frequency: w_j = 25 (1 - maf_j)^24.
// Rare variants get up-weighted. Optionally renormalized to sum to one,
// which is the convention for set-level priors.
inline VectorXd snp_weights(const VectorXd& mafs, bool renormalize = false) {
    VectorXd w(mafs.size());
    for (Eigen::Index j = 0; j < mafs.size(); ++j) {
        if (!(mafs[j] > 0.0 && mafs[j] <= 0.5))
            throw_input("invalid-maf", "minor allele frequency must lie in (0, 0.5]");
        w[j] = 25.0 * std::pow(1.0 - mafs[j], 24.0);
    }
    if (renormalize) {
        const double total = w.sum();
        if (total <= 0.0) throw_input("invalid-maf", "weights sum to zero");
        w /= total;
    }
    return w;
}

// Materialize the p x p prior covariance W at the given tau.
inline MatrixXd materialize(const EffectPrior& prior, double tau, Eigen::Index p) {
    if (!(tau > 0.0)) throw_input("invalid-tau", "tau must be positive");
    const double scale = prior.phi * prior.phi * (prior.standardized ? 1.0 / tau : 1.0);
    MatrixXd W;
    if (std::holds_alternative<BurdenPrior>(prior.kind) ||
        std::holds_alternative<SkatPrior>(prior.kind) ||
        std::holds_alternative<SkatOPrior>(prior.kind)) {
        if (prior.weights.size() != p)
            throw_input("dimension-mismatch", "weight vector does not match p");
        if ((prior.weights.array() < 0.0).any())
            throw_input("invalid-weight", "per-SNP weights must be nonnegative");
        const VectorXd sw = prior.weights.cwiseSqrt();
        const MatrixXd Wb = sw * sw.transpose();
        const MatrixXd Ws = MatrixXd(prior.weights.asDiagonal());
        if (std::holds_alternative<BurdenPrior>(prior.kind)) {
            W = Wb;
        } else if (std::holds_alternative<SkatPrior>(prior.kind)) {
            W = Ws;
        } else {
            const double rho = std::get<SkatOPrior>(prior.kind).rho;
            if (!(rho >= 0.0 && rho <= 1.0))
                throw_input("invalid-prior", "SKAT-O rho must lie in [0,1]");
            W = (1.0 - rho) * Ws + rho * Wb;
        }
    } else if (const auto* cv = std::get_if<CvSingletonPrior>(&prior.kind)) {
        if (cv->index < 0 || cv->index >= p)
            throw_input("dimension-mismatch", "single-variant index out of range");
        W = MatrixXd::Zero(p, p);
        W(cv->index, cv->index) = 1.0;
    } else if (const auto* ss = std::get_if<SpikeSlabPrior>(&prior.kind)) {
        if (static_cast<Eigen::Index>(ss->gamma.size()) != p)
            throw_input("dimension-mismatch", "inclusion vector does not match p");
        W = MatrixXd::Zero(p, p);
        for (Eigen::Index j = 0; j < p; ++j)
            if (ss->gamma[j]) W(j, j) = 1.0;
    } else {
        // Scaled-V priors depend on the effect covariance, not on tau alone;
        // the ABF layer evaluates them in closed form.
        throw_input("invalid-prior", "scaled-V prior has no standalone W; use the ABF path");
    }
    return scale * W;
}

}  // namespace blmm
