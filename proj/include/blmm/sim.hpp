#pragma once

// Simulation harness: block-LD genotypes from a latent Gaussian, phenotypes
// under the null / sign-consistent / sign-mixed / common-variant alternative
// models, and kinship-driven random effects. Every generator is a pure
// function of its RNG stream so panels are reproducible from one master seed.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "blmm/errors.hpp"
#include "blmm/math_util.hpp"
#include "blmm/rng.hpp"
#include "blmm/types.hpp"

namespace blmm {

enum class Scenario { Null, SignConsistent, SignMixed, CommonVariant };

inline const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Null: return "null";
        case Scenario::SignConsistent: return "sign_consistent";
        case Scenario::SignMixed: return "sign_mixed";
        case Scenario::CommonVariant: return "common_variant";
    }
    return "?";
}

struct SimConfig {
    int n_individuals = 500;
    int n_sets = 200;
    int snps_per_set = 100;
    double null_fraction = 0.7;
    // relative frequency of (SignConsistent, SignMixed, CommonVariant)
    std::array<double, 3> scenario_mix = {0.5, 0.5, 0.0};
    double causal_fraction = 0.2;
    double effect_c = 0.1;          // beta_j = +/- c |log10 maf_j|
    double protective_fraction = 0.4;
    double maf_lo = 0.001;
    double maf_hi = 0.05;
    int ld_block_size = 10;
    double lambda_true = 0.0;       // optional random-effect variance ratio
    double tau_true = 1.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_individuals < 2 || n_sets < 1 || snps_per_set < 1)
            throw_input("invalid-config", "simulation geometry must be positive");
        if (!(null_fraction >= 0.0 && null_fraction <= 1.0))
            throw_input("invalid-config", "null fraction must lie in [0,1]");
        double mix = 0.0;
        for (double w : scenario_mix) {
            if (w < 0.0) throw_input("invalid-config", "scenario mix must be nonnegative");
            mix += w;
        }
        if (mix <= 0.0) throw_input("invalid-config", "scenario mix is empty");
        if (!(causal_fraction > 0.0 && causal_fraction <= 1.0))
            throw_input("invalid-config", "causal fraction must lie in (0,1]");
        if (!(maf_lo > 0.0 && maf_hi <= 0.5 && maf_lo <= maf_hi))
            throw_input("invalid-config", "MAF range must lie inside (0, 0.5]");
        if (ld_block_size < 1) throw_input("invalid-config", "LD block size must be >= 1");
        if (!(tau_true > 0.0) || lambda_true < 0.0)
            throw_input("invalid-config", "variance parameters out of range");
    }
};

// Latent within-block correlation of the genotype generator.
inline constexpr double kLatentLdCorr = 0.7;

// MAFs log-uniform on [lo, hi].
inline VectorXd simulate_mafs(int p, double lo, double hi, Rng& rng) {
    VectorXd mafs(p);
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (int j = 0; j < p; ++j) mafs[j] = std::pow(10.0, rng.uniform(llo, lhi));
    return mafs;
}

// Dosage matrix in {0,1,2}: two latent-Gaussian haplotypes per individual,
// shared block factor with correlation kLatentLdCorr, thresholded at each
// SNP's MAF quantile.
inline MatrixXd simulate_genotypes(int n, const VectorXd& mafs, int ld_block_size, Rng& rng) {
    const int p = static_cast<int>(mafs.size());
    VectorXd thresholds(p);
    for (int j = 0; j < p; ++j) thresholds[j] = normal_quantile(mafs[j]);
    MatrixXd G(n, p);
    const double shared = std::sqrt(kLatentLdCorr);
    const double indiv = std::sqrt(1.0 - kLatentLdCorr);
    for (int i = 0; i < n; ++i) {
        for (int block = 0; block * ld_block_size < p; ++block) {
            const int lo = block * ld_block_size;
            const int hi = std::min(p, lo + ld_block_size);
            for (int hap = 0; hap < 2; ++hap) {
                const double zb = rng.normal();
                for (int j = lo; j < hi; ++j) {
                    const double z = ld_block_size == 1
                                         ? rng.normal()
                                         : shared * zb + indiv * rng.normal();
                    const double allele = z < thresholds[j] ? 1.0 : 0.0;
                    if (hap == 0)
                        G(i, j) = allele;
                    else
                        G(i, j) += allele;
                }
            }
        }
    }
    return G;
}

// Dosages for sibling families: within each family of `family_size` full
// sibs, alleles are drawn from two shared parental haplotype pairs, giving
// expected relatedness 0.5 and a kinship spectrum that makes the variance
// ratio identifiable even at small n.
inline MatrixXd simulate_family_genotypes(int n, const VectorXd& mafs, int family_size,
                                          Rng& rng) {
    if (family_size < 1) throw_input("invalid-config", "family size must be >= 1");
    const int p = static_cast<int>(mafs.size());
    MatrixXd G(n, p);
    for (int j = 0; j < p; ++j) {
        const double maf = mafs[j];
        for (int base = 0; base < n; base += family_size) {
            const int members = std::min(family_size, n - base);
            const int pa[2] = {rng.bernoulli(maf), rng.bernoulli(maf)};
            const int pb[2] = {rng.bernoulli(maf), rng.bernoulli(maf)};
            for (int k = 0; k < members; ++k)
                G(base + k, j) = pa[rng.uniform_index(2)] + pb[rng.uniform_index(2)];
        }
    }
    return G;
}

// Inbred-line-style dosages: groups of `family_size` individuals share a base
// genotype; each allele is copied with probability sqrt(genotype_corr) and
// redrawn otherwise, giving within-group genotype correlation ~genotype_corr.
inline MatrixXd simulate_line_genotypes(int n, const VectorXd& mafs, int family_size,
                                        double genotype_corr, Rng& rng) {
    if (family_size < 1) throw_input("invalid-config", "family size must be >= 1");
    if (!(genotype_corr >= 0.0 && genotype_corr < 1.0))
        throw_input("invalid-config", "genotype correlation must lie in [0,1)");
    const double share = std::sqrt(genotype_corr);
    const int p = static_cast<int>(mafs.size());
    MatrixXd G(n, p);
    for (int j = 0; j < p; ++j) {
        const double maf = mafs[j];
        for (int base = 0; base < n; base += family_size) {
            const int members = std::min(family_size, n - base);
            const int b0 = rng.bernoulli(maf), b1 = rng.bernoulli(maf);
            for (int k = 0; k < members; ++k) {
                const int a0 = rng.uniform() < share ? b0 : rng.bernoulli(maf);
                const int a1 = rng.uniform() < share ? b1 : rng.bernoulli(maf);
                G(base + k, j) = a0 + a1;
            }
        }
    }
    return G;
}

// Exact kinship of the sibling-family layout above: block diagonal with unit
// diagonal and `relatedness` off-diagonal inside each family. Positive
// definite for relatedness in [0,1), which keeps the profile likelihood
// bounded (an empirical column-centered GRM has K 1 = 0, and once X contains
// the intercept and rank(K) = n-1 the ML profile of lambda diverges).
inline MatrixXd block_kinship(int n, int family_size, double relatedness = 0.5) {
    if (family_size < 1) throw_input("invalid-config", "family size must be >= 1");
    if (!(relatedness >= 0.0 && relatedness < 1.0))
        throw_input("invalid-config", "relatedness must lie in [0,1)");
    MatrixXd K = MatrixXd::Identity(n, n);
    for (int base = 0; base < n; base += family_size) {
        const int members = std::min(family_size, n - base);
        for (int a = 0; a < members; ++a)
            for (int b = 0; b < members; ++b)
                if (a != b) K(base + a, base + b) = relatedness;
    }
    return K;
}

struct SimPhenotype {
    VectorXd y;
    VectorXd x;  // the controlled covariate
    Scenario scenario = Scenario::Null;
    std::vector<int> causal;  // indices with nonzero effects
    VectorXd beta;            // full-length effect vector
};

// Null model y = 0.5 x + e with x, e standard normal.
inline SimPhenotype simulate_null_phenotype(int n, Rng& rng) {
    SimPhenotype out;
    out.scenario = Scenario::Null;
    out.x = VectorXd(n);
    for (int i = 0; i < n; ++i) out.x[i] = rng.normal();
    out.y = VectorXd(n);
    for (int i = 0; i < n; ++i) out.y[i] = 0.5 * out.x[i] + rng.normal();
    out.beta = VectorXd();
    return out;
}

// Rare-variant alternatives: a causal_fraction of SNPs gets
// beta_j = c |log10 maf_j|, all deleterious (SignConsistent) or with a
// protective_fraction of flipped signs (SignMixed).
inline SimPhenotype simulate_rare_alternative(const MatrixXd& G, const VectorXd& mafs,
                                              const SimConfig& cfg, Scenario scheme, Rng& rng) {
    if (scheme != Scenario::SignConsistent && scheme != Scenario::SignMixed)
        throw_input("invalid-config", "rare-variant scheme must be sign consistent or mixed");
    const int n = static_cast<int>(G.rows());
    const int p = static_cast<int>(G.cols());
    SimPhenotype out;
    out.scenario = scheme;
    out.x = VectorXd(n);
    for (int i = 0; i < n; ++i) out.x[i] = rng.normal();
    out.beta = VectorXd::Zero(p);
    const int n_causal = std::max(1, static_cast<int>(std::ceil(cfg.causal_fraction * p)));
    out.causal = rng.sample_without_replacement(p, n_causal);
    const int n_protective =
        scheme == Scenario::SignMixed
            ? static_cast<int>(std::lround(cfg.protective_fraction * n_causal))
            : 0;
    for (std::size_t r = 0; r < out.causal.size(); ++r) {
        const int j = out.causal[r];
        const double c = r < static_cast<std::size_t>(n_protective) ? -cfg.effect_c
                                                                    : cfg.effect_c;
        out.beta[j] = c * std::abs(std::log10(mafs[j]));
    }
    out.y = 0.5 * out.x + G * out.beta;
    for (int i = 0; i < n; ++i) out.y[i] += rng.normal();
    return out;
}

// Common-variant alternative: one to three SNPs with MAF >= 0.05 carry
// effects drawn from N(0,1).
inline SimPhenotype simulate_cv_alternative(const MatrixXd& G, const VectorXd& mafs,
                                            Rng& rng) {
    const int n = static_cast<int>(G.rows());
    const int p = static_cast<int>(G.cols());
    std::vector<int> common;
    for (int j = 0; j < p; ++j)
        if (mafs[j] >= 0.05) common.push_back(j);
    if (common.empty())
        throw_input("no-common-variant", "no SNP with MAF >= 0.05 in the set");
    SimPhenotype out;
    out.scenario = Scenario::CommonVariant;
    out.x = VectorXd(n);
    for (int i = 0; i < n; ++i) out.x[i] = rng.normal();
    out.beta = VectorXd::Zero(p);
    const int n_causal =
        std::min<int>(1 + static_cast<int>(rng.uniform_index(3)), common.size());
    for (int pick : rng.sample_without_replacement(static_cast<int>(common.size()), n_causal)) {
        const int j = common[pick];
        out.causal.push_back(j);
        out.beta[j] = rng.normal();
    }
    out.y = 0.5 * out.x + G * out.beta;
    for (int i = 0; i < n; ++i) out.y[i] += rng.normal();
    return out;
}

// y = X alpha + G beta + u + e with u ~ N(0, lambda/tau K), e ~ N(0, I/tau).
inline VectorXd simulate_with_random_effect(const MatrixXd& X, const VectorXd& alpha,
                                            const MatrixXd& G, const VectorXd& beta,
                                            double lambda, double tau, const MatrixXd& K,
                                            Rng& rng) {
    if (!(tau > 0.0) || lambda < 0.0)
        throw_input("invalid-config", "variance parameters out of range");
    const int n = static_cast<int>(X.rows());
    VectorXd y = X * alpha;
    if (G.size() > 0) y += G * beta;
    if (lambda > 0.0) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (K + K.transpose()));
        if (es.info() != Eigen::Success)
            throw_numeric("degenerate-kinship", "kinship eigendecomposition failed");
        if (es.eigenvalues().minCoeff() < -kKinshipEigTolerance)
            throw_numeric("degenerate-kinship", "kinship is not PSD");
        const MatrixXd half =
            es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        VectorXd z(n);
        for (int i = 0; i < n; ++i) z[i] = rng.normal();
        y += std::sqrt(lambda / tau) * (half * z);
    }
    const double sd = 1.0 / std::sqrt(tau);
    for (int i = 0; i < n; ++i) y[i] += rng.normal(0.0, sd);
    return y;
}

// One phenotype-SNP set pair of a panel.
struct SimSet {
    std::string id;
    MatrixXd G;
    VectorXd mafs;
    SimPhenotype pheno;
};

// Draw the scenario of a non-null set from the configured mix.
inline Scenario draw_scenario(const SimConfig& cfg, Rng& rng) {
    const double total = cfg.scenario_mix[0] + cfg.scenario_mix[1] + cfg.scenario_mix[2];
    const double u = rng.uniform() * total;
    if (u < cfg.scenario_mix[0]) return Scenario::SignConsistent;
    if (u < cfg.scenario_mix[0] + cfg.scenario_mix[1]) return Scenario::SignMixed;
    return Scenario::CommonVariant;
}

// Simulate set `index` of the panel; derived RNG streams make each set
// independent of panel traversal order.
inline SimSet simulate_panel_set(const SimConfig& cfg, int index) {
    cfg.validate();
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(index));
    SimSet set;
    set.id = "set" + std::string(5 - std::min<std::size_t>(5, std::to_string(index).size()), '0') +
             std::to_string(index);
    set.mafs = simulate_mafs(cfg.snps_per_set, cfg.maf_lo, cfg.maf_hi, rng);
    const bool is_null = rng.uniform() < cfg.null_fraction;
    Scenario scenario = is_null ? Scenario::Null : draw_scenario(cfg, rng);
    if (scenario == Scenario::CommonVariant) {
        // guarantee eligible SNPs without disturbing the rare tail
        bool any = (set.mafs.array() >= 0.05).any();
        if (!any && cfg.maf_hi >= 0.05)
            for (int j = 0; j < std::max(1, cfg.snps_per_set / 20); ++j)
                set.mafs[j] = rng.uniform(0.05, cfg.maf_hi);
        else if (!any)
            scenario = Scenario::SignConsistent;  // CV impossible in this MAF range
    }
    set.G = simulate_genotypes(cfg.n_individuals, set.mafs, cfg.ld_block_size, rng);
    switch (scenario) {
        case Scenario::Null:
            set.pheno = simulate_null_phenotype(cfg.n_individuals, rng);
            break;
        case Scenario::SignConsistent:
        case Scenario::SignMixed:
            set.pheno = simulate_rare_alternative(set.G, set.mafs, cfg, scenario, rng);
            break;
        case Scenario::CommonVariant:
            set.pheno = simulate_cv_alternative(set.G, set.mafs, rng);
            break;
    }
    return set;
}

}  // namespace blmm
