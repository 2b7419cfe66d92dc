#pragma once

// Multi-SNP fine-mapping by Bayesian variable selection.
//
// With the variance parameters anchored at the null fit (kappa = 0), the data
// can be whitened once; afterwards every inclusion vector gamma is scored by
// an identity-covariance GLS with fixed tau, so the region posterior
//   Pr(gamma | y) proportional to Pr(gamma) * ABF(phi^2 diag(gamma))
// is explored by Metropolis-Hastings over add/remove/swap moves. Subset
// scores depend on the data only through the projected Gram matrix and score
// vector, both precomputed, so one proposal costs O(k^3) for k included SNPs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "blmm/abf.hpp"
#include "blmm/errors.hpp"
#include "blmm/lmm.hpp"
#include "blmm/math_util.hpp"
#include "blmm/parallel.hpp"
#include "blmm/rng.hpp"
#include "blmm/types.hpp"

namespace blmm {

struct WhitenedData {
    VectorXd y;
    MatrixXd X;
    MatrixXd G;
    double tau = 1.0;     // fixed at the null-anchor estimate
    double lambda = 0.0;  // lambda used for the whitening
};

// Transform (y, X, G) by the symmetric inverse square root of Sigma(lambda).
inline WhitenedData whiten(const Model& model, const VarianceFit& null_fit) {
    if (null_fit.kappa != 0.0)
        throw_input("invalid-anchor", "whitening requires a kappa = 0 fit");
    WhitenedData w;
    if (model.has_kinship()) {
        const MatrixXd R = model.sigma_inv_sqrt(null_fit.lambda);
        w.y = R * model.data().y;
        w.X = R * model.data().X;
        w.G = R * model.data().G;
    } else {
        w.y = model.data().y;
        w.X = model.data().X;
        w.G = model.data().G;
    }
    w.tau = null_fit.tau;
    w.lambda = null_fit.lambda;
    return w;
}

// Prior inclusion probability: a point value or a uniform grid on log10(p1).
struct P1Spec {
    std::vector<double> values;

    static P1Spec point(double p1) {
        check(p1);
        P1Spec s;
        s.values = {p1};
        return s;
    }

    static P1Spec log10_grid(double log10_lo, double log10_hi, int n_points = 17) {
        if (n_points < 1) throw_input("invalid-prior", "p1 grid needs at least one point");
        if (log10_hi < log10_lo) std::swap(log10_lo, log10_hi);
        P1Spec s;
        for (int i = 0; i < n_points; ++i) {
            const double t = n_points == 1
                                 ? log10_lo
                                 : log10_lo + (log10_hi - log10_lo) * i / (n_points - 1);
            const double p1 = std::pow(10.0, t);
            check(p1);
            s.values.push_back(p1);
        }
        return s;
    }

private:
    static void check(double p1) {
        if (!(p1 > 0.0 && p1 < 1.0))
            throw_input("invalid-prior", "p1 must lie in (0,1)");
    }
};

// log Pr(gamma) for |gamma| = k out of p, averaging over the p1 grid.
inline double log_prior_gamma(int n_included, int p, const P1Spec& spec) {
    if (spec.values.empty()) throw_input("invalid-prior", "empty p1 specification");
    if (n_included < 0 || n_included > p)
        throw_input("dimension-mismatch", "invalid inclusion count");
    std::vector<double> terms;
    terms.reserve(spec.values.size());
    for (double p1 : spec.values)
        terms.push_back(n_included * std::log(p1) + (p - n_included) * std::log1p(-p1));
    return log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
}

// ---------------------------------------------------------------------------
// Proposal kernel: add / remove / swap with base weights 0.4 / 0.4 / 0.2,
// renormalized over the moves feasible in the current state.

enum class Move { Add, Remove, Swap };

namespace detail {

inline void move_weights(int p, int k, double& wa, double& wr, double& ws) {
    wa = k < p ? 0.4 : 0.0;
    wr = k >= 1 ? 0.4 : 0.0;
    ws = (k >= 1 && k < p) ? 0.2 : 0.0;
}

}  // namespace detail

// log probability of proposing one SPECIFIC neighbour state via `move`.
inline double log_proposal_prob(int p, int k_from, Move move) {
    double wa, wr, ws;
    detail::move_weights(p, k_from, wa, wr, ws);
    const double z = wa + wr + ws;
    switch (move) {
        case Move::Add:
            if (wa == 0.0) return -std::numeric_limits<double>::infinity();
            return std::log(wa / z) - std::log(static_cast<double>(p - k_from));
        case Move::Remove:
            if (wr == 0.0) return -std::numeric_limits<double>::infinity();
            return std::log(wr / z) - std::log(static_cast<double>(k_from));
        case Move::Swap:
            if (ws == 0.0) return -std::numeric_limits<double>::infinity();
            return std::log(ws / z) -
                   std::log(static_cast<double>(k_from) * static_cast<double>(p - k_from));
    }
    return -std::numeric_limits<double>::infinity();
}

// Metropolis-Hastings log acceptance probability.
inline double log_acceptance(double log_post_from, double log_post_to, double log_q_fwd,
                             double log_q_rev) {
    return std::min(0.0, (log_post_to + log_q_rev) - (log_post_from + log_q_fwd));
}

// ---------------------------------------------------------------------------
// Subset scorer on whitened data.

class RegionScorer {
public:
    RegionScorer(const WhitenedData& data, std::vector<double> phis,
                 std::vector<double> phi_weights)
        : phis_(std::move(phis)), phi_weights_(std::move(phi_weights)), tau_(data.tau) {
        if (phis_.empty()) throw_input("empty-grid", "phi grid is empty");
        if (phis_.size() != phi_weights_.size())
            throw_input("dimension-mismatch", "phi grid and weights differ in length");
        const Eigen::Index p = data.G.cols();
        if (p < 1) throw_input("empty-set", "region has no SNPs");
        Eigen::ColPivHouseholderQR<MatrixXd> qrx(data.X);
        if (qrx.rank() < data.X.cols())
            throw_numeric("singular-design", "whitened X is rank deficient");
        const VectorXd resid = data.y - data.X * qrx.solve(data.y);
        const MatrixXd Gp = data.G - data.X * qrx.solve(data.G);
        gram_ = Gp.transpose() * Gp;
        gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
        score_ = data.G.transpose() * resid;
    }

    Eigen::Index p() const { return gram_.rows(); }
    double tau() const { return tau_; }

    // phi-grid averaged log10 ABF of the spike-and-slab prior diag(gamma).
    double log10_abf(const std::vector<int>& included) const {
        const std::size_t k = included.size();
        if (k == 0) return 0.0;
        MatrixXd sub(k, k);
        VectorXd v(k);
        for (std::size_t a = 0; a < k; ++a) {
            v[a] = score_[included[a]];
            for (std::size_t b = 0; b < k; ++b)
                sub(a, b) = gram_(included[a], included[b]);
        }
        const MatrixXd base = MatrixXd::Identity(k, k) / tau_;
        return abf_phi_grid(AbfKernel(tau_ * v, tau_ * sub, base), phis_, phi_weights_);
    }

private:
    std::vector<double> phis_, phi_weights_;
    MatrixXd gram_;
    VectorXd score_;
    double tau_;
};

// ---------------------------------------------------------------------------

struct FinemapConfig {
    long n_burn = 150000;
    long n_keep = 300000;
    int n_chains = 3;
    std::uint64_t seed = 1;
    int threads = 1;
    int top_models = 10;
    std::vector<double> phis = {0.1, 0.2, 0.4, 0.8, 1.6};
    std::vector<double> phi_weights = std::vector<double>(5, 0.2);
    std::size_t max_cache_entries = 1 << 20;
};

struct FinemapReport {
    VectorXd pip;
    std::vector<VectorXd> chain_pips;
    struct ModelRow {
        std::vector<int> snps;  // included indices, ascending
        double prob = 0.0;
        double log10_abf = 0.0;
    };
    std::vector<ModelRow> top_models;
    std::vector<double> size_distribution;  // posterior mass by |gamma|
    std::vector<double> acceptance_rates;
    bool any_chain_all_rejected = false;
    long n_kept_per_chain = 0;
};

namespace detail {

struct ChainAccum {
    VectorXd pip_counts;
    std::vector<double> size_counts;
    std::unordered_map<std::string, long> model_counts;
    long accepted = 0;
    long proposals = 0;
};

inline std::string state_key(const std::vector<int>& included_sorted) {
    std::string key;
    key.reserve(2 * included_sorted.size());
    for (int idx : included_sorted) {
        key.push_back(static_cast<char>(idx & 0xff));
        key.push_back(static_cast<char>((idx >> 8) & 0xff));
    }
    return key;
}

inline std::vector<int> decode_key(const std::string& key) {
    std::vector<int> out(key.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<unsigned char>(key[2 * i]) |
                 (static_cast<unsigned char>(key[2 * i + 1]) << 8);
    return out;
}

inline void run_chain(const RegionScorer& scorer, const std::vector<double>& log_prior_by_k,
                      const FinemapConfig& cfg, int chain_index, ChainAccum& accum) {
    const int p = static_cast<int>(scorer.p());
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(chain_index));
    std::vector<std::uint8_t> gamma(p, 0);
    std::vector<int> included;
    std::unordered_map<std::string, double> abf_cache;

    const auto cached_abf = [&](const std::vector<int>& inc_sorted) {
        const std::string key = state_key(inc_sorted);
        auto it = abf_cache.find(key);
        if (it != abf_cache.end()) return it->second;
        if (abf_cache.size() >= cfg.max_cache_entries) abf_cache.clear();
        const double val = scorer.log10_abf(inc_sorted);
        abf_cache.emplace(key, val);
        return val;
    };

    accum.pip_counts = VectorXd::Zero(p);
    accum.size_counts.assign(p + 1, 0.0);

    double log_post = log_prior_by_k[0];  // empty model, ABF = 1
    const auto pick_excluded = [&]() {
        int j;
        do {
            j = static_cast<int>(rng.uniform_index(p));
        } while (gamma[j]);
        return j;
    };

    std::vector<int> sorted_state;  // reused scratch
    for (long step = 0; step < cfg.n_burn + cfg.n_keep; ++step) {
        const int k = static_cast<int>(included.size());
        double wa, wr, ws;
        move_weights(p, k, wa, wr, ws);
        const double z = wa + wr + ws;
        const double u = rng.uniform() * z;
        Move move;
        if (u < wa)
            move = Move::Add;
        else if (u < wa + wr)
            move = Move::Remove;
        else
            move = Move::Swap;

        int add_idx = -1, drop_pos = -1;
        sorted_state.assign(included.begin(), included.end());
        if (move == Move::Add) {
            add_idx = pick_excluded();
            sorted_state.push_back(add_idx);
        } else if (move == Move::Remove) {
            drop_pos = static_cast<int>(rng.uniform_index(k));
            sorted_state.erase(sorted_state.begin() + drop_pos);
        } else {
            drop_pos = static_cast<int>(rng.uniform_index(k));
            add_idx = pick_excluded();
            sorted_state[drop_pos] = add_idx;
        }
        std::sort(sorted_state.begin(), sorted_state.end());
        const int k_to = static_cast<int>(sorted_state.size());

        const Move reverse = move == Move::Add    ? Move::Remove
                             : move == Move::Remove ? Move::Add
                                                    : Move::Swap;
        const double lq_fwd = log_proposal_prob(p, k, move);
        const double lq_rev = log_proposal_prob(p, k_to, reverse);
        const double lp_to = log_prior_by_k[k_to] + kLn10 * cached_abf(sorted_state);
        const double la = log_acceptance(log_post, lp_to, lq_fwd, lq_rev);
        ++accum.proposals;
        if (std::log(rng.uniform() + 1e-300) < la) {
            ++accum.accepted;
            log_post = lp_to;
            if (move == Move::Add) {
                gamma[add_idx] = 1;
                included.push_back(add_idx);
            } else if (move == Move::Remove) {
                gamma[included[drop_pos]] = 0;
                included[drop_pos] = included.back();
                included.pop_back();
            } else {
                gamma[included[drop_pos]] = 0;
                gamma[add_idx] = 1;
                included[drop_pos] = add_idx;
            }
        }
        if (step >= cfg.n_burn) {
            for (int idx : included) accum.pip_counts[idx] += 1.0;
            accum.size_counts[included.size()] += 1.0;
            sorted_state.assign(included.begin(), included.end());
            std::sort(sorted_state.begin(), sorted_state.end());
            ++accum.model_counts[state_key(sorted_state)];
        }
    }
}

}  // namespace detail

inline FinemapReport mcmc_finemap(const WhitenedData& data, const P1Spec& p1,
                                  const FinemapConfig& cfg) {
    if (cfg.n_keep < 1) throw_input("invalid-config", "need at least one kept sample");
    if (cfg.n_chains < 1) throw_input("invalid-config", "need at least one chain");
    const RegionScorer scorer(data, cfg.phis, cfg.phi_weights);
    const int p = static_cast<int>(scorer.p());

    std::vector<double> log_prior_by_k(p + 1);
    for (int k = 0; k <= p; ++k) log_prior_by_k[k] = log_prior_gamma(k, p, p1);

    std::vector<detail::ChainAccum> accums(cfg.n_chains);
    parallel_for(cfg.n_chains, cfg.threads, [&](std::size_t c) {
        detail::run_chain(scorer, log_prior_by_k, cfg, static_cast<int>(c), accums[c]);
    });

    FinemapReport rep;
    rep.n_kept_per_chain = cfg.n_keep;
    rep.pip = VectorXd::Zero(p);
    rep.size_distribution.assign(p + 1, 0.0);
    std::unordered_map<std::string, long> pooled;
    for (const auto& a : accums) {
        rep.chain_pips.push_back(a.pip_counts / static_cast<double>(cfg.n_keep));
        rep.pip += a.pip_counts;
        for (int k = 0; k <= p; ++k) rep.size_distribution[k] += a.size_counts[k];
        for (const auto& [key, count] : a.model_counts) pooled[key] += count;
        rep.acceptance_rates.push_back(static_cast<double>(a.accepted) /
                                       static_cast<double>(a.proposals));
        if (a.accepted == 0) rep.any_chain_all_rejected = true;
    }
    const double total = static_cast<double>(cfg.n_keep) * cfg.n_chains;
    rep.pip /= total;
    for (auto& s : rep.size_distribution) s /= total;

    std::vector<std::pair<std::string, long>> ranked(pooled.begin(), pooled.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const int n_top = std::min<std::size_t>(cfg.top_models, ranked.size());
    for (int i = 0; i < n_top; ++i) {
        FinemapReport::ModelRow row;
        row.snps = detail::decode_key(ranked[i].first);
        row.prob = static_cast<double>(ranked[i].second) / total;
        row.log10_abf = scorer.log10_abf(row.snps);
        rep.top_models.push_back(std::move(row));
    }
    return rep;
}

// Exact posterior over all 2^p inclusion vectors (test oracle and small-p path).
struct PosteriorTable {
    struct Entry {
        std::uint32_t mask = 0;
        double log10_abf = 0.0;
        double prob = 0.0;
    };
    std::vector<Entry> entries;  // sorted by decreasing probability
    VectorXd pip;
    std::vector<double> size_distribution;
};

inline PosteriorTable enumerate_posterior(const WhitenedData& data, const P1Spec& p1,
                                          const std::vector<double>& phis,
                                          const std::vector<double>& phi_weights,
                                          int max_p = 20) {
    const RegionScorer scorer(data, phis, phi_weights);
    const int p = static_cast<int>(scorer.p());
    if (p > max_p) throw_input("region-too-large", "exhaustive enumeration capped at max_p");

    std::vector<double> log_prior_by_k(p + 1);
    for (int k = 0; k <= p; ++k) log_prior_by_k[k] = log_prior_gamma(k, p, p1);

    const std::uint32_t n_states = 1u << p;
    PosteriorTable table;
    table.entries.resize(n_states);
    std::vector<double> log_post(n_states);
    std::vector<int> included;
    for (std::uint32_t mask = 0; mask < n_states; ++mask) {
        included.clear();
        for (int j = 0; j < p; ++j)
            if (mask & (1u << j)) included.push_back(j);
        table.entries[mask].mask = mask;
        table.entries[mask].log10_abf = scorer.log10_abf(included);
        log_post[mask] = log_prior_by_k[included.size()] + kLn10 * table.entries[mask].log10_abf;
    }
    const double norm = log_sum_exp(log_post);
    table.pip = VectorXd::Zero(p);
    table.size_distribution.assign(p + 1, 0.0);
    for (std::uint32_t mask = 0; mask < n_states; ++mask) {
        const double prob = std::exp(log_post[mask] - norm);
        table.entries[mask].prob = prob;
        int k = 0;
        for (int j = 0; j < p; ++j)
            if (mask & (1u << j)) {
                table.pip[j] += prob;
                ++k;
            }
        table.size_distribution[k] += prob;
    }
    std::sort(table.entries.begin(), table.entries.end(),
              [](const auto& a, const auto& b) { return a.prob > b.prob; });
    return table;
}

}  // namespace blmm
