#pragma once

// Approximate Bayes factors for the Bayesian linear mixed model.
//
// The alternative model puts beta ~ N(0, W); with the variance parameters
// anchored at (lambda_check, tau_check) the approximate Bayes factor is
//
//   ABF(W) = |I + V^-1 W|^(-1/2)
//            * exp( (1/2) b' [ W (I + V^-1 W)^-1 ] b ),   b = V^-1 beta.
//
// Everything here is evaluated through the symmetric matrix
// T = W^(1/2) V^-1 W^(1/2): |I + V^-1 W| = |I + T| and
// W (I + V^-1 W)^-1 = W^(1/2) (I + T)^(-1) W^(1/2). Only V^-1 (the precision)
// and b (the score vector) ever appear, so the computation stays finite for
// rank-deficient W and for collinear effect columns where V itself does not
// exist. Bayes factors are carried on the log10 scale throughout.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "blmm/errors.hpp"
#include "blmm/lmm.hpp"
#include "blmm/math_util.hpp"
#include "blmm/types.hpp"

namespace blmm {

struct AbfResult {
    double log10_abf = 0.0;
    double kappa = 0.0;
    std::string prior_tag;
    VectorXd beta;
    double quad_form = 0.0;  // beta' V^-1 beta at the anchor
};

struct ScoreStats {
    double wald = 0.0;         // kappa = 1 anchor
    double score_fixed = 0.0;  // kappa = 0 anchor
    double t_score = 0.0;      // variance-component score, given M
};

namespace detail {

// PSD square root with the clamp tolerance used for all prior matrices:
// eigenvalues in [-1e-8 * ||W||, 0) are treated as roundoff.
inline MatrixXd psd_sqrt(const MatrixXd& W, const char* what) {
    if (W.rows() != W.cols())
        throw_input("dimension-mismatch", std::string(what) + " matrix must be square");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (W + W.transpose()));
    if (es.info() != Eigen::Success)
        throw_numeric("invalid-prior", std::string(what) + " eigendecomposition failed");
    VectorXd ev = es.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    VectorXd root(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-8 * scale)
            throw_input("invalid-prior", std::string(what) + " matrix is not PSD");
        root[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
    }
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Scalar ABF: sqrt(v / (v + omega)) * exp( (omega / (v + omega)) beta^2 / (2 v) ).
inline double abf_scalar(double beta, double v, double omega) {
    if (!(v > 0.0)) throw_input("invalid-variance", "v must be positive");
    if (omega < 0.0) throw_input("invalid-prior", "omega must be nonnegative");
    if (omega == 0.0) return 0.0;
    const double shrink = omega / (v + omega);
    const double log_abf = -0.5 * std::log1p(omega / v) + 0.5 * shrink * beta * beta / v;
    return log_abf / kLn10;
}

// phi-scalable ABF family: for a base prior matrix W0 the whole family
// W(phi) = phi^2 W0 shares one eigendecomposition of T0 = W0^(1/2) U W0^(1/2),
// where U is the effect precision and b the score vector. Evaluating one phi
// costs O(p).
class AbfKernel {
public:
    AbfKernel(const VectorXd& score, const MatrixXd& precision, const MatrixXd& base_w) {
        if (score.size() != precision.rows() || precision.rows() != base_w.rows())
            throw_input("dimension-mismatch", "score/precision/prior dimensions disagree");
        const MatrixXd root = detail::psd_sqrt(base_w, "prior");
        MatrixXd T = root * 0.5 * (precision + precision.transpose()) * root;
        T = 0.5 * (T + T.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(T);
        if (es.info() != Eigen::Success)
            throw_numeric("invalid-prior", "ABF kernel eigendecomposition failed");
        d0_ = es.eigenvalues().cwiseMax(0.0);
        c0_ = es.eigenvectors().transpose() * (root * score);
    }

    double log10_abf(double phi = 1.0) const {
        const double f = phi * phi;
        double log_det = 0.0, expo = 0.0;
        for (Eigen::Index i = 0; i < d0_.size(); ++i) {
            const double denom = 1.0 + f * d0_[i];
            log_det += std::log1p(f * d0_[i]);
            expo += f * c0_[i] * c0_[i] / denom;
        }
        return (-0.5 * log_det + 0.5 * expo) / kLn10;
    }

private:
    VectorXd d0_, c0_;
};

// ABF from the effect precision U = V^-1 and score vector b = V^-1 beta.
// This is the route that tolerates singular W and singular V.
inline double log10_abf_from_score(const VectorXd& score, const MatrixXd& precision,
                                   const MatrixXd& W) {
    return AbfKernel(score, precision, W).log10_abf(1.0);
}

// General matrix ABF from a GLS effect (V positive definite by contract).
inline AbfResult abf_matrix(const GlsEffect& effect, const MatrixXd& W, double kappa = 0.0,
                            std::string prior_tag = "custom") {
    if (W.rows() != effect.beta.size() || W.cols() != effect.beta.size())
        throw_input("dimension-mismatch", "prior matrix does not match effect dimension");
    Eigen::LLT<MatrixXd> llt(0.5 * (effect.var + effect.var.transpose()));
    if (llt.info() != Eigen::Success)
        throw_numeric("singular-variance", "effect covariance is not positive definite");
    const Eigen::Index pp = effect.beta.size();
    MatrixXd precision = llt.solve(MatrixXd::Identity(pp, pp));
    precision = 0.5 * (precision + precision.transpose()).eval();
    const VectorXd b = precision * effect.beta;
    AbfResult res;
    res.log10_abf = log10_abf_from_score(b, precision, W);
    res.kappa = kappa;
    res.prior_tag = std::move(prior_tag);
    res.beta = effect.beta;
    res.quad_form = effect.beta.dot(b);
    return res;
}

// Log10 of the phi-grid averaged Bayes factor, sum_i weight_i * ABF(phi_i).
inline double abf_phi_grid(const AbfKernel& kernel, const std::vector<double>& phis,
                           const std::vector<double>& weights) {
    if (phis.empty()) throw_input("empty-grid", "phi grid is empty");
    if (phis.size() != weights.size())
        throw_input("dimension-mismatch", "phi grid and weights differ in length");
    double total = 0.0;
    for (double w : weights) total += w;
    if (std::abs(total - 1.0) > 1e-12)
        throw_input("invalid-weight", "phi weights must sum to one");
    std::vector<double> log10s(phis.size());
    for (std::size_t i = 0; i < phis.size(); ++i) log10s[i] = kernel.log10_abf(phis[i]);
    return log10_weighted_sum(log10s, weights);
}

inline double abf_phi_grid(const GlsEffect& effect, const MatrixXd& base_w,
                           const std::vector<double>& phis, const std::vector<double>& weights) {
    Eigen::LLT<MatrixXd> llt(0.5 * (effect.var + effect.var.transpose()));
    if (llt.info() != Eigen::Success)
        throw_numeric("singular-variance", "effect covariance is not positive definite");
    const Eigen::Index pp = effect.beta.size();
    MatrixXd precision = llt.solve(MatrixXd::Identity(pp, pp));
    precision = 0.5 * (precision + precision.transpose()).eval();
    return abf_phi_grid(AbfKernel(precision * effect.beta, precision, base_w), phis, weights);
}

// Multivariate Wald statistic beta' V^-1 beta (meant for the kappa = 1 anchor).
inline double wald_stat(const GlsEffect& effect) {
    Eigen::LLT<MatrixXd> llt(0.5 * (effect.var + effect.var.transpose()));
    if (llt.info() != Eigen::Success)
        throw_numeric("singular-variance", "effect covariance is not positive definite");
    return effect.beta.dot(llt.solve(effect.beta));
}

// Fixed-effect score statistic at the null anchor:
// tau (y - X alpha)' Sigma^-1 G Q G' Sigma^-1 (y - X alpha), Q = (Gx'Gx)^-1.
inline double score_stat_fixed(const Model& model, const VarianceFit& null_fit) {
    if (null_fit.kappa != 0.0)
        throw_input("invalid-anchor", "score statistic requires a kappa = 0 fit");
    const Model::Fit f = model.fit_at(null_fit.lambda);
    Eigen::LLT<MatrixXd> llt(f.gram);
    if (llt.info() != Eigen::Success)
        throw_numeric("singular-variance", "Gx'Gx is singular in the score statistic");
    return null_fit.tau * f.score.dot(llt.solve(f.score));
}

// Variance-component score statistic
// tau^2 (y - X alpha)' Sigma^-1 G M G' Sigma^-1 (y - X alpha).
inline double variance_component_score(const Model& model, const VarianceFit& null_fit,
                                       const MatrixXd& M) {
    if (null_fit.kappa != 0.0)
        throw_input("invalid-anchor", "score statistic requires a kappa = 0 fit");
    detail::psd_sqrt(M, "kernel");  // PSD precondition
    const Model::Fit f = model.fit_at(null_fit.lambda);
    const double t = null_fit.tau;
    return t * t * f.score.dot(0.5 * (M + M.transpose()) * f.score);
}

// Closed form for the implicit p-value prior W = c V:
// (1/(c+1))^(p/2) exp( (c/(c+1)) beta' V^-1 beta / 2 ).
inline double implicit_pvalue_abf(const GlsEffect& effect, double c) {
    if (!(c > 0.0)) throw_input("invalid-prior", "c must be positive");
    const double quad = wald_stat(effect);
    const double p = static_cast<double>(effect.beta.size());
    return (-0.5 * p * std::log1p(c) + 0.5 * (c / (c + 1.0)) * quad) / kLn10;
}

}  // namespace blmm
