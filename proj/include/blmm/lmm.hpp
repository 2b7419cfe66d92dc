#pragma once

// Linear mixed model fitting machinery.
//
// The marginal model is y ~ N(X alpha + G beta, tau^-1 Sigma(lambda)) with
// Sigma(lambda) = I + lambda K. All GLS quantities are computed on whitened
// data. Two whitening routes exist:
//   * a dense Cholesky of Sigma(lambda), exposed through CovarianceModel for
//     one-off use, and
//   * a cached eigendecomposition K = U diag(d) U' so the fitting loop can
//     rewhiten at any lambda with a row scaling (Model below).
// Both routes agree because every GLS quantity is invariant to the choice of
// square root of Sigma^-1.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "blmm/errors.hpp"
#include "blmm/types.hpp"

namespace blmm {

namespace detail {

// Eigendecomposition of K with the PSD noise clamp from the dataset contract.
inline void kinship_eigen(const MatrixXd& K, MatrixXd& evec, VectorXd& eval) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (K + K.transpose()));
    if (es.info() != Eigen::Success)
        throw_numeric("degenerate-kinship", "kinship eigendecomposition failed");
    eval = es.eigenvalues();
    evec = es.eigenvectors();
    for (Eigen::Index i = 0; i < eval.size(); ++i) {
        if (eval[i] < -kKinshipEigTolerance) {
            std::ostringstream msg;
            msg << "kinship eigenvalue " << eval[i] << " below tolerance";
            throw_numeric("degenerate-kinship", msg.str());
        }
        if (eval[i] < 0.0) eval[i] = 0.0;
    }
}

}  // namespace detail

// Factorize Sigma(lambda) = I + lambda K by Cholesky; falls back to an
// eigenvalue clamp of K when numeric noise makes the direct factorization fail.
inline CovarianceModel build_covariance(double lambda, const MatrixXd& K) {
    if (lambda < 0.0) throw_input("invalid-lambda", "lambda must be nonnegative");
    const Eigen::Index n = K.rows();
    if (n == 0 || K.cols() != n)
        throw_input("dimension-mismatch", "kinship matrix must be square and nonempty");
    MatrixXd sigma = MatrixXd::Identity(n, n) + lambda * 0.5 * (K + K.transpose());
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        MatrixXd evec;
        VectorXd eval;
        detail::kinship_eigen(K, evec, eval);
        sigma = evec * (1.0 + lambda * eval.array()).matrix().asDiagonal() * evec.transpose();
        llt.compute(sigma);
        if (llt.info() != Eigen::Success)
            throw_numeric("degenerate-kinship", "Sigma(lambda) is not positive definite");
    }
    CovarianceModel cov;
    cov.lambda = lambda;
    cov.chol = llt.matrixL();
    cov.log_det = 2.0 * cov.chol.diagonal().array().log().sum();
    return cov;
}

// Null-model GLS coefficients (X' Sigma^-1 X)^-1 X' Sigma^-1 y.
inline VectorXd gls_null_alpha(const Dataset& ds, const CovarianceModel& cov) {
    const auto& L = cov.chol;
    const MatrixXd Xw = L.triangularView<Eigen::Lower>().solve(ds.X);
    const VectorXd yw = L.triangularView<Eigen::Lower>().solve(ds.y);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
    if (qr.rank() < ds.q())
        throw_numeric("singular-design", "whitened X is rank deficient");
    return qr.solve(yw);
}

// Effect-coefficient GLS: beta = (Gx'Gx)^-1 Gx' (whitened y) with Gx the
// whitened G projected off the whitened X, and Var(beta) = tau^-1 (Gx'Gx)^-1.
inline GlsEffect gls_effect(const Dataset& ds, const CovarianceModel& cov, double tau) {
    if (ds.p() < 1) throw_input("dimension-mismatch", "gls_effect needs p >= 1 effect columns");
    if (!(tau > 0.0)) throw_input("invalid-tau", "tau must be positive");
    const auto& L = cov.chol;
    const MatrixXd Xw = L.triangularView<Eigen::Lower>().solve(ds.X);
    const VectorXd yw = L.triangularView<Eigen::Lower>().solve(ds.y);
    const MatrixXd Gw = L.triangularView<Eigen::Lower>().solve(ds.G);
    Eigen::ColPivHouseholderQR<MatrixXd> qrx(Xw);
    if (qrx.rank() < ds.q())
        throw_numeric("singular-design", "whitened X is rank deficient");
    const MatrixXd Gx = Gw - Xw * qrx.solve(Gw);
    Eigen::ColPivHouseholderQR<MatrixXd> qrg(Gx);
    if (qrg.rank() < ds.p())
        throw_numeric("collinear-effect", "G is collinear after projection; Gx'Gx is singular");
    MatrixXd gram = Gx.transpose() * Gx;
    gram = 0.5 * (gram + gram.transpose()).eval();
    const VectorXd resid = yw - Xw * qrx.solve(yw);
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw_numeric("collinear-effect", "Gx'Gx Cholesky failed");
    GlsEffect eff;
    eff.beta = llt.solve(Gx.transpose() * resid);
    MatrixXd vinv_id = llt.solve(MatrixXd::Identity(ds.p(), ds.p()));
    eff.var = (0.5 / tau) * (vinv_id + vinv_id.transpose());
    return eff;
}

struct OptimOptions {
    double log10_lambda_min = -6.0;
    double log10_lambda_max = 6.0;
    int grid_points = 64;
    double bracket_tol = 1e-6;   // width on the log10 scale
    int max_iterations = 200;
};

// Shared per-dataset state for repeated fitting: data rotated into the
// kinship eigenbasis, where Sigma(lambda) is diagonal.
class Model {
public:
    explicit Model(Dataset ds) : ds_(std::move(ds)) {
        validate_dataset(ds_);
        if (ds_.has_kinship()) {
            detail::kinship_eigen(ds_.K, evec_, eval_);
            kinship_ = eval_.maxCoeff() > 0.0;
            if (kinship_) {
                y_rot_ = evec_.transpose() * ds_.y;
                x_rot_ = evec_.transpose() * ds_.X;
                g_rot_ = evec_.transpose() * ds_.G;
            }
        }
        if (!kinship_) {
            y_rot_ = ds_.y;
            x_rot_ = ds_.X;
            g_rot_ = ds_.G;
            eval_ = VectorXd::Zero(ds_.n());
        }
    }

    // Reuse the kinship eigendecomposition of a model built on the same
    // individuals (per-SNP scans construct thousands of single-column models;
    // the eigendecomposition is the only expensive part). The new dataset may
    // omit K, the shared structure is used as-is.
    Model(Dataset ds, const Model& share) : ds_(std::move(ds)) {
        validate_dataset(ds_);
        if (share.n() != ds_.n())
            throw_input("dimension-mismatch", "shared eigendecomposition has the wrong size");
        kinship_ = share.kinship_;
        eval_ = share.eval_;
        if (kinship_) {
            evec_ = share.evec_;
            y_rot_ = evec_.transpose() * ds_.y;
            x_rot_ = evec_.transpose() * ds_.X;
            g_rot_ = evec_.transpose() * ds_.G;
        } else {
            y_rot_ = ds_.y;
            x_rot_ = ds_.X;
            g_rot_ = ds_.G;
        }
    }

    const Dataset& data() const { return ds_; }
    Eigen::Index n() const { return ds_.n(); }
    Eigen::Index q() const { return ds_.q(); }
    Eigen::Index p() const { return ds_.p(); }
    bool has_kinship() const { return kinship_; }
    const VectorXd& kinship_eigenvalues() const { return eval_; }

    double log_det_sigma(double lambda) const {
        return (lambda * eval_.array()).log1p().sum();
    }

    // Everything the profile objective and the ABF need at one lambda.
    struct Fit {
        double lambda = 0.0;
        VectorXd alpha_null;
        double rss_null = 0.0;
        VectorXd alpha_full;
        VectorXd beta;        // (Gx'Gx)^-1 Gx' residual; only valid if effect_ok
        double rss_full = 0.0;
        MatrixXd gram;        // Gx'Gx
        VectorXd score;       // G' Sigma^-1 (y - X alpha_null), whitened scale
        bool effect_ok = true;
        double whitened_yss = 0.0;
    };

    Fit fit_at(double lambda) const {
        if (lambda < 0.0) throw_input("invalid-lambda", "lambda must be nonnegative");
        Fit f;
        f.lambda = lambda;
        const VectorXd s = (1.0 + lambda * eval_.array()).sqrt().inverse().matrix();
        const VectorXd yt = s.cwiseProduct(y_rot_);
        const MatrixXd Xt = s.asDiagonal() * x_rot_;
        f.whitened_yss = yt.squaredNorm();
        Eigen::ColPivHouseholderQR<MatrixXd> qrx(Xt);
        if (qrx.rank() < q())
            throw_numeric("singular-design", "whitened X is rank deficient");
        f.alpha_null = qrx.solve(yt);
        const VectorXd resid = yt - Xt * f.alpha_null;
        f.rss_null = resid.squaredNorm();
        if (p() == 0) {
            f.alpha_full = f.alpha_null;
            f.rss_full = f.rss_null;
            return f;
        }
        const MatrixXd Gt = s.asDiagonal() * g_rot_;
        f.score = Gt.transpose() * resid;
        const MatrixXd Gx = Gt - Xt * qrx.solve(Gt);
        f.gram = Gx.transpose() * Gx;
        f.gram = 0.5 * (f.gram + f.gram.transpose()).eval();
        MatrixXd XG(n(), q() + p());
        XG << Xt, Gt;
        Eigen::ColPivHouseholderQR<MatrixXd> qrj(XG);
        const VectorXd theta = qrj.solve(yt);
        f.alpha_full = theta.head(q());
        f.rss_full = (yt - XG * theta).squaredNorm();
        f.effect_ok = qrj.rank() == q() + p();
        if (f.effect_ok) {
            Eigen::LLT<MatrixXd> llt(f.gram);
            if (llt.info() == Eigen::Success)
                f.beta = llt.solve(f.score);
            else
                f.effect_ok = false;
        }
        return f;
    }

    // tau maximizing the profile at this lambda:
    // n / ((1-kappa) RSS_null + kappa RSS_full).
    double tau_profile(double lambda, double kappa) const {
        return tau_from_fit(fit_at(lambda), kappa);
    }

    double tau_from_fit(const Fit& f, double kappa) const {
        check_kappa(kappa);
        const double denom = (1.0 - kappa) * f.rss_null + kappa * f.rss_full;
        if (denom <= 1e-12 * std::max(1.0, f.whitened_yss))
            throw_numeric("perfect-fit", "residual sum of squares is (numerically) zero");
        return static_cast<double>(n()) / denom;
    }

    // Profile objective l(lambda; kappa) = (n/2) log tau_hat - (1/2) log|Sigma|.
    double profile_objective(double lambda, double kappa) const {
        const Fit f = fit_at(lambda);
        return 0.5 * n() * std::log(tau_from_fit(f, kappa)) - 0.5 * log_det_sigma(lambda);
    }

    // Bracketed 1-D maximization of the profile objective over log10 lambda.
    // A coarse grid locates the bracket, golden-section search refines it; no
    // concavity is assumed.
    VarianceFit optimize(double kappa, const OptimOptions& opt = OptimOptions()) const {
        check_kappa(kappa);
        VarianceFit vf;
        vf.kappa = kappa;
        if (!kinship_)
            return finalize(vf, std::pow(10.0, opt.log10_lambda_min), kappa, 1, true, true);
        int evals = 0;
        const auto objective = [&](double t) {
            ++evals;
            return profile_objective(std::pow(10.0, t), kappa);
        };
        const int m = std::max(opt.grid_points, 8);
        std::vector<double> ts(m), ls(m);
        double best = -std::numeric_limits<double>::infinity();
        int best_i = 0;
        for (int i = 0; i < m; ++i) {
            ts[i] = opt.log10_lambda_min +
                    (opt.log10_lambda_max - opt.log10_lambda_min) * i / (m - 1);
            ls[i] = objective(ts[i]);
            if (!std::isfinite(ls[i])) {
                std::ostringstream msg;
                msg << "objective non-finite at log10(lambda)=" << ts[i] << " value=" << ls[i]
                    << " kappa=" << kappa;
                throw_numeric("optimization-failure", msg.str());
            }
            if (ls[i] > best) {
                best = ls[i];
                best_i = i;
            }
        }
        const double lo = *std::min_element(ls.begin(), ls.end());
        if (best - lo < 1e-10 * std::max(1.0, std::abs(best)))
            return finalize(vf, std::pow(10.0, opt.log10_lambda_min), kappa, evals, true, true);

        double a = ts[std::max(0, best_i - 1)];
        double b = ts[std::min(m - 1, best_i + 1)];
        constexpr double kGolden = 0.61803398874989484;
        double c = b - kGolden * (b - a), d = a + kGolden * (b - a);
        double fc = objective(c), fd = objective(d);
        bool converged = false;
        while (evals < opt.max_iterations + m) {
            if (b - a < opt.bracket_tol) {
                converged = true;
                break;
            }
            if (fc < fd) {
                a = c;
                c = d;
                fc = fd;
                d = a + kGolden * (b - a);
                fd = objective(d);
            } else {
                b = d;
                d = c;
                fd = fc;
                c = b - kGolden * (b - a);
                fc = objective(c);
            }
        }
        const double t_hat = fc > fd ? c : d;
        return finalize(vf, std::pow(10.0, t_hat), kappa, evals, converged, false);
    }

    // Symmetric inverse square root of Sigma(lambda), for whitening data once.
    MatrixXd sigma_inv_sqrt(double lambda) const {
        if (!kinship_) return MatrixXd::Identity(n(), n());
        const VectorXd s = (1.0 + lambda * eval_.array()).sqrt().inverse().matrix();
        return evec_ * s.asDiagonal() * evec_.transpose();
    }

private:
    static void check_kappa(double kappa) {
        if (!(kappa >= 0.0 && kappa <= 1.0))
            throw_input("invalid-kappa", "kappa must lie in [0,1]");
    }

    VarianceFit finalize(VarianceFit vf, double lambda, double kappa, int evals,
                         bool converged, bool flat) const {
        const Fit f = fit_at(lambda);
        vf.lambda = lambda;
        vf.tau = tau_from_fit(f, kappa);
        vf.alpha = (kappa == 1.0) ? f.alpha_full : f.alpha_null;
        vf.objective = 0.5 * n() * std::log(vf.tau) - 0.5 * log_det_sigma(lambda);
        vf.converged = converged;
        vf.flat_objective = flat;
        vf.iterations = evals;
        return vf;
    }

    Dataset ds_;
    MatrixXd evec_;
    VectorXd eval_;
    VectorXd y_rot_;
    MatrixXd x_rot_, g_rot_;
    bool kinship_ = false;
};

inline double tau_profile(const Dataset& ds, const CovarianceModel& cov, double kappa) {
    return Model(ds).tau_profile(cov.lambda, kappa);
}

inline double profile_objective(const Dataset& ds, double lambda, double kappa) {
    return Model(ds).profile_objective(lambda, kappa);
}

inline VarianceFit optimize_lambda(const Dataset& ds, double kappa,
                                   const OptimOptions& opt = OptimOptions()) {
    return Model(ds).optimize(kappa, opt);
}

}  // namespace blmm
