#pragma once

#include <Eigen/Dense>

#include <string>

#include "blmm/errors.hpp"

namespace blmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Observed quantities of one analysis unit: response y, fixed covariates X
// (first column is the intercept by convention), effect covariates G
// (e.g. genotype dosages) and an optional kinship matrix K. An empty K
// (size 0) means no relatedness structure, i.e. identity covariance.
struct Dataset {
    VectorXd y;
    MatrixXd X;
    MatrixXd G;
    MatrixXd K;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index q() const { return X.cols(); }
    Eigen::Index p() const { return G.cols(); }
    bool has_kinship() const { return K.size() > 0; }
};

// Kinship eigenvalues this far below zero are treated as numeric noise and
// clamped; anything lower is a malformed kinship matrix.
inline constexpr double kKinshipEigTolerance = 1e-8;

inline void validate_dataset(const Dataset& ds) {
    const Eigen::Index n = ds.n();
    if (n == 0) throw_input("empty-dataset", "response vector is empty");
    if (ds.X.rows() != n || ds.G.rows() != n)
        throw_input("dimension-mismatch", "X/G row count does not match y");
    if (ds.X.cols() < 1) throw_input("dimension-mismatch", "X needs at least an intercept column");
    if (n < ds.q() + 1)
        throw_input("dimension-mismatch", "need n >= q + 1 observations");
    if (!ds.y.allFinite() || !ds.X.allFinite() || !ds.G.allFinite())
        throw_input("non-finite-entry", "dataset contains a non-finite value");
    if (ds.has_kinship()) {
        if (ds.K.rows() != n || ds.K.cols() != n)
            throw_input("dimension-mismatch", "kinship matrix is not n x n");
        if (!ds.K.allFinite()) throw_input("non-finite-entry", "kinship contains a non-finite value");
        const double asym = (ds.K - ds.K.transpose()).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, ds.K.cwiseAbs().maxCoeff());
        if (asym > 1e-8 * scale)
            throw_input("asymmetric-kinship", "kinship matrix is not symmetric");
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(ds.X);
    if (qr.rank() < ds.q())
        throw_input("singular-design", "fixed covariate matrix X is rank deficient");
}

// Factorized marginal correlation structure Sigma(lambda) = I + lambda K.
struct CovarianceModel {
    double lambda = 0.0;
    MatrixXd chol;       // lower triangular L with L L' = Sigma(lambda)
    double log_det = 0.0;
};

// Profile fit of the variance parameters at a given kappa anchor.
struct VarianceFit {
    double kappa = 0.0;
    double lambda = 0.0;      // maximizer of the profile objective
    double tau = 0.0;         // inverse residual variance at that lambda
    VectorXd alpha;           // fixed covariate coefficients at the anchor
    double objective = 0.0;
    bool converged = false;
    bool flat_objective = false;  // objective insensitive to lambda (e.g. K = 0)
    int iterations = 0;           // objective evaluations spent
};

// GLS estimate of the effect coefficients and its covariance.
struct GlsEffect {
    VectorXd beta;
    MatrixXd var;
};

}  // namespace blmm
