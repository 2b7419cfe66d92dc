#pragma once

// Shared helpers for the test suites: small dataset generators and the
// independent oracle computations the tests compare against.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "blmm/rng.hpp"
#include "blmm/types.hpp"

namespace testsup {

using blmm::MatrixXd;
using blmm::VectorXd;

inline VectorXd random_vector(blmm::Rng& rng, int n, double sd = 1.0) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal(0.0, sd);
    return v;
}

inline MatrixXd random_matrix(blmm::Rng& rng, int r, int c, double sd = 1.0) {
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, sd);
    return m;
}

// Random PSD kinship-like matrix with unit mean diagonal.
inline MatrixXd random_kinship(blmm::Rng& rng, int n, int m = 0) {
    if (m == 0) m = 2 * n;
    MatrixXd Z = random_matrix(rng, n, m);
    MatrixXd K = Z * Z.transpose() / static_cast<double>(m);
    const double scale = K.diagonal().mean();
    return K / scale;
}

// Design matrix with an intercept plus iid normal covariates.
inline MatrixXd design_with_intercept(blmm::Rng& rng, int n, int q_extra) {
    MatrixXd X = MatrixXd::Ones(n, 1 + q_extra);
    for (int j = 0; j < q_extra; ++j) X.col(1 + j) = random_vector(rng, n);
    return X;
}

// Genotype-like dosage matrix in {0,1,2}.
inline MatrixXd random_dosages(blmm::Rng& rng, int n, int p, double maf_lo = 0.1,
                               double maf_hi = 0.5) {
    MatrixXd G(n, p);
    for (int j = 0; j < p; ++j) {
        const double maf = rng.uniform(maf_lo, maf_hi);
        for (int i = 0; i < n; ++i)
            G(i, j) = (rng.uniform() < maf ? 1.0 : 0.0) + (rng.uniform() < maf ? 1.0 : 0.0);
    }
    return G;
}

// A complete simulated dataset: y = X a + G b + u + e with u ~ N(0, l/t K).
inline blmm::Dataset simulated_dataset(blmm::Rng& rng, int n, int q_extra, int p,
                                       double lambda_true = 1.0, double tau_true = 1.0,
                                       double beta_sd = 0.3) {
    blmm::Dataset ds;
    ds.X = design_with_intercept(rng, n, q_extra);
    ds.G = random_dosages(rng, n, p);
    ds.K = random_kinship(rng, n);
    const VectorXd a = random_vector(rng, 1 + q_extra);
    const VectorXd b = random_vector(rng, p, beta_sd);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(ds.K);
    const MatrixXd Khalf =
        es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const VectorXd u = std::sqrt(lambda_true / tau_true) * (Khalf * random_vector(rng, n));
    const VectorXd e = random_vector(rng, n, 1.0 / std::sqrt(tau_true));
    ds.y = ds.X * a + ds.G * b + u + e;
    return ds;
}

// Spearman rank correlation (average ranks on ties).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * (i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(va * vb);
}

}  // namespace testsup
