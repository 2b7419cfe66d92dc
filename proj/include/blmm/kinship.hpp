#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "blmm/errors.hpp"
#include "blmm/types.hpp"

namespace blmm {

// Empirical kinship K = Z Z' / m from an n x m genotype panel, where Z is the
// column-centered, column-standardized panel (population scaling, so the
// diagonal averages to one). Zero-variance columns are dropped.
inline MatrixXd estimate_kinship(const MatrixXd& genotypes) {
    const Eigen::Index n = genotypes.rows();
    const Eigen::Index m = genotypes.cols();
    if (n < 1 || m < 1)
        throw_input("empty-genotype", "genotype panel is empty");
    if (!genotypes.allFinite())
        throw_input("non-finite-entry", "genotype panel contains a non-finite value");
    MatrixXd Z(n, m);
    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
        VectorXd col = genotypes.col(j);
        const double mean = col.mean();
        col.array() -= mean;
        const double var = col.squaredNorm() / static_cast<double>(n);
        if (var <= 1e-12) continue;
        Z.col(kept++) = col / std::sqrt(var);
    }
    if (kept == 0)
        throw_input("empty-genotype", "all genotype columns have zero variance");
    const auto Zk = Z.leftCols(kept);
    MatrixXd K = Zk * Zk.transpose() / static_cast<double>(kept);
    return 0.5 * (K + K.transpose());
}

}  // namespace blmm
