#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "blmm/kinship.hpp"
#include "blmm/lmm.hpp"
#include "blmm/math_util.hpp"
#include "test_support.hpp"

using namespace blmm;
using testsup::random_kinship;
using testsup::random_matrix;
using testsup::random_vector;
using testsup::simulated_dataset;

TEST_CASE("covariance factorization", "[lmm]") {
    Rng rng(11);

    SECTION("lambda = 0 gives the identity") {
        const MatrixXd K = random_kinship(rng, 8);
        const CovarianceModel cov = build_covariance(0.0, K);
        REQUIRE(cov.log_det == Catch::Approx(0.0).margin(1e-14));
        REQUIRE((cov.chol - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("K = I has an analytic determinant") {
        const CovarianceModel cov = build_covariance(1.0, MatrixXd::Identity(3, 3));
        REQUIRE(cov.log_det == Catch::Approx(3.0 * std::log(2.0)).epsilon(1e-12));
    }

    SECTION("log-determinant matches the eigenvalue-sum oracle") {
        const MatrixXd K = random_kinship(rng, 50);
        const CovarianceModel cov = build_covariance(0.5, K);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
        const double oracle = (0.5 * es.eigenvalues().array()).log1p().sum();
        REQUIRE(cov.log_det == Catch::Approx(oracle).margin(1e-8));
        // the factor actually reproduces Sigma
        const MatrixXd sigma = cov.chol * cov.chol.transpose();
        REQUIRE((sigma - (MatrixXd::Identity(50, 50) + 0.5 * K)).cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("indefinite kinship is rejected") {
        MatrixXd K = MatrixXd::Identity(4, 4);
        K *= -0.5;
        REQUIRE_THROWS_AS(build_covariance(4.0, K), Error);
    }
}

TEST_CASE("null-model GLS coefficients", "[lmm]") {
    Rng rng(12);

    SECTION("intercept-only reduces to the mean") {
        Dataset ds;
        ds.y = random_vector(rng, 20);
        ds.X = MatrixXd::Ones(20, 1);
        ds.G = MatrixXd::Zero(20, 0);
        const CovarianceModel cov = build_covariance(0.0, MatrixXd::Identity(20, 20));
        const VectorXd alpha = gls_null_alpha(ds, cov);
        REQUIRE(alpha[0] == Catch::Approx(ds.y.mean()).epsilon(1e-12));
    }

    SECTION("identity covariance reduces to OLS") {
        Dataset ds;
        ds.y = random_vector(rng, 30);
        ds.X = testsup::design_with_intercept(rng, 30, 2);
        ds.G = MatrixXd::Zero(30, 0);
        const CovarianceModel cov = build_covariance(0.0, MatrixXd::Identity(30, 30));
        const VectorXd alpha = gls_null_alpha(ds, cov);
        const VectorXd ols = (ds.X.transpose() * ds.X).ldlt().solve(ds.X.transpose() * ds.y);
        REQUIRE((alpha - ols).cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("matches the dense-inverse normal equations") {
        Dataset ds;
        ds.y = random_vector(rng, 100);
        ds.X = testsup::design_with_intercept(rng, 100, 3);
        ds.G = MatrixXd::Zero(100, 0);
        ds.K = random_kinship(rng, 100);
        const CovarianceModel cov = build_covariance(0.7, ds.K);
        const VectorXd alpha = gls_null_alpha(ds, cov);
        const MatrixXd sigma_inv = (MatrixXd::Identity(100, 100) + 0.7 * ds.K).inverse();
        const VectorXd oracle = (ds.X.transpose() * sigma_inv * ds.X)
                                    .ldlt()
                                    .solve(ds.X.transpose() * sigma_inv * ds.y);
        REQUIRE((alpha - oracle).cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("rank-deficient design is an error") {
        Dataset ds;
        ds.y = random_vector(rng, 15);
        ds.X = MatrixXd::Ones(15, 2);  // duplicated intercept
        ds.G = MatrixXd::Zero(15, 0);
        const CovarianceModel cov = build_covariance(0.0, MatrixXd::Identity(15, 15));
        REQUIRE_THROWS_AS(gls_null_alpha(ds, cov), Error);
    }
}

TEST_CASE("effect GLS", "[lmm]") {
    Rng rng(13);

    SECTION("simple regression closed form") {
        const int n = 40;
        Dataset ds;
        ds.X = MatrixXd::Ones(n, 1);
        VectorXd g = random_vector(rng, n);
        g.array() -= g.mean();
        ds.G = g;
        ds.y = 0.4 * g + random_vector(rng, n);
        const CovarianceModel cov = build_covariance(0.0, MatrixXd::Identity(n, n));
        const double tau = 2.3;
        const GlsEffect eff = gls_effect(ds, cov, tau);
        const double sxx = g.squaredNorm();
        const double beta_hat = g.dot(ds.y - VectorXd::Constant(n, ds.y.mean())) / sxx;
        REQUIRE(eff.beta[0] == Catch::Approx(beta_hat).epsilon(1e-10));
        REQUIRE(eff.var(0, 0) == Catch::Approx(1.0 / (tau * sxx)).epsilon(1e-10));
    }

    SECTION("effect orthogonal to X is unchanged by dropping X") {
        const int n = 50;
        Rng local(14);
        VectorXd g = random_vector(local, n);
        g.array() -= g.mean();  // orthogonal to the intercept under Sigma = I
        Dataset with_x;
        with_x.X = MatrixXd::Ones(n, 1);
        with_x.G = g;
        with_x.y = random_vector(local, n);
        const CovarianceModel cov = build_covariance(0.0, MatrixXd::Identity(n, n));
        const GlsEffect a = gls_effect(with_x, cov, 1.0);
        const double direct = g.dot(with_x.y) / g.squaredNorm();
        REQUIRE(a.beta[0] == Catch::Approx(direct).epsilon(1e-10));
    }

    SECTION("matches joint OLS on whitened data") {
        Rng local(15);
        Dataset ds = simulated_dataset(local, 200, 1, 3);
        const CovarianceModel cov = build_covariance(0.9, ds.K);
        const GlsEffect eff = gls_effect(ds, cov, 1.7);
        // oracle: whiten with the Cholesky factor, run one joint OLS
        const MatrixXd Xw = cov.chol.triangularView<Eigen::Lower>().solve(ds.X);
        const MatrixXd Gw = cov.chol.triangularView<Eigen::Lower>().solve(ds.G);
        const VectorXd yw = cov.chol.triangularView<Eigen::Lower>().solve(ds.y);
        MatrixXd XG(200, ds.q() + ds.p());
        XG << Xw, Gw;
        const VectorXd theta = (XG.transpose() * XG).ldlt().solve(XG.transpose() * yw);
        REQUIRE((eff.beta - theta.tail(3)).cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("collinear effect columns are an error") {
        Rng local(16);
        Dataset ds = simulated_dataset(local, 60, 0, 2);
        ds.G.col(1) = ds.G.col(0);
        const CovarianceModel cov = build_covariance(0.3, ds.K);
        REQUIRE_THROWS_AS(gls_effect(ds, cov, 1.0), Error);
    }
}

TEST_CASE("profile tau", "[lmm]") {
    Rng rng(17);
    Dataset ds = simulated_dataset(rng, 80, 1, 2);
    Model model(ds);

    SECTION("kappa = 0 closed form") {
        const double lambda = 0.8;
        const Model::Fit f = model.fit_at(lambda);
        const double tau0 = model.tau_profile(lambda, 0.0);
        REQUIRE(tau0 == Catch::Approx(80.0 / f.rss_null).epsilon(1e-12));
        // against the dense-inverse route
        const MatrixXd sigma_inv = (MatrixXd::Identity(80, 80) + lambda * ds.K).inverse();
        const VectorXd alpha = (ds.X.transpose() * sigma_inv * ds.X)
                                   .ldlt()
                                   .solve(ds.X.transpose() * sigma_inv * ds.y);
        const VectorXd r = ds.y - ds.X * alpha;
        REQUIRE(tau0 == Catch::Approx(80.0 / (r.dot(sigma_inv * r))).epsilon(1e-8));
    }

    SECTION("perfect fit is an error") {
        Dataset exact;
        exact.y = random_vector(rng, 30);
        exact.X = MatrixXd::Ones(30, 1);
        exact.G = exact.y;  // G explains y exactly
        Model m(exact);
        REQUIRE_THROWS_AS(m.tau_profile(0.0, 1.0), Error);
    }

    SECTION("matches a grid search over the tau kernel") {
        // oracle: directly maximize g(tau) = (n/2) log tau - tau/2 * denom
        const double kappa = 0.5, lambda = 1.3;
        const Model::Fit f = model.fit_at(lambda);
        const double denom = (1.0 - kappa) * f.rss_null + kappa * f.rss_full;
        double best_tau = 0.0, best = -1e300;
        const double center = 80.0 / denom;
        for (int i = 0; i < 20001; ++i) {
            const double tau = center * (0.5 + i * (1.5 - 0.5) / 20000.0);
            const double g = 0.5 * 80.0 * std::log(tau) - 0.5 * tau * denom;
            if (g > best) {
                best = g;
                best_tau = tau;
            }
        }
        REQUIRE(model.tau_profile(lambda, kappa) == Catch::Approx(best_tau).epsilon(1e-4));
        // and the returned tau can only improve on the grid's best kernel value
        const double tau_hat = model.tau_profile(lambda, kappa);
        const double g_hat = 0.5 * 80.0 * std::log(tau_hat) - 0.5 * tau_hat * denom;
        REQUIRE(g_hat >= best - 1e-12);
        REQUIRE(std::abs(g_hat - best) / std::abs(best) < 1e-6);
    }
}

TEST_CASE("profile objective", "[lmm]") {
    Rng rng(18);

    SECTION("kinship-free objective is flat in lambda") {
        Dataset ds;
        ds.y = random_vector(rng, 40);
        ds.X = MatrixXd::Ones(40, 1);
        ds.G = random_matrix(rng, 40, 1);
        ds.K = MatrixXd::Zero(40, 40);
        Model m(ds);
        const double l0 = m.profile_objective(1e-4, 0.0);
        const double l1 = m.profile_objective(10.0, 0.0);
        const double l2 = m.profile_objective(1e4, 0.0);
        REQUIRE(l0 == Catch::Approx(l1).epsilon(1e-12));
        REQUIRE(l1 == Catch::Approx(l2).epsilon(1e-12));
    }

    SECTION("lambda = 0 matches the OLS profile log-likelihood") {
        Dataset ds = simulated_dataset(rng, 60, 1, 1);
        Model m(ds);
        const CovarianceModel cov = build_covariance(0.0, ds.K);
        const VectorXd alpha = gls_null_alpha(ds, cov);
        const double rss = (ds.y - ds.X * alpha).squaredNorm();
        REQUIRE(m.profile_objective(0.0, 0.0) ==
                Catch::Approx(0.5 * 60.0 * std::log(60.0 / rss)).epsilon(1e-10));
    }

    SECTION("argmax over a dense grid matches the optimizer") {
        Rng local(19);
        Dataset ds = simulated_dataset(local, 100, 0, 1, 1.0, 1.0);
        Model m(ds);
        const VarianceFit fit = m.optimize(0.0);
        double best_t = 0.0, best = -1e300;
        for (int i = 0; i < 200; ++i) {
            const double t = -6.0 + 12.0 * i / 199.0;
            const double l = m.profile_objective(std::pow(10.0, t), 0.0);
            if (l > best) {
                best = l;
                best_t = t;
            }
        }
        REQUIRE(std::abs(std::log10(fit.lambda) - best_t) < 12.0 / 199.0 + 1e-9);
        REQUIRE(fit.objective >= best - 1e-9);
    }
}

TEST_CASE("lambda optimization", "[lmm]") {
    SECTION("zero kinship returns the flat-objective flag") {
        Rng rng(20);
        Dataset ds;
        ds.y = random_vector(rng, 50);
        ds.X = MatrixXd::Ones(50, 1);
        ds.G = random_matrix(rng, 50, 1);
        ds.K = MatrixXd::Zero(50, 50);
        const VarianceFit fit = optimize_lambda(ds, 0.0);
        REQUIRE(fit.flat_objective);
        REQUIRE(fit.lambda == Catch::Approx(1e-6));
        const double rss = (ds.y - VectorXd::Constant(50, ds.y.mean())).squaredNorm();
        REQUIRE(fit.tau == Catch::Approx(50.0 / rss).epsilon(1e-9));
    }

    SECTION("profile consistency against random probes") {
        Rng rng(21);
        Dataset ds = simulated_dataset(rng, 90, 1, 2, 2.0, 1.0);
        Model m(ds);
        for (double kappa : {0.0, 0.37, 1.0}) {
            const VarianceFit fit = m.optimize(kappa);
            REQUIRE(fit.converged);
            for (int i = 0; i < 50; ++i) {
                const double t = rng.uniform(-6.0, 6.0);
                REQUIRE(m.profile_objective(std::pow(10.0, t), kappa) <=
                        fit.objective + 1e-9);
            }
            // local maximum: one-sided decrease on both sides
            const double step = 2e-6;
            REQUIRE(m.profile_objective(fit.lambda * std::pow(10.0, step), kappa) <=
                    fit.objective + 1e-9);
            REQUIRE(m.profile_objective(fit.lambda * std::pow(10.0, -step), kappa) <=
                    fit.objective + 1e-9);
        }
    }

    SECTION("endpoint consistency between optimize and tau_profile") {
        Rng rng(22);
        Dataset ds = simulated_dataset(rng, 70, 0, 2);
        Model m(ds);
        for (double kappa : {0.0, 1.0}) {
            const VarianceFit fit = m.optimize(kappa);
            REQUIRE(fit.tau == m.tau_profile(fit.lambda, kappa));
        }
    }

    SECTION("generate and recover the variance parameters") {
        std::vector<double> lam_hats, tau_hats;
        for (int rep = 0; rep < 8; ++rep) {
            Rng rng(100 + rep);
            Dataset ds = simulated_dataset(rng, 300, 0, 1, 2.0, 1.0, 0.0);
            const VarianceFit fit = optimize_lambda(ds, 0.0);
            lam_hats.push_back(fit.lambda);
            tau_hats.push_back(fit.tau);
        }
        REQUIRE(median(lam_hats) > 1.0);
        REQUIRE(median(lam_hats) < 3.0);
        REQUIRE(median(tau_hats) > 0.8);
        REQUIRE(median(tau_hats) < 1.2);
    }
}

TEST_CASE("whitening identity", "[lmm]") {
    Rng rng(23);
    Dataset ds = simulated_dataset(rng, 60, 2, 1);
    Model m(ds);
    for (double lambda : {0.05, 0.7, 3.0, 40.0}) {
        const CovarianceModel cov = build_covariance(lambda, ds.K);
        const VectorXd alpha = gls_null_alpha(ds, cov);
        // symmetric-root whitening
        const MatrixXd W = m.sigma_inv_sqrt(lambda);
        const MatrixXd Xw = W * ds.X;
        const VectorXd yw = W * ds.y;
        const VectorXd ols = (Xw.transpose() * Xw).ldlt().solve(Xw.transpose() * yw);
        REQUIRE((alpha - ols).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("quadratic-form decomposition", "[lmm]") {
    // tau RSS_null = beta' V^-1 beta + tau RSS_full, on random (lambda, tau)
    Rng rng(24);
    for (int rep = 0; rep < 25; ++rep) {
        Dataset ds = simulated_dataset(rng, 50 + 10 * (rep % 4), 1, 1 + (rep % 3));
        Model m(ds);
        const double lambda = std::pow(10.0, rng.uniform(-2.0, 2.0));
        const double tau = std::pow(10.0, rng.uniform(-1.0, 1.0));
        const Model::Fit f = m.fit_at(lambda);
        REQUIRE(f.effect_ok);
        const double quad = tau * f.beta.dot(f.gram * f.beta);
        const double lhs = tau * f.rss_null;
        const double rhs = quad + tau * f.rss_full;
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-6));
    }
}

TEST_CASE("kinship estimation", "[lmm]") {
    SECTION("duplicate samples have self-similarity") {
        Rng rng(25);
        MatrixXd G = testsup::random_dosages(rng, 10, 50);
        G.row(3) = G.row(7);
        const MatrixXd K = estimate_kinship(G);
        REQUIRE(K(3, 7) == Catch::Approx(K(3, 3)).margin(1e-12));
        REQUIRE(K(3, 7) == Catch::Approx(K(7, 7)).margin(1e-12));
        REQUIRE(K.diagonal().mean() == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("single SNP with two genotype groups") {
        MatrixXd G(4, 1);
        G << 0, 0, 2, 2;
        const MatrixXd K = estimate_kinship(G);
        // centered/standardized column is (-1,-1,1,1), so K = zz'
        MatrixXd expect(4, 4);
        expect << 1, 1, -1, -1, 1, 1, -1, -1, -1, -1, 1, 1, -1, -1, 1, 1;
        REQUIRE((K - expect).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("zero-variance panel is an error") {
        REQUIRE_THROWS_AS(estimate_kinship(MatrixXd::Ones(5, 3)), Error);
    }

    SECTION("sibling pairs show ~0.5 relatedness") {
        Rng rng(26);
        const int m = 4000, n_fam = 30;
        MatrixXd G(2 * n_fam, m);
        for (int j = 0; j < m; ++j) {
            const double maf = rng.uniform(0.1, 0.5);
            for (int f = 0; f < n_fam; ++f) {
                // parent haplotypes
                int pa[2] = {rng.bernoulli(maf), rng.bernoulli(maf)};
                int pb[2] = {rng.bernoulli(maf), rng.bernoulli(maf)};
                for (int kid = 0; kid < 2; ++kid)
                    G(2 * f + kid, j) = pa[rng.uniform_index(2)] + pb[rng.uniform_index(2)];
            }
        }
        const MatrixXd K = estimate_kinship(G);
        double sib = 0.0;
        for (int f = 0; f < n_fam; ++f) sib += K(2 * f, 2 * f + 1);
        sib /= n_fam;
        REQUIRE(sib == Catch::Approx(0.5).margin(0.08));
    }
}
