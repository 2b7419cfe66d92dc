#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "blmm/oracle.hpp"
#include "test_support.hpp"

using namespace blmm;

namespace {

// One simulated single-SNP analysis unit with kinship and a genuine signal.
struct Unit {
    Dataset ds;
    Model* model = nullptr;
};

Dataset single_snp_dataset(Rng& rng, int n, double beta, double lambda_true = 1.0) {
    const int m_panel = 150;
    const VectorXd mafs = simulate_mafs(m_panel, 0.1, 0.5, rng);
    const MatrixXd panel = simulate_line_genotypes(n, mafs, 4, 0.9, rng);
    Dataset ds;
    ds.X = MatrixXd::Ones(n, 1);
    ds.G = panel.col(0);
    ds.K = block_kinship(n, 4, 0.9);
    VectorXd b = VectorXd::Constant(1, beta);
    ds.y = simulate_with_random_effect(ds.X, VectorXd::Constant(1, 0.1), ds.G, b,
                                       lambda_true, 1.0, ds.K, rng);
    return ds;
}

}  // namespace

TEST_CASE("quadrature oracle basics", "[oracle]") {
    Rng rng(101);
    Dataset ds = single_snp_dataset(rng, 120, 0.4);
    Model model(ds);

    SECTION("null prior gives log10 BF = 0 exactly") {
        REQUIRE(log10_bf_numeric(model, MatrixXd::Zero(1, 1)) == 0.0);
    }

    SECTION("tau integral closed form matches direct tau quadrature") {
        const MatrixXd phi0 = MatrixXd::Constant(1, 1, 0.25);
        const double n_half = 0.5 * model.n();
        for (double lambda : {0.05, 1.0, 20.0}) {
            const OracleKernel k = oracle_kernel_at(model, phi0, lambda);
            const double c = 0.5 * (k.rss_null - k.s);
            REQUIRE(c > 0.0);
            // closed form: Gamma(n/2) c^(-n/2)
            const double closed = std::lgamma(n_half) - n_half * std::log(c);
            // direct quadrature over log tau around the integrand mode
            const double t_mode = std::log((n_half - 1.0) / c);
            const int grid = 200001;
            const double lo = t_mode - 3.0, hi = t_mode + 3.0;
            long double acc = 0.0L;
            const double h = (hi - lo) / (grid - 1);
            double offset = -std::numeric_limits<double>::infinity();
            std::vector<double> logvals(grid);
            for (int i = 0; i < grid; ++i) {
                const double t = lo + i * h;
                // integrand in log tau: tau^(n/2) exp(-tau c) d(log tau)
                logvals[i] = n_half * t - std::exp(t) * c;
                offset = std::max(offset, logvals[i]);
            }
            for (int i = 0; i < grid; ++i) {
                const double w = (i == 0 || i == grid - 1) ? 0.5 : 1.0;
                acc += w * expl((long double)(logvals[i] - offset));
            }
            const double numeric = offset + std::log((double)(acc * h));
            REQUIRE(closed == Catch::Approx(numeric).margin(1e-6 * std::abs(closed)));
        }
    }

    SECTION("halving the tolerance barely moves the result") {
        const MatrixXd phi0 = MatrixXd::Constant(1, 1, 0.25);
        QuadratureOptions opt;
        opt.rel_tol = 1e-5;
        const double coarse = log10_bf_numeric(model, phi0, opt);
        opt.rel_tol = 5e-6;
        const double fine = log10_bf_numeric(model, phi0, opt);
        REQUIRE(std::abs(coarse - fine) < 10.0 * 1e-5);
    }

    SECTION("undersized samples are rejected") {
        Rng local(102);
        Dataset tiny;
        tiny.y = testsup::random_vector(local, 3);
        tiny.X = MatrixXd::Ones(3, 1);
        tiny.G = testsup::random_vector(local, 3);
        Model m(tiny);
        REQUIRE_THROWS_AS(log10_bf_numeric(m, MatrixXd::Constant(1, 1, 0.2)), Error);
    }
}

TEST_CASE("approximation accuracy against the oracle", "[oracle]") {
    // single-SNP ABFs at both anchors track the quadrature truth
    int checked = 0, in_band = 0;
    for (int rep = 0; rep < 20; ++rep) {
        Rng rng(1100 + rep);
        const double beta = rng.uniform(0.0, 0.35);
        Dataset ds = single_snp_dataset(rng, 300, beta);
        Model model(ds);
        const MatrixXd phi0 = MatrixXd::Constant(1, 1, 0.25);
        const double truth = log10_bf_numeric(model, phi0);
        const auto abf_at = [&](double kappa) {
            const VarianceFit fit = model.optimize(kappa);
            const Model::Fit f = model.fit_at(fit.lambda);
            return AbfKernel(fit.tau * f.score, fit.tau * f.gram, phi0 / fit.tau)
                .log10_abf(1.0);
        };
        const double k0 = abf_at(0.0), k1 = abf_at(1.0);
        if (truth < 0.0 || truth > 10.0) continue;
        ++checked;
        if (std::abs(k0 - truth) < 0.15 && std::abs(k1 - truth) < 0.15) ++in_band;
    }
    REQUIRE(checked >= 8);
    REQUIRE(in_band >= checked - 1);  // ~95% band
}

TEST_CASE("accuracy sweep", "[oracle]") {
    SECTION("empty SNP list gives an empty table") {
        const AccuracyTable t = abf_accuracy_sweep({50, 100}, 0, 7);
        REQUIRE(t.rows.empty());
        REQUIRE(t.summaries.empty());
    }

    SECTION("errors shrink with the sample size and kappa = 0 is conservative") {
        SweepOptions opt;
        opt.threads = 2;
        opt.local_signal_c = 10.0;
        const AccuracyTable t = abf_accuracy_sweep({50, 300}, 80, 1234, opt);
        REQUIRE(t.summaries.size() == 2);
        const AccuracySummary& s50 = t.summaries[0];
        const AccuracySummary& s300 = t.summaries[1];
        REQUIRE(s50.n == 50);
        REQUIRE(s300.n == 300);
        REQUIRE(s50.count_in_range >= 15);
        REQUIRE(s300.count_in_range >= 10);
        REQUIRE(s300.mad_k0 < s50.mad_k0);
        REQUIRE(s300.mad_k1 < s50.mad_k1);
        REQUIRE(s50.med_signed_k0 < 0.0);
        REQUIRE(s300.frac_within_band_k0 > 0.9);
        REQUIRE(s300.frac_within_band_k1 > 0.9);
    }
}
