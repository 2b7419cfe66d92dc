// Command-line driver: scan, settest, finemap, simulate, validate-abf.
//
// Every command honors --seed, --threads and --out, echoes its resolved
// configuration into '#' header lines (no timestamps), and emits rows in
// input order so reruns are byte-identical regardless of the thread count.
// Exit codes: 0 success, 2 input error, 3 numeric failure, 4 oracle failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "blmm/blmm.hpp"

namespace {

using namespace blmm;

struct CommonOpts {
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool out_required = true) {
    cmd->add_option("--seed", opts.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--threads", opts.threads, "worker thread count")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    auto* out = cmd->add_option("--out", opts.out, "output path (or prefix)");
    if (out_required) out->required();
}

std::vector<double> parse_grid(const std::string& csv, const char* what) {
    std::vector<double> grid;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) grid.push_back(parse_double(tok, what));
    if (grid.empty()) throw_input("empty-grid", std::string(what) + " is empty");
    return grid;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
}

struct LoadedData {
    Dataset ds;
    NamedMatrix geno;  // SNP metadata
};

LoadedData assemble(const std::string& pheno_path, const std::string& covar_path,
                    const std::string& geno_path, const std::string& kinship_path) {
    LoadedData data;
    const NamedMatrix pheno = load_matrix(pheno_path, MatrixKind::Phenotype);
    data.ds.y = pheno.values.col(0);
    const Eigen::Index n = data.ds.y.size();
    if (!covar_path.empty()) {
        const NamedMatrix covar = load_matrix(covar_path, MatrixKind::Covariates);
        if (covar.values.rows() != n)
            throw_input("dimension-mismatch", "covariate rows do not match the phenotype");
        data.ds.X = MatrixXd::Ones(n, covar.values.cols() + 1);
        data.ds.X.rightCols(covar.values.cols()) = covar.values;
    } else {
        data.ds.X = MatrixXd::Ones(n, 1);
    }
    data.geno = load_matrix(geno_path, MatrixKind::Genotypes);
    if (data.geno.values.cols() != n)
        throw_input("dimension-mismatch", "genotype sample count does not match the phenotype");
    data.ds.G = data.geno.values.transpose();
    if (!kinship_path.empty()) {
        const NamedMatrix kin = load_matrix(kinship_path, MatrixKind::Kinship);
        if (kin.values.rows() != n)
            throw_input("dimension-mismatch", "kinship size does not match the phenotype");
        data.ds.K = kin.values;
    }
    return data;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw_input("file-not-found", "cannot write " + path);
    return out;
}

// ---------------------------------------------------------------------------
// scan

struct ScanOpts {
    CommonOpts common;
    std::string pheno, covar, geno, kinship;
    std::string phi_csv = "0.1,0.2,0.4,0.8,1.6";
    std::string prior = "standardized";
    double scaled_v_c = 1.0;
};

void run_scan(const ScanOpts& o) {
    const auto phis = parse_grid(o.phi_csv, "phi grid");
    const auto pw = uniform_weights(phis.size());
    const bool scaled_v = o.prior == "scaled-v";
    if (!scaled_v && o.prior != "standardized")
        throw_input("invalid-prior", "prior must be 'standardized' or 'scaled-v'");
    LoadedData data = assemble(o.pheno, o.covar, o.geno, o.kinship);
    const Eigen::Index p = data.ds.G.cols();

    Dataset null_ds = data.ds;
    null_ds.G = MatrixXd::Zero(data.ds.n(), 0);
    const Model host(null_ds);
    const VarianceFit null_fit = host.optimize(0.0);

    struct Row {
        double beta = 0, se = 0, k0 = 0, k1 = 0, wald = 0, score = 0;
        bool zero_var = false;
    };
    std::vector<Row> rows(p);
    parallel_for(p, o.common.threads, [&](std::size_t j) {
        Dataset one;
        one.y = data.ds.y;
        one.X = data.ds.X;
        one.G = data.ds.G.col(j);
        Model m(std::move(one), host);
        const Model::Fit f0 = m.fit_at(null_fit.lambda);
        Row row;
        if (f0.gram(0, 0) <= 1e-12 * m.n()) {
            row.zero_var = true;
            rows[j] = row;
            return;
        }
        row.beta = f0.score[0] / f0.gram(0, 0);
        const double v0 = 1.0 / (null_fit.tau * f0.gram(0, 0));
        row.se = std::sqrt(v0);
        row.score = row.beta * row.beta / v0;
        GlsEffect e0{VectorXd::Constant(1, row.beta), MatrixXd::Constant(1, 1, v0)};
        const VarianceFit full_fit = m.optimize(1.0);
        const Model::Fit f1 = m.fit_at(full_fit.lambda);
        const double beta1 = f1.score[0] / f1.gram(0, 0);
        const double v1 = 1.0 / (full_fit.tau * f1.gram(0, 0));
        GlsEffect e1{VectorXd::Constant(1, beta1), MatrixXd::Constant(1, 1, v1)};
        row.wald = beta1 * beta1 / v1;
        if (scaled_v) {
            row.k0 = implicit_pvalue_abf(e0, o.scaled_v_c);
            row.k1 = implicit_pvalue_abf(e1, o.scaled_v_c);
        } else {
            std::vector<double> g0(phis.size()), g1(phis.size());
            for (std::size_t i = 0; i < phis.size(); ++i) {
                g0[i] = abf_scalar(row.beta, v0, phis[i] * phis[i] / null_fit.tau);
                g1[i] = abf_scalar(beta1, v1, phis[i] * phis[i] / full_fit.tau);
            }
            row.k0 = log10_weighted_sum(g0, pw);
            row.k1 = log10_weighted_sum(g1, pw);
        }
        rows[j] = row;
    });

    // rank by the kappa = 0 Bayes factor, flagged rows last
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rows[a].zero_var != rows[b].zero_var) return !rows[a].zero_var;
        return rows[a].k0 > rows[b].k0;
    });
    std::vector<int> rank(p);
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r) + 1;

    auto out = open_out(o.common.out);
    out << "# blmm scan pheno=" << o.pheno << " covar=" << o.covar << " geno=" << o.geno
        << " kinship=" << o.kinship << " prior=" << o.prior
        << " scaled_v_c=" << format_double(o.scaled_v_c) << " phi_grid=" << join_doubles(phis)
        << " seed=" << o.common.seed << "\n";
    out << "# null_fit lambda=" << format_double(null_fit.lambda)
        << " tau=" << format_double(null_fit.tau)
        << " flat=" << (null_fit.flat_objective ? 1 : 0) << "\n";
    out << "# columns: snp_id beta_check se log10_abf_k0 log10_abf_k1 wald score rank zero_var\n";
    for (Eigen::Index j = 0; j < p; ++j) {
        const Row& r = rows[j];
        out << data.geno.snp_ids[j] << "\t";
        if (r.zero_var) {
            out << "na\tna\tna\tna\tna\tna\t" << rank[j] << "\t1\n";
        } else {
            out << format_double(r.beta) << "\t" << format_double(r.se) << "\t"
                << format_double(r.k0) << "\t" << format_double(r.k1) << "\t"
                << format_double(r.wald) << "\t" << format_double(r.score) << "\t" << rank[j]
                << "\t0\n";
        }
    }
}

// ---------------------------------------------------------------------------
// settest

struct SetTestOpts {
    CommonOpts common;
    std::string manifest, kinship;
    std::string components = "two";  // "two" = burden+SKAT, "three" adds CV
    std::string weights = "em";      // "em" (Bayesian-E) or "fixed" (Bayesian-D)
    double fixed_pi_burden = 0.5;
    double alpha = 0.05;
    std::string phi_csv = "0.1,0.2,0.4,0.8,1.6";
};

void run_settest(const SetTestOpts& o) {
    if (!(o.alpha > 0.0 && o.alpha < 1.0))
        throw_input("invalid-alpha", "alpha must lie in (0,1)");
    const bool three_way = o.components == "three";
    if (!three_way && o.components != "two")
        throw_input("invalid-config", "components must be 'two' or 'three'");
    const bool estimate_pis = o.weights == "em";
    if (!estimate_pis && o.weights != "fixed")
        throw_input("invalid-config", "weights must be 'em' or 'fixed'");
    const auto phis = parse_grid(o.phi_csv, "phi grid");
    const auto pw = uniform_weights(phis.size());

    const auto manifest = detail::read_rows(o.manifest);
    if (manifest.empty()) throw_input("empty-matrix", "set manifest is empty");
    struct Entry {
        std::string id, pheno, geno, covar;
    };
    std::vector<Entry> entries;
    const std::string dir = std::filesystem::path(o.manifest).parent_path().string();
    const auto resolve = [&](const std::string& p) {
        if (p.empty() || p == "-" || p[0] == '/' || dir.empty()) return p;
        return dir + "/" + p;
    };
    for (const auto& row : manifest) {
        if (row.size() < 3)
            throw_input("dimension-mismatch", "manifest rows need set_id, pheno, geno");
        Entry e;
        e.id = row[0];
        e.pheno = resolve(row[1]);
        e.geno = resolve(row[2]);
        if (row.size() > 3 && row[3] != "-") e.covar = resolve(row[3]);
        entries.push_back(e);
    }

    const std::size_t n_sets = entries.size();
    std::vector<SetComponents> comps(n_sets);
    parallel_for(n_sets, o.common.threads, [&](std::size_t s) {
        LoadedData data = assemble(entries[s].pheno, entries[s].covar, entries[s].geno, o.kinship);
        Model m(std::move(data.ds));
        const VarianceFit nf = m.optimize(0.0);
        comps[s] = set_component_bfs(m, nf, data.geno.mafs, phis, pw);
    });

    const int K = three_way ? 3 : 2;
    std::vector<std::vector<double>> bf_table(n_sets, std::vector<double>(K));
    for (std::size_t s = 0; s < n_sets; ++s) {
        bf_table[s][0] = comps[s].log10_burden;
        bf_table[s][1] = comps[s].log10_skat;
        if (three_way) bf_table[s][2] = comps[s].log10_cv;
    }

    // Bayesian-E estimates the component mix; Bayesian-D keeps it fixed.
    // Both estimate the null mass p0, which feeds the FDR stage.
    EmOptions em_opt;
    em_opt.estimate_pis = estimate_pis;
    if (!estimate_pis) {
        em_opt.pis_init = three_way ? std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}
                                    : std::vector<double>{o.fixed_pi_burden,
                                                          1.0 - o.fixed_pi_burden};
    }
    EmResult em;
    bool em_usable = n_sets >= 2;
    if (em_usable) {
        em = em_estimate_weights(bf_table, em_opt);
    } else {
        em.p0 = 1.0;  // conservative default when pooling is impossible
        em.pis = em_opt.pis_init.empty() ? std::vector<double>(K, 1.0 / K) : em_opt.pis_init;
        em.flat_likelihood = true;
    }

    std::vector<double> combined(n_sets);
    for (std::size_t s = 0; s < n_sets; ++s) {
        if (three_way)
            combined[s] = bf_three_way(bf_table[s][0], bf_table[s][1], bf_table[s][2],
                                       {em.pis[0], em.pis[1], em.pis[2]});
        else
            combined[s] = bf_two_way(bf_table[s][0], bf_table[s][1], em.pis[0]);
    }
    const DiscoverySet decisions = bayes_fdr(combined, em.p0, o.alpha);

    auto out = open_out(o.common.out);
    out << "# blmm settest manifest=" << o.manifest << " kinship=" << o.kinship
        << " components=" << o.components << " weights=" << o.weights
        << " alpha=" << format_double(o.alpha) << " phi_grid=" << join_doubles(phis)
        << " seed=" << o.common.seed << "\n";
    out << "# em p0=" << format_double(em.p0) << " pis=" << join_doubles(em.pis)
        << " flat_likelihood=" << (em.flat_likelihood ? 1 : 0)
        << " iterations=" << em.iterations << "\n";
    out << "# rejected=" << decisions.n_rejected << " of " << n_sets << "\n";
    out << "# columns: set_id log10_bf_burden log10_bf_skat log10_bf_cv log10_bf_combined "
           "posterior_null reject\n";
    for (std::size_t s = 0; s < n_sets; ++s) {
        out << entries[s].id << "\t" << format_double(comps[s].log10_burden) << "\t"
            << format_double(comps[s].log10_skat) << "\t"
            << (three_way ? format_double(comps[s].log10_cv) : std::string("na")) << "\t"
            << format_double(combined[s]) << "\t"
            << format_double(decisions.posterior_null[s]) << "\t"
            << (decisions.decisions[s] ? 1 : 0) << "\n";
    }
}

// ---------------------------------------------------------------------------
// finemap

struct FinemapOpts {
    CommonOpts common;
    std::string pheno, covar, geno, kinship;
    double p1 = 0.0;  // 0 means "1/p"
    std::string p1_grid;  // "lo,hi[,points]" on log10 scale
    std::string phi_csv = "0.1,0.2,0.4,0.8,1.6";
    long burn = 150000;
    long keep = 300000;
    int chains = 3;
    int top_models = 10;
};

void run_finemap(const FinemapOpts& o) {
    LoadedData data = assemble(o.pheno, o.covar, o.geno, o.kinship);
    const Eigen::Index p = data.ds.G.cols();
    Model m(std::move(data.ds));
    const VarianceFit nf = m.optimize(0.0);
    const WhitenedData w = whiten(m, nf);

    P1Spec p1 = P1Spec::point(1.0 / static_cast<double>(p + 1));
    std::string p1_desc;
    if (!o.p1_grid.empty()) {
        const auto bounds = parse_grid(o.p1_grid, "p1 grid");
        if (bounds.size() < 2) throw_input("invalid-prior", "p1 grid needs lo,hi");
        const int points = bounds.size() > 2 ? static_cast<int>(bounds[2]) : 17;
        p1 = P1Spec::log10_grid(bounds[0], bounds[1], points);
        p1_desc = "log10_grid(" + o.p1_grid + ")";
    } else if (o.p1 > 0.0) {
        p1 = P1Spec::point(o.p1);
        p1_desc = format_double(o.p1);
    } else {
        p1_desc = format_double(1.0 / static_cast<double>(p + 1));
    }

    FinemapConfig cfg;
    cfg.n_burn = o.burn;
    cfg.n_keep = o.keep;
    cfg.n_chains = o.chains;
    cfg.seed = o.common.seed;
    cfg.threads = o.common.threads;
    cfg.top_models = o.top_models;
    cfg.phis = parse_grid(o.phi_csv, "phi grid");
    cfg.phi_weights = uniform_weights(cfg.phis.size());

    const FinemapReport rep = mcmc_finemap(w, p1, cfg);
    const RegionScorer scorer(w, cfg.phis, cfg.phi_weights);

    std::ostringstream echo;
    echo << "# blmm finemap pheno=" << o.pheno << " covar=" << o.covar << " geno=" << o.geno
         << " kinship=" << o.kinship << " p1=" << p1_desc
         << " phi_grid=" << join_doubles(cfg.phis) << " burn=" << o.burn << " keep=" << o.keep
         << " chains=" << o.chains << " seed=" << o.common.seed << "\n"
         << "# null_fit lambda=" << format_double(nf.lambda)
         << " tau=" << format_double(nf.tau) << "\n";

    auto pip_out = open_out(o.common.out + ".pip.tsv");
    pip_out << echo.str();
    pip_out << "# columns: snp_id pip marginal_log10_abf\n";
    for (Eigen::Index j = 0; j < p; ++j)
        pip_out << data.geno.snp_ids[j] << "\t" << format_double(rep.pip[j]) << "\t"
                << format_double(scorer.log10_abf({static_cast<int>(j)})) << "\n";

    auto model_out = open_out(o.common.out + ".models.tsv");
    model_out << echo.str();
    model_out << "# acceptance_rates=" << join_doubles(rep.acceptance_rates)
              << " all_rejected=" << (rep.any_chain_all_rejected ? 1 : 0) << "\n";
    model_out << "# size_distribution=" << join_doubles(rep.size_distribution) << "\n";
    model_out << "# columns: model posterior_prob log10_abf\n";
    for (const auto& row : rep.top_models) {
        std::string label;
        for (std::size_t i = 0; i < row.snps.size(); ++i)
            label += (i ? "+" : "") + data.geno.snp_ids[row.snps[i]];
        if (label.empty()) label = "null";
        model_out << label << "\t" << format_double(row.prob) << "\t"
                  << format_double(row.log10_abf) << "\n";
    }
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOpts {
    CommonOpts common;
    std::string kind = "panel";
    int n = 500;
    int sets = 200;
    int snps = 100;
    double null_fraction = 0.7;
    std::string mix = "0.5,0.5,0";
    std::string maf_range = "0.001,0.05";
    int ld_block = 10;
    double causal_fraction = 0.2;
    double effect_c = 0.1;
    double protective_fraction = 0.4;
    // region extras
    int causal_count = 2;
    double effect_size = 0.4;
    double lambda_true = 1.0;
    double tau_true = 1.0;
    double relatedness = 0.9;
    int family_size = 4;
};

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

NamedMatrix genotype_table(const MatrixXd& G, const VectorXd& mafs) {
    NamedMatrix g;
    g.values = G.transpose();
    g.mafs = mafs;
    for (Eigen::Index j = 0; j < mafs.size(); ++j) {
        g.snp_ids.push_back("snp" + zero_pad(static_cast<int>(j), 4));
        g.positions.push_back("1:" + std::to_string(1000 + j));
    }
    return g;
}

void run_simulate(const SimulateOpts& o) {
    std::filesystem::create_directories(o.common.out);
    const auto maf = parse_grid(o.maf_range, "maf range");
    if (maf.size() != 2) throw_input("invalid-config", "maf range needs lo,hi");

    if (o.kind == "panel") {
        const auto mix = parse_grid(o.mix, "scenario mix");
        if (mix.size() != 3) throw_input("invalid-config", "scenario mix needs three weights");
        SimConfig cfg;
        cfg.n_individuals = o.n;
        cfg.n_sets = o.sets;
        cfg.snps_per_set = o.snps;
        cfg.null_fraction = o.null_fraction;
        cfg.scenario_mix = {mix[0], mix[1], mix[2]};
        cfg.causal_fraction = o.causal_fraction;
        cfg.effect_c = o.effect_c;
        cfg.protective_fraction = o.protective_fraction;
        cfg.maf_lo = maf[0];
        cfg.maf_hi = maf[1];
        cfg.ld_block_size = o.ld_block;
        cfg.seed = o.common.seed;
        cfg.validate();

        const std::vector<std::string> echo = {
            "blmm simulate kind=panel n=" + std::to_string(o.n) +
            " sets=" + std::to_string(o.sets) + " snps=" + std::to_string(o.snps) +
            " null_fraction=" + format_double(o.null_fraction) + " mix=" + o.mix +
            " maf_range=" + o.maf_range + " ld_block=" + std::to_string(o.ld_block) +
            " causal_fraction=" + format_double(o.causal_fraction) +
            " effect_c=" + format_double(o.effect_c) +
            " protective_fraction=" + format_double(o.protective_fraction) +
            " seed=" + std::to_string(o.common.seed)};

        std::vector<SimSet> sets(o.sets);
        parallel_for(o.sets, o.common.threads,
                     [&](std::size_t s) { sets[s] = simulate_panel_set(cfg, static_cast<int>(s)); });

        std::ofstream manifest(o.common.out + "/sets.tsv");
        std::ofstream truth(o.common.out + "/truth.tsv");
        for (const auto& e : echo) {
            manifest << "# " << e << "\n";
            truth << "# " << e << "\n";
        }
        truth << "# columns: set_id scenario n_causal causal_indices\n";
        for (const auto& set : sets) {
            const std::string pheno = "pheno_" + set.id + ".tsv";
            const std::string geno = "geno_" + set.id + ".tsv";
            const std::string covar = "covar_" + set.id + ".tsv";
            NamedMatrix py;
            py.values = set.pheno.y;
            save_matrix(o.common.out + "/" + pheno, MatrixKind::Phenotype, py, echo);
            NamedMatrix cx;
            cx.values = set.pheno.x;
            save_matrix(o.common.out + "/" + covar, MatrixKind::Covariates, cx, echo);
            save_matrix(o.common.out + "/" + geno, MatrixKind::Genotypes,
                        genotype_table(set.G, set.mafs), echo);
            manifest << set.id << "\t" << pheno << "\t" << geno << "\t" << covar << "\n";
            truth << set.id << "\t" << scenario_name(set.pheno.scenario) << "\t"
                  << set.pheno.causal.size();
            std::vector<int> causal = set.pheno.causal;
            std::sort(causal.begin(), causal.end());
            std::string idx;
            for (std::size_t i = 0; i < causal.size(); ++i)
                idx += (i ? "," : "") + std::to_string(causal[i]);
            truth << "\t" << (idx.empty() ? "-" : idx) << "\n";
        }
    } else if (o.kind == "region") {
        Rng rng(o.common.seed);
        const VectorXd mafs = simulate_mafs(o.snps, maf[0], maf[1], rng);
        const MatrixXd G = simulate_line_genotypes(o.n, mafs, o.family_size, o.relatedness, rng);
        const MatrixXd K = block_kinship(o.n, o.family_size, o.relatedness);
        VectorXd beta = VectorXd::Zero(o.snps);
        std::vector<int> causal = rng.sample_without_replacement(o.snps, o.causal_count);
        for (int c : causal) beta[c] = o.effect_size;
        VectorXd x(o.n);
        for (int i = 0; i < o.n; ++i) x[i] = rng.normal();
        MatrixXd X(o.n, 2);
        X << VectorXd::Ones(o.n), x;
        VectorXd alpha(2);
        alpha << 0.2, 0.5;
        const VectorXd y =
            simulate_with_random_effect(X, alpha, G, beta, o.lambda_true, o.tau_true, K, rng);

        const std::vector<std::string> echo = {
            "blmm simulate kind=region n=" + std::to_string(o.n) +
            " snps=" + std::to_string(o.snps) + " causal=" + std::to_string(o.causal_count) +
            " effect=" + format_double(o.effect_size) +
            " lambda=" + format_double(o.lambda_true) + " tau=" + format_double(o.tau_true) +
            " relatedness=" + format_double(o.relatedness) + " maf_range=" + o.maf_range +
            " seed=" + std::to_string(o.common.seed)};
        NamedMatrix py;
        py.values = y;
        save_matrix(o.common.out + "/pheno.tsv", MatrixKind::Phenotype, py, echo);
        NamedMatrix cx;
        cx.values = x;
        save_matrix(o.common.out + "/covar.tsv", MatrixKind::Covariates, cx, echo);
        save_matrix(o.common.out + "/geno.tsv", MatrixKind::Genotypes, genotype_table(G, mafs),
                    echo);
        NamedMatrix kin;
        kin.values = K;
        for (int i = 0; i < o.n; ++i) kin.sample_ids.push_back("s" + zero_pad(i, 4));
        save_matrix(o.common.out + "/kinship.tsv", MatrixKind::Kinship, kin, echo);
        std::ofstream truth(o.common.out + "/truth.tsv");
        for (const auto& e : echo) truth << "# " << e << "\n";
        truth << "# columns: causal_index effect\n";
        std::sort(causal.begin(), causal.end());
        for (int c : causal) truth << c << "\t" << format_double(beta[c]) << "\n";
    } else {
        throw_input("invalid-config", "kind must be 'panel' or 'region'");
    }
}

// ---------------------------------------------------------------------------
// validate-abf

struct ValidateOpts {
    CommonOpts common;
    std::string n_csv = "50,100,150,336";
    int snps = 300;
    double phi = 0.5;
    double signal_c = 10.0;
    double lambda_true = 1.0;
};

void run_validate(const ValidateOpts& o) {
    const auto ns = parse_grid(o.n_csv, "sample size list");
    std::vector<int> sizes;
    for (double v : ns) sizes.push_back(static_cast<int>(v));
    SweepOptions opt;
    opt.phi = o.phi;
    opt.local_signal_c = o.signal_c;
    opt.lambda_true = o.lambda_true;
    opt.threads = o.common.threads;
    const AccuracyTable table = abf_accuracy_sweep(sizes, o.snps, o.common.seed, opt);

    auto out = open_out(o.common.out);
    out << "# blmm validate-abf n_list=" << o.n_csv << " snps=" << o.snps
        << " phi=" << format_double(o.phi) << " signal_c=" << format_double(o.signal_c)
        << " lambda=" << format_double(o.lambda_true) << " seed=" << o.common.seed << "\n";
    for (const auto& s : table.summaries)
        out << "# summary n=" << s.n << " in_range=" << s.count_in_range
            << " mad_k0=" << format_double(s.mad_k0) << " mad_k1=" << format_double(s.mad_k1)
            << " med_signed_k0=" << format_double(s.med_signed_k0)
            << " med_signed_k1=" << format_double(s.med_signed_k1)
            << " band_k0=" << format_double(s.frac_within_band_k0)
            << " band_k1=" << format_double(s.frac_within_band_k1) << "\n";
    out << "# columns: n snp log10_bf_numeric log10_abf_k0 log10_abf_k1\n";
    for (const auto& r : table.rows)
        out << r.n << "\tsnp" << r.snp << "\t" << format_double(r.log10_bf_numeric) << "\t"
            << format_double(r.log10_abf_k0) << "\t" << format_double(r.log10_abf_k1) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian linear mixed model association analysis"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value configuration file");

    ScanOpts scan;
    auto* scan_cmd = app.add_subcommand("scan", "single-SNP association scan");
    add_common(scan_cmd, scan.common);
    scan_cmd->add_option("--pheno", scan.pheno)->required();
    scan_cmd->add_option("--geno", scan.geno)->required();
    scan_cmd->add_option("--covar", scan.covar);
    scan_cmd->add_option("--kinship", scan.kinship);
    scan_cmd->add_option("--phi-grid", scan.phi_csv)->capture_default_str();
    scan_cmd->add_option("--prior", scan.prior, "standardized or scaled-v")
        ->capture_default_str();
    scan_cmd->add_option("--scaled-v-c", scan.scaled_v_c)->capture_default_str();

    SetTestOpts settest;
    auto* set_cmd = app.add_subcommand("settest", "SNP-set association tests");
    add_common(set_cmd, settest.common);
    set_cmd->add_option("--sets", settest.manifest, "manifest: set_id pheno geno [covar]")
        ->required();
    set_cmd->add_option("--kinship", settest.kinship);
    set_cmd->add_option("--components", settest.components, "two or three")
        ->capture_default_str();
    set_cmd->add_option("--weights", settest.weights, "em (Bayesian-E) or fixed (Bayesian-D)")
        ->capture_default_str();
    set_cmd->add_option("--pi-burden", settest.fixed_pi_burden)->capture_default_str();
    set_cmd->add_option("--alpha", settest.alpha)->capture_default_str();
    set_cmd->add_option("--phi-grid", settest.phi_csv)->capture_default_str();

    FinemapOpts finemap;
    auto* fm_cmd = app.add_subcommand("finemap", "multi-SNP fine-mapping by MCMC");
    add_common(fm_cmd, finemap.common);
    fm_cmd->add_option("--pheno", finemap.pheno)->required();
    fm_cmd->add_option("--geno", finemap.geno)->required();
    fm_cmd->add_option("--covar", finemap.covar);
    fm_cmd->add_option("--kinship", finemap.kinship);
    fm_cmd->add_option("--p1", finemap.p1, "prior inclusion probability (default 1/(p+1))");
    fm_cmd->add_option("--p1-grid", finemap.p1_grid, "log10 bounds lo,hi[,points]");
    fm_cmd->add_option("--phi-grid", finemap.phi_csv)->capture_default_str();
    fm_cmd->add_option("--burn", finemap.burn)->capture_default_str();
    fm_cmd->add_option("--keep", finemap.keep)->capture_default_str();
    fm_cmd->add_option("--chains", finemap.chains)->capture_default_str();
    fm_cmd->add_option("--top-models", finemap.top_models)->capture_default_str();

    SimulateOpts simulate;
    auto* sim_cmd = app.add_subcommand("simulate", "write simulated datasets");
    add_common(sim_cmd, simulate.common);
    sim_cmd->add_option("--kind", simulate.kind, "panel or region")->capture_default_str();
    sim_cmd->add_option("--n", simulate.n)->capture_default_str();
    sim_cmd->add_option("--sets", simulate.sets)->capture_default_str();
    sim_cmd->add_option("--snps", simulate.snps)->capture_default_str();
    sim_cmd->add_option("--null-fraction", simulate.null_fraction)->capture_default_str();
    sim_cmd->add_option("--mix", simulate.mix, "scenario mix: consistent,mixed,cv")
        ->capture_default_str();
    sim_cmd->add_option("--maf-range", simulate.maf_range)->capture_default_str();
    sim_cmd->add_option("--ld-block", simulate.ld_block)->capture_default_str();
    sim_cmd->add_option("--causal-fraction", simulate.causal_fraction)->capture_default_str();
    sim_cmd->add_option("--effect-c", simulate.effect_c)->capture_default_str();
    sim_cmd->add_option("--protective-fraction", simulate.protective_fraction)
        ->capture_default_str();
    sim_cmd->add_option("--causal", simulate.causal_count)->capture_default_str();
    sim_cmd->add_option("--effect", simulate.effect_size)->capture_default_str();
    sim_cmd->add_option("--lambda", simulate.lambda_true)->capture_default_str();
    sim_cmd->add_option("--tau", simulate.tau_true)->capture_default_str();
    sim_cmd->add_option("--relatedness", simulate.relatedness)->capture_default_str();
    sim_cmd->add_option("--family-size", simulate.family_size)->capture_default_str();

    ValidateOpts validate;
    auto* val_cmd = app.add_subcommand("validate-abf", "quadrature-vs-ABF accuracy sweep");
    add_common(val_cmd, validate.common);
    val_cmd->add_option("--n-list", validate.n_csv)->capture_default_str();
    val_cmd->add_option("--snps", validate.snps)->capture_default_str();
    val_cmd->add_option("--phi", validate.phi)->capture_default_str();
    val_cmd->add_option("--signal-c", validate.signal_c)->capture_default_str();
    val_cmd->add_option("--lambda", validate.lambda_true)->capture_default_str();

    try {
        app.parse(argc, argv);
        if (scan_cmd->parsed()) run_scan(scan);
        if (set_cmd->parsed()) run_settest(settest);
        if (fm_cmd->parsed()) run_finemap(finemap);
        if (sim_cmd->parsed()) run_simulate(simulate);
        if (val_cmd->parsed()) run_validate(validate);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const blmm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case blmm::ErrorKind::Input: return 2;
            case blmm::ErrorKind::Numeric: return 3;
            case blmm::ErrorKind::Oracle: return 4;
        }
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
