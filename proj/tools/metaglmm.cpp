// Command-line front end: fit aggregate-data mixed models, compute
// profile-likelihood intervals, run simulation scenarios, and reproduce the
// bundled reanalysis.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metaglmm/metaglmm.hpp"

namespace {

using namespace metaglmm;

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitNonConvergence = 2;

struct CommonArgs {
    std::string family;
    std::string data;
    double level = 0.95;
    int qmc_nodes = 2048;
    std::uint64_t seed = 1;
    std::string out;
    std::optional<double> tau2_fixed;
};

int thread_default() {
    if (const char* env = std::getenv("METAGLMM_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

Dataset load_dataset(const CommonArgs& a) {
    if (a.family.empty())
        throw std::invalid_argument("--family is required");
    if (a.data.empty())
        throw std::invalid_argument("--data is required");
    return load_csv(a.data, family_from_name(a.family));
}

void print_fit(const Dataset& ds, const ModelFit& fit) {
    std::printf("family: %s   records: %zu   coefficients: %zu\n", family_name(ds.family.kind),
                ds.records.size(), ds.p);
    for (std::size_t j = 0; j < fit.beta_hat.size(); ++j)
        std::printf("beta[%zu]%s  %10.3f\n", j, j == 0 ? " (intercept)" : "            ",
                    fit.beta_hat[j]);
    std::printf("tau2                %10.3f\n", fit.tau2_hat);
    std::printf("loglik              %14.3f\n", fit.loglik);
    std::printf("converged           %10s\n", fit.converged ? "yes" : "no");
    std::printf("iterations          %10d\n", fit.iterations);
    std::printf("qmc nodes           %10d    seed %llu\n", fit.nodes_B,
                static_cast<unsigned long long>(fit.seed));
    if (fit.small_sample_warning)
        std::fprintf(stderr, "warning: fewer records than coefficients + 1\n");
}

void write_fit_csv(const std::string& path, const ModelFit& fit) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    std::fprintf(f, "name,value\n");
    for (std::size_t j = 0; j < fit.beta_hat.size(); ++j)
        std::fprintf(f, "beta%zu,%.17g\n", j, fit.beta_hat[j]);
    std::fprintf(f, "tau2,%.17g\n", fit.tau2_hat);
    std::fprintf(f, "loglik,%.17g\n", fit.loglik);
    std::fprintf(f, "converged,%d\n", fit.converged ? 1 : 0);
    std::fprintf(f, "iterations,%d\n", fit.iterations);
    std::fprintf(f, "qmc_nodes,%d\n", fit.nodes_B);
    std::fprintf(f, "seed,%llu\n", static_cast<unsigned long long>(fit.seed));
    std::fclose(f);
}

int cmd_fit(const CommonArgs& a) {
    const Dataset ds = load_dataset(a);
    const NodeSet nodes = sobol_nodes(a.qmc_nodes, a.seed);
    FitOptions opt;
    opt.tau2_fixed = a.tau2_fixed;
    const ModelFit fit = fit_mle(ds, nodes, std::nullopt, opt);
    print_fit(ds, fit);
    if (!a.out.empty()) write_fit_csv(a.out, fit);
    return fit.converged ? kExitOk : kExitNonConvergence;
}

struct CiRow {
    std::string method;
    std::size_t coefficient;
    double estimate, lower, upper, bartlett;
    std::string lo_flag, hi_flag;
};

int cmd_ci(const CommonArgs& a, const std::string& method, bool with_nn) {
    const Dataset ds = load_dataset(a);
    if (method != "dl" && method != "plbc" && method != "pl" && method != "plsbc" &&
        method != "all")
        throw std::invalid_argument("--method must be one of dl|plbc|pl|plsbc|all");
    const bool want_pl = method == "pl" || method == "all";
    const bool want_plsbc = method == "plsbc" || method == "all";
    const bool want_dl = method == "dl" || with_nn;
    const bool want_plbc = method == "plbc" || with_nn;

    std::vector<CiRow> rows;
    ModelFit fit;
    if (want_pl || want_plsbc) {
        const NodeSet nodes = sobol_nodes(a.qmc_nodes, a.seed);
        FitOptions opt;
        opt.tau2_fixed = a.tau2_fixed;
        fit = fit_mle(ds, nodes, std::nullopt, opt);
        if (!fit.converged) {
            std::fprintf(stderr, "error: maximum-likelihood fit did not converge\n");
            return kExitNonConvergence;
        }
        for (std::size_t ell = 0; ell < ds.p; ++ell) {
            ProfileCache cache;
            if (want_pl) {
                const IntervalResult r =
                    confidence_interval(ds, nodes, fit, ell, a.level, IntervalMethod::PL, &cache);
                rows.push_back({"pl", ell, r.estimate, r.lower, r.upper, r.bartlett_C,
                                bound_status_name(r.lower_status), bound_status_name(r.upper_status)});
            }
            if (want_plsbc) {
                const IntervalResult r = confidence_interval(ds, nodes, fit, ell, a.level,
                                                             IntervalMethod::PLSBC, &cache);
                rows.push_back({"plsbc", ell, r.estimate, r.lower, r.upper, r.bartlett_C,
                                bound_status_name(r.lower_status), bound_status_name(r.upper_status)});
            }
        }
    }
    if (want_dl || want_plbc) {
        NNInput nn;
        std::size_t coef = 0;
        if (ds.p == 2) {
            nn = nn_contrast_input(ds);
            coef = 1;
        } else if (ds.p == 1) {
            nn = nn_record_input(ds);
        } else {
            std::fprintf(stderr,
                         "warning: normal-normal comparators support intercept-only or two-arm "
                         "data; skipping\n");
        }
        if (!nn.theta_hat.empty()) {
            if (want_dl) {
                const DLEstimate dl = dl_estimate(nn);
                const double z = norm_ppf(0.5 * (1.0 + a.level));
                rows.push_back({"dl", coef, dl.theta, dl.theta - z * dl.se, dl.theta + z * dl.se,
                                0.0, "Converged", "Converged"});
            }
            if (want_plbc) {
                const IntervalResult r = nn_plbc_interval(nn, a.level);
                rows.push_back({"plbc", coef, r.estimate, r.lower, r.upper, r.bartlett_C,
                                bound_status_name(r.lower_status), bound_status_name(r.upper_status)});
            }
        }
    }

    std::printf("%-7s %-5s %10s %10s %10s %8s %-11s %-11s\n", "method", "coef", "estimate", "lower",
                "upper", "C", "flag_lo", "flag_hi");
    for (const CiRow& r : rows)
        std::printf("%-7s %-5zu %10.3f %10.3f %10.3f %8.3f %-11s %-11s\n", r.method.c_str(),
                    r.coefficient, r.estimate, r.lower, r.upper, r.bartlett, r.lo_flag.c_str(),
                    r.hi_flag.c_str());
    if (!a.out.empty()) {
        std::FILE* f = std::fopen(a.out.c_str(), "w");
        if (!f) throw std::runtime_error("cannot write '" + a.out + "'");
        std::fprintf(f, "method,coefficient,estimate,lower,upper,bartlett_C,flag_lower,flag_upper\n");
        for (const CiRow& r : rows)
            std::fprintf(f, "%s,%zu,%.17g,%.17g,%.17g,%.17g,%s,%s\n", r.method.c_str(),
                         r.coefficient, r.estimate, r.lower, r.upper, r.bartlett, r.lo_flag.c_str(),
                         r.hi_flag.c_str());
        std::fclose(f);
    }
    return kExitOk;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out, int threads,
                 int reps_override) {
    std::vector<ScenarioSpec> scenarios = load_scenarios(scenario_path);
    if (reps_override > 0)
        for (ScenarioSpec& sp : scenarios) sp.replications = reps_override;
    std::vector<SimSummary> summaries;
    for (const ScenarioSpec& sp : scenarios) {
        std::fprintf(stderr, "running scenario '%s' (%s, K=%d, tau2=%g, %d reps)...\n",
                     sp.label.c_str(), family_name(sp.family), sp.K, sp.tau2, sp.replications);
        summaries.push_back(run_scenario(sp, threads));
    }
    std::printf("%-16s %-9s %3s %5s  %-6s %9s %9s %9s %6s\n", "label", "family", "K", "tau2",
                "method", "bias", "coverage", "length", "fails");
    for (const SimSummary& s : summaries)
        for (std::size_t mi = 0; mi < s.methods.size(); ++mi) {
            const MethodSummary& ms = s.per_method[mi];
            std::printf("%-16s %-9s %3d %5.2f  %-6s %9.3f %9.3f %9.3f %6d\n", s.spec.label.c_str(),
                        family_name(s.spec.family), s.spec.K, s.spec.tau2,
                        method_name(s.methods[mi]), ms.bias, ms.coverage, ms.mean_length,
                        ms.failures);
        }
    if (!out.empty()) emit_results(summaries, out);
    return kExitOk;
}

int cmd_reanalyze(const std::string& name, const CommonArgs& a) {
    const Dataset ds = bundled_dataset(name);
    const NNInput nn = nn_contrast_input(ds);

    const DLEstimate dl = dl_estimate(nn);
    const double z = norm_ppf(0.5 * (1.0 + a.level));
    const IntervalResult plbc = nn_plbc_interval(nn, a.level);

    const NodeSet nodes = sobol_nodes(a.qmc_nodes, a.seed);
    const ModelFit fit = fit_mle(ds, nodes);
    if (!fit.converged) {
        std::fprintf(stderr, "error: maximum-likelihood fit did not converge\n");
        return kExitNonConvergence;
    }
    ProfileCache cache;
    const IntervalResult pl = confidence_interval(ds, nodes, fit, 1, a.level, IntervalMethod::PL,
                                                  &cache);
    const IntervalResult plsbc = confidence_interval(ds, nodes, fit, 1, a.level,
                                                     IntervalMethod::PLSBC, &cache);

    std::printf("dataset: %s   level: %.0f%%   qmc nodes: %d   seed: %llu\n", name.c_str(),
                100.0 * a.level, a.qmc_nodes, static_cast<unsigned long long>(a.seed));
    std::printf("%-7s %10s %10s %10s\n", "method", "estimate", "lower", "upper");
    std::printf("%-7s %10.3f %10.3f %10.3f\n", "dl", dl.theta, dl.theta - z * dl.se,
                dl.theta + z * dl.se);
    std::printf("%-7s %10.3f %10.3f %10.3f\n", "plbc", plbc.estimate, plbc.lower, plbc.upper);
    std::printf("%-7s %10.3f %10.3f %10.3f\n", "pl", fit.beta_hat[1], pl.lower, pl.upper);
    std::printf("%-7s %10.3f %10.3f %10.3f\n", "plsbc", fit.beta_hat[1], plsbc.lower, plsbc.upper);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"random-effects meta-analysis of aggregate data under exponential-family mixed "
                 "models"};
    app.require_subcommand(1);

    CommonArgs a;
    std::string method = "all";
    bool with_nn = false;
    std::string scenario_path, bundled_name;
    int threads = thread_default();
    double tau2_fixed_value = -1.0;

    auto add_common = [&](CLI::App* cmd, bool needs_data) {
        if (needs_data) {
            cmd->add_option("--family", a.family, "outcome family: binomial|poisson|gamma|normal");
            cmd->add_option("--data", a.data, "input CSV path");
        }
        cmd->add_option("--level", a.level, "confidence level (default 0.95)");
        cmd->add_option("--qmc-nodes", a.qmc_nodes, "low-discrepancy node count B (default 2048)")
            ->check(CLI::Range(64, 1 << 24));
        cmd->add_option("--seed", a.seed, "scramble / replication seed");
        cmd->add_option("--out", a.out, "write machine-readable CSV here");
    };

    int reps_override = 0;

    CLI::App* fit = app.add_subcommand("fit", "maximum-likelihood fit of (beta, tau2)");
    add_common(fit, true);
    fit->add_option("--tau2-fixed", tau2_fixed_value, "pin tau2 instead of estimating it");

    CLI::App* ci = app.add_subcommand("ci", "profile-likelihood confidence intervals");
    add_common(ci, true);
    ci->add_option("--method", method, "dl|plbc|pl|plsbc|all");
    ci->add_flag("--nn", with_nn, "include normal-normal comparators");
    ci->add_option("--tau2-fixed", tau2_fixed_value, "pin tau2 instead of estimating it");

    CLI::App* sim = app.add_subcommand("simulate", "run simulation scenarios");
    sim->add_option("--scenario", scenario_path, "scenario file")->required();
    sim->add_option("--out", a.out, "long-format results CSV");
    sim->add_option("--reps", reps_override, "override the replication count of every scenario");
    sim->add_option("--threads", threads, "worker threads (env METAGLMM_THREADS)");

    CLI::App* re = app.add_subcommand("reanalyze", "reanalyze a bundled dataset");
    re->add_option("name", bundled_name, "bundled dataset id (long2020)")->required();
    add_common(re, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (fit->parsed() || ci->parsed()) {
            if (tau2_fixed_value >= 0.0) a.tau2_fixed = tau2_fixed_value;
            if (!(a.level > 0.5 && a.level < 1.0))
                throw std::invalid_argument("--level must lie in (0.5, 1)");
        }
        if (fit->parsed()) return cmd_fit(a);
        if (ci->parsed()) return cmd_ci(a, method, with_nn);
        if (sim->parsed()) return cmd_simulate(scenario_path, a.out, threads, reps_override);
        if (re->parsed()) return cmd_reanalyze(bundled_name, a);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInputError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInputError;
    }
    return kExitOk;
}
