#ifndef METAGLMM_SIM_HPP
#define METAGLMM_SIM_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "metaglmm/inference.hpp"
#include "metaglmm/nn_baseline.hpp"
#include "metaglmm/rng.hpp"

namespace metaglmm {

enum class MethodKind { DL, PLBC, PL, PLSBC };

inline const char* method_name(MethodKind m) {
    switch (m) {
        case MethodKind::DL: return "dl";
        case MethodKind::PLBC: return "plbc";
        case MethodKind::PL: return "pl";
        case MethodKind::PLSBC: return "plsbc";
    }
    return "?";
}

inline MethodKind method_from_name(const std::string& s) {
    if (s == "dl") return MethodKind::DL;
    if (s == "plbc") return MethodKind::PLBC;
    if (s == "pl") return MethodKind::PL;
    if (s == "plsbc") return MethodKind::PLSBC;
    throw std::invalid_argument("unknown method '" + s + "'");
}

struct ScenarioSpec {
    std::string label = "scenario";
    FamilyKind family = FamilyKind::Binomial;
    int K = 5;
    double tau2 = 1.0;
    double theta0 = -2.0;
    double n_lo = 15.0;
    double n_hi = 150.0;
    int replications = 1000;
    int B = 1024;
    std::uint64_t seed = 1;
    std::vector<MethodKind> methods{MethodKind::DL, MethodKind::PLBC, MethodKind::PL,
                                    MethodKind::PLSBC};
    CcPolicy cc_policy = CcPolicy::OnZero;
    double level = 0.95;

    void validate() const {
        if (replications < 1) throw std::invalid_argument("scenario: replications must be >= 1");
        if (K < 2) throw std::invalid_argument("scenario: K must be >= 2");
        if (!(tau2 > 0.0)) throw std::invalid_argument("scenario: tau2 must be positive");
        if (B < 2) throw std::invalid_argument("scenario: B must be >= 2");
        if (methods.empty()) throw std::invalid_argument("scenario: no methods");
    }
};

struct MethodSummary {
    double bias = 0.0;
    double bias_mc_se = 0.0;
    double coverage = 0.0;
    double coverage_mc_se = 0.0;
    double mean_length = 0.0;
    double length_mc_se = 0.0;
    int failures = 0;
    int n_used = 0;
};

struct SimSummary {
    ScenarioSpec spec;
    std::vector<MethodKind> methods;
    std::vector<MethodSummary> per_method;

    const MethodSummary& of(MethodKind m) const {
        for (std::size_t i = 0; i < methods.size(); ++i)
            if (methods[i] == m) return per_method[i];
        throw std::out_of_range("method not present in summary");
    }
};

// Gamma dispersion ladder over the study index: 1/3 at the first study,
// rising linearly towards 5/3.
inline double gamma_dispersion_schedule(std::size_t k_index, std::size_t K) {
    return (1.0 / 3.0) * (1.0 + 4.0 * static_cast<double>(k_index) / static_cast<double>(K));
}

// One simulated study under theta_k = theta0 + v_k. Binomial draws a count,
// Poisson uses unit person-time per subject, gamma draws individual outcomes
// with the index-dependent dispersion schedule, normal reports a sample mean
// with its estimated variance.
inline StudyRecord generate_study(FamilyKind family, std::size_t k_index, std::size_t K,
                                  double theta0, double tau2, CounterRng& rng, double n_lo = 15.0,
                                  double n_hi = 150.0) {
    StudyRecord rec;
    rec.study_id = "s" + std::to_string(k_index + 1);
    rec.record_id = rec.study_id;
    rec.x = {1.0};
    const double n = std::floor(rng.uniform(n_lo, n_hi));
    const double theta = theta0 + rng.normal(0.0, std::sqrt(tau2));
    switch (family) {
        case FamilyKind::Binomial: {
            const double p = 1.0 / (1.0 + std::exp(-theta));
            const long y = rng.binomial(static_cast<long>(n), p);
            rec.n = n;
            rec.ybar = static_cast<double>(y) / n;
            rec.phi_hat = 1.0;
            break;
        }
        case FamilyKind::Poisson: {
            const double t = n; // one unit of person-time per subject
            const long y = rng.poisson(t * std::exp(theta));
            rec.n = t;
            rec.ybar = static_cast<double>(y) / t;
            rec.phi_hat = 1.0;
            break;
        }
        case FamilyKind::Gamma: {
            const double phi = gamma_dispersion_schedule(k_index, K);
            const double mu = std::exp(theta);
            const long m = static_cast<long>(n);
            double sum = 0.0, sumsq = 0.0;
            for (long i = 0; i < m; ++i) {
                const double y = rng.gamma(1.0 / phi, phi * mu);
                sum += y;
                sumsq += y * y;
            }
            rec.n = n;
            rec.ybar = sum / n;
            rec.s2 = std::max((sumsq - sum * sum / n) / (n - 1.0), 1e-12);
            rec.phi_hat = *rec.s2 / (rec.ybar * rec.ybar);
            break;
        }
        case FamilyKind::Normal: {
            const long m = static_cast<long>(n);
            double sum = 0.0, sumsq = 0.0;
            for (long i = 0; i < m; ++i) {
                const double y = rng.normal(theta, 1.0);
                sum += y;
                sumsq += y * y;
            }
            const double mean = sum / n;
            const double s2 = std::max((sumsq - sum * sum / n) / (n - 1.0), 1e-12);
            rec.n = 1.0;
            rec.ybar = mean;
            rec.s2 = s2 / n; // variance of the reported estimate
            rec.phi_hat = *rec.s2;
            break;
        }
    }
    return rec;
}

namespace detail {

struct RepOutcome {
    bool failed = true;
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

inline std::vector<RepOutcome> run_replication(const ScenarioSpec& spec, const NodeSet& nodes,
                                               int rep) {
    CounterRng rng(spec.seed, static_cast<std::uint64_t>(rep));
    Dataset ds;
    ds.family = [&] {
        switch (spec.family) {
            case FamilyKind::Binomial: return FamilySpec::binomial();
            case FamilyKind::Poisson: return FamilySpec::poisson();
            case FamilyKind::Gamma: return FamilySpec::gamma();
            case FamilyKind::Normal: return FamilySpec::normal();
        }
        return FamilySpec::normal();
    }();
    ds.p = 1;
    for (int k = 0; k < spec.K; ++k)
        ds.records.push_back(generate_study(spec.family, static_cast<std::size_t>(k),
                                            static_cast<std::size_t>(spec.K), spec.theta0,
                                            spec.tau2, rng, spec.n_lo, spec.n_hi));

    std::vector<RepOutcome> out(spec.methods.size());
    const bool nn_wanted = std::any_of(spec.methods.begin(), spec.methods.end(), [](MethodKind m) {
        return m == MethodKind::DL || m == MethodKind::PLBC;
    });
    const bool glmm_wanted = std::any_of(spec.methods.begin(), spec.methods.end(), [](MethodKind m) {
        return m == MethodKind::PL || m == MethodKind::PLSBC;
    });

    NNInput nn;
    if (nn_wanted) {
        try {
            nn = nn_record_input(ds, spec.cc_policy);
            nn.validate();
        } catch (const std::exception&) {
            nn.theta_hat.clear();
        }
    }
    ModelFit fit;
    bool fit_ok = false;
    ProfileCache cache;
    if (glmm_wanted) {
        try {
            fit = fit_mle(ds, nodes);
            fit_ok = fit.converged;
        } catch (const std::exception&) {
            fit_ok = false;
        }
    }

    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
        RepOutcome& o = out[mi];
        try {
            switch (spec.methods[mi]) {
                case MethodKind::DL: {
                    if (nn.theta_hat.empty()) break;
                    const DLEstimate dl = dl_estimate(nn);
                    const double z = norm_ppf(0.5 * (1.0 + spec.level));
                    o = {false, dl.theta, dl.theta - z * dl.se, dl.theta + z * dl.se};
                    break;
                }
                case MethodKind::PLBC: {
                    if (nn.theta_hat.empty()) break;
                    const IntervalResult r = nn_plbc_interval(nn, spec.level);
                    if (r.lower_status == BoundStatus::Converged &&
                        r.upper_status == BoundStatus::Converged)
                        o = {false, r.estimate, r.lower, r.upper};
                    break;
                }
                case MethodKind::PL:
                case MethodKind::PLSBC: {
                    if (!fit_ok) break;
                    const IntervalMethod m = (spec.methods[mi] == MethodKind::PL)
                                                 ? IntervalMethod::PL
                                                 : IntervalMethod::PLSBC;
                    const IntervalResult r =
                        confidence_interval(ds, nodes, fit, 0, spec.level, m, &cache);
                    if (r.lower_status == BoundStatus::Converged &&
                        r.upper_status == BoundStatus::Converged)
                        o = {false, r.estimate, r.lower, r.upper};
                    break;
                }
            }
        } catch (const std::exception&) {
            o.failed = true;
        }
    }
    return out;
}

} // namespace detail

// Run every replication of one scenario. Replications execute on
// `threads` workers with per-replication substreams; results are reduced in
// replication order, so the summary does not depend on the thread count.
inline SimSummary run_scenario(const ScenarioSpec& spec, int threads = 1) {
    spec.validate();
    const NodeSet nodes = sobol_nodes(spec.B, spec.seed);
    const int R = spec.replications;
    std::vector<std::vector<detail::RepOutcome>> results(static_cast<std::size_t>(R));

    auto run_one = [&](int r) {
        try {
            results[static_cast<std::size_t>(r)] = detail::run_replication(spec, nodes, r);
        } catch (const std::exception&) {
            results[static_cast<std::size_t>(r)].assign(spec.methods.size(),
                                                        detail::RepOutcome{});
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        for (int r = 0; r < R; ++r) run_one(r);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const int r = next.fetch_add(1);
                    if (r >= R) break;
                    run_one(r);
                }
            });
        for (std::thread& th : pool) th.join();
    }

    SimSummary summary;
    summary.spec = spec;
    summary.methods = spec.methods;
    summary.per_method.resize(spec.methods.size());
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
        MethodSummary& ms = summary.per_method[mi];
        double sb = 0.0, sb2 = 0.0, sl = 0.0, sl2 = 0.0;
        int covered = 0, used = 0;
        for (int r = 0; r < R; ++r) {
            const detail::RepOutcome& o = results[static_cast<std::size_t>(r)][mi];
            if (o.failed) {
                ++ms.failures;
                continue;
            }
            ++used;
            const double b = o.estimate - spec.theta0;
            const double len = o.upper - o.lower;
            sb += b;
            sb2 += b * b;
            sl += len;
            sl2 += len * len;
            if (o.lower <= spec.theta0 && spec.theta0 <= o.upper) ++covered;
        }
        ms.n_used = used;
        if (used > 0) {
            ms.bias = sb / used;
            ms.coverage = static_cast<double>(covered) / used;
            ms.mean_length = sl / used;
            if (used > 1) {
                ms.bias_mc_se = std::sqrt(std::max(0.0, (sb2 - sb * sb / used) / (used - 1.0)) /
                                          used);
                ms.length_mc_se = std::sqrt(std::max(0.0, (sl2 - sl * sl / used) / (used - 1.0)) /
                                            used);
            }
            ms.coverage_mc_se = std::sqrt(ms.coverage * (1.0 - ms.coverage) / used);
        }
    }
    return summary;
}

// Long-format results file: one row per (scenario, method, metric).
inline void emit_results(const std::vector<SimSummary>& summaries, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write '" + path + "'");
    out << "label,family,K,tau2,theta0,reps,B,seed,method,metric,value,mc_se,failures\n";
    char buf[512];
    for (const SimSummary& s : summaries) {
        for (std::size_t mi = 0; mi < s.methods.size(); ++mi) {
            const MethodSummary& ms = s.per_method[mi];
            const struct {
                const char* name;
                double value;
                double se;
            } rows[3] = {{"bias", ms.bias, ms.bias_mc_se},
                         {"coverage", ms.coverage, ms.coverage_mc_se},
                         {"length", ms.mean_length, ms.length_mc_se}};
            for (const auto& row : rows) {
                std::snprintf(buf, sizeof buf, "%s,%s,%d,%.12g,%.12g,%d,%d,%llu,%s,%s,%.12g,%.12g,%d\n",
                              s.spec.label.c_str(), family_name(s.spec.family), s.spec.K,
                              s.spec.tau2, s.spec.theta0, s.spec.replications, s.spec.B,
                              static_cast<unsigned long long>(s.spec.seed),
                              method_name(s.methods[mi]), row.name, row.value, row.se, ms.failures);
                out << buf;
            }
        }
    }
}

// Scenario files are blocks of key = value lines separated by blank lines.
inline std::vector<ScenarioSpec> load_scenarios(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open scenario file '" + path + "'");
    std::vector<ScenarioSpec> out;
    ScenarioSpec cur;
    bool dirty = false;
    int lineno = 0;
    auto flush = [&] {
        if (dirty) {
            cur.validate();
            out.push_back(cur);
            cur = ScenarioSpec();
            dirty = false;
        }
    };
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t h = line.find('#');
        if (h != std::string::npos) line.erase(h);
        std::size_t a = line.find_first_not_of(" \t");
        if (a == std::string::npos) {
            flush();
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("scenario file line " + std::to_string(lineno) +
                                        ": expected key = value");
        auto trim = [](std::string s) {
            const std::size_t b = s.find_first_not_of(" \t");
            const std::size_t e = s.find_last_not_of(" \t");
            return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        dirty = true;
        try {
            if (key == "label") {
                cur.label = val;
            } else if (key == "family") {
                cur.family = family_from_name(val).kind;
            } else if (key == "K") {
                cur.K = std::stoi(val);
            } else if (key == "tau2") {
                cur.tau2 = std::stod(val);
            } else if (key == "theta0") {
                cur.theta0 = std::stod(val);
            } else if (key == "n_lo") {
                cur.n_lo = std::stod(val);
            } else if (key == "n_hi") {
                cur.n_hi = std::stod(val);
            } else if (key == "reps") {
                cur.replications = std::stoi(val);
            } else if (key == "B") {
                cur.B = std::stoi(val);
            } else if (key == "seed") {
                cur.seed = std::stoull(val);
            } else if (key == "level") {
                cur.level = std::stod(val);
            } else if (key == "cc") {
                if (val == "on_zero")
                    cur.cc_policy = CcPolicy::OnZero;
                else if (val == "always")
                    cur.cc_policy = CcPolicy::Always;
                else
                    throw std::invalid_argument("cc must be on_zero or always");
            } else if (key == "methods") {
                cur.methods.clear();
                std::stringstream ss(val);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    cur.methods.push_back(method_from_name(trim(tok)));
            } else {
                throw std::invalid_argument("unknown scenario key '" + key + "'");
            }
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("scenario file line " + std::to_string(lineno) + ": " +
                                        e.what());
        }
    }
    flush();
    if (out.empty())
        throw std::invalid_argument("scenario file '" + path + "' defines no scenarios");
    return out;
}

} // namespace metaglmm

#endif
