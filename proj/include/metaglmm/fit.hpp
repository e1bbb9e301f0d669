#ifndef METAGLMM_FIT_HPP
#define METAGLMM_FIT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "metaglmm/data.hpp"
#include "metaglmm/math.hpp"
#include "metaglmm/optim.hpp"
#include "metaglmm/qmc.hpp"
#include "metaglmm/variances.hpp"

namespace metaglmm {

// Sum of per-record marginal log-likelihoods, accumulated in record order so
// repeated evaluations are bitwise identical.
inline double total_loglik(const Dataset& ds, std::span<const double> beta, double tau2,
                           const NodeSet& nodes) {
    double ll = 0.0;
    for (const StudyRecord& r : ds.records)
        ll += marginal_loglik_study(r, ds.family, beta, tau2, nodes);
    return ll;
}

struct ModelFit {
    std::vector<double> beta_hat;
    double tau2_hat = 0.0;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    int nodes_B = 0;
    std::uint64_t seed = 0;
    bool small_sample_warning = false;
};

struct ConstrainedFit {
    std::size_t pinned_index = 0;
    double pinned_value = 0.0;
    std::vector<double> beta; // full vector, pinned entry included
    double tau2_tilde = 0.0;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
};

struct FitStart {
    std::vector<double> beta;
    double tau2 = 1e-4;
};

struct FitOptions {
    int max_iter = 500;
    double param_tol = 1e-8;
    double obj_tol = 1e-10;
    std::optional<double> tau2_fixed;
    bool polish = true;
    double golden_tol = 1e-7; // line tolerance of one-free-parameter fits
};

// Weighted-least-squares meta-regression with the DerSimonian-Laird moment
// estimate of tau2, used to start the GLMM optimizer.
inline FitStart dl_start(const Dataset& ds, CcPolicy policy = CcPolicy::OnZero) {
    const std::size_t K = ds.records.size();
    const std::size_t p = ds.p;
    std::vector<double> theta(K), sigma2(K);
    for (std::size_t k = 0; k < K; ++k) {
        theta[k] = link_scale_estimate(ds.records[k], ds.family, policy);
        sigma2[k] = within_study_variance(ds.records[k], ds.family, policy);
    }
    auto wls = [&](double tau2) {
        std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const double w = 1.0 / (sigma2[k] + tau2);
            for (std::size_t i = 0; i < p; ++i) {
                xty[i] += w * ds.records[k].x[i] * theta[k];
                for (std::size_t j = 0; j < p; ++j)
                    xtx[i * p + j] += w * ds.records[k].x[i] * ds.records[k].x[j];
            }
        }
        return solve_spd(xtx, xty, p);
    };
    const std::vector<double> beta_fe = wls(0.0);
    double q = 0.0, trw = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        double fitv = 0.0;
        for (std::size_t j = 0; j < p; ++j) fitv += ds.records[k].x[j] * beta_fe[j];
        const double w = 1.0 / sigma2[k];
        q += w * (theta[k] - fitv) * (theta[k] - fitv);
        trw += w;
    }
    // tr((X'WX)^{-1} X'W^2X)
    std::vector<double> xtx(p * p, 0.0), xw2x(p * p, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const double w = 1.0 / sigma2[k];
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                xtx[i * p + j] += w * ds.records[k].x[i] * ds.records[k].x[j];
                xw2x[i * p + j] += w * w * ds.records[k].x[i] * ds.records[k].x[j];
            }
    }
    double tr = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        std::vector<double> col(p);
        for (std::size_t i = 0; i < p; ++i) col[i] = xw2x[i * p + j];
        const std::vector<double> sol = solve_spd(xtx, col, p);
        tr += sol[j];
    }
    const double denom = trw - tr;
    double tau2 = 0.0;
    if (denom > 0.0 && K > p)
        tau2 = std::max(0.0, (q - (static_cast<double>(K) - static_cast<double>(p))) / denom);
    FitStart st;
    st.beta = wls(tau2);
    st.tau2 = std::max(tau2, 1e-4);
    return st;
}

namespace detail {

// Free-parameter layout: unpinned coefficients in index order, then the
// unbounded tau parameter s with tau = softplus(s), unless tau2 is fixed.
struct FitProblem {
    const Dataset* ds = nullptr;
    const NodeSet* nodes = nullptr;
    std::ptrdiff_t pinned = -1;
    double pinned_value = 0.0;
    std::optional<double> tau2_fixed;
    std::size_t p = 0;

    std::size_t n_free_beta() const { return p - (pinned >= 0 ? 1 : 0); }
    std::size_t dim() const { return n_free_beta() + (tau2_fixed ? 0 : 1); }

    void unpack(const std::vector<double>& xfree, std::vector<double>& beta, double& tau2) const {
        beta.assign(p, 0.0);
        std::size_t q = 0;
        for (std::size_t j = 0; j < p; ++j) {
            if (static_cast<std::ptrdiff_t>(j) == pinned)
                beta[j] = pinned_value;
            else
                beta[j] = xfree[q++];
        }
        if (tau2_fixed) {
            tau2 = *tau2_fixed;
        } else {
            const double tau = softplus(xfree[q]);
            tau2 = tau * tau;
        }
    }

    std::vector<double> pack(const std::vector<double>& beta, double tau2) const {
        std::vector<double> xfree;
        for (std::size_t j = 0; j < p; ++j)
            if (static_cast<std::ptrdiff_t>(j) != pinned) xfree.push_back(beta[j]);
        if (!tau2_fixed)
            xfree.push_back(softplus_inv(std::max(std::sqrt(std::max(tau2, 0.0)), 1e-8)));
        return xfree;
    }

    double neg_loglik(const std::vector<double>& xfree) const {
        std::vector<double> beta;
        double tau2 = 0.0;
        unpack(xfree, beta, tau2);
        try {
            return -total_loglik(*ds, beta, tau2, *nodes);
        } catch (const std::runtime_error&) {
            return std::numeric_limits<double>::infinity();
        }
    }
};

// Expand a three-point pattern downhill until the middle point is lowest,
// then refine by golden section.
inline double bracketed_golden_min(const std::function<double(double)>& f, double x0, double step,
                                   double tol = 1e-7) {
    double a = x0 - step, b = x0, c = x0 + step;
    double fa = f(a), fb = f(b), fc = f(c);
    for (int guard = 0; !(fb <= fa && fb <= fc) && guard < 120; ++guard) {
        if (fa < fc) {
            c = b;
            fc = fb;
            b = a;
            fb = fa;
            step *= 2.0;
            a = b - step;
            fa = f(a);
        } else {
            a = b;
            fa = fb;
            b = c;
            fb = fc;
            step *= 2.0;
            c = b + step;
            fc = f(c);
        }
    }
    return minimize_golden(f, a, c, tol);
}

struct RawFit {
    std::vector<double> xfree;
    double neg_f = 0.0;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
};

// Optimize the free parameters: BFGS with a Nelder-Mead fallback, then an
// optional profile polish that rescans tau with the coefficients
// re-maximized at each candidate. The polish guards against the narrow
// curved ridge the (beta, tau) surface develops when studies are precise.
inline RawFit optimize(const FitProblem& prob, std::vector<double> x0, const FitOptions& opt) {
    RawFit out;
    const std::size_t dim = prob.dim();
    ObjectiveFn f = [&prob](const std::vector<double>& x) { return prob.neg_loglik(x); };

    OptimOptions oo;
    oo.max_iter = opt.max_iter;
    oo.param_tol = opt.param_tol;
    oo.f_tol = opt.obj_tol;

    if (dim == 0) {
        out.xfree = x0;
        out.neg_f = f(x0);
        out.converged = true;
        return out;
    }
    if (dim == 1) {
        auto f1 = [&](double v) { return f({v}); };
        const double x = bracketed_golden_min(f1, x0[0], 0.5, opt.golden_tol);
        out.xfree = {x};
        out.neg_f = f1(x);
        out.converged = true;
        out.iterations = 1;
        return out;
    }

    OptimResult best = minimize_bfgs(f, x0, oo);
    if (!best.converged) {
        OptimResult nm = minimize_nelder_mead(f, best.x, 0.2);
        if (nm.f < best.f) {
            OptimResult again = minimize_bfgs(f, nm.x, oo);
            again.iterations += best.iterations + nm.iterations;
            if (again.f <= nm.f) {
                best = again;
            } else {
                best = nm;
                best.iterations = again.iterations;
            }
        }
    }

    if (opt.polish && !prob.tau2_fixed) {
        // The (beta, tau) surface develops a narrow curved ridge when studies
        // are precise, and a joint quasi-Newton run can stall on it. Probe the
        // tau profile (coefficients re-maximized) at a few guard points; only
        // when a probe beats the joint optimum is the full rescan paid for.
        const std::size_t nb = prob.n_free_beta();
        std::vector<double> warm_beta(best.x.begin(), best.x.begin() + static_cast<long>(nb));
        double inner_tol = 1e-4;
        auto profile_neg = [&](double s) {
            if (nb == 0) {
                std::vector<double> x{s};
                return f(x);
            }
            std::vector<double> x = warm_beta;
            ObjectiveFn inner = [&](const std::vector<double>& b) {
                std::vector<double> full = b;
                full.push_back(s);
                return f(full);
            };
            OptimResult r;
            if (nb == 1) {
                auto f1 = [&](double v) { return inner({v}); };
                r.x = {bracketed_golden_min(f1, x[0], 0.25, inner_tol)};
                r.f = f1(r.x[0]);
            } else {
                OptimOptions inner_opt = oo;
                inner_opt.max_iter = 200;
                r = minimize_bfgs(inner, x, inner_opt);
            }
            warm_beta = r.x;
            return r.f;
        };
        const double tau_cur = softplus(best.x[nb]);
        const double guards[4] = {1e-8, std::max(0.3 * tau_cur, 0.05),
                                  std::max(4.0 * tau_cur, 0.25), std::max(1.5, 3.0 * tau_cur)};
        double best_s = best.x[nb], best_pf = best.f;
        for (double tau : guards) {
            const double s = softplus_inv(tau);
            const double v = profile_neg(s);
            if (v < best_pf) {
                best_pf = v;
                best_s = s;
            }
        }
        if (best_pf < best.f - 1e-7) {
            auto prof1 = [&](double s) { return profile_neg(s); };
            const double s_opt = bracketed_golden_min(prof1, best_s, 0.35, 1e-5);
            inner_tol = 1e-7;
            const double pf = profile_neg(s_opt);
            if (pf < best.f - 1e-12) {
                std::vector<double> x = warm_beta;
                x.push_back(s_opt);
                OptimResult re = minimize_bfgs(f, x, oo);
                if (re.f <= pf) {
                    re.iterations += best.iterations;
                    best = re;
                } else {
                    best.x = x;
                    best.f = pf;
                    best.converged = true; // the profile line search met its tolerances
                }
            }
        }
    }

    out.xfree = best.x;
    out.neg_f = best.f;
    out.converged = best.converged;
    out.iterations = best.iterations;
    out.grad_norm = best.grad_norm;
    return out;
}

} // namespace detail

// Joint maximum likelihood over (beta, tau2) on the shared-node objective.
inline ModelFit fit_mle(const Dataset& ds, const NodeSet& nodes,
                        std::optional<FitStart> init = std::nullopt,
                        const FitOptions& opt = FitOptions()) {
    detail::FitProblem prob;
    prob.ds = &ds;
    prob.nodes = &nodes;
    prob.tau2_fixed = opt.tau2_fixed;
    prob.p = ds.p;

    const FitStart start = init ? *init : dl_start(ds);
    if (start.beta.size() != ds.p)
        throw std::invalid_argument("fit_mle: starting coefficient length mismatch");
    detail::RawFit raw = detail::optimize(prob, prob.pack(start.beta, start.tau2), opt);

    ModelFit fit;
    prob.unpack(raw.xfree, fit.beta_hat, fit.tau2_hat);
    if (fit.tau2_hat < 1e-10) fit.tau2_hat = 0.0;
    fit.loglik = -raw.neg_f;
    fit.converged = raw.converged && std::isfinite(fit.loglik);
    fit.iterations = raw.iterations;
    fit.gradient_norm = raw.grad_norm;
    fit.nodes_B = nodes.B;
    fit.seed = nodes.seed;
    fit.small_sample_warning = ds.records.size() < ds.p + 1;
    return fit;
}

// Constrained maximum likelihood with coefficient `ell` pinned.
inline ConstrainedFit fit_constrained(const Dataset& ds, const NodeSet& nodes, std::size_t ell,
                                      double value, std::optional<FitStart> init = std::nullopt,
                                      const FitOptions& opt = FitOptions()) {
    if (ell >= ds.p)
        throw std::invalid_argument("fit_constrained: coefficient index out of range");
    detail::FitProblem prob;
    prob.ds = &ds;
    prob.nodes = &nodes;
    prob.pinned = static_cast<std::ptrdiff_t>(ell);
    prob.pinned_value = value;
    prob.tau2_fixed = opt.tau2_fixed;
    prob.p = ds.p;

    FitStart start = init ? *init : dl_start(ds);
    if (start.beta.size() != ds.p)
        throw std::invalid_argument("fit_constrained: starting coefficient length mismatch");
    start.beta[ell] = value;
    detail::RawFit raw = detail::optimize(prob, prob.pack(start.beta, start.tau2), opt);

    ConstrainedFit fit;
    fit.pinned_index = ell;
    fit.pinned_value = value;
    prob.unpack(raw.xfree, fit.beta, fit.tau2_tilde);
    if (fit.tau2_tilde < 1e-10) fit.tau2_tilde = 0.0;
    fit.loglik = -raw.neg_f;
    fit.converged = raw.converged && std::isfinite(fit.loglik);
    fit.iterations = raw.iterations;
    if (!fit.converged && !std::isfinite(fit.loglik))
        throw std::runtime_error("fit_constrained: evaluation failed at pinned value " +
                                 std::to_string(value));
    return fit;
}

} // namespace metaglmm

#endif
