#ifndef METAGLMM_INFERENCE_HPP
#define METAGLMM_INFERENCE_HPP

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "metaglmm/fit.hpp"
#include "metaglmm/interval.hpp"
#include "metaglmm/math.hpp"
#include "metaglmm/variances.hpp"

namespace metaglmm {

// Corrected likelihood-ratio statistic T / (1 + 2C).
inline double corrected_lr(double t_stat, double c) {
    if (t_stat < 0.0)
        throw std::invalid_argument("corrected_lr: negative statistic");
    if (!(c > 0.0))
        throw std::invalid_argument("corrected_lr: Bartlett term must be positive");
    return t_stat / (1.0 + 2.0 * c);
}

// Profile likelihood-ratio statistic for coefficient `ell` pinned at `value`.
// Small negative values from optimizer slack are clamped to zero.
inline double profile_lr(const Dataset& ds, const NodeSet& nodes, const ModelFit& fit,
                         std::size_t ell, double value,
                         std::optional<FitStart> init = std::nullopt,
                         const FitOptions& opt = FitOptions()) {
    if (!fit.converged)
        throw std::invalid_argument("profile_lr: unconstrained fit did not converge");
    FitStart start;
    if (init) {
        start = *init;
    } else {
        start.beta = fit.beta_hat;
        start.tau2 = std::max(fit.tau2_hat, 1e-6);
    }
    const ConstrainedFit cf = fit_constrained(ds, nodes, ell, value, start, opt);
    const double t = -2.0 * (cf.loglik - fit.loglik);
    return (t < 0.0) ? 0.0 : t;
}

// Wald standard error of one coefficient from the numerical beta-Hessian at
// the fit (tau2 held fixed); used only to scale the endpoint bracket steps.
inline double wald_se(const Dataset& ds, const NodeSet& nodes, const ModelFit& fit,
                      std::size_t ell) {
    const std::size_t p = ds.p;
    std::vector<double> beta = fit.beta_hat;
    auto ll = [&](const std::vector<double>& b) { return total_loglik(ds, b, fit.tau2_hat, nodes); };
    std::vector<double> h(p);
    for (std::size_t j = 0; j < p; ++j) h[j] = 1e-4 * (1.0 + std::abs(beta[j]));
    std::vector<double> neg_hess(p * p, 0.0);
    const double f0 = ll(beta);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i; j < p; ++j) {
            double v;
            std::vector<double> b = beta;
            if (i == j) {
                b[i] = beta[i] + h[i];
                const double fp = ll(b);
                b[i] = beta[i] - h[i];
                const double fm = ll(b);
                v = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
            } else {
                b[i] = beta[i] + h[i];
                b[j] = beta[j] + h[j];
                const double fpp = ll(b);
                b[j] = beta[j] - h[j];
                const double fpm = ll(b);
                b[i] = beta[i] - h[i];
                const double fmm = ll(b);
                b[j] = beta[j] + h[j];
                const double fmp = ll(b);
                v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            }
            neg_hess[i * p + j] = neg_hess[j * p + i] = -v;
        }
    }
    try {
        std::vector<double> e(p, 0.0);
        e[ell] = 1.0;
        const std::vector<double> col = solve_spd(neg_hess, e, p);
        if (col[ell] > 0.0) return std::sqrt(col[ell]);
    } catch (const std::exception&) {
        // fall through to the crude scale below
    }
    return 0.5 * (1.0 + std::abs(fit.beta_hat[ell]));
}

// Shared constrained-fit cache for endpoint searches; PL and PLSBC sweeps
// revisit the same pinned values.
struct ProfileCache {
    std::map<double, ConstrainedFit> fits;
};

namespace detail {

inline const ConstrainedFit& cached_constrained(const Dataset& ds, const NodeSet& nodes,
                                                const ModelFit& fit, std::size_t ell, double value,
                                                ProfileCache& cache, const FitOptions& opt) {
    auto it = cache.fits.find(value);
    if (it != cache.fits.end()) return it->second;
    FitStart start;
    start.beta = fit.beta_hat;
    start.tau2 = std::max(fit.tau2_hat, 1e-6);
    FitOptions local = opt;
    if (!cache.fits.empty()) {
        // Warm-start from the nearest evaluated neighbour; a warm chain walks
        // the profile ridge in small steps, so the expensive tau rescan is
        // reserved for the cold first point of each search.
        auto lo = cache.fits.lower_bound(value);
        if (lo == cache.fits.end())
            --lo;
        else if (lo != cache.fits.begin()) {
            auto prev = std::prev(lo);
            if (std::abs(prev->first - value) < std::abs(lo->first - value)) lo = prev;
        }
        start.beta = lo->second.beta;
        start.tau2 = std::max(lo->second.tau2_tilde, 1e-6);
        start.beta[ell] = value;
        local.polish = false;
        local.golden_tol = 3e-6;
    }
    ConstrainedFit cf = fit_constrained(ds, nodes, ell, value, start, local);
    return cache.fits.emplace(value, std::move(cf)).first->second;
}

} // namespace detail

// Profile-likelihood confidence interval for one coefficient, uncorrected
// (PL) or with the simplified Bartlett correction (PLSBC). Endpoints are
// bracketed outward from the estimate in doubling steps of half a Wald SE,
// then bisected until the statistic sits within 1e-4 of the cutoff. The
// Bartlett term is re-evaluated at the constrained tau2 of every candidate.
inline IntervalResult confidence_interval(const Dataset& ds, const NodeSet& nodes,
                                          const ModelFit& fit, std::size_t ell, double level,
                                          IntervalMethod method,
                                          ProfileCache* shared_cache = nullptr,
                                          const FitOptions& opt = FitOptions()) {
    if (!(level > 0.5 && level < 1.0))
        throw std::invalid_argument("confidence_interval: level must lie in (0.5, 1)");
    if (!fit.converged)
        throw std::invalid_argument("confidence_interval: fit did not converge");
    const double cutoff = chi2_quantile_1(level);
    const std::vector<double> sigma2 = within_study_variances(ds);

    ProfileCache local;
    ProfileCache& cache = shared_cache ? *shared_cache : local;

    IntervalResult res;
    res.coefficient = ell;
    res.estimate = fit.beta_hat[ell];
    res.method = method;
    res.level = level;
    res.bartlett_C = bartlett_C(sigma2, fit.tau2_hat);

    auto stat = [&](double pinned) {
        double t, c;
        try {
            const ConstrainedFit& cf =
                detail::cached_constrained(ds, nodes, fit, ell, pinned, cache, opt);
            t = std::max(0.0, -2.0 * (cf.loglik - fit.loglik));
            c = bartlett_C(sigma2, cf.tau2_tilde);
        } catch (const std::exception&) {
            // treat an unevaluable pinned value as beyond the cutoff
            t = std::numeric_limits<double>::infinity();
            c = bartlett_C(sigma2, fit.tau2_hat);
        }
        const double tc = (method == IntervalMethod::PLSBC) ? corrected_lr(t, c) : t;
        res.trace.push_back({pinned, t, c, tc});
        return tc;
    };

    const double se = wald_se(ds, nodes, fit, ell);
    auto search = [&](int dir, double& bound, BoundStatus& status) {
        double offset = 0.5 * se;
        double in = res.estimate, s_in = 0.0; // T(beta_hat) = 0 by construction
        double out = res.estimate, s_out = 0.0;
        bool bracketed = false;
        for (int i = 0; i < 40; ++i) {
            out = res.estimate + dir * offset;
            s_out = stat(out);
            if (s_out > cutoff) {
                bracketed = true;
                break;
            }
            in = out;
            s_in = s_out;
            offset *= 2.0;
        }
        if (!bracketed) {
            bound = out;
            status = BoundStatus::MaxBracket;
            return;
        }
        // False position with a bisection guard on the bracket
        // stat(in) <= cutoff < stat(out).
        double mid = 0.5 * (in + out);
        for (int i = 0; i < 100; ++i) {
            const double w = out - in;
            double cand = in + (cutoff - s_in) * w / (s_out - s_in);
            const double margin = 0.05 * std::abs(w);
            if (!std::isfinite(cand) || std::abs(cand - in) < margin ||
                std::abs(cand - out) < margin)
                cand = 0.5 * (in + out);
            mid = cand;
            const double s = stat(mid);
            if (std::abs(s - cutoff) < 1e-4) break;
            if (s > cutoff) {
                out = mid;
                s_out = s;
            } else {
                in = mid;
                s_in = s;
            }
            if (std::abs(out - in) < 1e-11 * (1.0 + std::abs(in))) break;
        }
        bound = mid;
        status = BoundStatus::Converged;
    };

    search(-1, res.lower, res.lower_status);
    search(+1, res.upper, res.upper_status);
    return res;
}

} // namespace metaglmm

#endif
