#ifndef METAGLMM_OPTIM_HPP
#define METAGLMM_OPTIM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace metaglmm {

struct OptimOptions {
    int max_iter = 500;
    double param_tol = 1e-8;
    double f_tol = 1e-10;
    double grad_step = 1e-6;
};

struct OptimResult {
    std::vector<double> x;
    double f = 0.0;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
};

using ObjectiveFn = std::function<double(const std::vector<double>&)>;

namespace detail {

inline std::vector<double> num_gradient(const ObjectiveFn& f, const std::vector<double>& x,
                                        double step_scale) {
    const std::size_t n = x.size();
    std::vector<double> g(n);
    std::vector<double> xp = x;
    for (std::size_t j = 0; j < n; ++j) {
        const double h = step_scale * (1.0 + std::abs(x[j]));
        xp[j] = x[j] + h;
        const double fp = f(xp);
        xp[j] = x[j] - h;
        const double fm = f(xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace detail

// BFGS minimizer with central-difference gradients and a backtracking Armijo
// line search. Convergence requires both a small parameter step and a small
// objective step; a stall near a flat optimum with a tiny gradient also
// counts as converged.
inline OptimResult minimize_bfgs(const ObjectiveFn& f, std::vector<double> x,
                                 const OptimOptions& opt = OptimOptions()) {
    const std::size_t n = x.size();
    OptimResult res;
    if (n == 0) {
        res.x = x;
        res.f = f(x);
        res.converged = true;
        return res;
    }
    double fx = f(x);
    std::vector<double> g = detail::num_gradient(f, x, opt.grad_step);
    std::vector<double> H(n * n, 0.0); // inverse Hessian approximation
    for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;

    std::vector<double> d(n), xn(n), gn(n), s(n), y(n), Hy(n);
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < n; ++j) v += H[i * n + j] * g[j];
            d[i] = -v;
        }
        double gd = 0.0;
        for (std::size_t i = 0; i < n; ++i) gd += g[i] * d[i];
        if (gd >= 0.0) { // not a descent direction, reset to steepest descent
            for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
            gd = 0.0;
            for (std::size_t i = 0; i < n; ++i) gd -= g[i] * g[i];
            std::fill(H.begin(), H.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
        }

        double alpha = 1.0;
        double fn = fx;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + alpha * d[i];
            fn = f(xn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * alpha * gd) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            res.grad_norm = detail::inf_norm(g);
            res.converged = res.grad_norm < 1e-6 * (1.0 + std::abs(fx));
            break;
        }

        for (std::size_t i = 0; i < n; ++i) s[i] = xn[i] - x[i];
        gn = detail::num_gradient(f, xn, opt.grad_step);
        for (std::size_t i = 0; i < n; ++i) y[i] = gn[i] - g[i];
        const double step_norm = detail::inf_norm(s);
        const double f_change = std::abs(fn - fx);

        double sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) sy += s[i] * y[i];
        if (sy > 1e-12) {
            // H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            for (std::size_t i = 0; i < n; ++i) {
                double v = 0.0;
                for (std::size_t j = 0; j < n; ++j) v += H[i * n + j] * y[j];
                Hy[i] = v;
            }
            double yHy = 0.0;
            for (std::size_t i = 0; i < n; ++i) yHy += y[i] * Hy[i];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    H[i * n + j] += ((sy + yHy) * s[i] * s[j]) / (sy * sy) -
                                    (Hy[i] * s[j] + s[i] * Hy[j]) / sy;
        }

        x = xn;
        fx = fn;
        g = gn;
        if (step_norm < opt.param_tol && f_change < opt.f_tol) {
            res.converged = true;
            ++it;
            break;
        }
    }
    res.x = x;
    res.f = fx;
    res.iterations = it;
    if (res.grad_norm == 0.0) res.grad_norm = detail::inf_norm(g);
    return res;
}

// Nelder-Mead fallback for when the line search gives up.
inline OptimResult minimize_nelder_mead(const ObjectiveFn& f, std::vector<double> x0,
                                        double step = 0.25, int max_iter = 2000,
                                        double param_tol = 1e-9, double f_tol = 1e-11) {
    const std::size_t n = x0.size();
    OptimResult res;
    if (n == 0) {
        res.x = x0;
        res.f = f(x0);
        res.converged = true;
        return res;
    }
    std::vector<std::vector<double>> sx(n + 1, x0);
    std::vector<double> sf(n + 1);
    for (std::size_t i = 0; i < n; ++i) sx[i + 1][i] += step * (1.0 + std::abs(x0[i]));
    for (std::size_t i = 0; i <= n; ++i) sf[i] = f(sx[i]);

    std::vector<std::size_t> ord(n + 1);
    int it = 0;
    for (; it < max_iter; ++it) {
        for (std::size_t i = 0; i <= n; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return sf[a] < sf[b]; });
        const std::size_t best = ord[0], worst = ord[n], second = ord[n - 1];

        double diam = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            diam = std::max(diam, std::abs(sx[worst][j] - sx[best][j]));
        if (std::abs(sf[worst] - sf[best]) < f_tol && diam < param_tol) {
            res.converged = true;
            break;
        }

        std::vector<double> c(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < n; ++j) c[j] += sx[i][j];
        }
        for (std::size_t j = 0; j < n; ++j) c[j] /= static_cast<double>(n);

        std::vector<double> xr(n), xe(n), xc(n);
        for (std::size_t j = 0; j < n; ++j) xr[j] = c[j] + (c[j] - sx[worst][j]);
        const double fr = f(xr);
        if (fr < sf[best]) {
            for (std::size_t j = 0; j < n; ++j) xe[j] = c[j] + 2.0 * (c[j] - sx[worst][j]);
            const double fe = f(xe);
            if (fe < fr) {
                sx[worst] = xe;
                sf[worst] = fe;
            } else {
                sx[worst] = xr;
                sf[worst] = fr;
            }
        } else if (fr < sf[second]) {
            sx[worst] = xr;
            sf[worst] = fr;
        } else {
            for (std::size_t j = 0; j < n; ++j) xc[j] = c[j] + 0.5 * (sx[worst][j] - c[j]);
            const double fc = f(xc);
            if (fc < sf[worst]) {
                sx[worst] = xc;
                sf[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        sx[i][j] = sx[best][j] + 0.5 * (sx[i][j] - sx[best][j]);
                    sf[i] = f(sx[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (sf[i] < sf[best]) best = i;
    res.x = sx[best];
    res.f = sf[best];
    res.iterations = it;
    return res;
}

// Golden-section minimizer on [lo, hi].
inline double minimize_golden(const std::function<double(double)>& f, double lo, double hi,
                              double tol = 1e-10, int max_iter = 200) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < max_iter && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

} // namespace metaglmm

#endif
