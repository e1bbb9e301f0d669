#ifndef METAGLMM_NN_BASELINE_HPP
#define METAGLMM_NN_BASELINE_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "metaglmm/interval.hpp"
#include "metaglmm/math.hpp"
#include "metaglmm/optim.hpp"

namespace metaglmm {

// Link-scale estimates with their within-study variances, the inputs of the
// conventional normal-normal analysis.
struct NNInput {
    std::vector<double> theta_hat;
    std::vector<double> sigma2;

    std::size_t size() const { return theta_hat.size(); }

    void validate() const {
        if (theta_hat.size() != sigma2.size())
            throw std::invalid_argument("NNInput: length mismatch");
        if (theta_hat.size() < 2)
            throw std::invalid_argument("NNInput: need at least 2 studies");
        for (double v : sigma2)
            if (!(v > 0.0))
                throw std::invalid_argument("NNInput: within-study variances must be positive");
    }
};

struct DLEstimate {
    double theta = 0.0;
    double tau2 = 0.0;
    double se = 0.0;
    double q_stat = 0.0;
};

// DerSimonian-Laird: moment estimate of tau2 from the fixed-effect
// heterogeneity statistic, then the inverse-variance weighted mean.
inline DLEstimate dl_estimate(const NNInput& in) {
    in.validate();
    const std::size_t K = in.size();
    double sw = 0.0, swt = 0.0, sw2 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double w = 1.0 / in.sigma2[k];
        sw += w;
        sw2 += w * w;
        swt += w * in.theta_hat[k];
    }
    const double fe = swt / sw;
    double q = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double d = in.theta_hat[k] - fe;
        q += d * d / in.sigma2[k];
    }
    const double c = sw - sw2 / sw;
    const double tau2 = std::max(0.0, (q - (static_cast<double>(K) - 1.0)) / c);

    double swr = 0.0, swrt = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double w = 1.0 / (in.sigma2[k] + tau2);
        swr += w;
        swrt += w * in.theta_hat[k];
    }
    DLEstimate out;
    out.theta = swrt / swr;
    out.tau2 = tau2;
    out.se = 1.0 / std::sqrt(swr);
    out.q_stat = q;
    return out;
}

struct WaldTest {
    double t = 0.0;
    double p = 1.0;
};

// Wald statistic at the DL tau2: sum of weighted deviations over the root of
// the total weight.
inline WaldTest wald_test(const NNInput& in, double theta0) {
    const DLEstimate dl = dl_estimate(in);
    double sw = 0.0, num = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const double w = 1.0 / (in.sigma2[k] + dl.tau2);
        sw += w;
        num += w * (in.theta_hat[k] - theta0);
    }
    WaldTest out;
    out.t = num / std::sqrt(sw);
    out.p = 2.0 * (1.0 - norm_cdf(std::abs(out.t)));
    return out;
}

inline double nn_loglik(const NNInput& in, double theta, double tau2) {
    double ll = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k)
        ll += norm_logpdf(in.theta_hat[k], theta, in.sigma2[k] + tau2);
    return ll;
}

// Profile maximizer of tau2 for pinned theta: coarse scan plus golden
// refinement on the tau scale, with the tau2 = 0 boundary checked explicitly.
inline double nn_profile_tau2(const NNInput& in, double theta) {
    double dmax = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k)
        dmax = std::max(dmax, std::abs(in.theta_hat[k] - theta));
    const double tau_hi = dmax + 1e-6;
    auto neg = [&](double tau) { return -nn_loglik(in, theta, tau * tau); };
    const int grid = 41;
    int best = 0;
    double best_f = neg(0.0);
    for (int i = 1; i < grid; ++i) {
        const double tau = tau_hi * i / (grid - 1.0);
        const double v = neg(tau);
        if (v < best_f) {
            best_f = v;
            best = i;
        }
    }
    const double lo = tau_hi * std::max(0, best - 1) / (grid - 1.0);
    const double hi = tau_hi * std::min(grid - 1, best + 1) / (grid - 1.0);
    const double tau = minimize_golden(neg, lo, hi, 1e-12);
    double tau2 = tau * tau;
    if (nn_loglik(in, theta, 0.0) >= nn_loglik(in, theta, tau2)) tau2 = 0.0;
    return tau2;
}

inline double nn_profile_loglik(const NNInput& in, double theta) {
    return nn_loglik(in, theta, nn_profile_tau2(in, theta));
}

struct NNFit {
    double theta = 0.0;
    double tau2 = 0.0;
    double loglik = 0.0;
};

inline NNFit nn_mle(const NNInput& in) {
    in.validate();
    const DLEstimate dl = dl_estimate(in);
    double span = 0.0;
    for (double t : in.theta_hat) span = std::max(span, std::abs(t - dl.theta));
    const double lo = dl.theta - span - 1.0;
    const double hi = dl.theta + span + 1.0;
    auto neg = [&](double th) { return -nn_profile_loglik(in, th); };
    const double theta = minimize_golden(neg, lo, hi, 1e-12);
    NNFit fit;
    fit.theta = theta;
    fit.tau2 = nn_profile_tau2(in, theta);
    fit.loglik = nn_loglik(in, theta, fit.tau2);
    return fit;
}

// Simplified Bartlett term of the normal-normal model.
inline double bartlett_C(const std::vector<double>& sigma2, double tau2_tilde) {
    if (sigma2.empty())
        throw std::invalid_argument("bartlett_C: empty variance vector");
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    bool any_positive = false;
    for (double v : sigma2) {
        const double t = v + tau2_tilde;
        if (!(t > 0.0))
            throw std::invalid_argument("bartlett_C: nonpositive total variance");
        any_positive = true;
        const double w = 1.0 / t;
        s1 += w;
        s2 += w * w;
        s3 += w * w * w;
    }
    (void)any_positive;
    return s3 / (s1 * s2);
}

// Profile-likelihood interval under the normal-normal model, optionally with
// the Bartlett correction T / (1 + 2C) where C is re-evaluated at the
// constrained tau2 of each candidate endpoint.
inline IntervalResult nn_pl_interval(const NNInput& in, double level, bool bartlett) {
    if (!(level > 0.5 && level < 1.0))
        throw std::invalid_argument("nn_pl_interval: level must lie in (0.5, 1)");
    const NNFit fit = nn_mle(in);
    const DLEstimate dl = dl_estimate(in);
    const double cutoff = chi2_quantile_1(level);

    IntervalResult res;
    res.coefficient = 0;
    res.estimate = fit.theta;
    res.method = bartlett ? IntervalMethod::PLSBC : IntervalMethod::PL;
    res.level = level;
    res.bartlett_C = bartlett_C(in.sigma2, fit.tau2);

    auto stat = [&](double theta) {
        const double tau2 = nn_profile_tau2(in, theta);
        const double t = std::max(0.0, -2.0 * (nn_loglik(in, theta, tau2) - fit.loglik));
        const double c = bartlett_C(in.sigma2, tau2);
        const double tc = bartlett ? t / (1.0 + 2.0 * c) : t;
        res.trace.push_back({theta, t, c, tc});
        return tc;
    };

    auto search = [&](int dir, double& bound, BoundStatus& status) {
        double step = 0.5 * dl.se;
        double prev = fit.theta;
        double cur = fit.theta;
        bool bracketed = false;
        for (int i = 0; i < 40; ++i) {
            prev = cur;
            cur = fit.theta + dir * step;
            if (stat(cur) > cutoff) {
                bracketed = true;
                break;
            }
            step *= 2.0;
        }
        if (!bracketed) {
            bound = cur;
            status = BoundStatus::MaxBracket;
            return;
        }
        double lo = prev, hi = cur; // stat(lo) <= cutoff < stat(hi)
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            const double s = stat(mid);
            if (std::abs(s - cutoff) < 1e-6) {
                lo = hi = mid;
                break;
            }
            if (s > cutoff)
                hi = mid;
            else
                lo = mid;
            if (std::abs(hi - lo) < 1e-10 * (1.0 + std::abs(lo))) break;
        }
        bound = 0.5 * (lo + hi);
        status = BoundStatus::Converged;
    };

    search(-1, res.lower, res.lower_status);
    search(+1, res.upper, res.upper_status);
    return res;
}

inline IntervalResult nn_plbc_interval(const NNInput& in, double level) {
    return nn_pl_interval(in, level, true);
}

struct LogOrBias {
    double bias = 0.0;       // E[log OR_a] - theta (conditional on finite cells when a = 0)
    bool clipped = false;    // true when infinite cells were excluded
    double finite_mass = 1.0;
};

// Exact expectation of the continuity-corrected log odds ratio by full
// enumeration over the (n0+1)(n1+1) outcome pairs, minus the true theta.
inline LogOrBias log_or_bias_oracle(int n0, int n1, double mu, double theta, double a) {
    if (n0 < 1 || n1 < 1 || n0 > 500 || n1 > 500)
        throw std::invalid_argument("log_or_bias_oracle: group sizes must lie in [1, 500]");
    if (a < 0.0 || a > 1.0)
        throw std::invalid_argument("log_or_bias_oracle: correction must lie in [0, 1]");
    const double p0 = 1.0 / (1.0 + std::exp(-mu));
    const double p1 = 1.0 / (1.0 + std::exp(-(mu + theta)));

    auto log_pmf = [](int n, int y, double p) {
        return std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0) +
               y * std::log(p) + (n - y) * std::log1p(-p);
    };
    std::vector<double> w0(static_cast<std::size_t>(n0) + 1), w1(static_cast<std::size_t>(n1) + 1);
    for (int y = 0; y <= n0; ++y) w0[static_cast<std::size_t>(y)] = std::exp(log_pmf(n0, y, p0));
    for (int y = 0; y <= n1; ++y) w1[static_cast<std::size_t>(y)] = std::exp(log_pmf(n1, y, p1));

    LogOrBias out;
    double total = 0.0, mass = 0.0;
    for (int y0 = 0; y0 <= n0; ++y0) {
        for (int y1 = 0; y1 <= n1; ++y1) {
            const double w = w0[static_cast<std::size_t>(y0)] * w1[static_cast<std::size_t>(y1)];
            if (a == 0.0 && (y0 == 0 || y0 == n0 || y1 == 0 || y1 == n1)) {
                out.clipped = true;
                continue;
            }
            const double lor = std::log((y1 + a) / (n1 - y1 + a)) - std::log((y0 + a) / (n0 - y0 + a));
            total += w * lor;
            mass += w;
        }
    }
    out.finite_mass = mass;
    out.bias = total / mass - theta;
    return out;
}

} // namespace metaglmm

#endif
