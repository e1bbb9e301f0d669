#ifndef METAGLMM_QMC_HPP
#define METAGLMM_QMC_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaglmm/data.hpp"
#include "metaglmm/family.hpp"
#include "metaglmm/math.hpp"

namespace metaglmm {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
} // namespace detail

// Low-discrepancy points in (0,1) with their standard-normal images. One
// NodeSet is generated per fit and shared by every study and every objective
// evaluation of that fit, so the optimizer sees a deterministic surface.
struct NodeSet {
    std::vector<double> u;
    std::vector<double> z;
    int B = 0;
    std::uint64_t seed = 0;
};

// One-dimensional Sobol sequence (Gray-code order, first raw point 1/2) with
// a midpoint shift of half the 1/B stratum width, so every emitted point is
// a stratum midpoint and none can touch 0 or 1. The final point is placed at
// the midpoint of the one stratum the raw sequence leaves empty; at a
// power-of-two B the set is then the exact centered lattice, whose
// reflection symmetry cancels the leading integration error of the peaked
// likelihood integrands. Scrambling is a rotation modulo one by a whole
// number of strata keyed on `seed` (0 = unscrambled): it reorders and
// rotates the sequence without disturbing how evenly the strata are covered.
inline NodeSet sobol_nodes(int B, std::uint64_t seed = 0) {
    if (B < 2)
        throw std::invalid_argument("sobol_nodes: need at least 2 nodes, got " + std::to_string(B));
    const double rotation =
        (seed == 0) ? 0.0
                    : static_cast<double>(detail::splitmix64(seed) % static_cast<std::uint64_t>(B)) /
                          static_cast<double>(B);
    NodeSet ns;
    ns.B = B;
    ns.seed = seed;
    ns.u.resize(static_cast<std::size_t>(B));
    ns.z.resize(static_cast<std::size_t>(B));
    const double shift = 0.5 / static_cast<double>(B) + rotation;
    std::uint64_t state = 0;
    for (int i = 0; i < B; ++i) {
        double u;
        if (i + 1 < B) {
            // index of the lowest zero bit of i
            unsigned c = 0;
            for (std::uint64_t j = static_cast<std::uint64_t>(i); j & 1ULL; j >>= 1) ++c;
            state ^= (1ULL << (63 - c));
            u = static_cast<double>(state >> 11) * 0x1p-53 + shift;
        } else {
            u = shift; // midpoint of the stratum at the origin
        }
        u -= std::floor(u);
        u = std::min(std::max(u, 0x1p-53), 1.0 - 0x1p-53);
        ns.u[static_cast<std::size_t>(i)] = u;
        ns.z[static_cast<std::size_t>(i)] = norm_ppf(u);
    }
    return ns;
}

namespace detail {

// Node exponent n * (ybar*eta - b(eta)) / a(phi) on the natural-parameter
// scale, written out per family. The gamma log link enters through
// eta = -e^{-theta}, for which ybar*eta - b(eta) = -ybar*e^{-theta} - theta.
inline void marginal_exponents(const StudyRecord& rec, const FamilySpec& family, double xb,
                               double tau, std::span<const double> z, std::vector<double>& out) {
    const std::size_t B = z.size();
    out.resize(B);
    const double n = rec.n;
    const double ybar = rec.ybar;
    switch (family.kind) {
        case FamilyKind::Binomial:
            for (std::size_t b = 0; b < B; ++b) {
                const double th = xb + tau * z[b];
                out[b] = n * (ybar * th - softplus(th));
            }
            break;
        case FamilyKind::Poisson:
            for (std::size_t b = 0; b < B; ++b) {
                const double th = xb + tau * z[b];
                out[b] = n * (ybar * th - std::exp(th));
            }
            break;
        case FamilyKind::Gamma: {
            const double phi = rec.phi_hat.value();
            for (std::size_t b = 0; b < B; ++b) {
                const double th = xb + tau * z[b];
                out[b] = n * (-ybar * std::exp(-th) - th) / phi;
            }
            break;
        }
        case FamilyKind::Normal: {
            const double phi = rec.phi_hat.value();
            for (std::size_t b = 0; b < B; ++b) {
                const double th = xb + tau * z[b];
                out[b] = n * (ybar * th - 0.5 * th * th) / phi;
            }
            break;
        }
    }
}

} // namespace detail

// Marginal log-likelihood of one aggregate record, up to its parameter-free
// normalizing constant: log of the node average of exp{n(ybar*eta_b -
// b(eta_b))/a(phi)} with eta_b evaluated at v_b = sqrt(tau2) * z_b.
// Log-sum-exp keeps the result finite whenever any node exponent is finite.
inline double marginal_loglik_study(const StudyRecord& rec, const FamilySpec& family,
                                    std::span<const double> beta, double tau2,
                                    const NodeSet& nodes) {
    if (!(tau2 >= 0.0))
        throw std::invalid_argument("marginal_loglik_study: tau2 must be nonnegative");
    if (beta.size() != rec.x.size())
        throw std::invalid_argument("marginal_loglik_study: coefficient length mismatch");
    double xb = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) xb += rec.x[j] * beta[j];
    const double tau = std::sqrt(tau2);

    thread_local std::vector<double> expo;
    detail::marginal_exponents(rec, family, xb, tau, nodes.z, expo);
    const double value = log_mean_exp(expo);
    if (!std::isfinite(value)) {
        std::string msg = "marginal_loglik_study: no finite node exponent for record '" +
                          rec.record_id + "' at beta=(";
        for (std::size_t j = 0; j < beta.size(); ++j)
            msg += (j ? "," : "") + std::to_string(beta[j]);
        msg += "), tau2=" + std::to_string(tau2);
        throw std::runtime_error(msg);
    }
    return value;
}

} // namespace metaglmm

#endif
