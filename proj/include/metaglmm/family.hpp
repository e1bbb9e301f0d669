#ifndef METAGLMM_FAMILY_HPP
#define METAGLMM_FAMILY_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include "metaglmm/math.hpp"

namespace metaglmm {

enum class FamilyKind { Binomial, Poisson, Gamma, Normal };
enum class LinkKind { Logit, Log, Identity, NegativeInverse };

inline const char* family_name(FamilyKind k) {
    switch (k) {
        case FamilyKind::Binomial: return "binomial";
        case FamilyKind::Poisson: return "poisson";
        case FamilyKind::Gamma: return "gamma";
        case FamilyKind::Normal: return "normal";
    }
    return "?";
}

inline const char* link_name(LinkKind l) {
    switch (l) {
        case LinkKind::Logit: return "logit";
        case LinkKind::Log: return "log";
        case LinkKind::Identity: return "identity";
        case LinkKind::NegativeInverse: return "negative-inverse";
    }
    return "?";
}

// Outcome family with its mean-model link. The gamma family uses the log
// link for the linear predictor while its natural parameter stays -1/mu;
// the other families are canonical, so linear predictor and natural
// parameter coincide.
struct FamilySpec {
    FamilyKind kind = FamilyKind::Normal;
    LinkKind link = LinkKind::Identity;

    static FamilySpec binomial() { return {FamilyKind::Binomial, LinkKind::Logit}; }
    static FamilySpec poisson() { return {FamilyKind::Poisson, LinkKind::Log}; }
    static FamilySpec gamma() { return {FamilyKind::Gamma, LinkKind::Log}; }
    static FamilySpec normal() { return {FamilyKind::Normal, LinkKind::Identity}; }

    void validate() const {
        const bool ok = (kind == FamilyKind::Binomial && link == LinkKind::Logit) ||
                        (kind == FamilyKind::Poisson && link == LinkKind::Log) ||
                        (kind == FamilyKind::Gamma && link == LinkKind::Log) ||
                        (kind == FamilyKind::Normal && link == LinkKind::Identity);
        if (!ok)
            throw std::invalid_argument(std::string("FamilySpec: link '") + link_name(link) +
                                        "' is not supported for family '" + family_name(kind) + "'");
    }
};

inline FamilySpec family_from_name(const std::string& s) {
    if (s == "binomial") return FamilySpec::binomial();
    if (s == "poisson") return FamilySpec::poisson();
    if (s == "gamma") return FamilySpec::gamma();
    if (s == "normal") return FamilySpec::normal();
    throw std::invalid_argument("unknown family '" + s + "'");
}

namespace detail {
[[noreturn]] inline void bad_natural_param(const FamilySpec& spec, double eta) {
    throw std::invalid_argument(std::string("natural parameter ") + std::to_string(eta) +
                                " outside the admissible domain of family '" +
                                family_name(spec.kind) + "'");
}
} // namespace detail

// Per-trial cumulant b(eta) on the natural-parameter scale, scaled by the
// exposure (replication count or person-time). Aggregate likelihoods pass
// exposure 1 and apply their own n_k / t_k factor.
inline double cumulant(const FamilySpec& spec, double eta, double exposure = 1.0) {
    if (!std::isfinite(eta)) detail::bad_natural_param(spec, eta);
    switch (spec.kind) {
        case FamilyKind::Binomial:
            return exposure * softplus(eta); // log(1 + e^eta)
        case FamilyKind::Poisson:
            return exposure * std::exp(eta);
        case FamilyKind::Gamma:
            if (eta >= 0.0) detail::bad_natural_param(spec, eta);
            return exposure * -std::log(-eta);
        case FamilyKind::Normal:
            return exposure * 0.5 * eta * eta;
    }
    detail::bad_natural_param(spec, eta);
}

// b'(eta): the conditional mean.
inline double cumulant_d1(const FamilySpec& spec, double eta) {
    switch (spec.kind) {
        case FamilyKind::Binomial:
            return 1.0 / (1.0 + std::exp(-eta));
        case FamilyKind::Poisson:
            return std::exp(eta);
        case FamilyKind::Gamma:
            if (eta >= 0.0) detail::bad_natural_param(spec, eta);
            return -1.0 / eta;
        case FamilyKind::Normal:
            return eta;
    }
    detail::bad_natural_param(spec, eta);
}

// b''(eta): the conditional variance function, strictly positive on the domain.
inline double cumulant_d2(const FamilySpec& spec, double eta) {
    switch (spec.kind) {
        case FamilyKind::Binomial: {
            const double mu = 1.0 / (1.0 + std::exp(-eta));
            return mu * (1.0 - mu);
        }
        case FamilyKind::Poisson:
            return std::exp(eta);
        case FamilyKind::Gamma:
            if (eta >= 0.0) detail::bad_natural_param(spec, eta);
            return 1.0 / (eta * eta);
        case FamilyKind::Normal:
            return 1.0;
    }
    detail::bad_natural_param(spec, eta);
}

// Mean from the linear predictor, mu = g^{-1}(theta).
inline double link_mean(const FamilySpec& spec, double theta) {
    switch (spec.link) {
        case LinkKind::Logit: return 1.0 / (1.0 + std::exp(-theta));
        case LinkKind::Log: return std::exp(theta);
        case LinkKind::Identity: return theta;
        case LinkKind::NegativeInverse: return -1.0 / theta;
    }
    throw std::logic_error("link_mean: unreachable");
}

// Linear predictor from the mean, theta = g(mu). Boundary means are rejected
// so callers can decide on continuity handling.
inline double inverse_link(const FamilySpec& spec, double mu) {
    switch (spec.kind) {
        case FamilyKind::Binomial:
            if (!(mu > 0.0 && mu < 1.0))
                throw std::domain_error("inverse_link: binomial mean must lie strictly in (0,1), got " +
                                        std::to_string(mu));
            return std::log(mu / (1.0 - mu));
        case FamilyKind::Poisson:
        case FamilyKind::Gamma:
            if (!(mu > 0.0))
                throw std::domain_error(std::string("inverse_link: ") + family_name(spec.kind) +
                                        " mean must be positive, got " + std::to_string(mu));
            return std::log(mu);
        case FamilyKind::Normal:
            return mu;
    }
    throw std::logic_error("inverse_link: unreachable");
}

// Natural parameter from the linear-predictor scale. Identity for the
// canonical families; the gamma log link maps theta = log(mu) to -e^{-theta}.
inline double natural_param_from_theta(const FamilySpec& spec, double theta) {
    if (!std::isfinite(theta))
        throw std::invalid_argument("natural_param_from_theta: non-finite linear predictor");
    if (spec.kind == FamilyKind::Gamma)
        return -std::exp(-theta);
    return theta;
}

} // namespace metaglmm

#endif
