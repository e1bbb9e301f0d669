#ifndef METAGLMM_VARIANCES_HPP
#define METAGLMM_VARIANCES_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaglmm/data.hpp"
#include "metaglmm/family.hpp"
#include "metaglmm/nn_baseline.hpp"

namespace metaglmm {

// When the 0.5 continuity correction is applied to boundary counts.
enum class CcPolicy { OnZero, Always };

namespace detail {

inline double binomial_cc(double y, double n, CcPolicy policy) {
    if (policy == CcPolicy::Always) return 0.5;
    return (y <= 0.0 || y >= n) ? 0.5 : 0.0;
}

} // namespace detail

// Plug-in variance of the link-scale estimate for one record. Corrections
// touch only these normal-model quantities, never the GLMM likelihood.
inline double within_study_variance(const StudyRecord& rec, const FamilySpec& family,
                                    CcPolicy policy = CcPolicy::OnZero) {
    switch (family.kind) {
        case FamilyKind::Binomial: {
            const double y = rec.n * rec.ybar;
            const double a = detail::binomial_cc(y, rec.n, policy);
            return 1.0 / (y + a) + 1.0 / (rec.n - y + a);
        }
        case FamilyKind::Poisson: {
            const double events = rec.n * rec.ybar;
            const double a = (policy == CcPolicy::Always || events <= 0.0) ? 0.5 : 0.0;
            return 1.0 / (events + a);
        }
        case FamilyKind::Gamma: {
            if (!rec.s2 || !(rec.ybar > 0.0))
                throw std::invalid_argument("within_study_variance: gamma record '" + rec.record_id +
                                            "' needs ybar > 0 and s2");
            return *rec.s2 / (rec.n * rec.ybar * rec.ybar);
        }
        case FamilyKind::Normal:
            if (!rec.s2)
                throw std::invalid_argument("within_study_variance: normal record '" + rec.record_id +
                                            "' carries no variance");
            return *rec.s2;
    }
    throw std::logic_error("within_study_variance: unreachable");
}

inline std::vector<double> within_study_variances(const Dataset& ds,
                                                  CcPolicy policy = CcPolicy::OnZero) {
    std::vector<double> out;
    out.reserve(ds.records.size());
    for (const StudyRecord& r : ds.records) {
        const double v = within_study_variance(r, ds.family, policy);
        if (!(v > 0.0))
            throw std::invalid_argument("within_study_variances: record '" + r.record_id +
                                        "' has unresolvable zero variance");
        out.push_back(v);
    }
    return out;
}

// Link-scale point estimate of one record, with the same correction policy
// as the variances.
inline double link_scale_estimate(const StudyRecord& rec, const FamilySpec& family,
                                  CcPolicy policy = CcPolicy::OnZero) {
    switch (family.kind) {
        case FamilyKind::Binomial: {
            const double y = rec.n * rec.ybar;
            const double a = detail::binomial_cc(y, rec.n, policy);
            return std::log((y + a) / (rec.n - y + a));
        }
        case FamilyKind::Poisson: {
            const double events = rec.n * rec.ybar;
            const double a = (policy == CcPolicy::Always || events <= 0.0) ? 0.5 : 0.0;
            return std::log((events + a) / rec.n);
        }
        case FamilyKind::Gamma:
            return inverse_link(family, rec.ybar);
        case FamilyKind::Normal:
            return rec.ybar;
    }
    throw std::logic_error("link_scale_estimate: unreachable");
}

// Per-record normal-normal input for an intercept-only dataset.
inline NNInput nn_record_input(const Dataset& ds, CcPolicy policy = CcPolicy::OnZero) {
    NNInput in;
    for (const StudyRecord& r : ds.records) {
        in.theta_hat.push_back(link_scale_estimate(r, ds.family, policy));
        in.sigma2.push_back(within_study_variance(r, ds.family, policy));
    }
    return in;
}

// Per-study treatment contrasts for a two-arm dataset (x = (1, z)): the
// link-scale arm difference with summed arm variances. A zero cell anywhere
// in a binomial study corrects all four of that study's cells.
inline NNInput nn_contrast_input(const Dataset& ds, CcPolicy policy = CcPolicy::OnZero) {
    const Dataset arranged = expand_two_arm(ds);
    NNInput in;
    for (std::size_t k = 0; k + 1 < arranged.records.size(); k += 2) {
        const StudyRecord& c = arranged.records[k];
        const StudyRecord& t = arranged.records[k + 1];
        CcPolicy study_policy = policy;
        if (arranged.family.kind == FamilyKind::Binomial && policy == CcPolicy::OnZero) {
            const double yc = c.n * c.ybar, yt = t.n * t.ybar;
            const bool zero_cell = yc <= 0.0 || yc >= c.n || yt <= 0.0 || yt >= t.n;
            if (zero_cell) study_policy = CcPolicy::Always;
        }
        in.theta_hat.push_back(link_scale_estimate(t, arranged.family, study_policy) -
                               link_scale_estimate(c, arranged.family, study_policy));
        in.sigma2.push_back(within_study_variance(t, arranged.family, study_policy) +
                            within_study_variance(c, arranged.family, study_policy));
    }
    return in;
}

} // namespace metaglmm

#endif
