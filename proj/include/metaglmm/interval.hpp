#ifndef METAGLMM_INTERVAL_HPP
#define METAGLMM_INTERVAL_HPP

#include <cstddef>
#include <vector>

namespace metaglmm {

enum class IntervalMethod { PL, PLSBC };

enum class BoundStatus { Converged, Unbounded, MaxBracket };

inline const char* bound_status_name(BoundStatus s) {
    switch (s) {
        case BoundStatus::Converged: return "Converged";
        case BoundStatus::Unbounded: return "Unbounded";
        case BoundStatus::MaxBracket: return "MaxBracket";
    }
    return "?";
}

// One evaluation along an endpoint search: pinned value, raw and corrected
// likelihood-ratio statistics, and the Bartlett term at that point.
struct ProfilePoint {
    double pinned = 0.0;
    double t_stat = 0.0;
    double bartlett = 0.0;
    double t_corrected = 0.0;
};

struct IntervalResult {
    std::size_t coefficient = 0;
    double estimate = 0.0;
    IntervalMethod method = IntervalMethod::PL;
    double level = 0.95;
    double lower = 0.0;
    double upper = 0.0;
    double bartlett_C = 0.0; // evaluated at the unconstrained tau2
    BoundStatus lower_status = BoundStatus::Converged;
    BoundStatus upper_status = BoundStatus::Converged;
    std::vector<ProfilePoint> trace;
};

} // namespace metaglmm

#endif
