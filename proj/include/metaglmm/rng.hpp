#ifndef METAGLMM_RNG_HPP
#define METAGLMM_RNG_HPP

#include <cmath>
#include <cstdint>

#include "metaglmm/math.hpp"
#include "metaglmm/qmc.hpp"

namespace metaglmm {

// Counter-based generator: the k-th draw of stream (seed, stream) is a hash
// of (seed, stream, k), so substreams are independent and a parallel run
// replays exactly the same numbers as a serial one.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(detail::splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)))) {}

    std::uint64_t next_u64() {
        return detail::splitmix64(key_ + 0xBF58476D1CE4E5B9ULL * ++counter_);
    }

    // uniform on (0,1), both endpoints excluded
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal(double mean = 0.0, double sd = 1.0) {
        return mean + sd * norm_ppf(uniform());
    }

    long binomial(long n, double p) {
        long y = 0;
        for (long i = 0; i < n; ++i)
            if (uniform() < p) ++y;
        return y;
    }

    // Knuth products in chunks so the running product never underflows.
    long poisson(double lambda) {
        long total = 0;
        while (lambda > 0.0) {
            const double chunk = std::min(lambda, 60.0);
            lambda -= chunk;
            const double limit = std::exp(-chunk);
            double prod = uniform();
            long y = 0;
            while (prod >= limit) {
                prod *= uniform();
                ++y;
            }
            total += y;
        }
        return total;
    }

    // Marsaglia-Tsang, with the shape boost for shape < 1.
    double gamma(double shape, double scale) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace metaglmm

#endif
