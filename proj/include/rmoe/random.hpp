#ifndef RMOE_RANDOM_HPP
#define RMOE_RANDOM_HPP

// Seeded random streams. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; distributions come from Boost.Random so that the
// drawn values do not depend on the standard library implementation.

#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstdint>
#include <random>

namespace rmoe {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of stream `stream` under base seed `seed`. Replicate r of a study
/// seeded with s uses stream_seed(s, r), so any replicate can be re-run alone.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return boost::random::uniform_01<double>()(engine_); }

    double normal() { return boost::random::normal_distribution<double>(0.0, 1.0)(engine_); }

    long poisson(double mean) {
        if (!(mean > 0.0)) return 0;
        return boost::random::poisson_distribution<long, double>(mean)(engine_);
    }

    /// Uniform integer in [lo, hi].
    long integer(long lo, long hi) { return boost::random::uniform_int_distribution<long>(lo, hi)(engine_); }

    /// Index drawn from a probability vector (entries summing to 1).
    template <class Vec>
    int categorical(const Vec& probs) {
        const double u = uniform();
        double acc = 0.0;
        const int last = static_cast<int>(probs.size()) - 1;
        for (int k = 0; k < last; ++k) {
            acc += probs[k];
            if (u < acc) return k;
        }
        return last;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace rmoe

#endif
