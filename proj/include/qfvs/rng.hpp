#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace qfvs {

// Deterministic sample stream built on std::mt19937_64, whose output sequence
// is fixed by the C++ standard. Distributions are implemented here rather than
// taken from <random> because the standard leaves those library-defined.
//
//   uniform()  53 high bits of one draw, scaled to [0, 1)
//   normal()   Box-Muller, both values of a pair are used
//   below(n)   rejection sampling, no modulo bias
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream; splitmix64 over (seed, stream).
    Rng fork(std::uint64_t stream) const;

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::iter_swap(first + (i - 1), first + j);
        }
    }

   private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace qfvs
