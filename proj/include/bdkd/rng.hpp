#ifndef BDKD_RNG_HPP
#define BDKD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bdkd/common.hpp"

namespace bdkd {

/// Deterministic random source. All randomness in the pipeline flows through
/// explicitly passed Rng handles; the variate mappings are implemented here
/// (not via std distributions) so sequences are stable across standard
/// libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform int in [0, n). Rejection sampling, unbiased.
    int uniform_int(int n) {
        require(n >= 1, "Rng::uniform_int: n must be >= 1");
        const std::uint64_t range = static_cast<std::uint64_t>(n);
        const std::uint64_t min = (-range) % range; // 2^64 mod range
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= min) return static_cast<int>(r % range);
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Derives an independent child stream; consumes one draw from this
    /// stream, so child creation order is part of the reproducibility
    /// contract.
    Rng child() { return Rng(splitmix(next_u64())); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[static_cast<std::size_t>(j)]);
        }
    }

    /// k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<int> sample_without_replacement(int n, int k) {
        require(k <= n, "sample_without_replacement: k exceeds population");
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            out.push_back(pool[static_cast<std::size_t>(i)]);
        }
        return out;
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace bdkd

#endif
