#ifndef BDKD_COMMON_HPP
#define BDKD_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bdkd {

/// Thrown when an operation's documented precondition or invariant is violated.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

/// Worker-thread cap for per-example parallel sections. Reads BDKD_THREADS
/// once; falls back to the hardware concurrency.
int thread_cap();

/// Pins the BLAS backend to one thread. Call before any model math; keeps
/// results independent of BDKD_THREADS and bitwise stable across runs.
void init_numerics();

/// first 8 bytes of MD5(decimal ASCII of seed), little-endian.
std::uint64_t mix_seed_md5(std::uint64_t user_seed);

} // namespace bdkd

#endif
