#include "bdkd/common.hpp"

#include <cstdlib>
#include <mutex>
#include <thread>

#include <openssl/evp.h>

extern "C" void openblas_set_num_threads(int);

namespace bdkd {

int thread_cap() {
    static const int cap = [] {
        if (const char* env = std::getenv("BDKD_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cap;
}

void init_numerics() {
    static std::once_flag flag;
    std::call_once(flag, [] { openblas_set_num_threads(1); });
}

std::uint64_t mix_seed_md5(std::uint64_t user_seed) {
    const std::string ascii = std::to_string(user_seed);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(ascii.data(), ascii.size(), digest, &len, EVP_md5(), nullptr);
    std::uint64_t out = 0;
    for (int i = 7; i >= 0; --i) out = (out << 8) | digest[i];
    return out;
}

} // namespace bdkd
