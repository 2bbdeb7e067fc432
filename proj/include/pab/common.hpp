#ifndef PAB_COMMON_HPP_
#define PAB_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pab {

// Misconfigured shapes, bad hyperparameters, malformed config files.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inputs that violate a data contract (label out of range, id unknown, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64; used to derive independent seeds from (seed, stream-id) pairs.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t seed_combine(uint64_t a, uint64_t b) {
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ull));
}

inline uint64_t seed_combine(uint64_t a, uint64_t b, uint64_t c) {
    return seed_combine(seed_combine(a, b), c);
}

inline uint64_t seed_combine(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    return seed_combine(seed_combine(a, b, c), d);
}

}  // namespace pab

#endif  // PAB_COMMON_HPP_
