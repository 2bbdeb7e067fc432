#ifndef PAB_TENSOR_HPP_
#define PAB_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "pab/common.hpp"

namespace pab {

// Dense NCHW tensor of doubles. Vectors and matrices use h = w = 1.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {}
    static Tensor matrix(int rows, int cols) { return Tensor(rows, cols, 1, 1); }

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    double& at(int in, int ic, int ih, int iw) {
        return v[((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw];
    }
    double at(int in, int ic, int ih, int iw) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw];
    }
    double* plane(int in, int ic) {
        return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
    }
    const double* plane(int in, int ic) const {
        return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
    }
    double* sample(int in) { return v.data() + static_cast<size_t>(in) * c * h * w; }
    const double* sample(int in) const {
        return v.data() + static_cast<size_t>(in) * c * h * w;
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(0.0); }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// FNV-1a over raw bytes; used for dataset and log checksums.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t hash = seed;
    for (size_t i = 0; i < len; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

inline uint64_t checksum(const Tensor& t, uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a(t.v.data(), t.v.size() * sizeof(double), seed);
}

}  // namespace pab

#endif  // PAB_TENSOR_HPP_
