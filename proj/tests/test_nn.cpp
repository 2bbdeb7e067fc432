#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fd_check.hpp"
#include "pab/nn.hpp"

using pab::Tensor;

namespace {

// ---- independent oracles, written before the checks that use them ----

// Triple-loop matrix products, no blocking or unrolling.
void naive_nn(int m, int k, int p, const double* a, const double* b, double* y) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j)
            for (int t = 0; t < k; ++t) y[i * p + j] += a[i * k + t] * b[t * p + j];
}
void naive_tn(int m, int k, int p, const double* a, const double* b, double* y) {
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < p; ++j)
            for (int t = 0; t < m; ++t) y[i * p + j] += a[t * k + i] * b[t * p + j];
}
void naive_nt(int m, int k, int p, const double* a, const double* b, double* y) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            for (int t = 0; t < p; ++t) y[i * k + j] += a[i * p + t] * b[j * p + t];
}

// Direct convolution: walks every output pixel and kernel tap explicitly.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& bias, int cout, int k,
                  int stride, int pad) {
    const int oh = (x.h + 2 * pad - k) / stride + 1;
    const int ow = (x.w + 2 * pad - k) / stride + 1;
    Tensor y(x.n, cout, oh, ow);
    for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < cout; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias.v[oc];
                    for (int ic = 0; ic < x.c; ++ic)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                                acc += x.at(in, ic, iy, ix) *
                                       w.v[(static_cast<size_t>(oc) * x.c + ic) * k * k +
                                           ky * k + kx];
                            }
                    y.at(in, oc, oy, ox) = acc;
                }
    return y;
}

// Per-channel normalization with explicitly computed batch moments.
Tensor naive_batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    Tensor y(x.n, x.c, x.h, x.w);
    const int plane = x.h * x.w;
    for (int c = 0; c < x.c; ++c) {
        double mean = 0.0, var = 0.0;
        for (int in = 0; in < x.n; ++in)
            for (int i = 0; i < plane; ++i) mean += x.plane(in, c)[i];
        mean /= x.n * plane;
        for (int in = 0; in < x.n; ++in)
            for (int i = 0; i < plane; ++i) {
                const double d = x.plane(in, c)[i] - mean;
                var += d * d;
            }
        var /= x.n * plane;
        const double istd = 1.0 / std::sqrt(var + eps);
        for (int in = 0; in < x.n; ++in)
            for (int i = 0; i < plane; ++i)
                y.plane(in, c)[i] = gamma.v[c] * (x.plane(in, c)[i] - mean) * istd + beta.v[c];
    }
    return y;
}

// One Adam update on a scalar, following the published algorithm with L2
// decay added to the gradient.
struct AdamOracle {
    double m = 0.0, v = 0.0;
    int t = 0;
    double apply(double theta, double grad, double lr, double wd) {
        ++t;
        const double g = grad + wd * theta;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        return theta - lr * mhat / (std::sqrt(vhat) + 1e-8);
    }
};

double weighted_sum(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y.v[i] * w.v[i];
    return s;
}

}  // namespace

TEST_CASE("gemm variants match the naive triple loop") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 4; ++trial) {
        const int m = 1 + static_cast<int>(rng() % 9);
        const int k = 1 + static_cast<int>(rng() % 9);
        const int p = 1 + static_cast<int>(rng() % 9);
        std::vector<double> a(m * k), b(k * p), bt(m * p), c(k * p);
        std::uniform_real_distribution<double> d(-1, 1);
        for (double& x : a) x = d(rng);
        for (double& x : b) x = d(rng);
        for (double& x : bt) x = d(rng);
        for (double& x : c) x = d(rng);

        std::vector<double> got(m * p, 0.5), want(m * p, 0.5);
        pab::gemm_nn(m, k, p, a.data(), b.data(), got.data());
        naive_nn(m, k, p, a.data(), b.data(), want.data());
        for (int i = 0; i < m * p; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

        std::vector<double> got_t(k * p, -0.25), want_t(k * p, -0.25);
        pab::gemm_tn(m, k, p, a.data(), bt.data(), got_t.data());
        naive_tn(m, k, p, a.data(), bt.data(), want_t.data());
        for (int i = 0; i < k * p; ++i)
            CHECK(got_t[i] == doctest::Approx(want_t[i]).epsilon(1e-12));

        std::vector<double> got_n(m * k, 1.0), want_n(m * k, 1.0);
        pab::gemm_nt(m, k, p, bt.data(), c.data(), got_n.data());
        naive_nt(m, k, p, bt.data(), c.data(), want_n.data());
        for (int i = 0; i < m * k; ++i)
            CHECK(got_n[i] == doctest::Approx(want_n[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv forward matches direct convolution") {
    std::mt19937_64 rng(11);
    struct Case {
        int cin, cout, k, stride, h, w;
    };
    for (const Case cs : {Case{3, 5, 3, 1, 6, 5}, Case{4, 2, 3, 2, 7, 6}, Case{5, 4, 1, 1, 4, 4},
                          Case{2, 3, 5, 1, 8, 7}}) {
        pab::Conv2d conv(cs.cin, cs.cout, cs.k, cs.stride);
        conv.init_he(rng);
        Tensor x(2, cs.cin, cs.h, cs.w);
        fd::fill_uniform(x, rng);
        Tensor got = conv.forward(x, false);
        Tensor want = naive_conv(x, conv.weight.value, conv.bias.value, cs.cout, cs.k, cs.stride,
                                 conv.pad);
        REQUIRE(got.same_shape(want));
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv backward agrees with finite differences") {
    std::mt19937_64 rng(13);
    for (const int stride : {1, 2}) {
        pab::Conv2d conv(3, 4, 3, stride);
        conv.init_he(rng);
        Tensor x(2, 3, 5, 4);
        fd::fill_uniform(x, rng);
        Tensor w(2, 4, conv.out_h(5), conv.out_w(4));
        fd::fill_uniform(w, rng);

        Tensor y = conv.forward(x, true);
        conv.weight.zero_grad();
        conv.bias.zero_grad();
        Tensor dx = conv.backward(w);

        auto loss = [&] { return weighted_sum(conv.forward(x, false), w); };
        fd::Result rx = fd::check_all(x.v, dx.v, loss, 1e-5);
        CHECK(rx.worst_rel < 1e-7);
        fd::Result rw = fd::check_all(conv.weight.value.v, conv.weight.grad.v, loss, 1e-5);
        CHECK(rw.worst_rel < 1e-7);
        fd::Result rb = fd::check_all(conv.bias.value.v, conv.bias.grad.v, loss, 1e-5);
        CHECK(rb.worst_rel < 1e-7);
    }
}

TEST_CASE("batchnorm batch path matches explicit moments and updates running stats") {
    std::mt19937_64 rng(17);
    pab::BatchNorm2d bn(3);
    fd::fill_uniform(bn.gamma.value, rng, 0.5, 1.5);
    fd::fill_uniform(bn.beta.value, rng, -0.5, 0.5);
    Tensor x(4, 3, 3, 2);
    fd::fill_uniform(x, rng);

    Tensor y = bn.forward(x, true, false);
    Tensor want = naive_batchnorm(x, bn.gamma.value, bn.beta.value, bn.eps);
    for (size_t i = 0; i < y.size(); ++i)
        CHECK(y.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));

    // Running stats blend toward the unbiased batch moments.
    const int count = x.n * x.h * x.w;
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int in = 0; in < x.n; ++in)
            for (int i = 0; i < x.h * x.w; ++i) mean += x.plane(in, c)[i];
        mean /= count;
        for (int in = 0; in < x.n; ++in)
            for (int i = 0; i < x.h * x.w; ++i) {
                const double d = x.plane(in, c)[i] - mean;
                var += d * d;
            }
        var /= count - 1;
        CHECK(bn.running_mean.v[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
        CHECK(bn.running_var.v[c] == doctest::Approx(0.9 * 1.0 + 0.1 * var).epsilon(1e-12));
    }

    // Eval mode and small train batches leave running stats untouched.
    const Tensor rm = bn.running_mean, rv = bn.running_var;
    Tensor small(2, 3, 3, 2);
    fd::fill_uniform(small, rng);
    bn.forward(small, true, false);
    bn.forward(x, false, false);
    for (int c = 0; c < 3; ++c) {
        CHECK(bn.running_mean.v[c] == rm.v[c]);
        CHECK(bn.running_var.v[c] == rv.v[c]);
    }
}

TEST_CASE("batchnorm small-batch training uses running statistics") {
    std::mt19937_64 rng(19);
    pab::BatchNorm2d bn(2);
    fd::fill_uniform(bn.gamma.value, rng, 0.5, 1.5);
    fd::fill_uniform(bn.beta.value, rng, -0.5, 0.5);
    fd::fill_uniform(bn.running_mean, rng, -0.2, 0.2);
    fd::fill_uniform(bn.running_var, rng, 0.5, 1.5);

    Tensor x(2, 2, 2, 2);  // below min_batch_for_stats
    fd::fill_uniform(x, rng);
    Tensor y = bn.forward(x, true, false);
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c)
            for (int i = 0; i < 4; ++i) {
                const double istd = 1.0 / std::sqrt(bn.running_var.v[c] + bn.eps);
                const double want =
                    bn.gamma.value.v[c] * (x.plane(in, c)[i] - bn.running_mean.v[c]) * istd +
                    bn.beta.value.v[c];
                CHECK(y.plane(in, c)[i] == doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("batchnorm backward agrees with finite differences on both paths") {
    std::mt19937_64 rng(23);
    for (const int n : {4, 2}) {  // 4 exercises batch stats, 2 the running-stat path
        pab::BatchNorm2d bn(3);
        fd::fill_uniform(bn.gamma.value, rng, 0.5, 1.5);
        fd::fill_uniform(bn.beta.value, rng, -0.5, 0.5);
        fd::fill_uniform(bn.running_mean, rng, -0.2, 0.2);
        fd::fill_uniform(bn.running_var, rng, 0.5, 1.5);
        const Tensor rm = bn.running_mean, rv = bn.running_var;

        Tensor x(n, 3, 3, 2);
        fd::fill_uniform(x, rng);
        Tensor w(n, 3, 3, 2);
        fd::fill_uniform(w, rng);

        bn.forward(x, true, true);
        bn.gamma.zero_grad();
        bn.beta.zero_grad();
        Tensor dx = bn.backward(w);

        auto loss = [&] {
            // Restore running stats so repeated forwards see identical state.
            bn.running_mean = rm;
            bn.running_var = rv;
            return weighted_sum(bn.forward(x, true, false), w);
        };
        fd::Result rx = fd::check_all(x.v, dx.v, loss, 1e-5);
        CHECK(rx.worst_rel < 1e-6);
        fd::Result rg = fd::check_all(bn.gamma.value.v, bn.gamma.grad.v, loss, 1e-5);
        CHECK(rg.worst_rel < 1e-6);
        fd::Result rb = fd::check_all(bn.beta.value.v, bn.beta.grad.v, loss, 1e-5);
        CHECK(rb.worst_rel < 1e-6);
    }
}

TEST_CASE("relu forward and backward") {
    pab::ReLU relu;
    Tensor x(1, 1, 1, 5);
    x.v = {-2.0, -0.5, 0.0, 0.5, 2.0};
    Tensor y = relu.forward(x, true);
    CHECK(y.v == std::vector<double>{0.0, 0.0, 0.0, 0.5, 2.0});
    Tensor dy(1, 1, 1, 5);
    dy.fill(1.0);
    Tensor dx = relu.backward(dy);
    CHECK(dx.v == std::vector<double>{0.0, 0.0, 0.0, 1.0, 1.0});
}

TEST_CASE("linear forward oracle and finite-difference backward") {
    std::mt19937_64 rng(29);
    pab::Linear lin(4, 3);
    lin.init_he(rng);
    Tensor x = Tensor::matrix(2, 4);
    fd::fill_uniform(x, rng);

    Tensor y = lin.forward(x, true);
    for (int i = 0; i < 2; ++i)
        for (int o = 0; o < 3; ++o) {
            double want = lin.bias.value.v[o];
            for (int j = 0; j < 4; ++j)
                want += x.v[i * 4 + j] * lin.weight.value.v[o * 4 + j];
            CHECK(y.v[i * 3 + o] == doctest::Approx(want).epsilon(1e-12));
        }

    Tensor w = Tensor::matrix(2, 3);
    fd::fill_uniform(w, rng);
    lin.weight.zero_grad();
    lin.bias.zero_grad();
    Tensor dx = lin.backward(w);
    auto loss = [&] { return weighted_sum(lin.forward(x, false), w); };
    CHECK(fd::check_all(x.v, dx.v, loss, 1e-5).worst_rel < 1e-8);
    CHECK(fd::check_all(lin.weight.value.v, lin.weight.grad.v, loss, 1e-5).worst_rel < 1e-8);
    CHECK(fd::check_all(lin.bias.value.v, lin.bias.grad.v, loss, 1e-5).worst_rel < 1e-8);
}

TEST_CASE("channel softmax normalizes and differentiates correctly") {
    std::mt19937_64 rng(31);
    Tensor z(2, 4, 3, 2);
    fd::fill_uniform(z, rng, -3, 3);
    Tensor y = pab::channel_softmax(z);

    for (int in = 0; in < z.n; ++in)
        for (int iy = 0; iy < z.h; ++iy)
            for (int ix = 0; ix < z.w; ++ix) {
                double s = 0.0, smax = -1e300;
                for (int c = 0; c < z.c; ++c) smax = std::max(smax, z.at(in, c, iy, ix));
                for (int c = 0; c < z.c; ++c) s += std::exp(z.at(in, c, iy, ix) - smax);
                for (int c = 0; c < z.c; ++c) {
                    const double want = std::exp(z.at(in, c, iy, ix) - smax) / s;
                    CHECK(y.at(in, c, iy, ix) == doctest::Approx(want).epsilon(1e-12));
                    CHECK(y.at(in, c, iy, ix) >= 0.0);
                }
                double total = 0.0;
                for (int c = 0; c < z.c; ++c) total += y.at(in, c, iy, ix);
                CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            }

    Tensor w(2, 4, 3, 2);
    fd::fill_uniform(w, rng);
    Tensor dz = pab::channel_softmax_backward(y, w);
    auto loss = [&] { return weighted_sum(pab::channel_softmax(z), w); };
    CHECK(fd::check_all(z.v, dz.v, loss, 1e-6).worst_rel < 1e-8);
}

TEST_CASE("adam follows the published update rule for two steps") {
    pab::Param p;
    p.resize(1, 1, 1, 2);
    p.value.v = {0.7, -1.2};
    pab::Adam adam;
    std::vector<pab::Param*> ps = {&p};
    adam.reset(ps);

    AdamOracle o0, o1;
    double want0 = p.value.v[0], want1 = p.value.v[1];

    p.grad.v = {0.3, -0.1};
    want0 = o0.apply(want0, 0.3, 1e-3, adam.weight_decay);
    want1 = o1.apply(want1, -0.1, 1e-3, adam.weight_decay);
    adam.step(ps, 1e-3);
    CHECK(p.value.v[0] == doctest::Approx(want0).epsilon(1e-14));
    CHECK(p.value.v[1] == doctest::Approx(want1).epsilon(1e-14));

    p.grad.v = {-0.05, 0.2};
    want0 = o0.apply(want0, -0.05, 5e-4, adam.weight_decay);
    want1 = o1.apply(want1, 0.2, 5e-4, adam.weight_decay);
    adam.step(ps, 5e-4);
    CHECK(p.value.v[0] == doctest::Approx(want0).epsilon(1e-14));
    CHECK(p.value.v[1] == doctest::Approx(want1).epsilon(1e-14));
    CHECK(adam.step_count == 2);
}
