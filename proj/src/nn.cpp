#include "pab/nn.hpp"

#include <cmath>

namespace pab {

void gemm_nn(int m, int k, int p, const double* a, const double* b, double* y) {
    for (int i = 0; i < m; ++i) {
        double* yi = y + static_cast<size_t>(i) * p;
        const double* ai = a + static_cast<size_t>(i) * k;
        int kk = 0;
        for (; kk + 4 <= k; kk += 4) {
            const double a0 = ai[kk], a1 = ai[kk + 1], a2 = ai[kk + 2], a3 = ai[kk + 3];
            const double* b0 = b + static_cast<size_t>(kk) * p;
            const double* b1 = b0 + p;
            const double* b2 = b1 + p;
            const double* b3 = b2 + p;
            for (int j = 0; j < p; ++j)
                yi[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; kk < k; ++kk) {
            const double ak = ai[kk];
            const double* bk = b + static_cast<size_t>(kk) * p;
            for (int j = 0; j < p; ++j) yi[j] += ak * bk[j];
        }
    }
}

void gemm_tn(int m, int k, int p, const double* a, const double* b, double* y) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        const double* bi = b + static_cast<size_t>(i) * p;
        for (int kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            if (aik == 0.0) continue;
            double* yk = y + static_cast<size_t>(kk) * p;
            for (int j = 0; j < p; ++j) yk[j] += aik * bi[j];
        }
    }
}

void gemm_nt(int m, int k, int p, const double* a, const double* b, double* y) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * p;
        double* yi = y + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double* bk = b + static_cast<size_t>(kk) * p;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            int j = 0;
            for (; j + 4 <= p; j += 4) {
                s0 += ai[j] * bk[j];
                s1 += ai[j + 1] * bk[j + 1];
                s2 += ai[j + 2] * bk[j + 2];
                s3 += ai[j + 3] * bk[j + 3];
            }
            for (; j < p; ++j) s0 += ai[j] * bk[j];
            yi[kk] += (s0 + s1) + (s2 + s3);
        }
    }
}

namespace {

// x: one sample [c,h,w] -> col [c*k*k, ho*wo]
void im2col(const double* x, int c, int h, int w, int ksize, int stride, int pad,
            int ho, int wo, double* col) {
    for (int ic = 0; ic < c; ++ic) {
        for (int kh = 0; kh < ksize; ++kh) {
            for (int kw = 0; kw < ksize; ++kw) {
                double* row = col + ((static_cast<size_t>(ic) * ksize + kh) * ksize + kw) *
                                        (static_cast<size_t>(ho) * wo);
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride + kh - pad;
                    if (ih < 0 || ih >= h) {
                        for (int ow = 0; ow < wo; ++ow) row[oh * wo + ow] = 0.0;
                        continue;
                    }
                    const double* xr = x + (static_cast<size_t>(ic) * h + ih) * w;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride + kw - pad;
                        row[oh * wo + ow] = (iw >= 0 && iw < w) ? xr[iw] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of dcol back into dx, inverse access pattern of im2col.
void col2im(const double* col, int c, int h, int w, int ksize, int stride, int pad,
            int ho, int wo, double* dx) {
    for (int ic = 0; ic < c; ++ic) {
        for (int kh = 0; kh < ksize; ++kh) {
            for (int kw = 0; kw < ksize; ++kw) {
                const double* row = col + ((static_cast<size_t>(ic) * ksize + kh) * ksize + kw) *
                                              (static_cast<size_t>(ho) * wo);
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride + kh - pad;
                    if (ih < 0 || ih >= h) continue;
                    double* xr = dx + (static_cast<size_t>(ic) * h + ih) * w;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride + kw - pad;
                        if (iw >= 0 && iw < w) xr[iw] += row[oh * wo + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

Conv2d::Conv2d(int cin_, int cout_, int ksize_, int stride_)
    : cin(cin_), cout(cout_), ksize(ksize_), stride(stride_), pad(ksize_ / 2) {
    weight.resize(cout, cin * ksize * ksize, 1, 1);
    bias.resize(cout, 1, 1, 1);
}

void Conv2d::init_he(std::mt19937_64& rng) {
    const double stddev = std::sqrt(2.0 / (cin * ksize * ksize));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : weight.value.v) x = dist(rng);
    bias.value.zero();
}

Tensor Conv2d::forward(const Tensor& x, bool save_for_backward) {
    if (x.c != cin) throw ConfigError("Conv2d: input has " + std::to_string(x.c) +
                                      " channels, expected " + std::to_string(cin));
    const int ho = out_h(x.h), wo = out_w(x.w);
    const int kdim = cin * ksize * ksize;
    const int p = ho * wo;
    Tensor y(x.n, cout, ho, wo);
    const bool direct = (ksize == 1 && stride == 1);
    std::vector<double> col;
    if (!direct) col.resize(static_cast<size_t>(kdim) * p);
    for (int i = 0; i < x.n; ++i) {
        const double* colp = direct ? x.sample(i) : col.data();
        if (!direct) im2col(x.sample(i), cin, x.h, x.w, ksize, stride, pad, ho, wo, col.data());
        gemm_nn(cout, kdim, p, weight.value.v.data(), colp, y.sample(i));
        for (int oc = 0; oc < cout; ++oc) {
            const double b = bias.value.v[oc];
            double* yp = y.plane(i, oc);
            for (int j = 0; j < p; ++j) yp[j] += b;
        }
    }
    if (save_for_backward) saved_input = x;
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = saved_input;
    const int ho = dy.h, wo = dy.w;
    const int kdim = cin * ksize * ksize;
    const int p = ho * wo;
    Tensor dx(x.n, x.c, x.h, x.w);
    const bool direct = (ksize == 1 && stride == 1);
    std::vector<double> col, dcol;
    if (!direct) {
        col.resize(static_cast<size_t>(kdim) * p);
        dcol.resize(static_cast<size_t>(kdim) * p);
    }
    for (int i = 0; i < x.n; ++i) {
        // bias grad
        for (int oc = 0; oc < cout; ++oc) {
            const double* dyp = dy.plane(i, oc);
            double s = 0.0;
            for (int j = 0; j < p; ++j) s += dyp[j];
            bias.grad.v[oc] += s;
        }
        // weight grad: dW += dy_i * col_i^T
        const double* colp;
        if (direct) {
            colp = x.sample(i);
        } else {
            im2col(x.sample(i), cin, x.h, x.w, ksize, stride, pad, ho, wo, col.data());
            colp = col.data();
        }
        gemm_nt(cout, kdim, p, dy.sample(i), colp, weight.grad.v.data());
        // input grad: dcol = W^T * dy_i, then col2im
        if (direct) {
            gemm_tn(cout, kdim, p, weight.value.v.data(), dy.sample(i), dx.sample(i));
        } else {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            gemm_tn(cout, kdim, p, weight.value.v.data(), dy.sample(i), dcol.data());
            col2im(dcol.data(), cin, x.h, x.w, ksize, stride, pad, ho, wo, dx.sample(i));
        }
    }
    return dx;
}

BatchNorm2d::BatchNorm2d(int channels_) : channels(channels_) {
    gamma.resize(channels, 1, 1, 1);
    beta.resize(channels, 1, 1, 1);
    gamma.value.fill(1.0);
    running_mean = Tensor(channels, 1, 1, 1);
    running_var = Tensor(channels, 1, 1, 1);
    running_var.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train, bool save_for_backward) {
    if (x.c != channels) throw ConfigError("BatchNorm2d: channel mismatch");
    const int plane = x.h * x.w;
    const long long m = static_cast<long long>(x.n) * plane;
    const bool use_batch = train && x.n >= min_batch_for_stats;

    Tensor mean(channels, 1, 1, 1), invstd(channels, 1, 1, 1);
    if (use_batch) {
        for (int ic = 0; ic < channels; ++ic) {
            double s = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const double* xp = x.plane(i, ic);
                for (int j = 0; j < plane; ++j) s += xp[j];
            }
            const double mu = s / static_cast<double>(m);
            double sq = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const double* xp = x.plane(i, ic);
                for (int j = 0; j < plane; ++j) {
                    const double d = xp[j] - mu;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(m);
            mean.v[ic] = mu;
            invstd.v[ic] = 1.0 / std::sqrt(var + eps);
            // unbiased variance feeds the running estimate
            const double var_unbiased = (m > 1) ? sq / static_cast<double>(m - 1) : var;
            running_mean.v[ic] = (1.0 - momentum) * running_mean.v[ic] + momentum * mu;
            running_var.v[ic] = (1.0 - momentum) * running_var.v[ic] + momentum * var_unbiased;
        }
    } else {
        for (int ic = 0; ic < channels; ++ic) {
            mean.v[ic] = running_mean.v[ic];
            invstd.v[ic] = 1.0 / std::sqrt(running_var.v[ic] + eps);
        }
    }

    Tensor y(x.n, x.c, x.h, x.w);
    for (int i = 0; i < x.n; ++i) {
        for (int ic = 0; ic < channels; ++ic) {
            const double mu = mean.v[ic], is = invstd.v[ic];
            const double g = gamma.value.v[ic], b = beta.value.v[ic];
            const double* xp = x.plane(i, ic);
            double* yp = y.plane(i, ic);
            for (int j = 0; j < plane; ++j) yp[j] = g * (xp[j] - mu) * is + b;
        }
    }

    if (save_for_backward) {
        saved_input = x;
        saved_mean = mean;
        saved_invstd = invstd;
        saved_batch_stats = use_batch;
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    const Tensor& x = saved_input;
    const int plane = x.h * x.w;
    const double m = static_cast<double>(static_cast<long long>(x.n) * plane);
    Tensor dx(x.n, x.c, x.h, x.w);
    for (int ic = 0; ic < channels; ++ic) {
        const double mu = saved_mean.v[ic], is = saved_invstd.v[ic];
        const double g = gamma.value.v[ic];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < x.n; ++i) {
            const double* xp = x.plane(i, ic);
            const double* dp = dy.plane(i, ic);
            for (int j = 0; j < plane; ++j) {
                const double xhat = (xp[j] - mu) * is;
                sum_dy += dp[j];
                sum_dy_xhat += dp[j] * xhat;
            }
        }
        gamma.grad.v[ic] += sum_dy_xhat;
        beta.grad.v[ic] += sum_dy;
        if (saved_batch_stats) {
            const double k = g * is / m;
            for (int i = 0; i < x.n; ++i) {
                const double* xp = x.plane(i, ic);
                const double* dp = dy.plane(i, ic);
                double* dxp = dx.plane(i, ic);
                for (int j = 0; j < plane; ++j) {
                    const double xhat = (xp[j] - mu) * is;
                    dxp[j] = k * (m * dp[j] - sum_dy - xhat * sum_dy_xhat);
                }
            }
        } else {
            const double k = g * is;
            for (int i = 0; i < x.n; ++i) {
                const double* dp = dy.plane(i, ic);
                double* dxp = dx.plane(i, ic);
                for (int j = 0; j < plane; ++j) dxp[j] = k * dp[j];
            }
        }
    }
    return dx;
}

Tensor ReLU::forward(const Tensor& x, bool save_for_backward) {
    Tensor y(x.n, x.c, x.h, x.w);
    for (size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
    if (save_for_backward) saved_output = y;
    return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
    Tensor dx(dy.n, dy.c, dy.h, dy.w);
    for (size_t i = 0; i < dy.size(); ++i) dx.v[i] = saved_output.v[i] > 0.0 ? dy.v[i] : 0.0;
    return dx;
}

Linear::Linear(int in_dim_, int out_dim_) : in_dim(in_dim_), out_dim(out_dim_) {
    weight.resize(out_dim, in_dim, 1, 1);
    bias.resize(out_dim, 1, 1, 1);
}

void Linear::init_he(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / in_dim));
    for (double& x : weight.value.v) x = dist(rng);
    bias.value.zero();
}

Tensor Linear::forward(const Tensor& x, bool save_for_backward) {
    if (x.c != in_dim) throw ConfigError("Linear: dimension mismatch");
    Tensor y = Tensor::matrix(x.n, out_dim);
    for (int i = 0; i < x.n; ++i) {
        const double* xi = x.sample(i);
        double* yi = y.sample(i);
        for (int o = 0; o < out_dim; ++o) {
            const double* wr = weight.value.v.data() + static_cast<size_t>(o) * in_dim;
            double s = bias.value.v[o];
            for (int j = 0; j < in_dim; ++j) s += wr[j] * xi[j];
            yi[o] = s;
        }
    }
    if (save_for_backward) saved_input = x;
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    const Tensor& x = saved_input;
    Tensor dx = Tensor::matrix(x.n, in_dim);
    for (int i = 0; i < x.n; ++i) {
        const double* xi = x.sample(i);
        const double* di = dy.sample(i);
        double* dxi = dx.sample(i);
        for (int o = 0; o < out_dim; ++o) {
            const double d = di[o];
            if (d == 0.0) continue;
            double* wg = weight.grad.v.data() + static_cast<size_t>(o) * in_dim;
            const double* wr = weight.value.v.data() + static_cast<size_t>(o) * in_dim;
            for (int j = 0; j < in_dim; ++j) {
                wg[j] += d * xi[j];
                dxi[j] += d * wr[j];
            }
            bias.grad.v[o] += d;
        }
    }
    return dx;
}

Tensor channel_softmax(const Tensor& z) {
    Tensor y(z.n, z.c, z.h, z.w);
    const int plane = z.h * z.w;
    for (int i = 0; i < z.n; ++i) {
        for (int j = 0; j < plane; ++j) {
            double mx = z.plane(i, 0)[j];
            for (int ic = 1; ic < z.c; ++ic) mx = std::max(mx, z.plane(i, ic)[j]);
            double denom = 0.0;
            for (int ic = 0; ic < z.c; ++ic) denom += std::exp(z.plane(i, ic)[j] - mx);
            for (int ic = 0; ic < z.c; ++ic)
                y.plane(i, ic)[j] = std::exp(z.plane(i, ic)[j] - mx) / denom;
        }
    }
    return y;
}

Tensor channel_softmax_backward(const Tensor& y, const Tensor& dy) {
    Tensor dz(y.n, y.c, y.h, y.w);
    const int plane = y.h * y.w;
    for (int i = 0; i < y.n; ++i) {
        for (int j = 0; j < plane; ++j) {
            double dot = 0.0;
            for (int ic = 0; ic < y.c; ++ic) dot += dy.plane(i, ic)[j] * y.plane(i, ic)[j];
            for (int ic = 0; ic < y.c; ++ic)
                dz.plane(i, ic)[j] = y.plane(i, ic)[j] * (dy.plane(i, ic)[j] - dot);
        }
    }
    return dz;
}

void Adam::reset(const std::vector<Param*>& params) {
    m.clear();
    v.clear();
    for (const Param* p : params) {
        m.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w);
        v.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w);
    }
    step_count = 0;
}

void Adam::step(const std::vector<Param*>& params, double lr) {
    if (m.size() != params.size()) reset(params);
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.v[i] + weight_decay * p.value.v[i];
            m[pi].v[i] = beta1 * m[pi].v[i] + (1.0 - beta1) * g;
            v[pi].v[i] = beta2 * v[pi].v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[pi].v[i] / bc1;
            const double vhat = v[pi].v[i] / bc2;
            p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace pab
