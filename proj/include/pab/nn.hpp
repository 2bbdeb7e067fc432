#ifndef PAB_NN_HPP_
#define PAB_NN_HPP_

#include <random>
#include <vector>

#include "pab/tensor.hpp"

namespace pab {

// Row-major GEMM variants with accumulate semantics. Kept free-standing so
// conv forward/backward share the same inner loops.
void gemm_nn(int m, int k, int p, const double* a, const double* b, double* y);  // y[m,p] += a[m,k]*b[k,p]
void gemm_tn(int m, int k, int p, const double* a, const double* b, double* y);  // y[k,p] += a[m,k]*b[m,p]
void gemm_nt(int m, int k, int p, const double* a, const double* b, double* y);  // y[m,k] += a[m,p]*b[k,p]

// Trainable tensor with its gradient accumulator.
struct Param {
    Tensor value;
    Tensor grad;

    void resize(int n, int c, int h, int w) {
        value = Tensor(n, c, h, w);
        grad = Tensor(n, c, h, w);
    }
    void zero_grad() { grad.zero(); }
};

struct Conv2d {
    int cin = 0, cout = 0, ksize = 3, stride = 1, pad = 1;
    Param weight;  // [cout, cin*k*k]
    Param bias;    // [cout]

    Tensor saved_input;

    Conv2d() = default;
    Conv2d(int cin_, int cout_, int ksize_, int stride_ = 1);

    void init_he(std::mt19937_64& rng);
    int out_h(int in_h) const { return (in_h + 2 * pad - ksize) / stride + 1; }
    int out_w(int in_w) const { return (in_w + 2 * pad - ksize) / stride + 1; }

    Tensor forward(const Tensor& x, bool save_for_backward);
    // Accumulates weight/bias grads, returns grad wrt input.
    Tensor backward(const Tensor& dy);

    void gather(std::vector<Param*>& ps) {
        ps.push_back(&weight);
        ps.push_back(&bias);
    }
};

// Channel-wise batch normalization. Training mode uses batch statistics when
// the batch holds at least `min_batch_for_stats` samples, otherwise it falls
// back to the running averages (and leaves them untouched).
struct BatchNorm2d {
    int channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    int min_batch_for_stats = 4;

    Param gamma, beta;
    Tensor running_mean, running_var;

    Tensor saved_input;
    Tensor saved_mean, saved_invstd;
    bool saved_batch_stats = false;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels_);

    Tensor forward(const Tensor& x, bool train, bool save_for_backward);
    Tensor backward(const Tensor& dy);

    void gather(std::vector<Param*>& ps) {
        ps.push_back(&gamma);
        ps.push_back(&beta);
    }
};

struct ReLU {
    Tensor saved_output;
    Tensor forward(const Tensor& x, bool save_for_backward);
    Tensor backward(const Tensor& dy) const;
};

// Fully connected head: x is [n, in_dim], output [n, out_dim].
struct Linear {
    int in_dim = 0, out_dim = 0;
    Param weight;  // [out_dim, in_dim]
    Param bias;    // [out_dim]

    Tensor saved_input;

    Linear() = default;
    Linear(int in_dim_, int out_dim_);

    void init_he(std::mt19937_64& rng);
    Tensor forward(const Tensor& x, bool save_for_backward);
    Tensor backward(const Tensor& dy);

    void gather(std::vector<Param*>& ps) {
        ps.push_back(&weight);
        ps.push_back(&bias);
    }
};

// Softmax across the channel dimension, independently per pixel.
Tensor channel_softmax(const Tensor& z);
// dz given softmax output y and upstream dy.
Tensor channel_softmax_backward(const Tensor& y, const Tensor& dy);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Adam with L2 weight decay folded into the gradient (torch-style).
struct Adam {
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
    long long step_count = 0;

    std::vector<Tensor> m, v;

    void reset(const std::vector<Param*>& params);
    void step(const std::vector<Param*>& params, double lr);
};

}  // namespace pab

#endif  // PAB_NN_HPP_
