#ifndef PAB_FOCUSER_HPP_
#define PAB_FOCUSER_HPP_

#include <cstdint>
#include <vector>

#include "pab/nn.hpp"
#include "pab/tensor.hpp"

namespace pab {

// Per-sample embedding bundle produced by the fine-grained feature focuser.
struct PartEmbeddings {
    std::vector<double> foreground;           // D
    std::vector<std::vector<double>> parts;   // X vectors of size D
    std::vector<uint8_t> visibility;          // X, 1 = visible
    std::vector<double> identity_logits;      // training only; may be empty
};

// Collapse the part channels into a single foreground attention map:
// F_f(p) = sum_{x>=1} F_x(p) = 1 - F_0(p) on the softmax simplex.
// attention: [n, parts+1, H, W] -> [n, 1, H, W].
Tensor foreground_map(const Tensor& attention);

// Broadcast-multiply a single-channel mask over all channels of a feature
// grid: out(c,p) = feat(c,p) * mask(p). Both single-sample tensors.
Tensor apply_attention(const Tensor& feat, const Tensor& mask);

// Attention-weighted average pooling with an epsilon guard for empty masks:
// f = sum_p mask(p) * feat(:,p) / max(sum_p mask(p), eps).
std::vector<double> pool_parts(const Tensor& feat_single, const Tensor& mask_single,
                               double eps = 1e-6);

// Paired feature/gate convolutions: Q = conv_f(P) * sigmoid(conv_g(P)).
// Branches are batched along the sample dimension, so one forward/backward
// pair covers the foreground plus every part branch.
struct GatedConv {
    int dim = 0;
    int ksize = 3;

    Conv2d feature_conv;
    Conv2d gate_conv;

    Tensor saved_feature;  // conv_f output
    Tensor saved_gate;     // sigmoid(conv_g output)

    GatedConv() = default;
    GatedConv(int dim_, int ksize_ = 3);

    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& masked_features, bool save_for_backward);
    Tensor backward(const Tensor& dq);
    void gather(std::vector<Param*>& ps);
};

// Parameters of the fine-grained feature focuser: the 1x1 whole-body embedding
// convolution plus the shared gated convolution.
struct FocuserParams {
    int in_channels = 0;
    int embed_dim = 0;

    Conv2d embed_conv;  // 1x1, C -> D
    GatedConv gate;

    FocuserParams() = default;
    FocuserParams(int in_channels_, int embed_dim_, int gate_kernel = 3);

    void init(std::mt19937_64& rng);
    void gather(std::vector<Param*>& ps);
};

}  // namespace pab

#endif  // PAB_FOCUSER_HPP_
