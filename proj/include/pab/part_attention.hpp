#ifndef PAB_PART_ATTENTION_HPP_
#define PAB_PART_ATTENTION_HPP_

#include <cstdint>
#include <vector>

#include "pab/nn.hpp"
#include "pab/tensor.hpp"

namespace pab {

// Pixel-level body part labels on the feature-map grid: 0 = background,
// x in {1..parts} = body part x.
struct ParsingLabel {
    int h = 0, w = 0;
    std::vector<uint8_t> v;

    ParsingLabel() = default;
    ParsingLabel(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}
    uint8_t& at(int ih, int iw) { return v[static_cast<size_t>(ih) * w + iw]; }
    uint8_t at(int ih, int iw) const { return v[static_cast<size_t>(ih) * w + iw]; }
};

// Two-stage pixel-level attention predictor:
//   F1 = ReLU(BN(conv3x3(B))),  F = softmax(ReLU(BN(conv3x3(F1))))
// yielding `parts` part maps plus one background map that sum to 1 per pixel.
// The single-stage variant (one conv straight to parts+1 channels) exists for
// the predictor ablation.
struct AttentionPredictor {
    int in_channels = 0;
    int mid_channels = 0;
    int parts = 0;
    bool single_stage = false;

    Conv2d conv1;
    BatchNorm2d bn1;
    ReLU relu1;
    Conv2d conv2;
    BatchNorm2d bn2;
    ReLU relu2;

    Tensor saved_softmax;

    AttentionPredictor() = default;
    AttentionPredictor(int in_channels_, int mid_channels_, int parts_,
                       bool single_stage_ = false);

    void init(std::mt19937_64& rng);

    // B: [n, in_channels, H, W] -> attention maps [n, parts+1, H, W].
    Tensor forward(const Tensor& feature_map, bool train, bool save_for_backward);

    // d_attention is the gradient wrt the softmax output; returns grad wrt B.
    Tensor backward(const Tensor& d_attention);

    void gather(std::vector<Param*>& ps);
};

// Label-smoothed pixel-wise cross entropy between predicted attention maps and
// the parsing label, averaged over pixels (and samples for the batched form).
// Logs are clamped at log(1e-12). If d_attention is non-null it receives
// d(loss)/d(attention maps).
double part_attention_loss(const Tensor& attention, const std::vector<ParsingLabel>& labels,
                           double theta, Tensor* d_attention = nullptr);
double part_attention_loss(const Tensor& attention_single, const ParsingLabel& label,
                           double theta, Tensor* d_attention = nullptr);

// V_x = 1 iff max over pixels of part map x exceeds mu, x in {1..parts}.
// The background channel gets no score.
std::vector<uint8_t> visibility_scores(const Tensor& attention_single, double mu);

}  // namespace pab

#endif  // PAB_PART_ATTENTION_HPP_
