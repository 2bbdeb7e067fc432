#ifndef PAB_MODEL_HPP_
#define PAB_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pab/focuser.hpp"
#include "pab/nn.hpp"
#include "pab/part_attention.hpp"

namespace pab {

struct ConvBNReLU {
    Conv2d conv;
    BatchNorm2d bn;
    ReLU relu;

    ConvBNReLU() = default;
    ConvBNReLU(int cin, int cout, int ksize, int stride)
        : conv(cin, cout, ksize, stride), bn(cout) {}

    Tensor forward(const Tensor& x, bool train, bool save) {
        return relu.forward(bn.forward(conv.forward(x, save), train, save), save);
    }
    Tensor backward(const Tensor& dy) { return conv.backward(bn.backward(relu.backward(dy))); }
    void gather(std::vector<Param*>& ps) {
        conv.gather(ps);
        bn.gather(ps);
    }
};

struct ModelConfig {
    int in_channels = 3;
    int parts = 6;                           // X
    int feat_channels = 256;                 // C: encoder output width
    std::vector<int> enc_channels = {16, 32, 64};  // stages 1..3; stage 4 ends at feat_channels
    int attn_mid = 128;                      // C_mid
    int embed_dim = 128;                     // D
    int gate_kernel = 3;
    int num_ids = 0;                         // 0 = no classifier heads
    double mu = 0.5;                         // visibility threshold
    double pool_eps = 1e-6;

    // ablation switches
    bool uniform_attention = false;          // part attention block removed
    bool gap_pooling = false;                // feature focuser removed
    bool single_conv_predictor = false;      // pixel-level predictor reduced to one conv
};

// Full pipeline: encoder -> part attention block -> fine-grained feature
// focuser -> ID heads. Branch 0 of every branch-indexed tensor is the
// foreground, branches 1..X the body parts.
struct PabModel {
    ModelConfig cfg;

    std::vector<ConvBNReLU> encoder;
    AttentionPredictor predictor;
    FocuserParams focuser;
    Linear head_foreground;
    Linear head_part;  // shared across parts

    struct ForwardState {
        Tensor feature_map;   // B   [n, C, H, W]
        Tensor attention;     // F   [n, X+1, H, W]
        Tensor masks;         // M   [n, X+1, H, W], branch 0 = foreground map
        Tensor k1;            //     [n, D, H, W]
        Tensor gated;         // Q   [n*(X+1), D, H, W]; empty under gap pooling
        Tensor mask_mass;     //     [n, X+1] raw attention mass per branch
        Tensor embeddings;    // E   [n, X+1, D]
        Tensor logits_foreground;  // [n, num_ids]
        Tensor logits_parts;       // [n*X, num_ids]
        std::vector<std::vector<uint8_t>> visibility;  // n x X
    };
    ForwardState state;

    explicit PabModel(const ModelConfig& cfg_);

    void init(uint64_t seed);
    ForwardState forward(const Tensor& images, bool train, bool save);

    // d_embeddings: [n, X+1, D]; d_logits_*: matching logits shapes (pass empty
    // tensors to skip); d_attention_ext: extra gradient on the attention maps
    // (the weighted part attention loss term), empty to skip.
    void backward(const Tensor& d_embeddings, const Tensor& d_logits_foreground,
                  const Tensor& d_logits_parts, const Tensor& d_attention_ext);

    std::vector<PartEmbeddings> embed_batch(const Tensor& images);

    void gather(std::vector<Param*>& ps);
    // Every tensor that defines the model state, in a stable order:
    // trainable params plus BN running statistics.
    void state_tensors(std::vector<std::pair<std::string, Tensor*>>& out);

    int feature_h(int img_h) const { return img_h / 4; }
    int feature_w(int img_w) const { return img_w / 4; }
};

// Eval-mode composition from a precomputed feature map, mirroring the
// focuser's standalone contract. Heads are optional.
std::vector<PartEmbeddings> focuser_forward(const Tensor& feature_map,
                                            AttentionPredictor& predictor,
                                            FocuserParams& focuser, double mu,
                                            Linear* head_foreground = nullptr,
                                            double pool_eps = 1e-6);

}  // namespace pab

#endif  // PAB_MODEL_HPP_
