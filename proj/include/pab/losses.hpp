#ifndef PAB_LOSSES_HPP_
#define PAB_LOSSES_HPP_

#include <vector>

#include "pab/focuser.hpp"
#include "pab/tensor.hpp"

namespace pab {

struct TripletConfig {
    double margin = 0.3;
    int part_count = 6;
    bool foreground_only = false;  // hinge on the whole-body embedding instead
};

// Mean per-part Euclidean distance. Training form (use_visibility=false)
// averages all X parts; the inference form averages only parts visible in
// both samples and falls back to the foreground distance when none are.
double part_distance(const PartEmbeddings& a, const PartEmbeddings& b, bool use_visibility);

// Batch-hard triplet over part distances. embeddings: [n, X+1, D] with
// branch 0 = foreground. Per anchor, the farthest positive and nearest
// negative are selected (ties to the lowest sample index); the hinge
// [d_ap - d_an + margin]_+ is averaged over anchors. If d_embeddings is
// non-null the analytic gradient is accumulated into it.
double part_triplet_loss(const Tensor& embeddings, const std::vector<int>& ids,
                         const TripletConfig& cfg, Tensor* d_embeddings = nullptr);
double part_triplet_loss(const std::vector<PartEmbeddings>& batch, const std::vector<int>& ids,
                         const TripletConfig& cfg);

// Label-smoothed softmax cross entropy over the foreground head plus the
// shared part head (visible part instances only), averaged over the heads
// that produced a value. logits_parts is [n*X, num_ids] and may be empty to
// score the foreground head alone. Gradients land in d_* when non-null;
// invisible part rows get zero gradient.
double id_loss(const Tensor& logits_foreground, const Tensor& logits_parts,
               const std::vector<std::vector<uint8_t>>& visibility,
               const std::vector<int>& labels, double smoothing = 0.1,
               Tensor* d_foreground = nullptr, Tensor* d_parts = nullptr);

inline double total_loss(double l_tri, double l_id, double l_part, double gamma_part) {
    return l_tri + l_id + gamma_part * l_part;
}

}  // namespace pab

#endif  // PAB_LOSSES_HPP_
