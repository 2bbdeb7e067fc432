#ifndef PAB_EVAL_HPP_
#define PAB_EVAL_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pab/focuser.hpp"
#include "pab/part_attention.hpp"
#include "pab/tensor.hpp"

namespace pab {

struct DistanceMatrix {
    int n_query = 0, n_gallery = 0;
    std::vector<double> values;  // row-major, n_query x n_gallery
    std::vector<int> query_ids, gallery_ids;
    std::vector<int> query_cams, gallery_cams;

    double at(int i, int j) const { return values[static_cast<size_t>(i) * n_gallery + j]; }
    double& at(int i, int j) { return values[static_cast<size_t>(i) * n_gallery + j]; }
};

struct EvalReport {
    std::map<int, double> rank_k;  // k -> accuracy
    double mean_ap = 0.0;
    int queries_evaluated = 0;
    int queries_skipped = 0;  // no valid same-id cross-camera match
    std::vector<double> part_visibility_rate;
    double attention_accuracy = -1.0;  // -1 when labels were unavailable
};

// Entry (i,j) = part_distance(query_i, gallery_j, use_visibility=true).
DistanceMatrix distance_matrix(const std::vector<PartEmbeddings>& queries,
                               const std::vector<PartEmbeddings>& gallery,
                               const std::vector<int>& query_ids,
                               const std::vector<int>& gallery_ids,
                               const std::vector<int>& query_cams,
                               const std::vector<int>& gallery_cams);

// CMC Rank-k and mAP under the standard protocol: gallery entries sharing
// both id and camera with the query are excluded; remaining ties in distance
// are broken by gallery index; queries without any valid match are skipped
// and counted.
EvalReport cmc_map(const DistanceMatrix& dm, const std::vector<int>& ks = {1, 5, 10});

// Average precision by direct pair counting (no sort); the test oracle for
// cmc_map's per-query AP. `relevant` flags ground-truth matches among an
// already-filtered candidate list.
double brute_force_ap(const std::vector<double>& distances,
                      const std::vector<uint8_t>& relevant);

// Fraction of pixels whose argmax attention channel (ties to the lowest
// channel index) equals the parsing label.
double attention_pixel_accuracy(const Tensor& attention_single, const ParsingLabel& label);

// Flat JSON document, metrics rounded to 4 decimal places.
std::string report_to_json(const EvalReport& report);

}  // namespace pab

#endif  // PAB_EVAL_HPP_
