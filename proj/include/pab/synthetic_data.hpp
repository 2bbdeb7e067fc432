#ifndef PAB_SYNTHETIC_DATA_HPP_
#define PAB_SYNTHETIC_DATA_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pab/part_attention.hpp"
#include "pab/tensor.hpp"

namespace pab {

// The generator always produces this many body parts.
inline constexpr int kParts = 6;

struct PartStyle {
    double base[3] = {0.5, 0.5, 0.5};  // RGB in [0.25, 0.90]
    double stripe_amp = 0.0;           // [0.02, 0.15]
    double stripe_freq = 1.0;          // cycles across the part extent
    double stripe_phase = 0.0;
    int stripe_axis = 0;  // 0 = horizontal bands, 1 = vertical
};

// Deterministic appearance of one synthetic person: per-part color/texture
// plus mild body geometry variation.
struct IdentityAppearance {
    int identity_id = 0;
    std::array<PartStyle, kParts> palette;
    std::array<double, kParts> size_scale;  // [0.85, 1.15]
    double height_scale = 1.0;              // [0.92, 1.08]
    double width_scale = 1.0;
};

enum class OcclusionKind { none, rectangle, bottom_crop, inter_person };

struct OcclusionSpec {
    OcclusionKind kind = OcclusionKind::none;
    double coverage = 0.0;  // 0 iff kind == none
    uint64_t placement_seed = 0;
};

struct Sample {
    Tensor image;  // [1, 3, img_h, img_w], values in [0,1]
    int identity = 0;
    int camera_id = 0;
    ParsingLabel parsing_label;  // feature-map resolution
    OcclusionSpec occlusion;
};

struct DatasetSplits {
    std::vector<Sample> train;
    std::vector<Sample> query;
    std::vector<Sample> gallery;
};

struct DataConfig {
    int n_train_ids = 20;
    int n_eval_ids = 10;
    int samples_per_id = 8;
    double occlusion_rate = 0.8;
    int img_h = 64, img_w = 32;
    int label_h = 16, label_w = 8;
    uint64_t seed = 1;
};

// Half-open pixel rectangle [y0,y1) x [x0,x1).
struct IRect {
    int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
    bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
    bool empty() const { return y1 <= y0 || x1 <= x0; }
};

IdentityAppearance generate_identity(uint64_t global_seed, int identity_id);

// Painter order used by the renderer (arms, legs, torso, head); the part
// drawn last owns overlapping pixels.
const std::array<int, kParts>& paint_order();

// Placement of one part (1..kParts) on the image grid, pose jitter included.
// Pure function: the label-soundness tests re-rasterize from these rects.
IRect part_rect(const IdentityAppearance& app, uint64_t pose_seed, int part,
                int img_h, int img_w);

// Region blanked by a rectangle or bottom_crop occluder.
IRect occlusion_rect(const OcclusionSpec& occ, int img_h, int img_w);

// Distractor geometry for inter_person occlusion: the overlaid person's
// appearance and horizontal shift in pixels.
struct DistractorLayout {
    IdentityAppearance app;
    uint64_t pose_seed = 0;
    int shift_x = 0;
};
DistractorLayout inter_person_layout(const OcclusionSpec& occ, int img_h, int img_w);

Sample render_sample(const IdentityAppearance& app, uint64_t pose_seed,
                     const OcclusionSpec& occ, int camera_id, const DataConfig& cfg);

DatasetSplits make_splits(const DataConfig& cfg);

// Identity-balanced PK batches over `data`: each batch holds exactly n_ids
// distinct identities with n_per_id samples each (per-identity sampling wraps
// around after an in-place reshuffle). Returns index lists into `data`.
std::vector<std::vector<int>> identity_balanced_batches(const std::vector<Sample>& data,
                                                        int n_ids, int n_per_id,
                                                        uint64_t shuffle_seed);

// Stacks the indexed samples into one [n, 3, H, W] tensor.
Tensor batch_images(const std::vector<Sample>& data, const std::vector<int>& indices);

// Binary split files plus a JSON manifest with config, seeds and checksums.
void export_dataset(const DatasetSplits& splits, const DataConfig& cfg, const std::string& dir);
DatasetSplits import_dataset(const std::string& dir, DataConfig* cfg_out = nullptr);

}  // namespace pab

#endif  // PAB_SYNTHETIC_DATA_HPP_
