#ifndef PAB_ENGINE_HPP_
#define PAB_ENGINE_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pab/eval.hpp"
#include "pab/model.hpp"
#include "pab/synthetic_data.hpp"

namespace pab {

struct TrainConfig {
    int epochs = 120;
    double base_lr = 3.5e-4;
    double warmup_start_lr = 3.5e-5;
    int warmup_epochs = 10;
    int decay_epoch_1 = 40;
    int decay_epoch_2 = 70;
    double decay_lr_1 = 3.5e-5;
    double decay_lr_2 = 3.5e-6;
    double margin = 0.3;
    double gamma_part = 0.35;
    double mu = 0.5;
    double theta = 0.1;
    int n_ids = 8;
    int n_per_id = 4;
    double random_erasing_prob = 0.5;
    uint64_t global_seed = 1;
    int eval_every = 10;

    int parts = 6;
    int feat_channels = 256;
    std::vector<int> enc_channels = {16, 32, 64};
    int attn_mid = 64;
    int embed_dim = 48;
    int gate_kernel = 3;

    // full | no_part_attention | no_focuser | no_pixel_predictor | plain_triplet
    std::string variant = "full";
};

// Flat JSON with a subset of TrainConfig fields; unknown keys are errors.
TrainConfig parse_train_config(const std::string& json_text);
std::string train_config_json(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

DataConfig parse_data_config(const std::string& json_text);
DataConfig load_data_config(const std::string& path);

// Piecewise schedule: linear warmup over the first warmup_epochs epochs
// (reaching base_lr on the last warmup epoch), then base_lr, then the two
// decay plateaus.
double lr_schedule(int epoch, const TrainConfig& cfg);

// In-place: with probability prob replaces one random rectangle (area
// fraction in [0.02, 0.4], aspect in [0.3, 3.3]) with per-pixel uniform
// noise. image is a single sample [1, c, h, w]. Labels are left alone.
void random_erasing(Tensor& image, double prob, std::mt19937_64& rng);

ModelConfig model_config_from(const TrainConfig& cfg, int num_ids);

// Maps the distinct identities of a sample list to contiguous class indices
// (sorted by identity for determinism).
std::vector<int> class_index_map(const std::vector<Sample>& data, int* num_ids_out);

struct TrainResult {
    EvalReport final_eval;
    std::vector<std::string> log_lines;  // one JSON object per line
    int epochs_run = 0;
    std::string checkpoint_path;  // empty when out_dir was empty
};

// Runs the full loop: identity-balanced batches, erasing, forward/backward,
// Adam with lr_schedule, periodic evaluation. Deterministic for a fixed
// config. out_dir receives metrics.ndjson and checkpoint.bin when non-empty.
// resume_path continues a checkpointed run bit-exactly; stop_after > 0 halts
// after that epoch (for resume tests), leaving the checkpoint mid-run.
TrainResult train(const TrainConfig& cfg, const DatasetSplits& data,
                  const std::string& out_dir = "", const std::string& resume_path = "",
                  int stop_after = 0);

// Chunked inference over query/gallery plus attention accuracy against the
// ground-truth parsing labels.
EvalReport evaluate(PabModel& model, const DatasetSplits& data);

void save_checkpoint(const std::string& path, PabModel& model, const Adam& adam,
                     int epoch, const std::string& config_json, const std::mt19937_64& rng);
// Returns the epoch counter; restores model params, optimizer and RNG state.
// The stored config snapshot must match config_json exactly.
int load_checkpoint(const std::string& path, PabModel& model, Adam& adam,
                    const std::string& config_json, std::mt19937_64& rng);
// Reads just the embedded config snapshot, for rebuilding the model shape.
std::string checkpoint_config(const std::string& path);

struct AblationRow {
    std::string name;
    double rank1 = 0.0;
    double mean_ap = 0.0;
};
struct AblationReport {
    std::vector<AblationRow> rows;
    uint64_t data_checksum = 0;
};

// Trains one run per requested variant on identical data. Plain variant
// names come from TrainConfig::variant; "mu_sweep" and "gamma_sweep" expand
// into one run per grid value {0.15, 0.35, 0.55, 0.75, 0.95}.
AblationReport ablate(const TrainConfig& cfg, const DatasetSplits& data,
                      const std::vector<std::string>& variants,
                      const std::string& out_dir = "");

}  // namespace pab

#endif  // PAB_ENGINE_HPP_
