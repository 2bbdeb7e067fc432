#include "pab/engine.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pab/common.hpp"
#include "pab/losses.hpp"

#include <json.hpp>

namespace pab {

namespace {

const std::set<std::string>& known_variants() {
    static const std::set<std::string> v = {"full", "no_part_attention", "no_focuser",
                                            "no_pixel_predictor", "plain_triplet"};
    return v;
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");

    TrainConfig cfg;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "epochs") cfg.epochs = val.get<int>();
            else if (key == "base_lr") cfg.base_lr = val.get<double>();
            else if (key == "warmup_start_lr") cfg.warmup_start_lr = val.get<double>();
            else if (key == "warmup_epochs") cfg.warmup_epochs = val.get<int>();
            else if (key == "decay_epoch_1") cfg.decay_epoch_1 = val.get<int>();
            else if (key == "decay_epoch_2") cfg.decay_epoch_2 = val.get<int>();
            else if (key == "decay_lr_1") cfg.decay_lr_1 = val.get<double>();
            else if (key == "decay_lr_2") cfg.decay_lr_2 = val.get<double>();
            else if (key == "margin") cfg.margin = val.get<double>();
            else if (key == "gamma_part") cfg.gamma_part = val.get<double>();
            else if (key == "mu") cfg.mu = val.get<double>();
            else if (key == "theta") cfg.theta = val.get<double>();
            else if (key == "n_ids") cfg.n_ids = val.get<int>();
            else if (key == "n_per_id") cfg.n_per_id = val.get<int>();
            else if (key == "random_erasing_prob") cfg.random_erasing_prob = val.get<double>();
            else if (key == "global_seed") cfg.global_seed = val.get<uint64_t>();
            else if (key == "eval_every") cfg.eval_every = val.get<int>();
            else if (key == "parts") cfg.parts = val.get<int>();
            else if (key == "feat_channels") cfg.feat_channels = val.get<int>();
            else if (key == "enc_channels") cfg.enc_channels = val.get<std::vector<int>>();
            else if (key == "attn_mid") cfg.attn_mid = val.get<int>();
            else if (key == "embed_dim") cfg.embed_dim = val.get<int>();
            else if (key == "gate_kernel") cfg.gate_kernel = val.get<int>();
            else if (key == "variant") cfg.variant = val.get<std::string>();
            else throw ConfigError("unknown config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config value error: ") + e.what());
    }
    if (!known_variants().count(cfg.variant))
        throw ConfigError("unknown variant: " + cfg.variant);
    return cfg;
}

std::string train_config_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["epochs"] = cfg.epochs;
    j["base_lr"] = cfg.base_lr;
    j["warmup_start_lr"] = cfg.warmup_start_lr;
    j["warmup_epochs"] = cfg.warmup_epochs;
    j["decay_epoch_1"] = cfg.decay_epoch_1;
    j["decay_epoch_2"] = cfg.decay_epoch_2;
    j["decay_lr_1"] = cfg.decay_lr_1;
    j["decay_lr_2"] = cfg.decay_lr_2;
    j["margin"] = cfg.margin;
    j["gamma_part"] = cfg.gamma_part;
    j["mu"] = cfg.mu;
    j["theta"] = cfg.theta;
    j["n_ids"] = cfg.n_ids;
    j["n_per_id"] = cfg.n_per_id;
    j["random_erasing_prob"] = cfg.random_erasing_prob;
    j["global_seed"] = cfg.global_seed;
    j["eval_every"] = cfg.eval_every;
    j["parts"] = cfg.parts;
    j["feat_channels"] = cfg.feat_channels;
    j["enc_channels"] = cfg.enc_channels;
    j["attn_mid"] = cfg.attn_mid;
    j["embed_dim"] = cfg.embed_dim;
    j["gate_kernel"] = cfg.gate_kernel;
    j["variant"] = cfg.variant;
    return j.dump();
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_train_config(ss.str());
}

DataConfig parse_data_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    DataConfig cfg;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "n_train_ids") cfg.n_train_ids = val.get<int>();
            else if (key == "n_eval_ids") cfg.n_eval_ids = val.get<int>();
            else if (key == "samples_per_id") cfg.samples_per_id = val.get<int>();
            else if (key == "occlusion_rate") cfg.occlusion_rate = val.get<double>();
            else if (key == "img_h") cfg.img_h = val.get<int>();
            else if (key == "img_w") cfg.img_w = val.get<int>();
            else if (key == "label_h") cfg.label_h = val.get<int>();
            else if (key == "label_w") cfg.label_w = val.get<int>();
            else if (key == "seed") cfg.seed = val.get<uint64_t>();
            else throw ConfigError("unknown config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config value error: ") + e.what());
    }
    return cfg;
}

DataConfig load_data_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_data_config(ss.str());
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (!(cfg.warmup_epochs < cfg.decay_epoch_1 && cfg.decay_epoch_1 < cfg.decay_epoch_2 &&
          cfg.decay_epoch_2 <= cfg.epochs))
        throw ConfigError("schedule breakpoints must satisfy warmup < decay1 < decay2 <= epochs");
    if (epoch < 0 || epoch >= cfg.epochs) throw ConfigError("epoch outside schedule range");
    if (epoch < cfg.warmup_epochs) {
        if (epoch == cfg.warmup_epochs - 1) return cfg.base_lr;  // exact endpoint
        return cfg.warmup_start_lr +
               (cfg.base_lr - cfg.warmup_start_lr) * epoch / (cfg.warmup_epochs - 1);
    }
    if (epoch < cfg.decay_epoch_1) return cfg.base_lr;
    if (epoch < cfg.decay_epoch_2) return cfg.decay_lr_1;
    return cfg.decay_lr_2;
}

void random_erasing(Tensor& image, double prob, std::mt19937_64& rng) {
    if (prob < 0.0 || prob > 1.0) throw ConfigError("erasing probability outside [0,1]");
    if (image.n != 1) throw ConfigError("random_erasing expects a single sample");
    // Always consume the gate draw so the stream layout is independent of
    // earlier outcomes.
    const double gate = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (gate >= prob) return;

    const int h = image.h, w = image.w;
    const double area = std::uniform_real_distribution<double>(0.02, 0.4)(rng) * h * w;
    const double aspect = std::uniform_real_distribution<double>(0.3, 3.3)(rng);
    int eh = std::max(1, std::min(h, static_cast<int>(std::lround(std::sqrt(area * aspect)))));
    int ew = std::max(1, std::min(w, static_cast<int>(std::lround(std::sqrt(area / aspect)))));
    const int y0 = std::uniform_int_distribution<int>(0, h - eh)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, w - ew)(rng);
    std::uniform_real_distribution<double> noise(0.0, 1.0);
    for (int c = 0; c < image.c; ++c)
        for (int y = y0; y < y0 + eh; ++y)
            for (int x = x0; x < x0 + ew; ++x) image.at(0, c, y, x) = noise(rng);
}

ModelConfig model_config_from(const TrainConfig& cfg, int num_ids) {
    if (!known_variants().count(cfg.variant))
        throw ConfigError("unknown variant: " + cfg.variant);
    ModelConfig m;
    m.parts = cfg.parts;
    m.feat_channels = cfg.feat_channels;
    m.enc_channels = cfg.enc_channels;
    m.attn_mid = cfg.attn_mid;
    m.embed_dim = cfg.embed_dim;
    m.gate_kernel = cfg.gate_kernel;
    m.num_ids = num_ids;
    m.mu = cfg.mu;
    m.uniform_attention = cfg.variant == "no_part_attention";
    m.gap_pooling = cfg.variant == "no_focuser";
    m.single_conv_predictor = cfg.variant == "no_pixel_predictor";
    return m;
}

std::vector<int> class_index_map(const std::vector<Sample>& data, int* num_ids_out) {
    std::set<int> ids;
    for (const Sample& s : data) ids.insert(s.identity);
    std::map<int, int> to_class;
    int next = 0;
    for (int id : ids) to_class[id] = next++;
    std::vector<int> classes(data.size());
    for (size_t i = 0; i < data.size(); ++i) classes[i] = to_class[data[i].identity];
    if (num_ids_out) *num_ids_out = next;
    return classes;
}

namespace {

std::vector<PartEmbeddings> pack_embeddings(const PabModel::ForwardState& st,
                                            const ModelConfig& cfg) {
    const int n = st.embeddings.n, d = cfg.embed_dim;
    std::vector<PartEmbeddings> out(n);
    for (int i = 0; i < n; ++i) {
        PartEmbeddings& e = out[i];
        e.foreground.resize(d);
        for (int dc = 0; dc < d; ++dc) e.foreground[dc] = st.embeddings.at(i, 0, dc, 0);
        e.parts.resize(cfg.parts);
        for (int x = 0; x < cfg.parts; ++x) {
            e.parts[x].resize(d);
            for (int dc = 0; dc < d; ++dc) e.parts[x][dc] = st.embeddings.at(i, x + 1, dc, 0);
        }
        e.visibility = st.visibility[i];
    }
    return out;
}

struct SplitInference {
    std::vector<PartEmbeddings> embeddings;
    double attention_accuracy_sum = 0.0;
    std::vector<double> visibility_sum;
};

SplitInference infer_split(PabModel& model, const std::vector<Sample>& split) {
    SplitInference out;
    out.visibility_sum.assign(model.cfg.parts, 0.0);
    const int chunk = 16;
    for (size_t base = 0; base < split.size(); base += chunk) {
        const int n = static_cast<int>(std::min<size_t>(chunk, split.size() - base));
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = static_cast<int>(base + i);
        std::vector<int> offs(idx.begin(), idx.end());
        Tensor images(n, split[0].image.c, split[0].image.h, split[0].image.w);
        for (int i = 0; i < n; ++i)
            std::memcpy(images.sample(i), split[offs[i]].image.v.data(),
                        sizeof(double) * split[offs[i]].image.size());
        PabModel::ForwardState st = model.forward(images, false, false);
        std::vector<PartEmbeddings> packed = pack_embeddings(st, model.cfg);
        for (int i = 0; i < n; ++i) {
            Tensor one(1, st.attention.c, st.attention.h, st.attention.w);
            std::memcpy(one.v.data(), st.attention.sample(i), sizeof(double) * one.size());
            out.attention_accuracy_sum +=
                attention_pixel_accuracy(one, split[offs[i]].parsing_label);
            for (int x = 0; x < model.cfg.parts; ++x)
                out.visibility_sum[x] += st.visibility[i][x];
            out.embeddings.push_back(std::move(packed[i]));
        }
    }
    return out;
}

}  // namespace

EvalReport evaluate(PabModel& model, const DatasetSplits& data) {
    if (data.query.empty() || data.gallery.empty())
        throw ConfigError("evaluate needs non-empty query and gallery splits");

    SplitInference q = infer_split(model, data.query);
    SplitInference g = infer_split(model, data.gallery);

    std::vector<int> q_ids, g_ids, q_cams, g_cams;
    for (const Sample& s : data.query) {
        q_ids.push_back(s.identity);
        q_cams.push_back(s.camera_id);
    }
    for (const Sample& s : data.gallery) {
        g_ids.push_back(s.identity);
        g_cams.push_back(s.camera_id);
    }
    DistanceMatrix dm = distance_matrix(q.embeddings, g.embeddings, q_ids, g_ids, q_cams, g_cams);
    EvalReport rep = cmc_map(dm);

    const double total = static_cast<double>(data.query.size() + data.gallery.size());
    rep.attention_accuracy =
        (q.attention_accuracy_sum + g.attention_accuracy_sum) / total;
    rep.part_visibility_rate.resize(model.cfg.parts);
    for (int x = 0; x < model.cfg.parts; ++x)
        rep.part_visibility_rate[x] = (q.visibility_sum[x] + g.visibility_sum[x]) / total;
    return rep;
}

namespace {

constexpr uint32_t kCheckpointMagic = 0x43424150u;  // "PABC"
constexpr uint32_t kCheckpointVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ofstream& f, uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); }
void write_str(std::ofstream& f, const std::string& s) {
    write_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_tensor(std::ofstream& f, const Tensor& t) {
    write_u32(f, static_cast<uint32_t>(t.n));
    write_u32(f, static_cast<uint32_t>(t.c));
    write_u32(f, static_cast<uint32_t>(t.h));
    write_u32(f, static_cast<uint32_t>(t.w));
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::ifstream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::ifstream& f) {
    const uint32_t len = read_u32(f);
    std::string s(len, '\0');
    f.read(s.data(), len);
    return s;
}
void read_tensor_into(std::ifstream& f, Tensor& t, const std::string& what) {
    const int n = static_cast<int>(read_u32(f));
    const int c = static_cast<int>(read_u32(f));
    const int h = static_cast<int>(read_u32(f));
    const int w = static_cast<int>(read_u32(f));
    if (n != t.n || c != t.c || h != t.h || w != t.w)
        throw DataError("checkpoint tensor shape mismatch for " + what);
    f.read(reinterpret_cast<char*>(t.v.data()),
           static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, PabModel& model, const Adam& adam,
                     int epoch, const std::string& config_json, const std::mt19937_64& rng) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint " + path);
    write_u32(f, kCheckpointMagic);
    write_u32(f, kCheckpointVersion);
    write_u64(f, static_cast<uint64_t>(epoch));
    write_str(f, config_json);
    std::ostringstream oss;
    oss << rng;
    write_str(f, oss.str());

    std::vector<std::pair<std::string, Tensor*>> state;
    model.state_tensors(state);
    write_u32(f, static_cast<uint32_t>(state.size()));
    for (auto& [name, t] : state) {
        write_str(f, name);
        write_tensor(f, *t);
    }

    write_u64(f, static_cast<uint64_t>(adam.step_count));
    write_u32(f, static_cast<uint32_t>(adam.m.size()));
    for (size_t i = 0; i < adam.m.size(); ++i) {
        write_tensor(f, adam.m[i]);
        write_tensor(f, adam.v[i]);
    }
    if (!f) throw DataError("checkpoint write failed: " + path);
}

int load_checkpoint(const std::string& path, PabModel& model, Adam& adam,
                    const std::string& config_json, std::mt19937_64& rng) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read checkpoint " + path);
    if (read_u32(f) != kCheckpointMagic) throw DataError("bad checkpoint magic in " + path);
    if (read_u32(f) != kCheckpointVersion)
        throw DataError("unsupported checkpoint version in " + path);
    const int epoch = static_cast<int>(read_u64(f));
    const std::string stored_cfg = read_str(f);
    if (stored_cfg != config_json)
        throw ConfigError("checkpoint config snapshot does not match the requested config");
    std::istringstream iss(read_str(f));
    iss >> rng;
    if (!iss) throw DataError("corrupt RNG state in checkpoint");

    std::vector<std::pair<std::string, Tensor*>> state;
    model.state_tensors(state);
    std::map<std::string, Tensor*> by_name(state.begin(), state.end());
    const uint32_t count = read_u32(f);
    if (count != state.size()) throw DataError("checkpoint state tensor count mismatch");
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = read_str(f);
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("unexpected checkpoint tensor " + name);
        read_tensor_into(f, *it->second, name);
    }

    adam.step_count = static_cast<long long>(read_u64(f));
    const uint32_t n_params = read_u32(f);
    std::vector<Param*> params;
    model.gather(params);
    if (n_params != params.size()) throw DataError("checkpoint optimizer state count mismatch");
    adam.m.resize(n_params);
    adam.v.resize(n_params);
    for (uint32_t i = 0; i < n_params; ++i) {
        adam.m[i] = params[i]->value;
        adam.v[i] = params[i]->value;
        read_tensor_into(f, adam.m[i], "adam.m");
        read_tensor_into(f, adam.v[i], "adam.v");
    }
    if (!f) throw DataError("truncated checkpoint " + path);
    return epoch;
}

std::string checkpoint_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read checkpoint " + path);
    if (read_u32(f) != kCheckpointMagic) throw DataError("bad checkpoint magic in " + path);
    if (read_u32(f) != kCheckpointVersion)
        throw DataError("unsupported checkpoint version in " + path);
    read_u64(f);  // epoch
    return read_str(f);
}

TrainResult train(const TrainConfig& cfg, const DatasetSplits& data,
                  const std::string& out_dir, const std::string& resume_path,
                  int stop_after) {
    if (data.train.empty()) throw ConfigError("train split is empty");
    lr_schedule(0, cfg);  // validates the breakpoint invariant up front

    int num_ids = 0;
    std::vector<int> classes = class_index_map(data.train, &num_ids);

    PabModel model(model_config_from(cfg, num_ids));
    model.init(seed_combine(cfg.global_seed, 0x10DEull));
    std::vector<Param*> params;
    model.gather(params);
    Adam adam;
    adam.reset(params);

    std::mt19937_64 rng_master(seed_combine(cfg.global_seed, 0xEC0Cull));
    const std::string cfg_json = train_config_json(cfg);
    int start_epoch = 0;
    if (!resume_path.empty())
        start_epoch = load_checkpoint(resume_path, model, adam, cfg_json, rng_master);

    // no_part_attention removes the supervision term entirely; the loss value
    // is still logged for comparison.
    const double gamma = cfg.variant == "no_part_attention" ? 0.0 : cfg.gamma_part;
    TripletConfig tri;
    tri.margin = cfg.margin;
    tri.part_count = cfg.parts;
    tri.foreground_only = cfg.variant == "plain_triplet";

    TrainResult result;
    const int end_epoch =
        (stop_after > 0 && stop_after < cfg.epochs) ? stop_after : cfg.epochs;

    for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
        const uint64_t shuffle_seed = rng_master();
        const uint64_t erase_seed = rng_master();
        const double lr = lr_schedule(epoch, cfg);

        auto batches = identity_balanced_batches(data.train, cfg.n_ids, cfg.n_per_id,
                                                 shuffle_seed);
        std::mt19937_64 erng(erase_seed);

        double sum_tri = 0.0, sum_id = 0.0, sum_part = 0.0, sum_total = 0.0;
        for (size_t b = 0; b < batches.size(); ++b) {
            const std::vector<int>& idx = batches[b];
            const int n = static_cast<int>(idx.size());
            const Sample& first = data.train[idx[0]];
            Tensor images(n, first.image.c, first.image.h, first.image.w);
            std::vector<int> batch_classes(n);
            std::vector<ParsingLabel> batch_labels(n);
            for (int i = 0; i < n; ++i) {
                Tensor img = data.train[idx[i]].image;
                random_erasing(img, cfg.random_erasing_prob, erng);
                std::memcpy(images.sample(i), img.v.data(), sizeof(double) * img.size());
                batch_classes[i] = classes[idx[i]];
                batch_labels[i] = data.train[idx[i]].parsing_label;
            }

            PabModel::ForwardState st = model.forward(images, true, true);
            if (!st.embeddings.all_finite() || !st.attention.all_finite())
                throw DataError("non-finite loss at epoch " + std::to_string(epoch) +
                                " batch " + std::to_string(b));
            for (Param* p : params) p->zero_grad();

            Tensor d_attention;
            double l_part;
            if (gamma != 0.0 && !model.cfg.uniform_attention) {
                d_attention = Tensor(st.attention.n, st.attention.c, st.attention.h,
                                     st.attention.w);
                l_part = part_attention_loss(st.attention, batch_labels, cfg.theta,
                                             &d_attention);
                for (double& v : d_attention.v) v *= gamma;
            } else {
                l_part = part_attention_loss(st.attention, batch_labels, cfg.theta, nullptr);
            }

            Tensor d_embeddings(st.embeddings.n, st.embeddings.c, st.embeddings.h,
                                st.embeddings.w);
            const double l_tri = part_triplet_loss(st.embeddings, batch_classes, tri,
                                                   &d_embeddings);

            Tensor d_logits_fg, d_logits_parts;
            const double l_id = id_loss(st.logits_foreground, st.logits_parts, st.visibility,
                                        batch_classes, 0.1, &d_logits_fg, &d_logits_parts);

            const double total = total_loss(l_tri, l_id, l_part, gamma);
            if (!std::isfinite(total))
                throw DataError("non-finite loss at epoch " + std::to_string(epoch) +
                                " batch " + std::to_string(b));

            model.backward(d_embeddings, d_logits_fg, d_logits_parts, d_attention);
            adam.step(params, lr);

            sum_tri += l_tri;
            sum_id += l_id;
            sum_part += l_part;
            sum_total += total;
        }

        const double nb = static_cast<double>(batches.size());
        nlohmann::json row;
        row["kind"] = "train";
        row["epoch"] = epoch;
        row["shuffle_seed"] = shuffle_seed;
        row["lr"] = lr;
        row["l_tri"] = sum_tri / nb;
        row["l_id"] = sum_id / nb;
        row["l_part"] = sum_part / nb;
        row["total"] = sum_total / nb;
        result.log_lines.push_back(row.dump());

        const bool last = epoch + 1 == end_epoch;
        if ((epoch + 1) % cfg.eval_every == 0 || last) {
            result.final_eval = evaluate(model, data);
            nlohmann::json erow;
            erow["kind"] = "eval";
            erow["epoch"] = epoch;
            erow["rank_1"] = result.final_eval.rank_k.at(1);
            erow["rank_5"] = result.final_eval.rank_k.at(5);
            erow["mAP"] = result.final_eval.mean_ap;
            erow["attention_accuracy"] = result.final_eval.attention_accuracy;
            result.log_lines.push_back(erow.dump());
        }
        result.epochs_run = epoch + 1;
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string metrics_path = out_dir + "/metrics.ndjson";
        std::ofstream mf(metrics_path,
                         resume_path.empty() ? std::ios::trunc : std::ios::app);
        if (!mf) throw DataError("cannot write " + metrics_path);
        for (const std::string& line : result.log_lines) mf << line << "\n";

        result.checkpoint_path = out_dir + "/checkpoint.bin";
        save_checkpoint(result.checkpoint_path, model, adam, result.epochs_run, cfg_json,
                        rng_master);
    }
    return result;
}

AblationReport ablate(const TrainConfig& cfg, const DatasetSplits& data,
                      const std::vector<std::string>& variants,
                      const std::string& out_dir) {
    AblationReport report;
    uint64_t sum = 0xcbf29ce484222325ull;
    for (const std::vector<Sample>* split : {&data.train, &data.query, &data.gallery})
        for (const Sample& s : *split) sum = checksum(s.image, sum);
    report.data_checksum = sum;

    const std::vector<double> grid = {0.15, 0.35, 0.55, 0.75, 0.95};
    struct Run {
        std::string name;
        TrainConfig cfg;
    };
    std::vector<Run> runs;
    for (const std::string& v : variants) {
        if (v == "mu_sweep") {
            for (double m : grid) {
                Run r{"mu=" + std::to_string(m).substr(0, 4), cfg};
                r.cfg.variant = "full";
                r.cfg.mu = m;
                runs.push_back(std::move(r));
            }
        } else if (v == "gamma_sweep") {
            for (double g : grid) {
                Run r{"gamma=" + std::to_string(g).substr(0, 4), cfg};
                r.cfg.variant = "full";
                r.cfg.gamma_part = g;
                runs.push_back(std::move(r));
            }
        } else if (known_variants().count(v)) {
            Run r{v, cfg};
            r.cfg.variant = v;
            if (v == "no_part_attention") r.cfg.gamma_part = 0.0;
            runs.push_back(std::move(r));
        } else {
            throw ConfigError("unknown ablation variant: " + v);
        }
    }

    for (const Run& run : runs) {
        TrainResult res = train(run.cfg, data);
        AblationRow row;
        row.name = run.name;
        row.rank1 = res.final_eval.rank_k.at(1);
        row.mean_ap = res.final_eval.mean_ap;
        report.rows.push_back(row);
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        nlohmann::json j;
        char buf[19];
        std::snprintf(buf, sizeof(buf), "0x%016llx",
                      static_cast<unsigned long long>(report.data_checksum));
        j["data_checksum"] = buf;
        j["rows"] = nlohmann::json::array();
        for (const AblationRow& row : report.rows)
            j["rows"].push_back({{"name", row.name},
                                 {"rank_1", std::round(row.rank1 * 1e4) / 1e4},
                                 {"mAP", std::round(row.mean_ap * 1e4) / 1e4}});
        std::ofstream f(out_dir + "/ablation.json");
        if (!f) throw DataError("cannot write ablation report");
        f << j.dump(2) << "\n";
    }
    return report;
}

}  // namespace pab
