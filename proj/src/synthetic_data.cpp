#include "pab/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "pab/common.hpp"

#include <json.hpp>

namespace pab {

namespace {

// Canonical layout in normalized (x, y) coordinates: center and extent per
// part. 1 head, 2/3 arms, 4 torso, 5/6 legs. The base boxes do not overlap;
// painter order only matters once pose jitter is applied.
struct BaseBox {
    double cx, cy, w, h;
};
constexpr BaseBox kBase[kParts] = {
    {0.50, 0.10, 0.28, 0.14},  // head
    {0.18, 0.38, 0.16, 0.30},  // left arm
    {0.82, 0.38, 0.16, 0.30},  // right arm
    {0.50, 0.38, 0.40, 0.32},  // torso
    {0.35, 0.75, 0.22, 0.38},  // left leg
    {0.65, 0.75, 0.22, 0.38},  // right leg
};

constexpr std::array<int, kParts> kPaintOrder = {2, 3, 5, 6, 4, 1};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int clampi(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

// Occluders paint flat colors strictly darker than any subject or background
// pixel so occluded regions always differ from the unoccluded render.
double dark_channel(std::mt19937_64& rng) { return uniform(rng, 0.01, 0.08); }

void validate_occlusion(const OcclusionSpec& occ) {
    if (occ.coverage < 0.0 || occ.coverage > 1.0)
        throw ConfigError("occlusion coverage outside [0,1]");
    if ((occ.kind == OcclusionKind::none) != (occ.coverage == 0.0))
        throw ConfigError("coverage must be 0 exactly when occlusion kind is none");
    if (occ.coverage > 0.95)
        throw DataError("occlusion coverage > 0.95 leaves no usable subject");
}

void paint_subject(Tensor& img, Tensor& owner, const IdentityAppearance& app,
                   uint64_t pose_seed, int shift_x, double owner_value_base) {
    const int img_h = img.h, img_w = img.w;
    for (int part : kPaintOrder) {
        IRect r = part_rect(app, pose_seed, part, img_h, img_w);
        r.x0 = clampi(r.x0 + shift_x, 0, img_w);
        r.x1 = clampi(r.x1 + shift_x, 0, img_w);
        if (r.empty()) continue;
        const PartStyle& st = app.palette[part - 1];
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                const double span = st.stripe_axis == 0 ? (r.y1 - r.y0) : (r.x1 - r.x0);
                const double t = st.stripe_axis == 0 ? (y - r.y0) : (x - r.x0);
                const double wave =
                    st.stripe_amp * std::sin(2.0 * M_PI * st.stripe_freq * t / span +
                                             st.stripe_phase);
                for (int ch = 0; ch < 3; ++ch) img.at(0, ch, y, x) = st.base[ch] + wave;
                owner.at(0, 0, y, x) = owner_value_base + part;
            }
        }
    }
}

}  // namespace

const std::array<int, kParts>& paint_order() { return kPaintOrder; }

IdentityAppearance generate_identity(uint64_t global_seed, int identity_id) {
    if (identity_id < 0) throw ConfigError("identity_id must be non-negative");
    IdentityAppearance app;
    app.identity_id = identity_id;
    std::mt19937_64 rng(seed_combine(global_seed, 0xA11CEull, static_cast<uint64_t>(identity_id)));
    for (int p = 0; p < kParts; ++p) {
        PartStyle& st = app.palette[p];
        for (double& c : st.base) c = uniform(rng, 0.25, 0.90);
        st.stripe_amp = uniform(rng, 0.02, 0.15);
        st.stripe_freq = uniform(rng, 0.5, 3.0);
        st.stripe_phase = uniform(rng, 0.0, 2.0 * M_PI);
        st.stripe_axis = static_cast<int>(rng() & 1u);
        app.size_scale[p] = uniform(rng, 0.85, 1.15);
    }
    app.height_scale = uniform(rng, 0.92, 1.08);
    app.width_scale = uniform(rng, 0.92, 1.08);
    return app;
}

IRect part_rect(const IdentityAppearance& app, uint64_t pose_seed, int part,
                int img_h, int img_w) {
    if (part < 1 || part > kParts) throw ConfigError("part index out of range");
    const BaseBox& b = kBase[part - 1];

    std::mt19937_64 grng(seed_combine(pose_seed, 0x905Eull, 0));
    const double gdx = uniform(grng, -0.03, 0.03);
    const double gdy = uniform(grng, -0.02, 0.02);
    std::mt19937_64 prng(seed_combine(pose_seed, 0x905Eull, static_cast<uint64_t>(part)));
    const double pdx = uniform(prng, -0.015, 0.015);
    const double pdy = uniform(prng, -0.015, 0.015);

    const double w = b.w * app.width_scale * app.size_scale[part - 1];
    const double h = b.h * app.height_scale * app.size_scale[part - 1];
    const double cx = b.cx + gdx + pdx;
    const double cy = b.cy + gdy + pdy;

    IRect r;
    r.x0 = clampi(static_cast<int>(std::lround((cx - w / 2) * img_w)), 0, img_w);
    r.x1 = clampi(static_cast<int>(std::lround((cx + w / 2) * img_w)), 0, img_w);
    r.y0 = clampi(static_cast<int>(std::lround((cy - h / 2) * img_h)), 0, img_h);
    r.y1 = clampi(static_cast<int>(std::lround((cy + h / 2) * img_h)), 0, img_h);
    return r;
}

IRect occlusion_rect(const OcclusionSpec& occ, int img_h, int img_w) {
    IRect r;
    if (occ.kind == OcclusionKind::bottom_crop) {
        r.y0 = clampi(static_cast<int>(std::lround(img_h * (1.0 - occ.coverage))), 0, img_h);
        r.y1 = img_h;
        r.x0 = 0;
        r.x1 = img_w;
        return r;
    }
    if (occ.kind == OcclusionKind::rectangle) {
        std::mt19937_64 rng(seed_combine(occ.placement_seed, 0x0CC1ull, 0));
        const double area = occ.coverage * img_h * img_w;
        const double aspect = uniform(rng, 0.5, 2.0);  // h/w
        const double wf = std::sqrt(area / aspect);
        const double hf = wf * aspect;
        const double cx = uniform(rng, 0.25, 0.75) * img_w;
        const double cy = uniform(rng, 0.20, 0.80) * img_h;
        r.x0 = clampi(static_cast<int>(std::lround(cx - wf / 2)), 0, img_w);
        r.x1 = clampi(static_cast<int>(std::lround(cx + wf / 2)), 0, img_w);
        r.y0 = clampi(static_cast<int>(std::lround(cy - hf / 2)), 0, img_h);
        r.y1 = clampi(static_cast<int>(std::lround(cy + hf / 2)), 0, img_h);
        return r;
    }
    throw ConfigError("occlusion_rect applies to rectangle and bottom_crop only");
}

DistractorLayout inter_person_layout(const OcclusionSpec& occ, int /*img_h*/, int img_w) {
    DistractorLayout lay;
    std::mt19937_64 rng(seed_combine(occ.placement_seed, 0xD157ull, 0));
    const int distractor_id = 1000000 + static_cast<int>(rng() % 1000);
    lay.app = generate_identity(splitmix64(occ.placement_seed ^ 0xD157D157ull), distractor_id);
    // Darken the distractor far below subject colors; label soundness tests
    // rely on occluder pixels never matching the unoccluded render.
    for (PartStyle& st : lay.app.palette) {
        for (double& c : st.base) c = 0.01 + 0.06 * (c - 0.25) / 0.65;
        st.stripe_amp = 0.0;
    }
    lay.pose_seed = rng();
    const double off = 0.60 - 0.38 * occ.coverage;  // higher coverage, deeper overlap
    const int sign = (rng() & 1u) ? 1 : -1;
    lay.shift_x = sign * static_cast<int>(std::lround(off * img_w));
    return lay;
}

Sample render_sample(const IdentityAppearance& app, uint64_t pose_seed,
                     const OcclusionSpec& occ, int camera_id, const DataConfig& cfg) {
    validate_occlusion(occ);
    if (cfg.img_h % cfg.label_h != 0 || cfg.img_w % cfg.label_w != 0)
        throw ConfigError("image size must be a multiple of the label grid");

    Sample s;
    s.identity = app.identity_id;
    s.camera_id = camera_id;
    s.occlusion = occ;
    s.image = Tensor(1, 3, cfg.img_h, cfg.img_w);
    Tensor owner(1, 1, cfg.img_h, cfg.img_w);

    // Background: camera-specific tone plus noise, independent of identity so
    // renders of different people under one camera share statistics.
    std::mt19937_64 bg_rng(seed_combine(pose_seed, 0xBA5Eull, static_cast<uint64_t>(camera_id)));
    const double cam_tone = 0.30 + 0.08 * (camera_id % 3);
    const double illum = 0.94 + 0.03 * ((camera_id + 1) % 3);
    for (int y = 0; y < cfg.img_h; ++y)
        for (int x = 0; x < cfg.img_w; ++x) {
            const double noise = uniform(bg_rng, -0.04, 0.04);
            for (int ch = 0; ch < 3; ++ch)
                s.image.at(0, ch, y, x) = cam_tone + noise + 0.02 * ch;
        }

    paint_subject(s.image, owner, app, pose_seed, 0, 0.0);

    // Occlusion replaces image pixels and knocks the owner back to background.
    if (occ.kind == OcclusionKind::rectangle || occ.kind == OcclusionKind::bottom_crop) {
        IRect r = occlusion_rect(occ, cfg.img_h, cfg.img_w);
        std::mt19937_64 rng(seed_combine(occ.placement_seed, 0x0CC2ull, 0));
        double col[3] = {dark_channel(rng), dark_channel(rng), dark_channel(rng)};
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) {
                for (int ch = 0; ch < 3; ++ch) s.image.at(0, ch, y, x) = col[ch];
                owner.at(0, 0, y, x) = 0.0;
            }
    } else if (occ.kind == OcclusionKind::inter_person) {
        DistractorLayout lay = inter_person_layout(occ, cfg.img_h, cfg.img_w);
        // Owner values above kParts mark distractor pixels; they relabel to 0.
        paint_subject(s.image, owner, lay.app, lay.pose_seed, lay.shift_x, 100.0);
    }

    // Illumination then clamp to [0,1].
    for (double& v : s.image.v) v = std::min(1.0, std::max(0.0, v * illum));

    const int fy = cfg.img_h / cfg.label_h, fx = cfg.img_w / cfg.label_w;
    s.parsing_label = ParsingLabel(cfg.label_h, cfg.label_w);
    for (int ih = 0; ih < cfg.label_h; ++ih)
        for (int iw = 0; iw < cfg.label_w; ++iw) {
            const double o = owner.at(0, 0, fy * ih + fy / 2, fx * iw + fx / 2);
            s.parsing_label.at(ih, iw) =
                (o >= 1.0 && o <= kParts) ? static_cast<uint8_t>(o) : 0;
        }
    return s;
}

DatasetSplits make_splits(const DataConfig& cfg) {
    if (cfg.n_eval_ids < 2) throw ConfigError("need at least 2 evaluation identities");
    if (cfg.n_train_ids < 2) throw ConfigError("need at least 2 training identities");
    if (cfg.samples_per_id < 2) throw ConfigError("need at least 2 samples per identity");
    if (cfg.occlusion_rate < 0.0 || cfg.occlusion_rate > 1.0)
        throw ConfigError("occlusion_rate outside [0,1]");

    DatasetSplits out;
    std::mt19937_64 rng(seed_combine(cfg.seed, 0x5913ull, 0));

    auto draw_occlusion = [&rng](double rate) {
        OcclusionSpec occ;
        if (uniform(rng, 0.0, 1.0) >= rate) return occ;
        switch (rng() % 3) {
            case 0:
                occ.kind = OcclusionKind::rectangle;
                occ.coverage = uniform(rng, 0.20, 0.50);
                break;
            case 1:
                occ.kind = OcclusionKind::bottom_crop;
                occ.coverage = uniform(rng, 0.30, 0.60);
                break;
            default:
                occ.kind = OcclusionKind::inter_person;
                occ.coverage = uniform(rng, 0.30, 0.70);
                break;
        }
        occ.placement_seed = rng();
        return occ;
    };

    for (int id = 0; id < cfg.n_train_ids; ++id) {
        IdentityAppearance app = generate_identity(cfg.seed, id);
        for (int k = 0; k < cfg.samples_per_id; ++k) {
            const uint64_t pose = seed_combine(cfg.seed, static_cast<uint64_t>(id), 1000 + k);
            out.train.push_back(render_sample(app, pose, draw_occlusion(cfg.occlusion_rate),
                                              k % 3, cfg));
        }
    }

    // Eval ids sit above the train range; queries are mostly occluded while
    // the gallery stays predominantly holistic. Query cameras alternate 0/1,
    // gallery 1/2, so every query id keeps a cross-camera gallery match.
    for (int e = 0; e < cfg.n_eval_ids; ++e) {
        const int id = cfg.n_train_ids + e;
        IdentityAppearance app = generate_identity(cfg.seed, id);
        const int n_query = (cfg.samples_per_id + 1) / 2;
        for (int k = 0; k < cfg.samples_per_id; ++k) {
            const uint64_t pose = seed_combine(cfg.seed, static_cast<uint64_t>(id), 2000 + k);
            const bool is_query = k < n_query;
            const double rate = is_query ? cfg.occlusion_rate : 0.15 * cfg.occlusion_rate;
            Sample s = render_sample(app, pose, draw_occlusion(rate),
                                     is_query ? (k % 2) : (1 + k % 2), cfg);
            (is_query ? out.query : out.gallery).push_back(std::move(s));
        }
    }

    for (const Sample& q : out.query) {
        bool ok = false;
        for (const Sample& g : out.gallery)
            if (g.identity == q.identity && g.camera_id != q.camera_id) {
                ok = true;
                break;
            }
        if (!ok) throw DataError("query identity lacks a cross-camera gallery match");
    }
    return out;
}

std::vector<std::vector<int>> identity_balanced_batches(const std::vector<Sample>& data,
                                                        int n_ids, int n_per_id,
                                                        uint64_t shuffle_seed) {
    if (n_ids < 2 || n_per_id < 2)
        throw ConfigError("identity-balanced batches need n_ids >= 2 and n_per_id >= 2");

    std::vector<int> uniq_ids;
    std::vector<std::vector<int>> by_id;  // indices into data, parallel to uniq_ids
    for (int i = 0; i < static_cast<int>(data.size()); ++i) {
        auto it = std::find(uniq_ids.begin(), uniq_ids.end(), data[i].identity);
        if (it == uniq_ids.end()) {
            uniq_ids.push_back(data[i].identity);
            by_id.emplace_back();
            by_id.back().push_back(i);
        } else {
            by_id[it - uniq_ids.begin()].push_back(i);
        }
    }
    const int n_identities = static_cast<int>(uniq_ids.size());
    if (n_identities < n_ids)
        throw DataError("dataset has fewer identities than the batch requires");

    std::mt19937_64 rng(shuffle_seed);
    std::vector<int> id_order(n_identities);
    for (int i = 0; i < n_identities; ++i) id_order[i] = i;
    std::shuffle(id_order.begin(), id_order.end(), rng);
    for (auto& lst : by_id) std::shuffle(lst.begin(), lst.end(), rng);

    std::vector<size_t> cursor(n_identities, 0);
    size_t id_cursor = 0;
    auto next_id = [&]() {
        if (id_cursor == id_order.size()) {
            std::shuffle(id_order.begin(), id_order.end(), rng);
            id_cursor = 0;
        }
        return id_order[id_cursor++];
    };
    auto next_sample = [&](int gid) {
        auto& lst = by_id[gid];
        if (cursor[gid] == lst.size()) {
            std::shuffle(lst.begin(), lst.end(), rng);
            cursor[gid] = 0;
        }
        return lst[cursor[gid]++];
    };

    const size_t batch_size = static_cast<size_t>(n_ids) * n_per_id;
    const size_t n_batches = (data.size() + batch_size - 1) / batch_size;
    std::vector<std::vector<int>> batches;
    for (size_t b = 0; b < n_batches; ++b) {
        std::vector<int> batch;
        std::vector<int> chosen;
        while (static_cast<int>(chosen.size()) < n_ids) {
            const int gid = next_id();
            if (std::find(chosen.begin(), chosen.end(), gid) != chosen.end()) continue;
            chosen.push_back(gid);
            for (int k = 0; k < n_per_id; ++k) batch.push_back(next_sample(gid));
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

Tensor batch_images(const std::vector<Sample>& data, const std::vector<int>& indices) {
    if (indices.empty()) throw ConfigError("batch_images: empty index list");
    const Tensor& first = data[indices[0]].image;
    Tensor out(static_cast<int>(indices.size()), first.c, first.h, first.w);
    for (size_t i = 0; i < indices.size(); ++i) {
        const Tensor& img = data[indices[i]].image;
        if (!img.same_shape(first)) throw ConfigError("batch_images: mixed image shapes");
        std::memcpy(out.sample(static_cast<int>(i)), img.v.data(),
                    sizeof(double) * img.size());
    }
    return out;
}

namespace {

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void write_i32(std::ofstream& f, int32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ofstream& f, uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); }
void write_f64(std::ofstream& f, double v) { f.write(reinterpret_cast<char*>(&v), 8); }

uint32_t read_u32(std::ifstream& f) {
    uint32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int32_t read_i32(std::ifstream& f) {
    int32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::ifstream& f) {
    uint64_t v;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double read_f64(std::ifstream& f) {
    double v;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

constexpr uint32_t kSplitMagic = 0x44424150u;  // "PABD"
constexpr uint32_t kFormatVersion = 1;

void write_split(const std::string& path, const std::vector<Sample>& split) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    write_u32(f, kSplitMagic);
    write_u32(f, kFormatVersion);
    write_u32(f, static_cast<uint32_t>(split.size()));
    const int img_h = split.empty() ? 0 : split[0].image.h;
    const int img_w = split.empty() ? 0 : split[0].image.w;
    const int lab_h = split.empty() ? 0 : split[0].parsing_label.h;
    const int lab_w = split.empty() ? 0 : split[0].parsing_label.w;
    write_u32(f, static_cast<uint32_t>(img_h));
    write_u32(f, static_cast<uint32_t>(img_w));
    write_u32(f, static_cast<uint32_t>(lab_h));
    write_u32(f, static_cast<uint32_t>(lab_w));
    for (const Sample& s : split) {
        write_i32(f, s.identity);
        write_i32(f, s.camera_id);
        write_i32(f, static_cast<int32_t>(s.occlusion.kind));
        write_f64(f, s.occlusion.coverage);
        write_u64(f, s.occlusion.placement_seed);
        f.write(reinterpret_cast<const char*>(s.image.v.data()),
                static_cast<std::streamsize>(s.image.size() * sizeof(double)));
        f.write(reinterpret_cast<const char*>(s.parsing_label.v.data()),
                static_cast<std::streamsize>(s.parsing_label.v.size()));
    }
    if (!f) throw DataError("write failed for " + path);
}

std::vector<Sample> read_split(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    if (read_u32(f) != kSplitMagic) throw DataError("bad magic in " + path);
    if (read_u32(f) != kFormatVersion) throw DataError("unsupported dataset version in " + path);
    const uint32_t count = read_u32(f);
    const int img_h = static_cast<int>(read_u32(f));
    const int img_w = static_cast<int>(read_u32(f));
    const int lab_h = static_cast<int>(read_u32(f));
    const int lab_w = static_cast<int>(read_u32(f));
    std::vector<Sample> split(count);
    for (Sample& s : split) {
        s.identity = read_i32(f);
        s.camera_id = read_i32(f);
        s.occlusion.kind = static_cast<OcclusionKind>(read_i32(f));
        s.occlusion.coverage = read_f64(f);
        s.occlusion.placement_seed = read_u64(f);
        s.image = Tensor(1, 3, img_h, img_w);
        f.read(reinterpret_cast<char*>(s.image.v.data()),
               static_cast<std::streamsize>(s.image.size() * sizeof(double)));
        s.parsing_label = ParsingLabel(lab_h, lab_w);
        f.read(reinterpret_cast<char*>(s.parsing_label.v.data()),
               static_cast<std::streamsize>(s.parsing_label.v.size()));
    }
    if (!f) throw DataError("truncated dataset file " + path);
    return split;
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return fnv1a(buf.data(), buf.size());
}

std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void export_dataset(const DatasetSplits& splits, const DataConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::pair<const char*, const std::vector<Sample>*> parts[] = {
        {"train", &splits.train}, {"query", &splits.query}, {"gallery", &splits.gallery}};

    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["config"] = {{"n_train_ids", cfg.n_train_ids},
                          {"n_eval_ids", cfg.n_eval_ids},
                          {"samples_per_id", cfg.samples_per_id},
                          {"occlusion_rate", cfg.occlusion_rate},
                          {"img_h", cfg.img_h},
                          {"img_w", cfg.img_w},
                          {"label_h", cfg.label_h},
                          {"label_w", cfg.label_w},
                          {"seed", cfg.seed}};
    for (const auto& [name, split] : parts) {
        const std::string file = std::string(name) + ".bin";
        const std::string path = dir + "/" + file;
        write_split(path, *split);
        manifest["splits"][name] = {{"file", file},
                                    {"samples", split->size()},
                                    {"checksum", hex64(file_checksum(path))}};
    }
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw DataError("cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
}

DatasetSplits import_dataset(const std::string& dir, DataConfig* cfg_out) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw DataError("missing manifest.json in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.at("format_version").get<uint32_t>() != kFormatVersion)
        throw DataError("unsupported manifest version");
    if (cfg_out) {
        const auto& c = manifest.at("config");
        cfg_out->n_train_ids = c.at("n_train_ids").get<int>();
        cfg_out->n_eval_ids = c.at("n_eval_ids").get<int>();
        cfg_out->samples_per_id = c.at("samples_per_id").get<int>();
        cfg_out->occlusion_rate = c.at("occlusion_rate").get<double>();
        cfg_out->img_h = c.at("img_h").get<int>();
        cfg_out->img_w = c.at("img_w").get<int>();
        cfg_out->label_h = c.at("label_h").get<int>();
        cfg_out->label_w = c.at("label_w").get<int>();
        cfg_out->seed = c.at("seed").get<uint64_t>();
    }

    DatasetSplits out;
    const std::pair<const char*, std::vector<Sample>*> parts[] = {
        {"train", &out.train}, {"query", &out.query}, {"gallery", &out.gallery}};
    for (const auto& [name, split] : parts) {
        const auto& entry = manifest.at("splits").at(name);
        const std::string path = dir + "/" + entry.at("file").get<std::string>();
        const std::string want = entry.at("checksum").get<std::string>();
        const std::string got = hex64(file_checksum(path));
        if (want != got)
            throw DataError(std::string(name) + " checksum mismatch: manifest " + want +
                            " vs file " + got);
        *split = read_split(path);
        if (split->size() != entry.at("samples").get<size_t>())
            throw DataError(std::string(name) + " sample count mismatch");
    }
    return out;
}

}  // namespace pab
