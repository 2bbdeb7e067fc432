#include "pab/model.hpp"

#include <random>

#include "pab/common.hpp"

namespace pab {

PabModel::PabModel(const ModelConfig& cfg_) : cfg(cfg_) {
    if (cfg.enc_channels.size() != 3)
        throw ConfigError("encoder expects exactly three intermediate widths");
    if (cfg.parts < 1) throw ConfigError("need at least one part");
    if (cfg.feat_channels < 1 || cfg.embed_dim < 1)
        throw ConfigError("channel widths must be positive");

    const int strides[4] = {1, 2, 2, 1};
    int widths[5] = {cfg.in_channels, cfg.enc_channels[0], cfg.enc_channels[1],
                     cfg.enc_channels[2], cfg.feat_channels};
    encoder.reserve(4);
    for (int s = 0; s < 4; ++s)
        encoder.emplace_back(widths[s], widths[s + 1], 3, strides[s]);

    predictor = AttentionPredictor(cfg.feat_channels, cfg.attn_mid, cfg.parts,
                                   cfg.single_conv_predictor);
    focuser = FocuserParams(cfg.feat_channels, cfg.embed_dim, cfg.gate_kernel);
    if (cfg.num_ids > 0) {
        head_foreground = Linear(cfg.embed_dim, cfg.num_ids);
        head_part = Linear(cfg.embed_dim, cfg.num_ids);
    }
}

void PabModel::init(uint64_t seed) {
    for (size_t s = 0; s < encoder.size(); ++s) {
        std::mt19937_64 rng(seed_combine(seed, 1, s));
        encoder[s].conv.init_he(rng);
    }
    {
        std::mt19937_64 rng(seed_combine(seed, 2, 0));
        predictor.init(rng);
    }
    {
        std::mt19937_64 rng(seed_combine(seed, 3, 0));
        focuser.init(rng);
    }
    if (cfg.num_ids > 0) {
        std::mt19937_64 rng_f(seed_combine(seed, 4, 0));
        head_foreground.init_he(rng_f);
        std::mt19937_64 rng_p(seed_combine(seed, 4, 1));
        head_part.init_he(rng_p);
    }
}

PabModel::ForwardState PabModel::forward(const Tensor& images, bool train, bool save) {
    if (images.c != cfg.in_channels) throw ConfigError("image channel count mismatch");

    ForwardState st;
    Tensor b = images;
    for (auto& stage : encoder) b = stage.forward(b, train, save);

    const int n = b.n, hh = b.h, ww = b.w;
    const int branches = cfg.parts + 1;
    const int plane = hh * ww;
    const int d = cfg.embed_dim;

    if (cfg.uniform_attention) {
        st.attention = Tensor(n, branches, hh, ww);
        st.attention.fill(1.0 / branches);
    } else {
        st.attention = predictor.forward(b, train, save);
    }

    // Branch 0 carries the foreground map, branches 1..X the part maps.
    st.masks = Tensor(n, branches, hh, ww);
    for (int i = 0; i < n; ++i) {
        double* fg = st.masks.plane(i, 0);
        for (int x = 1; x < branches; ++x) {
            const double* f = st.attention.plane(i, x);
            double* m = st.masks.plane(i, x);
            for (int p = 0; p < plane; ++p) {
                m[p] = f[p];
                fg[p] += f[p];
            }
        }
    }

    st.visibility.resize(n);
    for (int i = 0; i < n; ++i) {
        Tensor one(1, branches, hh, ww);
        std::memcpy(one.v.data(), st.attention.sample(i), sizeof(double) * one.size());
        st.visibility[i] = visibility_scores(one, cfg.mu);
    }

    st.k1 = focuser.embed_conv.forward(b, save);
    st.embeddings = Tensor(n, branches, d, 1);

    if (cfg.gap_pooling) {
        // Focuser removed: every branch collapses to the plain spatial mean of
        // the whole-body embedding.
        for (int i = 0; i < n; ++i) {
            for (int dc = 0; dc < d; ++dc) {
                const double* k = st.k1.plane(i, dc);
                double s = 0.0;
                for (int p = 0; p < plane; ++p) s += k[p];
                const double mean = s / plane;
                for (int br = 0; br < branches; ++br) st.embeddings.at(i, br, dc, 0) = mean;
            }
        }
    } else {
        Tensor p_all(n * branches, d, hh, ww);
        for (int i = 0; i < n; ++i) {
            for (int br = 0; br < branches; ++br) {
                const double* m = st.masks.plane(i, br);
                double* dst = p_all.sample(i * branches + br);
                for (int dc = 0; dc < d; ++dc) {
                    const double* k = st.k1.plane(i, dc);
                    double* row = dst + static_cast<size_t>(dc) * plane;
                    for (int p = 0; p < plane; ++p) row[p] = k[p] * m[p];
                }
            }
        }
        st.gated = focuser.gate.forward(p_all, save);

        st.mask_mass = Tensor::matrix(n, branches);
        for (int i = 0; i < n; ++i) {
            for (int br = 0; br < branches; ++br) {
                const double* m = st.masks.plane(i, br);
                double mass = 0.0;
                for (int p = 0; p < plane; ++p) mass += m[p];
                st.mask_mass.at(i, br, 0, 0) = mass;
                const double denom = std::max(mass, cfg.pool_eps);
                const double* q = st.gated.sample(i * branches + br);
                for (int dc = 0; dc < d; ++dc) {
                    const double* row = q + static_cast<size_t>(dc) * plane;
                    double s = 0.0;
                    for (int p = 0; p < plane; ++p) s += m[p] * row[p];
                    st.embeddings.at(i, br, dc, 0) = s / denom;
                }
            }
        }
    }

    if (cfg.num_ids > 0) {
        Tensor fg_in = Tensor::matrix(n, d);
        for (int i = 0; i < n; ++i)
            for (int dc = 0; dc < d; ++dc) fg_in.at(i, dc, 0, 0) = st.embeddings.at(i, 0, dc, 0);
        st.logits_foreground = head_foreground.forward(fg_in, save);

        Tensor part_in = Tensor::matrix(n * cfg.parts, d);
        for (int i = 0; i < n; ++i)
            for (int x = 0; x < cfg.parts; ++x)
                for (int dc = 0; dc < d; ++dc)
                    part_in.at(i * cfg.parts + x, dc, 0, 0) = st.embeddings.at(i, x + 1, dc, 0);
        st.logits_parts = head_part.forward(part_in, save);
    }

    if (save) {
        st.feature_map = b;
        state = st;
    }
    return st;
}

void PabModel::backward(const Tensor& d_embeddings, const Tensor& d_logits_foreground,
                        const Tensor& d_logits_parts, const Tensor& d_attention_ext) {
    const ForwardState& st = state;
    const int n = st.feature_map.n, hh = st.feature_map.h, ww = st.feature_map.w;
    const int branches = cfg.parts + 1;
    const int plane = hh * ww;
    const int d = cfg.embed_dim;

    Tensor de = d_embeddings.size() ? d_embeddings : Tensor(n, branches, d, 1);
    if (!de.same_shape(st.embeddings)) throw ConfigError("embedding grad shape mismatch");

    if (d_logits_foreground.size()) {
        Tensor dx = head_foreground.backward(d_logits_foreground);
        for (int i = 0; i < n; ++i)
            for (int dc = 0; dc < d; ++dc) de.at(i, 0, dc, 0) += dx.at(i, dc, 0, 0);
    }
    if (d_logits_parts.size()) {
        Tensor dx = head_part.backward(d_logits_parts);
        for (int i = 0; i < n; ++i)
            for (int x = 0; x < cfg.parts; ++x)
                for (int dc = 0; dc < d; ++dc)
                    de.at(i, x + 1, dc, 0) += dx.at(i * cfg.parts + x, dc, 0, 0);
    }

    Tensor dk1(st.k1.n, st.k1.c, st.k1.h, st.k1.w);
    Tensor dmask(n, branches, hh, ww);

    if (cfg.gap_pooling) {
        for (int i = 0; i < n; ++i) {
            for (int dc = 0; dc < d; ++dc) {
                double g = 0.0;
                for (int br = 0; br < branches; ++br) g += de.at(i, br, dc, 0);
                g /= plane;
                double* row = dk1.plane(i, dc);
                for (int p = 0; p < plane; ++p) row[p] += g;
            }
        }
    } else {
        // Pooling backward: f_d = sum_p m_p q_dp / S with S = max(mass, eps).
        Tensor dq(st.gated.n, st.gated.c, st.gated.h, st.gated.w);
        for (int i = 0; i < n; ++i) {
            for (int br = 0; br < branches; ++br) {
                const double mass = st.mask_mass.at(i, br, 0, 0);
                const bool live = mass > cfg.pool_eps;
                const double denom = std::max(mass, cfg.pool_eps);
                const double* m = st.masks.plane(i, br);
                const double* q = st.gated.sample(i * branches + br);
                double* dqs = dq.sample(i * branches + br);
                double* dm = dmask.plane(i, br);
                for (int dc = 0; dc < d; ++dc) {
                    const double g = de.at(i, br, dc, 0) / denom;
                    if (g == 0.0) continue;
                    const double f = st.embeddings.at(i, br, dc, 0);
                    const double* qrow = q + static_cast<size_t>(dc) * plane;
                    double* dqrow = dqs + static_cast<size_t>(dc) * plane;
                    for (int p = 0; p < plane; ++p) {
                        dqrow[p] += g * m[p];
                        dm[p] += g * (qrow[p] - (live ? f : 0.0));
                    }
                }
            }
        }

        Tensor dp = focuser.gate.backward(dq);

        // P = K1 (broadcast) * mask, so split dp back into both factors.
        for (int i = 0; i < n; ++i) {
            for (int br = 0; br < branches; ++br) {
                const double* m = st.masks.plane(i, br);
                const double* dps = dp.sample(i * branches + br);
                double* dm = dmask.plane(i, br);
                for (int dc = 0; dc < d; ++dc) {
                    const double* k = st.k1.plane(i, dc);
                    double* dk = dk1.plane(i, dc);
                    const double* dprow = dps + static_cast<size_t>(dc) * plane;
                    for (int p = 0; p < plane; ++p) {
                        dk[p] += dprow[p] * m[p];
                        dm[p] += dprow[p] * k[p];
                    }
                }
            }
        }
    }

    Tensor db = focuser.embed_conv.backward(dk1);

    if (!cfg.uniform_attention) {
        // Mask construction: branch 0 = sum of part channels, branch x = F_x.
        Tensor df(n, branches, hh, ww);
        if (!cfg.gap_pooling) {
            for (int i = 0; i < n; ++i) {
                const double* dfg = dmask.plane(i, 0);
                for (int x = 1; x < branches; ++x) {
                    const double* dm = dmask.plane(i, x);
                    double* out = df.plane(i, x);
                    for (int p = 0; p < plane; ++p) out[p] = dm[p] + dfg[p];
                }
            }
        }
        if (d_attention_ext.size()) {
            if (!d_attention_ext.same_shape(df)) throw ConfigError("attention grad shape mismatch");
            for (size_t j = 0; j < df.size(); ++j) df.v[j] += d_attention_ext.v[j];
        }
        Tensor db_att = predictor.backward(df);
        for (size_t j = 0; j < db.size(); ++j) db.v[j] += db_att.v[j];
    }

    for (int s = static_cast<int>(encoder.size()) - 1; s >= 0; --s)
        db = encoder[s].backward(db);
}

std::vector<PartEmbeddings> PabModel::embed_batch(const Tensor& images) {
    ForwardState st = forward(images, false, false);
    const int n = images.n, d = cfg.embed_dim;
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
        if (cfg.num_ids > 0) {
            e.identity_logits.resize(cfg.num_ids);
            for (int k = 0; k < cfg.num_ids; ++k)
                e.identity_logits[k] = st.logits_foreground.at(i, k, 0, 0);
        }
    }
    return out;
}

void PabModel::gather(std::vector<Param*>& ps) {
    for (auto& stage : encoder) stage.gather(ps);
    if (!cfg.uniform_attention) predictor.gather(ps);
    focuser.embed_conv.gather(ps);
    if (!cfg.gap_pooling) focuser.gate.gather(ps);
    if (cfg.num_ids > 0) {
        head_foreground.gather(ps);
        head_part.gather(ps);
    }
}

void PabModel::state_tensors(std::vector<std::pair<std::string, Tensor*>>& out) {
    auto add_conv = [&out](const std::string& name, Conv2d& c) {
        out.emplace_back(name + ".weight", &c.weight.value);
        out.emplace_back(name + ".bias", &c.bias.value);
    };
    auto add_bn = [&out](const std::string& name, BatchNorm2d& b) {
        out.emplace_back(name + ".gamma", &b.gamma.value);
        out.emplace_back(name + ".beta", &b.beta.value);
        out.emplace_back(name + ".running_mean", &b.running_mean);
        out.emplace_back(name + ".running_var", &b.running_var);
    };
    for (size_t s = 0; s < encoder.size(); ++s) {
        std::string base = "encoder" + std::to_string(s);
        add_conv(base + ".conv", encoder[s].conv);
        add_bn(base + ".bn", encoder[s].bn);
    }
    if (!predictor.single_stage) {
        add_conv("predictor.conv1", predictor.conv1);
        add_bn("predictor.bn1", predictor.bn1);
    }
    add_conv("predictor.conv2", predictor.conv2);
    add_bn("predictor.bn2", predictor.bn2);
    add_conv("focuser.embed", focuser.embed_conv);
    add_conv("focuser.gate.feature", focuser.gate.feature_conv);
    add_conv("focuser.gate.gate", focuser.gate.gate_conv);
    if (cfg.num_ids > 0) {
        out.emplace_back("head_fg.weight", &head_foreground.weight.value);
        out.emplace_back("head_fg.bias", &head_foreground.bias.value);
        out.emplace_back("head_part.weight", &head_part.weight.value);
        out.emplace_back("head_part.bias", &head_part.bias.value);
    }
}

std::vector<PartEmbeddings> focuser_forward(const Tensor& feature_map,
                                            AttentionPredictor& predictor,
                                            FocuserParams& focuser, double mu,
                                            Linear* head_foreground, double pool_eps) {
    Tensor attention = predictor.forward(feature_map, false, false);
    Tensor k1 = focuser.embed_conv.forward(feature_map, false);
    const int n = feature_map.n, hh = feature_map.h, ww = feature_map.w;
    const int parts = predictor.parts;
    const int branches = parts + 1;
    const int d = focuser.embed_dim;
    const int plane = hh * ww;

    Tensor p_all(n * branches, d, hh, ww);
    Tensor masks(n, branches, hh, ww);
    for (int i = 0; i < n; ++i) {
        double* fg = masks.plane(i, 0);
        for (int x = 1; x < branches; ++x) {
            const double* f = attention.plane(i, x);
            double* m = masks.plane(i, x);
            for (int p = 0; p < plane; ++p) {
                m[p] = f[p];
                fg[p] += f[p];
            }
        }
        for (int br = 0; br < branches; ++br) {
            const double* m = masks.plane(i, br);
            double* dst = p_all.sample(i * branches + br);
            for (int dc = 0; dc < d; ++dc) {
                const double* k = k1.plane(i, dc);
                double* row = dst + static_cast<size_t>(dc) * plane;
                for (int p = 0; p < plane; ++p) row[p] = k[p] * m[p];
            }
        }
    }
    Tensor q = focuser.gate.forward(p_all, false);

    std::vector<PartEmbeddings> out(n);
    for (int i = 0; i < n; ++i) {
        PartEmbeddings& e = out[i];
        Tensor one(1, branches, hh, ww);
        std::memcpy(one.v.data(), attention.sample(i), sizeof(double) * one.size());
        e.visibility = visibility_scores(one, mu);

        e.parts.resize(parts);
        for (int br = 0; br < branches; ++br) {
            Tensor feat(1, d, hh, ww);
            std::memcpy(feat.v.data(), q.sample(i * branches + br), sizeof(double) * feat.size());
            Tensor mask(1, 1, hh, ww);
            std::memcpy(mask.v.data(), masks.plane(i, br), sizeof(double) * mask.size());
            std::vector<double> f = pool_parts(feat, mask, pool_eps);
            if (br == 0)
                e.foreground = std::move(f);
            else
                e.parts[br - 1] = std::move(f);
        }
        if (head_foreground) {
            Tensor in = Tensor::matrix(1, d);
            std::memcpy(in.v.data(), e.foreground.data(), sizeof(double) * d);
            Tensor logits = head_foreground->forward(in, false);
            e.identity_logits.assign(logits.v.begin(), logits.v.end());
        }
    }
    return out;
}

}  // namespace pab
