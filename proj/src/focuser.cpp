#include "pab/focuser.hpp"

#include <cmath>

namespace pab {

Tensor foreground_map(const Tensor& attention) {
    Tensor fg(attention.n, 1, attention.h, attention.w);
    const int plane = attention.h * attention.w;
    for (int i = 0; i < attention.n; ++i) {
        double* out = fg.plane(i, 0);
        for (int ic = 1; ic < attention.c; ++ic) {
            const double* fp = attention.plane(i, ic);
            for (int j = 0; j < plane; ++j) out[j] += fp[j];
        }
    }
    return fg;
}

Tensor apply_attention(const Tensor& feat, const Tensor& mask) {
    if (feat.h != mask.h || feat.w != mask.w)
        throw ConfigError("apply_attention: spatial shape mismatch");
    Tensor out(feat.n, feat.c, feat.h, feat.w);
    const int plane = feat.h * feat.w;
    for (int i = 0; i < feat.n; ++i) {
        const double* mp = mask.plane(i < mask.n ? i : 0, 0);
        for (int ic = 0; ic < feat.c; ++ic) {
            const double* fp = feat.plane(i, ic);
            double* op = out.plane(i, ic);
            for (int j = 0; j < plane; ++j) op[j] = fp[j] * mp[j];
        }
    }
    return out;
}

std::vector<double> pool_parts(const Tensor& feat_single, const Tensor& mask_single,
                               double eps) {
    const int plane = feat_single.h * feat_single.w;
    const double* mp = mask_single.plane(0, 0);
    double mass = 0.0;
    for (int j = 0; j < plane; ++j) mass += mp[j];
    const double denom = std::max(mass, eps);
    std::vector<double> out(feat_single.c, 0.0);
    for (int ic = 0; ic < feat_single.c; ++ic) {
        const double* fp = feat_single.plane(0, ic);
        double s = 0.0;
        for (int j = 0; j < plane; ++j) s += mp[j] * fp[j];
        out[ic] = s / denom;
    }
    return out;
}

GatedConv::GatedConv(int dim_, int ksize_) : dim(dim_), ksize(ksize_) {
    feature_conv = Conv2d(dim, dim, ksize, 1);
    gate_conv = Conv2d(dim, dim, ksize, 1);
}

void GatedConv::init(std::mt19937_64& rng) {
    feature_conv.init_he(rng);
    gate_conv.init_he(rng);
}

Tensor GatedConv::forward(const Tensor& masked_features, bool save_for_backward) {
    Tensor f = feature_conv.forward(masked_features, save_for_backward);
    Tensor g = gate_conv.forward(masked_features, save_for_backward);
    for (double& x : g.v) x = sigmoid(x);
    Tensor q(f.n, f.c, f.h, f.w);
    for (size_t i = 0; i < q.size(); ++i) q.v[i] = f.v[i] * g.v[i];
    if (save_for_backward) {
        saved_feature = std::move(f);
        saved_gate = std::move(g);
    }
    return q;
}

Tensor GatedConv::backward(const Tensor& dq) {
    Tensor df(dq.n, dq.c, dq.h, dq.w);
    Tensor dg(dq.n, dq.c, dq.h, dq.w);
    for (size_t i = 0; i < dq.size(); ++i) {
        const double s = saved_gate.v[i];
        df.v[i] = dq.v[i] * s;
        dg.v[i] = dq.v[i] * saved_feature.v[i] * s * (1.0 - s);
    }
    Tensor dp = feature_conv.backward(df);
    Tensor dp_gate = gate_conv.backward(dg);
    for (size_t i = 0; i < dp.size(); ++i) dp.v[i] += dp_gate.v[i];
    return dp;
}

void GatedConv::gather(std::vector<Param*>& ps) {
    feature_conv.gather(ps);
    gate_conv.gather(ps);
}

FocuserParams::FocuserParams(int in_channels_, int embed_dim_, int gate_kernel)
    : in_channels(in_channels_), embed_dim(embed_dim_) {
    embed_conv = Conv2d(in_channels, embed_dim, 1, 1);
    gate = GatedConv(embed_dim, gate_kernel);
}

void FocuserParams::init(std::mt19937_64& rng) {
    embed_conv.init_he(rng);
    gate.init(rng);
}

void FocuserParams::gather(std::vector<Param*>& ps) {
    embed_conv.gather(ps);
    gate.gather(ps);
}

}  // namespace pab
