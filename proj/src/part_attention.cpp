#include "pab/part_attention.hpp"

#include <cmath>

namespace pab {

namespace {
constexpr double kLogFloor = 1e-12;
}

AttentionPredictor::AttentionPredictor(int in_channels_, int mid_channels_, int parts_,
                                       bool single_stage_)
    : in_channels(in_channels_),
      mid_channels(mid_channels_),
      parts(parts_),
      single_stage(single_stage_) {
    if (!single_stage) {
        conv1 = Conv2d(in_channels, mid_channels, 3, 1);
        bn1 = BatchNorm2d(mid_channels);
        conv2 = Conv2d(mid_channels, parts + 1, 3, 1);
    } else {
        conv2 = Conv2d(in_channels, parts + 1, 3, 1);
    }
    bn2 = BatchNorm2d(parts + 1);
}

void AttentionPredictor::init(std::mt19937_64& rng) {
    if (!single_stage) conv1.init_he(rng);
    conv2.init_he(rng);
}

Tensor AttentionPredictor::forward(const Tensor& feature_map, bool train,
                                   bool save_for_backward) {
    if (feature_map.c != in_channels)
        throw ConfigError("AttentionPredictor: feature map has " +
                          std::to_string(feature_map.c) + " channels, expected " +
                          std::to_string(in_channels));
    Tensor h = feature_map;
    if (!single_stage) {
        h = conv1.forward(h, save_for_backward);
        h = bn1.forward(h, train, save_for_backward);
        h = relu1.forward(h, save_for_backward);
    }
    h = conv2.forward(h, save_for_backward);
    h = bn2.forward(h, train, save_for_backward);
    h = relu2.forward(h, save_for_backward);
    Tensor f = channel_softmax(h);
    if (save_for_backward) saved_softmax = f;
    return f;
}

Tensor AttentionPredictor::backward(const Tensor& d_attention) {
    Tensor d = channel_softmax_backward(saved_softmax, d_attention);
    d = relu2.backward(d);
    d = bn2.backward(d);
    d = conv2.backward(d);
    if (!single_stage) {
        d = relu1.backward(d);
        d = bn1.backward(d);
        d = conv1.backward(d);
    }
    return d;
}

void AttentionPredictor::gather(std::vector<Param*>& ps) {
    if (!single_stage) {
        conv1.gather(ps);
        bn1.gather(ps);
    }
    conv2.gather(ps);
    bn2.gather(ps);
}

double part_attention_loss(const Tensor& attention, const std::vector<ParsingLabel>& labels,
                           double theta, Tensor* d_attention) {
    if (attention.n != static_cast<int>(labels.size()))
        throw ConfigError("part_attention_loss: batch size mismatch");
    if (theta < 0.0 || theta >= 1.0)
        throw ConfigError("part_attention_loss: theta must be in [0,1)");
    const int classes = attention.c;
    const int plane = attention.h * attention.w;
    const double off_weight = theta / classes;
    const double on_weight = 1.0 - theta + theta / classes;
    if (d_attention) *d_attention = Tensor(attention.n, attention.c, attention.h, attention.w);

    double total = 0.0;
    for (int i = 0; i < attention.n; ++i) {
        const ParsingLabel& lab = labels[i];
        if (lab.h != attention.h || lab.w != attention.w)
            throw ConfigError("part_attention_loss: label grid does not match maps");
        const double pixel_scale = 1.0 / (static_cast<double>(plane) * attention.n);
        double sample_loss = 0.0;
        for (int j = 0; j < plane; ++j) {
            const int target = lab.v[j];
            if (target >= classes)
                throw DataError("part_attention_loss: label value " + std::to_string(target) +
                                " outside {0.." + std::to_string(classes - 1) + "}");
            for (int ic = 0; ic < classes; ++ic) {
                const double weight = (ic == target) ? on_weight : off_weight;
                if (weight == 0.0) continue;
                const double p = attention.plane(i, ic)[j];
                sample_loss -= weight * std::log(std::max(p, kLogFloor));
                if (d_attention && p > kLogFloor)
                    d_attention->plane(i, ic)[j] -= weight / p * pixel_scale;
            }
        }
        total += sample_loss / plane;
    }
    return total / attention.n;
}

double part_attention_loss(const Tensor& attention_single, const ParsingLabel& label,
                           double theta, Tensor* d_attention) {
    if (attention_single.n != 1)
        throw ConfigError("part_attention_loss: expected a single-sample tensor");
    return part_attention_loss(attention_single, std::vector<ParsingLabel>{label}, theta,
                               d_attention);
}

std::vector<uint8_t> visibility_scores(const Tensor& attention_single, double mu) {
    if (mu <= 0.0 || mu >= 1.0) throw ConfigError("visibility_scores: mu must be in (0,1)");
    if (attention_single.n != 1)
        throw ConfigError("visibility_scores: expected a single-sample tensor");
    const int parts = attention_single.c - 1;
    const int plane = attention_single.h * attention_single.w;
    std::vector<uint8_t> vis(parts, 0);
    for (int x = 1; x <= parts; ++x) {
        const double* fp = attention_single.plane(0, x);
        double mx = fp[0];
        for (int j = 1; j < plane; ++j) mx = std::max(mx, fp[j]);
        vis[x - 1] = mx > mu ? 1 : 0;
    }
    return vis;
}

}  // namespace pab
