#include "pab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pab/common.hpp"

namespace pab {

double part_distance(const PartEmbeddings& a, const PartEmbeddings& b, bool use_visibility) {
    if (a.parts.size() != b.parts.size())
        throw ConfigError("part_distance: part count mismatch");
    const size_t x_count = a.parts.size();

    auto euclid = [](const std::vector<double>& u, const std::vector<double>& v) {
        if (u.size() != v.size()) throw ConfigError("part_distance: dim mismatch");
        double s = 0.0;
        for (size_t i = 0; i < u.size(); ++i) {
            const double d = u[i] - v[i];
            s += d * d;
        }
        return std::sqrt(s);
    };

    if (!use_visibility) {
        double s = 0.0;
        for (size_t x = 0; x < x_count; ++x) s += euclid(a.parts[x], b.parts[x]);
        return s / static_cast<double>(x_count);
    }

    double s = 0.0;
    int common = 0;
    for (size_t x = 0; x < x_count; ++x) {
        if (a.visibility[x] && b.visibility[x]) {
            s += euclid(a.parts[x], b.parts[x]);
            ++common;
        }
    }
    if (common == 0) return euclid(a.foreground, b.foreground);
    return s / common;
}

namespace {

// Distance over the branch tensor plus its gradient structure. For the part
// form d = (1/X) sum_x ||u_x||; for the foreground form d = ||u_0||.
double branch_distance(const Tensor& e, int a, int b, const TripletConfig& cfg) {
    const int d = e.h;
    double total = 0.0;
    const int first = cfg.foreground_only ? 0 : 1;
    const int last = cfg.foreground_only ? 0 : cfg.part_count;
    for (int br = first; br <= last; ++br) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            const double u = e.at(a, br, k, 0) - e.at(b, br, k, 0);
            s += u * u;
        }
        total += std::sqrt(s);
    }
    return cfg.foreground_only ? total : total / cfg.part_count;
}

// d(branch_distance)/d(embeddings of a and b), scaled by `scale`.
void branch_distance_backward(const Tensor& e, int a, int b, const TripletConfig& cfg,
                              double scale, Tensor& de) {
    const int d = e.h;
    const int first = cfg.foreground_only ? 0 : 1;
    const int last = cfg.foreground_only ? 0 : cfg.part_count;
    const double part_scale = cfg.foreground_only ? scale : scale / cfg.part_count;
    for (int br = first; br <= last; ++br) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            const double u = e.at(a, br, k, 0) - e.at(b, br, k, 0);
            s += u * u;
        }
        const double norm = std::sqrt(s);
        if (norm == 0.0) continue;  // subgradient 0 at the kink
        const double g = part_scale / norm;
        for (int k = 0; k < d; ++k) {
            const double u = e.at(a, br, k, 0) - e.at(b, br, k, 0);
            de.at(a, br, k, 0) += g * u;
            de.at(b, br, k, 0) -= g * u;
        }
    }
}

}  // namespace

double part_triplet_loss(const Tensor& embeddings, const std::vector<int>& ids,
                         const TripletConfig& cfg, Tensor* d_embeddings) {
    const int n = embeddings.n;
    if (static_cast<int>(ids.size()) != n)
        throw ConfigError("part_triplet_loss: id count mismatch");
    if (cfg.margin < 0.0) throw ConfigError("part_triplet_loss: negative margin");
    if (!cfg.foreground_only && embeddings.c != cfg.part_count + 1)
        throw ConfigError("part_triplet_loss: branch count mismatch");
    bool multi_id = false;
    for (int i = 1; i < n && !multi_id; ++i) multi_id = ids[i] != ids[0];
    if (!multi_id) throw DataError("part_triplet_loss: batch holds a single identity");

    // Full pairwise distances; n is a training batch so n^2 is cheap.
    std::vector<double> dist(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double v = branch_distance(embeddings, i, j, cfg);
            dist[static_cast<size_t>(i) * n + j] = v;
            dist[static_cast<size_t>(j) * n + i] = v;
        }

    if (d_embeddings && !d_embeddings->same_shape(embeddings))
        throw ConfigError("part_triplet_loss: gradient shape mismatch");

    double loss = 0.0;
    for (int a = 0; a < n; ++a) {
        int hardest_pos = -1, hardest_neg = -1;
        double d_ap = -1.0, d_an = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (j == a) continue;
            const double v = dist[static_cast<size_t>(a) * n + j];
            if (ids[j] == ids[a]) {
                if (v > d_ap) {
                    d_ap = v;
                    hardest_pos = j;
                }
            } else if (v < d_an) {
                d_an = v;
                hardest_neg = j;
            }
        }
        if (hardest_pos < 0)
            throw DataError("part_triplet_loss: anchor " + std::to_string(a) +
                            " has no positive");
        const double hinge = d_ap - d_an + cfg.margin;
        if (hinge > 0.0) {
            loss += hinge;
            if (d_embeddings) {
                branch_distance_backward(embeddings, a, hardest_pos, cfg, 1.0 / n,
                                         *d_embeddings);
                branch_distance_backward(embeddings, a, hardest_neg, cfg, -1.0 / n,
                                         *d_embeddings);
            }
        }
    }
    return loss / n;
}

double part_triplet_loss(const std::vector<PartEmbeddings>& batch, const std::vector<int>& ids,
                         const TripletConfig& cfg) {
    if (batch.empty()) throw ConfigError("part_triplet_loss: empty batch");
    const int n = static_cast<int>(batch.size());
    const int d = static_cast<int>(batch[0].foreground.size());
    Tensor e(n, cfg.part_count + 1, d, 1);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(batch[i].parts.size()) != cfg.part_count)
            throw ConfigError("part_triplet_loss: part count mismatch");
        for (int k = 0; k < d; ++k) e.at(i, 0, k, 0) = batch[i].foreground[k];
        for (int x = 0; x < cfg.part_count; ++x)
            for (int k = 0; k < d; ++k) e.at(i, x + 1, k, 0) = batch[i].parts[x][k];
    }
    return part_triplet_loss(e, ids, cfg, nullptr);
}

namespace {

// Label-smoothed CE for one logit row; accumulates d(loss)/d(logits) into
// drow (scaled by `scale`) when non-null.
double smoothed_ce_row(const double* logits, int classes, int label, double smoothing,
                       double* drow, double scale) {
    double mx = logits[0];
    for (int k = 1; k < classes; ++k) mx = std::max(mx, logits[k]);
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(logits[k] - mx);
    const double logz = std::log(z) + mx;

    const double off = smoothing / classes;
    const double on = 1.0 - smoothing + off;
    double loss = 0.0;
    for (int k = 0; k < classes; ++k) {
        const double target = (k == label) ? on : off;
        const double logp = logits[k] - logz;
        loss -= target * logp;
        if (drow) {
            const double p = std::exp(logp);
            drow[k] += scale * (p - target);
        }
    }
    return loss;
}

}  // namespace

double id_loss(const Tensor& logits_foreground, const Tensor& logits_parts,
               const std::vector<std::vector<uint8_t>>& visibility,
               const std::vector<int>& labels, double smoothing,
               Tensor* d_foreground, Tensor* d_parts) {
    const int n = logits_foreground.n;
    const int classes = logits_foreground.c;
    if (static_cast<int>(labels.size()) != n) throw ConfigError("id_loss: label count mismatch");
    if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("id_loss: smoothing out of range");
    for (int i = 0; i < n; ++i)
        if (labels[i] < 0 || labels[i] >= classes)
            throw DataError("id_loss: identity " + std::to_string(labels[i]) + " out of range");

    if (d_foreground) {
        *d_foreground = Tensor::matrix(n, classes);
        d_foreground->zero();
    }

    double fg_sum = 0.0;
    // Count part-head instances first so gradient scales are known up front.
    int part_instances = 0;
    const bool has_parts = logits_parts.size() > 0;
    int x_count = 0;
    if (has_parts) {
        if (logits_parts.n % n != 0) throw ConfigError("id_loss: part logit rows not a multiple of batch");
        x_count = logits_parts.n / n;
        if (static_cast<int>(visibility.size()) != n)
            throw ConfigError("id_loss: visibility size mismatch");
        for (int i = 0; i < n; ++i)
            for (int x = 0; x < x_count; ++x)
                if (visibility[i][x]) ++part_instances;
        if (d_parts) {
            *d_parts = Tensor::matrix(logits_parts.n, classes);
            d_parts->zero();
        }
    }
    const int heads = (part_instances > 0) ? 2 : 1;
    const double fg_scale = 1.0 / (heads * n);

    for (int i = 0; i < n; ++i) {
        double* drow = d_foreground ? d_foreground->v.data() + static_cast<size_t>(i) * classes
                                    : nullptr;
        fg_sum += smoothed_ce_row(logits_foreground.v.data() + static_cast<size_t>(i) * classes,
                                  classes, labels[i], smoothing, drow, fg_scale);
    }
    double loss = fg_sum / n;

    if (part_instances > 0) {
        const double part_scale = 1.0 / (heads * part_instances);
        double part_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int x = 0; x < x_count; ++x) {
                if (!visibility[i][x]) continue;
                const size_t row = static_cast<size_t>(i) * x_count + x;
                double* drow = d_parts ? d_parts->v.data() + row * classes : nullptr;
                part_sum += smoothed_ce_row(logits_parts.v.data() + row * classes, classes,
                                            labels[i], smoothing, drow, part_scale);
            }
        }
        loss = (loss + part_sum / part_instances) / 2.0;
    }
    return loss;
}

}  // namespace pab
