#include "pab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pab/common.hpp"
#include "pab/losses.hpp"

#include <json.hpp>

namespace pab {

DistanceMatrix distance_matrix(const std::vector<PartEmbeddings>& queries,
                               const std::vector<PartEmbeddings>& gallery,
                               const std::vector<int>& query_ids,
                               const std::vector<int>& gallery_ids,
                               const std::vector<int>& query_cams,
                               const std::vector<int>& gallery_cams) {
    if (queries.empty() || gallery.empty())
        throw ConfigError("distance_matrix: empty query or gallery list");
    if (query_ids.size() != queries.size() || query_cams.size() != queries.size() ||
        gallery_ids.size() != gallery.size() || gallery_cams.size() != gallery.size())
        throw ConfigError("distance_matrix: id/cam vector size mismatch");

    DistanceMatrix dm;
    dm.n_query = static_cast<int>(queries.size());
    dm.n_gallery = static_cast<int>(gallery.size());
    dm.values.resize(static_cast<size_t>(dm.n_query) * dm.n_gallery);
    dm.query_ids = query_ids;
    dm.gallery_ids = gallery_ids;
    dm.query_cams = query_cams;
    dm.gallery_cams = gallery_cams;
    for (int i = 0; i < dm.n_query; ++i)
        for (int j = 0; j < dm.n_gallery; ++j)
            dm.at(i, j) = part_distance(queries[i], gallery[j], true);
    return dm;
}

EvalReport cmc_map(const DistanceMatrix& dm, const std::vector<int>& ks) {
    EvalReport rep;
    for (int k : ks) rep.rank_k[k] = 0.0;

    double ap_sum = 0.0;
    std::vector<int> order;
    for (int i = 0; i < dm.n_query; ++i) {
        order.clear();
        for (int j = 0; j < dm.n_gallery; ++j) {
            const bool junk = dm.gallery_ids[j] == dm.query_ids[i] &&
                              dm.gallery_cams[j] == dm.query_cams[i];
            if (!junk) order.push_back(j);
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            const double da = dm.at(i, a), db = dm.at(i, b);
            if (da != db) return da < db;
            return a < b;
        });

        int relevant_total = 0;
        for (int j : order) relevant_total += dm.gallery_ids[j] == dm.query_ids[i];
        if (relevant_total == 0) {
            ++rep.queries_skipped;
            continue;
        }
        ++rep.queries_evaluated;

        int seen_relevant = 0;
        double ap = 0.0;
        int first_match_rank = 0;
        for (size_t r = 0; r < order.size(); ++r) {
            if (dm.gallery_ids[order[r]] != dm.query_ids[i]) continue;
            ++seen_relevant;
            if (first_match_rank == 0) first_match_rank = static_cast<int>(r) + 1;
            ap += static_cast<double>(seen_relevant) / static_cast<double>(r + 1);
        }
        ap_sum += ap / relevant_total;
        for (int k : ks)
            if (first_match_rank <= k) rep.rank_k[k] += 1.0;
    }

    if (rep.queries_evaluated > 0) {
        rep.mean_ap = ap_sum / rep.queries_evaluated;
        for (auto& [k, hits] : rep.rank_k) hits /= rep.queries_evaluated;
    }
    return rep;
}

double brute_force_ap(const std::vector<double>& distances,
                      const std::vector<uint8_t>& relevant) {
    if (distances.size() != relevant.size())
        throw ConfigError("brute_force_ap: size mismatch");
    const int n = static_cast<int>(distances.size());
    int relevant_total = 0;
    for (uint8_t f : relevant) relevant_total += f != 0;
    if (relevant_total == 0) return 0.0;

    // Rank each relevant item by counting pairs; ties go to the lower index.
    // Contributions are accumulated in ascending rank order so the sum is
    // bit-comparable against a rank-walk implementation.
    std::vector<std::pair<int, double>> terms;
    for (int r = 0; r < n; ++r) {
        if (!relevant[r]) continue;
        int rank = 1, relevant_at_or_before = 0;
        for (int j = 0; j < n; ++j) {
            const bool ahead = distances[j] < distances[r] ||
                               (distances[j] == distances[r] && j < r);
            if (j != r && ahead) ++rank;
            if (relevant[j] && (ahead || j == r)) ++relevant_at_or_before;
        }
        terms.emplace_back(rank, static_cast<double>(relevant_at_or_before) / rank);
    }
    double ap = 0.0;
    for (int rank = 1; rank <= n; ++rank)
        for (const auto& [r, contribution] : terms)
            if (r == rank) ap += contribution;
    return ap / relevant_total;
}

double attention_pixel_accuracy(const Tensor& attention_single, const ParsingLabel& label) {
    if (attention_single.n != 1) throw ConfigError("attention_pixel_accuracy: expects one sample");
    if (attention_single.h != label.h || attention_single.w != label.w)
        throw ConfigError("attention_pixel_accuracy: shape mismatch");
    const int classes = attention_single.c;
    int correct = 0;
    for (int ih = 0; ih < label.h; ++ih) {
        for (int iw = 0; iw < label.w; ++iw) {
            int best = 0;
            double best_v = attention_single.at(0, 0, ih, iw);
            for (int k = 1; k < classes; ++k) {
                const double v = attention_single.at(0, k, ih, iw);
                if (v > best_v) {
                    best_v = v;
                    best = k;
                }
            }
            correct += best == label.at(ih, iw);
        }
    }
    return static_cast<double>(correct) / (label.h * label.w);
}

std::string report_to_json(const EvalReport& report) {
    auto round4 = [](double x) { return std::round(x * 1e4) / 1e4; };
    nlohmann::json j;
    for (const auto& [k, v] : report.rank_k) j["rank_" + std::to_string(k)] = round4(v);
    j["mAP"] = round4(report.mean_ap);
    j["queries_evaluated"] = report.queries_evaluated;
    j["queries_skipped"] = report.queries_skipped;
    if (!report.part_visibility_rate.empty()) {
        nlohmann::json rates = nlohmann::json::array();
        for (double r : report.part_visibility_rate) rates.push_back(round4(r));
        j["part_visibility_rate"] = rates;
    }
    if (report.attention_accuracy >= 0.0)
        j["attention_accuracy"] = round4(report.attention_accuracy);
    return j.dump(2);
}

}  // namespace pab
