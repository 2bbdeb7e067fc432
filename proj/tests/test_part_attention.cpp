#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fd_check.hpp"
#include "pab/part_attention.hpp"

using pab::AttentionPredictor;
using pab::ParsingLabel;
using pab::Tensor;

namespace {

// ---- independent oracle: smoothed pixel cross entropy, nested means ----
double oracle_loss(const Tensor& attention, const std::vector<ParsingLabel>& labels,
                   double theta) {
    const int classes = attention.c;
    double batch = 0.0;
    for (int i = 0; i < attention.n; ++i) {
        double sample = 0.0;
        for (int y = 0; y < attention.h; ++y)
            for (int x = 0; x < attention.w; ++x) {
                const int target = labels[i].at(y, x);
                double pixel = 0.0;
                for (int c = 0; c < classes; ++c) {
                    const double w = theta / classes + (c == target ? 1.0 - theta : 0.0);
                    pixel -= w * std::log(std::max(attention.at(i, c, y, x), 1e-12));
                }
                sample += pixel;
            }
        batch += sample / (attention.h * attention.w);
    }
    return batch / attention.n;
}

Tensor random_simplex(int n, int classes, int h, int w, std::mt19937_64& rng) {
    Tensor z(n, classes, h, w);
    fd::fill_uniform(z, rng, -2, 2);
    return pab::channel_softmax(z);
}

ParsingLabel random_label(int h, int w, int classes, std::mt19937_64& rng) {
    ParsingLabel lab(h, w);
    for (auto& v : lab.v) v = static_cast<uint8_t>(rng() % classes);
    return lab;
}

}  // namespace

TEST_CASE("attention loss matches the nested-mean oracle") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 3);
        const int classes = 3 + static_cast<int>(rng() % 5);
        Tensor att = random_simplex(n, classes, 4, 3, rng);
        std::vector<ParsingLabel> labs;
        for (int i = 0; i < n; ++i) labs.push_back(random_label(4, 3, classes, rng));
        const double theta = 0.1 * (trial % 2 == 0 ? 1.0 : 0.0);
        CHECK(pab::part_attention_loss(att, labs, theta) ==
              doctest::Approx(oracle_loss(att, labs, theta)).epsilon(1e-12));
    }
}

TEST_CASE("uniform attention over 7 channels costs ln 7 for any labels") {
    std::mt19937_64 rng(103);
    Tensor att(2, 7, 4, 4);
    att.fill(1.0 / 7.0);
    std::vector<ParsingLabel> labs = {random_label(4, 4, 7, rng), random_label(4, 4, 7, rng)};
    const double got = pab::part_attention_loss(att, labs, 0.1);
    CHECK(std::fabs(got - 1.945910149055313) < 1e-9);
    // Smoothing cannot change it: the weights sum to 1 per pixel.
    CHECK(std::fabs(pab::part_attention_loss(att, labs, 0.0) - std::log(7.0)) < 1e-12);
}

TEST_CASE("loss gradient wrt attention maps passes finite differences") {
    std::mt19937_64 rng(107);
    Tensor att = random_simplex(2, 5, 3, 3, rng);
    std::vector<ParsingLabel> labs = {random_label(3, 3, 5, rng), random_label(3, 3, 5, rng)};
    Tensor d;
    pab::part_attention_loss(att, labs, 0.1, &d);
    auto loss = [&] { return pab::part_attention_loss(att, labs, 0.1); };
    CHECK(fd::check_all(att.v, d.v, loss, 1e-6).worst_rel < 1e-6);
}

TEST_CASE("loss gradient wrt pre-softmax logits passes finite differences") {
    std::mt19937_64 rng(109);
    Tensor z(1, 7, 4, 4);
    fd::fill_uniform(z, rng, -1.5, 1.5);
    ParsingLabel lab = random_label(4, 4, 7, rng);

    Tensor y = pab::channel_softmax(z);
    Tensor d_att;
    pab::part_attention_loss(y, lab, 0.1, &d_att);
    Tensor dz = pab::channel_softmax_backward(y, d_att);

    auto loss = [&] { return pab::part_attention_loss(pab::channel_softmax(z), lab, 0.1); };
    CHECK(fd::check_all(z.v, dz.v, loss, 1e-4).worst_rel < 1e-3);
}

TEST_CASE("loss clamps vanishing probabilities and stays finite") {
    Tensor att(1, 3, 1, 2);
    // pixel 0: target channel has probability 0, pixel 1: healthy
    att.at(0, 0, 0, 0) = 0.0;
    att.at(0, 1, 0, 0) = 0.6;
    att.at(0, 2, 0, 0) = 0.4;
    att.at(0, 0, 0, 1) = 0.3;
    att.at(0, 1, 0, 1) = 0.5;
    att.at(0, 2, 0, 1) = 0.2;
    ParsingLabel lab(1, 2);
    lab.at(0, 0) = 0;
    lab.at(0, 1) = 1;
    Tensor d;
    const double loss = pab::part_attention_loss(att, lab, 0.1, &d);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(oracle_loss(att, {lab}, 0.1)).epsilon(1e-12));
    CHECK(d.at(0, 0, 0, 0) == 0.0);  // clamped probability gets no gradient
    CHECK(d.at(0, 1, 0, 1) < 0.0);   // target channel wants to grow
}

TEST_CASE("matching labels cost less than any permuted labeling") {
    std::mt19937_64 rng(113);
    const int classes = 4;
    Tensor att(1, classes, 4, 4);
    ParsingLabel lab(4, 4);
    // Concentrated attention: each pixel puts 0.85 on its own label channel.
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const int t = static_cast<int>(rng() % classes);
            lab.at(y, x) = static_cast<uint8_t>(t);
            for (int c = 0; c < classes; ++c)
                att.at(0, c, y, x) = c == t ? 0.85 : 0.15 / (classes - 1);
        }
    const double base = pab::part_attention_loss(att, lab, 0.1);

    std::vector<int> perm = {0, 1, 2, 3};
    int tried = 0;
    do {
        if (perm[0] == 0 && perm[1] == 1 && perm[2] == 2 && perm[3] == 3) continue;
        ParsingLabel shuffled(4, 4);
        for (int j = 0; j < 16; ++j) shuffled.v[j] = static_cast<uint8_t>(perm[lab.v[j]]);
        CHECK(pab::part_attention_loss(att, shuffled, 0.1) > base);
        ++tried;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(tried == 23);
}

TEST_CASE("loss input validation") {
    Tensor att(2, 3, 2, 2);
    att.fill(1.0 / 3.0);
    std::vector<ParsingLabel> labs = {ParsingLabel(2, 2)};
    CHECK_THROWS_AS(pab::part_attention_loss(att, labs, 0.1), pab::ConfigError);
    labs.push_back(ParsingLabel(2, 2));
    CHECK_THROWS_AS(pab::part_attention_loss(att, labs, -0.1), pab::ConfigError);
    CHECK_THROWS_AS(pab::part_attention_loss(att, labs, 1.0), pab::ConfigError);
    labs[1] = ParsingLabel(3, 2);
    CHECK_THROWS_AS(pab::part_attention_loss(att, labs, 0.1), pab::ConfigError);
    labs[1] = ParsingLabel(2, 2);
    labs[1].at(0, 0) = 3;  // channel count is 3, valid labels are 0..2
    CHECK_THROWS_AS(pab::part_attention_loss(att, labs, 0.1), pab::DataError);
}

TEST_CASE("visibility needs the part maximum to exceed the threshold strictly") {
    Tensor att(1, 4, 2, 2);  // 3 parts
    att.fill(0.1);
    att.at(0, 1, 0, 0) = 0.51;  // part 1 barely above
    att.at(0, 2, 1, 1) = 0.50;  // part 2 exactly at the threshold
    att.at(0, 3, 0, 1) = 0.49;  // part 3 below
    std::vector<uint8_t> vis = pab::visibility_scores(att, 0.5);
    REQUIRE(vis.size() == 3);
    CHECK(vis[0] == 1);
    CHECK(vis[1] == 0);
    CHECK(vis[2] == 0);

    CHECK_THROWS_AS(pab::visibility_scores(att, 0.0), pab::ConfigError);
    CHECK_THROWS_AS(pab::visibility_scores(att, 1.0), pab::ConfigError);
}

TEST_CASE("visibility count never grows as the threshold rises") {
    std::mt19937_64 rng(127);
    Tensor att = random_simplex(1, 7, 5, 4, rng);
    int prev = 7;
    for (double mu = 0.05; mu < 1.0; mu += 0.05) {
        std::vector<uint8_t> vis = pab::visibility_scores(att, mu);
        int count = 0;
        for (uint8_t b : vis) count += b;
        CHECK(count <= prev);
        prev = count;
    }
}

TEST_CASE("predictor emits a simplex over parts+1 channels") {
    std::mt19937_64 rng(131);
    for (const bool single : {false, true}) {
        AttentionPredictor pred(8, 6, 4, single);
        pred.init(rng);
        Tensor b(2, 8, 4, 3);
        fd::fill_uniform(b, rng);
        Tensor f = pred.forward(b, true, false);
        REQUIRE(f.n == 2);
        REQUIRE(f.c == 5);
        REQUIRE(f.h == 4);
        REQUIRE(f.w == 3);
        for (int i = 0; i < f.n; ++i)
            for (int y = 0; y < f.h; ++y)
                for (int x = 0; x < f.w; ++x) {
                    double s = 0.0;
                    for (int c = 0; c < f.c; ++c) {
                        CHECK(f.at(i, c, y, x) >= 0.0);
                        s += f.at(i, c, y, x);
                    }
                    CHECK(std::fabs(s - 1.0) < 1e-12);
                }
    }
}

TEST_CASE("zeroed second stage yields uniform attention") {
    AttentionPredictor pred(5, 4, 6);
    std::mt19937_64 rng(137);
    pred.init(rng);
    pred.conv2.weight.value.zero();
    pred.conv2.bias.value.zero();
    Tensor b(4, 5, 3, 3);
    fd::fill_uniform(b, rng);
    for (const bool train : {true, false}) {
        Tensor f = pred.forward(b, train, false);
        for (size_t i = 0; i < f.size(); ++i) CHECK(std::fabs(f.v[i] - 1.0 / 7.0) < 1e-12);
    }
}

TEST_CASE("predictor backward agrees with finite differences in eval mode") {
    std::mt19937_64 rng(139);
    AttentionPredictor pred(4, 5, 3);
    pred.init(rng);
    // Populated running stats so the eval path normalizes nontrivially.
    fd::fill_uniform(pred.bn1.running_mean, rng, -0.2, 0.2);
    fd::fill_uniform(pred.bn1.running_var, rng, 0.5, 1.5);
    fd::fill_uniform(pred.bn2.running_mean, rng, -0.2, 0.2);
    fd::fill_uniform(pred.bn2.running_var, rng, 0.5, 1.5);

    Tensor b(1, 4, 4, 3);
    fd::fill_uniform(b, rng);

    Tensor f = pred.forward(b, false, true);
    std::vector<pab::Param*> ps;
    pred.gather(ps);
    for (pab::Param* p : ps) p->zero_grad();
    Tensor w_att(f.n, f.c, f.h, f.w);
    fd::fill_uniform(w_att, rng);
    Tensor db = pred.backward(w_att);

    auto loss = [&] {
        Tensor out = pred.forward(b, false, false);
        double s = 0.0;
        for (size_t i = 0; i < out.size(); ++i) s += out.v[i] * w_att.v[i];
        return s;
    };
    CHECK(fd::check_all(b.v, db.v, loss, 1e-5).worst_rel < 1e-6);
    std::mt19937_64 sub(1);
    CHECK(fd::check_subset(pred.conv1.weight.value.v, pred.conv1.weight.grad.v, loss, 1e-5, 40,
                           sub)
              .worst_rel < 1e-6);
    CHECK(fd::check_subset(pred.conv2.weight.value.v, pred.conv2.weight.grad.v, loss, 1e-5, 40,
                           sub)
              .worst_rel < 1e-6);
}
