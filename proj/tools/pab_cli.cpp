#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pab/engine.hpp"
#include "pab/image_io.hpp"
#include "pab/losses.hpp"

namespace {

// Rebuilds the model a checkpoint was trained with; the data dir supplies the
// identity count the classifier heads were sized for.
pab::PabModel model_from_checkpoint(const std::string& checkpoint,
                                    const pab::DatasetSplits& data,
                                    pab::TrainConfig* cfg_out) {
    const std::string cfg_json = pab::checkpoint_config(checkpoint);
    pab::TrainConfig cfg = pab::parse_train_config(cfg_json);
    int num_ids = 0;
    pab::class_index_map(data.train, &num_ids);
    pab::PabModel model(pab::model_config_from(cfg, num_ids));
    pab::Adam adam;
    std::vector<pab::Param*> params;
    model.gather(params);
    adam.reset(params);
    std::mt19937_64 rng;
    pab::load_checkpoint(checkpoint, model, adam, cfg_json, rng);
    if (cfg_out) *cfg_out = cfg;
    return model;
}

const double kPartColors[7][3] = {
    {0.0, 0.0, 0.0},  // background keeps the source pixel
    {0.9, 0.2, 0.2}, {0.2, 0.9, 0.2}, {0.2, 0.4, 0.9},
    {0.9, 0.9, 0.2}, {0.9, 0.2, 0.9}, {0.2, 0.9, 0.9},
};

int run_visualize(const std::string& checkpoint, const std::string& data_dir,
                  const std::string& split_name, int sample_idx, const std::string& out_dir) {
    pab::DatasetSplits data = pab::import_dataset(data_dir);
    const std::vector<pab::Sample>* split = &data.query;
    if (split_name == "train") split = &data.train;
    else if (split_name == "gallery") split = &data.gallery;
    else if (split_name != "query") throw pab::ConfigError("unknown split " + split_name);
    if (sample_idx < 0 || sample_idx >= static_cast<int>(split->size()))
        throw pab::ConfigError("sample index out of range");

    pab::PabModel model = model_from_checkpoint(checkpoint, data, nullptr);
    const pab::Sample& s = (*split)[sample_idx];
    pab::PabModel::ForwardState st = model.forward(s.image, false, false);

    std::filesystem::create_directories(out_dir);
    for (int c = 0; c < st.attention.c; ++c) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s/channel_%d.pgm", out_dir.c_str(), c);
        pab::write_pgm(name, st.attention.h, st.attention.w, st.attention.plane(0, c));
    }

    // Argmax overlay at image resolution: part color blended over the input.
    const int ih = s.image.h, iw = s.image.w;
    const int fy = ih / st.attention.h, fx = iw / st.attention.w;
    std::vector<double> r(ih * iw), g(ih * iw), b(ih * iw);
    for (int y = 0; y < ih; ++y)
        for (int x = 0; x < iw; ++x) {
            int best = 0;
            double best_v = st.attention.at(0, 0, y / fy, x / fx);
            for (int c = 1; c < st.attention.c; ++c) {
                const double v = st.attention.at(0, c, y / fy, x / fx);
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            const double mixes = best == 0 ? 0.0 : 0.5;
            const size_t j = static_cast<size_t>(y) * iw + x;
            r[j] = (1 - mixes) * s.image.at(0, 0, y, x) + mixes * kPartColors[best][0];
            g[j] = (1 - mixes) * s.image.at(0, 1, y, x) + mixes * kPartColors[best][1];
            b[j] = (1 - mixes) * s.image.at(0, 2, y, x) + mixes * kPartColors[best][2];
        }
    pab::write_ppm(out_dir + "/argmax_overlay.ppm", ih, iw, r.data(), g.data(), b.data());
    std::cout << "wrote " << st.attention.c << " channel maps and argmax_overlay.ppm to "
              << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"part-attention re-identification workbench"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, checkpoint, report_path, resume_path;
    std::string split_name = "query", variants_csv = "full";
    int sample_idx = 0;

    auto* gen = app.add_subcommand("generate-data", "render a synthetic dataset");
    gen->add_option("--config", config_path, "data config JSON")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config_path, "train config JSON")->required();
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->add_option("--resume", resume_path, "checkpoint to continue from");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--report", report_path, "report JSON path")->required();

    auto* vis = app.add_subcommand("visualize-attention", "dump attention maps for a sample");
    vis->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    vis->add_option("--data", data_dir, "dataset directory")->required();
    vis->add_option("--sample", sample_idx, "sample index")->required();
    vis->add_option("--split", split_name, "train|query|gallery (default query)");
    vis->add_option("--out", out_dir, "output directory")->required();

    auto* ab = app.add_subcommand("ablate", "train and compare variants");
    ab->add_option("--config", config_path, "train config JSON")->required();
    ab->add_option("--data", data_dir, "dataset directory")->required();
    ab->add_option("--variants", variants_csv, "comma-separated variant list")->required();
    ab->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            pab::DataConfig cfg = pab::load_data_config(config_path);
            pab::DatasetSplits splits = pab::make_splits(cfg);
            pab::export_dataset(splits, cfg, out_dir);
            std::cout << "wrote " << splits.train.size() << " train / " << splits.query.size()
                      << " query / " << splits.gallery.size() << " gallery samples to "
                      << out_dir << "\n";
        } else if (tr->parsed()) {
            pab::TrainConfig cfg = pab::load_train_config(config_path);
            pab::DatasetSplits data = pab::import_dataset(data_dir);
            pab::TrainResult res = pab::train(cfg, data, out_dir, resume_path);
            if (res.epochs_run == 0 && !resume_path.empty())
                std::cout << "checkpoint already covers all " << cfg.epochs
                          << " epochs, nothing to train\n";
            else
                std::cout << pab::report_to_json(res.final_eval) << "\n";
            std::cout << "checkpoint: " << res.checkpoint_path << "\n";
        } else if (ev->parsed()) {
            pab::DatasetSplits data = pab::import_dataset(data_dir);
            pab::PabModel model = model_from_checkpoint(checkpoint, data, nullptr);
            pab::EvalReport rep = pab::evaluate(model, data);
            const std::string json = pab::report_to_json(rep);
            std::ofstream f(report_path);
            if (!f) throw pab::DataError("cannot write " + report_path);
            f << json << "\n";
            std::cout << json << "\n";
        } else if (vis->parsed()) {
            return run_visualize(checkpoint, data_dir, split_name, sample_idx, out_dir);
        } else if (ab->parsed()) {
            pab::TrainConfig cfg = pab::load_train_config(config_path);
            pab::DatasetSplits data = pab::import_dataset(data_dir);
            std::vector<std::string> variants;
            std::string cur;
            for (char ch : variants_csv + ",") {
                if (ch == ',') {
                    if (!cur.empty()) variants.push_back(cur);
                    cur.clear();
                } else {
                    cur += ch;
                }
            }
            pab::AblationReport rep = pab::ablate(cfg, data, variants, out_dir);
            std::printf("%-22s %8s %8s\n", "variant", "rank-1", "mAP");
            for (const pab::AblationRow& row : rep.rows)
                std::printf("%-22s %8.4f %8.4f\n", row.name.c_str(), row.rank1, row.mean_ap);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
