// Unsupervised segmentation pipeline CLI: train / segment / eval / synth.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure.

#include <CLI11.hpp>
#include <iostream>

#include "wnet/pipeline.hpp"

using namespace wnet;

int main(int argc, char** argv) {
    CLI::App app{"W-Net style unsupervised segmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key=value configuration file");
    app.add_option("--set", overrides, "inline config override, e.g. --set train.seed=3");

    auto* train = app.add_subcommand("train", "train a model on a directory of PNM images");
    TrainOptions topt;
    train->add_option("images", topt.image_dir, "directory of PGM/PPM images")->required();
    train->add_option("-o,--out", topt.out_dir, "run directory")->required();
    train->add_option("--resume", topt.resume, "checkpoint to continue from");
    train->add_option("--dump-affinity", topt.dump_affinity,
                      "write the first image's affinity triples to this path");

    auto* segment = app.add_subcommand("segment", "run the postprocessing chain on one image");
    SegmentOptions sopt;
    segment->add_option("checkpoint", sopt.checkpoint, "trained checkpoint")->required();
    segment->add_option("image", sopt.image, "input PGM/PPM image")->required();
    segment->add_option("-o,--out", sopt.out_dir, "output directory")->required();
    segment->add_option("--stage", sopt.stage, "stop after: encode|crf|cues|ucm|full");
    segment->add_option("--thresholds", sopt.thresholds,
                        "hierarchy thresholds to emit as label maps");
    segment->add_flag("--dump-q", sopt.dump_q, "dump the CRF posterior field");

    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    EvalOptions eopt;
    eval->add_option("predictions", eopt.pred_dir, "directory of hierarchies or label maps")
        ->required();
    eval->add_option("truth", eopt.gt_dir, "directory of .seg / label-map ground truth")
        ->required();
    eval->add_option("-o,--out", eopt.out_dir, "report directory")->required();

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with ground truth");
    std::string synth_out;
    synth->add_option("-o,--out", synth_out, "corpus directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = PipelineConfig::load(config_path);
        for (size_t i = 0; i < overrides.size(); ++i)
            cfg.apply_line(overrides[i], static_cast<int>(i + 1));

        if (train->parsed()) cmd_train(cfg, topt);
        if (segment->parsed()) cmd_segment(cfg, sopt);
        if (eval->parsed()) cmd_eval(cfg, eopt);
        if (synth->parsed()) cmd_synth(cfg, synth_out);
        return 0;
    } catch (const ParamError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
