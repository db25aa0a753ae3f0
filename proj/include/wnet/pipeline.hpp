#pragma once

// Command-line orchestration: plain key=value configuration covering every
// module, run directories with manifests, and the four commands
// (train / segment / eval / synth). Unknown configuration keys are rejected;
// every key has a default (see PipelineConfig::to_text for the canonical
// list, or the README).

#include <string>
#include <vector>

#include "wnet/affinity.hpp"
#include "wnet/contour.hpp"
#include "wnet/crf.hpp"
#include "wnet/net.hpp"
#include "wnet/train.hpp"

namespace wnet {

struct SynthConfig {
    int count = 20;
    int size = 64;
    int min_regions = 2;
    int max_regions = 4;
    double noise_sigma = 0.02;
    double gradient = 0.0;  // per-region shading ramp amplitude
    std::uint64_t seed = 7;
};

struct EvalGrid {
    double tmin = 0.0;
    double tmax = 1.0;
    double tstep = 0.05;

    std::vector<double> thresholds() const;
};

struct PipelineConfig {
    WNetConfig wnet;
    TrainConfig train;
    AffinityParams affinity;
    CrfParams crf;
    CueParams cues;
    EvalGrid eval;
    SynthConfig synth;

    static PipelineConfig load(const std::string& path);      // defaults + overrides
    void apply_line(const std::string& line, int lineno);     // one key=value
    std::string to_text() const;                              // canonical dump
    std::uint64_t hash() const { return fnv1a(to_text()); }
};

// Writes inputs, config hash and seed into <dir>/manifest.txt.
void write_manifest(const std::string& dir, const PipelineConfig& cfg,
                    const std::vector<std::string>& inputs, const std::string& command);

// ---- commands (CLI wiring lives in tools/) ----------------------------------

struct TrainOptions {
    std::string image_dir;
    std::string out_dir;
    std::string resume;          // checkpoint path, empty = fresh start
    std::string dump_affinity;   // path for the first image's affinity dump
};
void cmd_train(const PipelineConfig& cfg, const TrainOptions& opt);

struct SegmentOptions {
    std::string checkpoint;
    std::string image;
    std::string out_dir;
    std::string stage = "full";        // encode | crf | cues | ucm | full
    std::vector<double> thresholds;    // segmentations to emit (may be empty)
    bool dump_q = false;
};
void cmd_segment(const PipelineConfig& cfg, const SegmentOptions& opt);

struct EvalOptions {
    std::string pred_dir;  // *.hier.txt + *.regions.pgm, or flat *.pgm label maps
    std::string gt_dir;    // <id>*.seg and/or <id>*.pgm per image
    std::string out_dir;
};
void cmd_eval(const PipelineConfig& cfg, const EvalOptions& opt);

void cmd_synth(const PipelineConfig& cfg, const std::string& out_dir);

// Shared helpers.
std::vector<std::string> list_files(const std::string& dir, const std::string& ext);
std::string path_stem(const std::string& path);

}  // namespace wnet
