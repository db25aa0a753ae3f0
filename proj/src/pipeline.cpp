#include "wnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "wnet/metrics.hpp"
#include "wnet/ncut.hpp"

namespace fs = std::filesystem;

namespace wnet {

// ---- config ---------------------------------------------------------------

std::vector<double> EvalGrid::thresholds() const {
    if (tstep <= 0 || tmax < tmin) throw ParamError("eval grid: bad threshold range");
    std::vector<double> out;
    int count = static_cast<int>(std::round((tmax - tmin) / tstep)) + 1;
    for (int i = 0; i < count; ++i) out.push_back(tmin + i * tstep);
    return out;
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParamError("config: boolean expected for " + key + ", got '" + v + "'");
}

std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

std::string format_list(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(12);
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void PipelineConfig::apply_line(const std::string& raw, int lineno) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') return;
    auto eq = line.find('=');
    if (eq == std::string::npos)
        throw ParamError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));

    auto i = [&] { return std::stoi(val); };
    auto d = [&] { return std::stod(val); };
    auto b = [&] { return parse_bool(val, key); };
    auto u = [&] { return static_cast<std::uint64_t>(std::stoull(val)); };

    if (key == "wnet.input_size") wnet.input_size = i();
    else if (key == "wnet.k") wnet.k = i();
    else if (key == "wnet.depth") wnet.depth = i();
    else if (key == "wnet.base_channels") wnet.base_channels = i();
    else if (key == "wnet.in_channels") wnet.in_channels = i();
    else if (key == "wnet.separable") wnet.separable = b();
    else if (key == "wnet.batch_norm") wnet.batch_norm = b();
    else if (key == "wnet.dropout") wnet.dropout_p = d();
    else if (key == "wnet.dropout_is_keep") wnet.dropout_is_keep = b();
    else if (key == "train.batch_size") train.batch_size = i();
    else if (key == "train.lr_initial") train.lr_initial = d();
    else if (key == "train.lr_decay_every") train.lr_decay_every = i();
    else if (key == "train.lr_decay_factor") train.lr_decay_factor = d();
    else if (key == "train.max_iters") train.max_iters = i();
    else if (key == "train.seed") train.seed = u();
    else if (key == "train.ncut") train.ncut_enabled = b();
    else if (key == "affinity.sigma_i") affinity.sigma_i = d();
    else if (key == "affinity.sigma_x") affinity.sigma_x = d();
    else if (key == "affinity.radius") affinity.radius = d();
    else if (key == "crf.iterations") crf.iterations = i();
    else if (key == "crf.w_app") crf.w_app = d();
    else if (key == "crf.w_smooth") crf.w_smooth = d();
    else if (key == "crf.theta_alpha") crf.theta_alpha = d();
    else if (key == "crf.theta_beta") crf.theta_beta = d();
    else if (key == "crf.theta_gamma") crf.theta_gamma = d();
    else if (key == "crf.max_pixels") crf.max_pixels = i();
    else if (key == "cues.scales") cues.scales = parse_list(val);
    else if (key == "cues.orientations") cues.orientations = i();
    else if (key == "cues.bins") cues.bins = i();
    else if (key == "cues.beta") cues.beta = parse_list(val);
    else if (key == "cues.gamma") cues.gamma = d();
    else if (key == "cues.use_texture") cues.use_texture = b();
    else if (key == "cues.use_spb") cues.use_spb = b();
    else if (key == "cues.textons") cues.textons = i();
    else if (key == "cues.min_region_area") cues.min_region_area = i();
    else if (key == "cues.logistic_a") cues.logistic_a = d();
    else if (key == "cues.logistic_b") cues.logistic_b = d();
    else if (key == "eval.tmin") eval.tmin = d();
    else if (key == "eval.tmax") eval.tmax = d();
    else if (key == "eval.tstep") eval.tstep = d();
    else if (key == "synth.count") synth.count = i();
    else if (key == "synth.size") synth.size = i();
    else if (key == "synth.min_regions") synth.min_regions = i();
    else if (key == "synth.max_regions") synth.max_regions = i();
    else if (key == "synth.noise_sigma") synth.noise_sigma = d();
    else if (key == "synth.gradient") synth.gradient = d();
    else if (key == "synth.seed") synth.seed = u();
    else
        throw ParamError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    PipelineConfig cfg;
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) cfg.apply_line(line, ++lineno);
    return cfg;
}

std::string PipelineConfig::to_text() const {
    std::ostringstream os;
    os.precision(12);
    os << "wnet.input_size=" << wnet.input_size << "\n";
    os << "wnet.k=" << wnet.k << "\n";
    os << "wnet.depth=" << wnet.depth << "\n";
    os << "wnet.base_channels=" << wnet.base_channels << "\n";
    os << "wnet.in_channels=" << wnet.in_channels << "\n";
    os << "wnet.separable=" << (wnet.separable ? "true" : "false") << "\n";
    os << "wnet.batch_norm=" << (wnet.batch_norm ? "true" : "false") << "\n";
    os << "wnet.dropout=" << wnet.dropout_p << "\n";
    os << "wnet.dropout_is_keep=" << (wnet.dropout_is_keep ? "true" : "false") << "\n";
    os << "train.batch_size=" << train.batch_size << "\n";
    os << "train.lr_initial=" << train.lr_initial << "\n";
    os << "train.lr_decay_every=" << train.lr_decay_every << "\n";
    os << "train.lr_decay_factor=" << train.lr_decay_factor << "\n";
    os << "train.max_iters=" << train.max_iters << "\n";
    os << "train.seed=" << train.seed << "\n";
    os << "train.ncut=" << (train.ncut_enabled ? "true" : "false") << "\n";
    os << "affinity.sigma_i=" << affinity.sigma_i << "\n";
    os << "affinity.sigma_x=" << affinity.sigma_x << "\n";
    os << "affinity.radius=" << affinity.radius << "\n";
    os << "crf.iterations=" << crf.iterations << "\n";
    os << "crf.w_app=" << crf.w_app << "\n";
    os << "crf.w_smooth=" << crf.w_smooth << "\n";
    os << "crf.theta_alpha=" << crf.theta_alpha << "\n";
    os << "crf.theta_beta=" << crf.theta_beta << "\n";
    os << "crf.theta_gamma=" << crf.theta_gamma << "\n";
    os << "crf.max_pixels=" << crf.max_pixels << "\n";
    os << "cues.scales=" << format_list(cues.scales) << "\n";
    os << "cues.orientations=" << cues.orientations << "\n";
    os << "cues.bins=" << cues.bins << "\n";
    os << "cues.beta=" << format_list(cues.beta) << "\n";
    os << "cues.gamma=" << cues.gamma << "\n";
    os << "cues.use_texture=" << (cues.use_texture ? "true" : "false") << "\n";
    os << "cues.use_spb=" << (cues.use_spb ? "true" : "false") << "\n";
    os << "cues.textons=" << cues.textons << "\n";
    os << "cues.min_region_area=" << cues.min_region_area << "\n";
    os << "cues.logistic_a=" << cues.logistic_a << "\n";
    os << "cues.logistic_b=" << cues.logistic_b << "\n";
    os << "eval.tmin=" << eval.tmin << "\n";
    os << "eval.tmax=" << eval.tmax << "\n";
    os << "eval.tstep=" << eval.tstep << "\n";
    os << "synth.count=" << synth.count << "\n";
    os << "synth.size=" << synth.size << "\n";
    os << "synth.min_regions=" << synth.min_regions << "\n";
    os << "synth.max_regions=" << synth.max_regions << "\n";
    os << "synth.noise_sigma=" << synth.noise_sigma << "\n";
    os << "synth.gradient=" << synth.gradient << "\n";
    os << "synth.seed=" << synth.seed << "\n";
    return os.str();
}

void write_manifest(const std::string& dir, const PipelineConfig& cfg,
                    const std::vector<std::string>& inputs, const std::string& command) {
    std::ofstream f(fs::path(dir) / "manifest.txt");
    if (!f) throw FormatError("cannot write manifest in " + dir);
    f << "command=" << command << "\n";
    f << "config_hash=" << cfg.hash() << "\n";
    f << "train_seed=" << cfg.train.seed << "\n";
    f << "synth_seed=" << cfg.synth.seed << "\n";
    for (const auto& in : inputs) f << "input=" << in << "\n";
}

// ---- shared helpers ---------------------------------------------------------

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (name.size() >= ext.size() && name.compare(name.size() - ext.size(), ext.size(), ext) == 0)
            out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string path_stem(const std::string& path) { return fs::path(path).stem().string(); }

namespace {

// id = basename up to the first dot, so "img3.1.seg" and "img3.hier.txt"
// share the id "img3"
std::string id_of(const std::string& path) {
    std::string name = fs::path(path).filename().string();
    auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

ImageTensor adapt_channels(ImageTensor img, int want) {
    if (img.channels == want) return img;
    ImageTensor out(img.height, img.width, want);
    if (img.channels == 1 && want == 3) {
        for (int i = 0; i < img.pixels(); ++i)
            for (int c = 0; c < 3; ++c) out.data[3 * static_cast<size_t>(i) + c] = img.data[i];
        return out;
    }
    if (img.channels == 3 && want == 1) {
        for (int i = 0; i < img.pixels(); ++i)
            out.data[i] = (img.data[3 * static_cast<size_t>(i)] +
                           img.data[3 * static_cast<size_t>(i) + 1] +
                           img.data[3 * static_cast<size_t>(i) + 2]) /
                          3.0;
        return out;
    }
    throw DataError("cannot adapt image with " + std::to_string(img.channels) +
                    " channels to " + std::to_string(want));
}

std::vector<std::string> list_pnm(const std::string& dir) {
    std::vector<std::string> files;
    for (const char* ext : {".pgm", ".ppm", ".pnm"}) {
        auto part = list_files(dir, ext);
        files.insert(files.end(), part.begin(), part.end());
    }
    // ground-truth label maps living next to corpus images are not inputs
    std::erase_if(files, [](const std::string& f) {
        return f.size() > 7 && f.compare(f.size() - 7, 7, ".gt.pgm") == 0;
    });
    std::sort(files.begin(), files.end());
    return files;
}

ImageTensor load_network_input(const std::string& path, const WNetConfig& cfg) {
    ImageTensor img = load_pnm(path);
    img = adapt_channels(std::move(img), cfg.in_channels);
    return resize_bilinear(img, cfg.input_size, cfg.input_size);
}

void save_boundary_pgm(const BoundaryMap& b, const std::string& path) {
    ImageTensor img(b.height, b.width, 1);
    img.data = b.strength;
    save_pnm(img, path);
}

}  // namespace

// ---- train -------------------------------------------------------------------

void cmd_train(const PipelineConfig& cfg_in, const TrainOptions& opt) {
    PipelineConfig cfg = cfg_in;
    auto files = list_pnm(opt.image_dir);
    if (files.empty()) throw DataError("no PNM images in " + opt.image_dir);

    WNetModel<float> net;
    std::int64_t start_iter = 0;
    std::uint64_t rng_state = 0;
    bool resumed = false;
    if (!opt.resume.empty()) {
        auto ck = load_checkpoint<float>(opt.resume);
        net = std::move(ck.net);
        start_iter = ck.iter;
        rng_state = ck.rng_state;
        cfg.wnet = net.cfg;
        resumed = true;
    } else {
        Rng init_rng(cfg.train.seed ^ 0x77ee77ull);
        net.build(cfg.wnet, init_rng);
    }

    std::vector<ImageTensor> images;
    images.reserve(files.size());
    for (const auto& f : files) images.push_back(load_network_input(f, cfg.wnet));

    Trainer<float> trainer(std::move(net), cfg.train, cfg.affinity, std::move(images));
    if (resumed) {
        trainer.set_iter(static_cast<int>(start_iter));
        trainer.rng().set_state(rng_state);
    }
    if (!opt.dump_affinity.empty()) dump_affinity(trainer.affinity(0), opt.dump_affinity);

    fs::create_directories(opt.out_dir);
    trainer.run();

    save_checkpoint(trainer.net(), trainer.iter(), trainer.rng().state(),
                    (fs::path(opt.out_dir) / "checkpoint.wnck").string());
    bool append = resumed && fs::exists(fs::path(opt.out_dir) / "trace.csv");
    write_trace_csv((fs::path(opt.out_dir) / "trace.csv").string(), trainer.trace(), append);
    write_manifest(opt.out_dir, cfg, files, "train");
    std::cout << "trained to iteration " << trainer.iter() << ", checkpoint in " << opt.out_dir
              << "\n";
}

// ---- segment ------------------------------------------------------------------

void cmd_segment(const PipelineConfig& cfg, const SegmentOptions& opt) {
    const std::string stage = opt.stage;
    if (stage != "encode" && stage != "crf" && stage != "cues" && stage != "ucm" &&
        stage != "full")
        throw ParamError("segment: unknown stage '" + stage + "'");

    auto ck = load_checkpoint<float>(opt.checkpoint);
    WNetModel<float>& net = ck.net;

    ImageTensor original = load_pnm(opt.image);
    const int oh = original.height, ow = original.width;
    ImageTensor img = adapt_channels(original, net.cfg.in_channels);
    img = resize_bilinear(img, net.cfg.input_size, net.cfg.input_size);

    fs::create_directories(opt.out_dir);
    const std::string stem = path_stem(opt.image);
    auto out = [&](const std::string& suffix) {
        return (fs::path(opt.out_dir) / (stem + suffix)).string();
    };

    Tensor4<float> x = image_to_tensor<float>(img);
    Tensor4<float> pt = net.forward_encode(x, false, nullptr);
    SoftSegmentation p = tensor_to_soft_seg(pt, 0);
    LabelMap enc_labels = argmax_labels(p);
    save_label_map(upsample_nearest(enc_labels, oh, ow), out(".enc_argmax.pgm"));
    write_manifest(opt.out_dir, cfg, {opt.image, opt.checkpoint}, "segment " + stem);
    if (stage == "encode") return;

    SoftSegmentation q = mean_field(p, img, cfg.crf);
    if (opt.dump_q) save_prob_field(q, out(".q.wqdf"));
    LabelMap crf_labels = crf_argmax(q);
    save_label_map(upsample_nearest(crf_labels, oh, ow), out(".crf_argmax.pgm"));

    // red boundary overlay on the original image
    {
        ImageTensor rgb = adapt_channels(original, 3);
        LabelMap big = upsample_nearest(crf_labels, oh, ow);
        auto mask = boundary_mask(big);
        for (int i = 0; i < big.pixels(); ++i)
            if (mask[i]) {
                rgb.data[3 * static_cast<size_t>(i)] = 1.0;
                rgb.data[3 * static_cast<size_t>(i) + 1] = 0.0;
                rgb.data[3 * static_cast<size_t>(i) + 2] = 0.0;
            }
        save_pnm(rgb, out(".overlay.ppm"));
    }
    if (stage == "crf") return;

    LabelMap regions = initial_regions(crf_labels, cfg.cues.min_region_area);
    save_label_map(regions, out(".regions.pgm"));
    BoundaryMap cue = local_cues(img, regions, cfg.cues);
    save_ucm(cue, out(".cues.wucm"));
    save_boundary_pgm(cue, out(".cues.pgm"));
    if (stage == "cues") return;

    UcmHierarchy h = build_ucm(regions, cue);
    save_ucm(h.ucm, out(".ucm.wucm"));
    save_boundary_pgm(h.ucm, out(".ucm.pgm"));
    save_merge_list(h.merges, out(".hier.txt"));

    for (double t : opt.thresholds) {
        LabelMap seg = threshold_ucm(h, t);
        char buf[32];
        std::snprintf(buf, sizeof(buf), ".seg_t%.2f.pgm", t);
        save_label_map(upsample_nearest(seg, oh, ow), out(buf));
    }
    std::cout << "segmented " << stem << ": " << (h.initial.max_label() + 1)
              << " initial regions, " << h.merges.size() << " merges\n";
}

// ---- eval ---------------------------------------------------------------------

namespace {

std::vector<LabelMap> load_ground_truth(const std::string& gt_dir, const std::string& id) {
    std::vector<LabelMap> gts;
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(gt_dir)) {
        if (!e.is_regular_file()) continue;
        if (id_of(e.path().string()) == id) names.push_back(e.path().string());
    }
    std::sort(names.begin(), names.end());
    for (const auto& f : names) {
        if (f.size() > 4 && f.compare(f.size() - 4, 4, ".seg") == 0)
            gts.push_back(load_bsds_seg(f));
        else if (f.size() > 4 && f.compare(f.size() - 4, 4, ".pgm") == 0)
            gts.push_back(load_label_map(f));
    }
    return gts;
}

LabelMap fit_to(const LabelMap& seg, int h, int w) {
    return (seg.height == h && seg.width == w) ? seg : upsample_nearest(seg, h, w);
}

}  // namespace

void cmd_eval(const PipelineConfig& cfg, const EvalOptions& opt) {
    auto hier_files = list_files(opt.pred_dir, ".hier.txt");
    std::vector<EvalRecord> records;
    std::vector<std::string> missing;
    auto grid = cfg.eval.thresholds();

    if (!hier_files.empty()) {
        for (const auto& hf : hier_files) {
            const std::string id = id_of(hf);
            auto gts = load_ground_truth(opt.gt_dir, id);
            if (gts.empty()) {
                missing.push_back(id);
                continue;
            }
            UcmHierarchy h;
            h.initial = load_label_map((fs::path(opt.pred_dir) / (id + ".regions.pgm")).string());
            h.merges = load_merge_list(hf);
            EvalRecord rec;
            rec.id = id;
            rec.thresholds = grid;
            rec.gt_count = static_cast<int>(gts.size());
            for (double t : grid) {
                LabelMap seg = fit_to(threshold_ucm(h, t), gts[0].height, gts[0].width);
                rec.sc.push_back(segmentation_covering(seg, gts));
                rec.pri.push_back(probabilistic_rand(seg, gts));
                rec.vi.push_back(variation_of_information(seg, gts));
            }
            records.push_back(std::move(rec));
        }
    } else {
        auto flat = list_files(opt.pred_dir, ".pgm");
        if (flat.empty()) throw DataError("no predictions (*.hier.txt or *.pgm) in " + opt.pred_dir);
        for (const auto& pf : flat) {
            const std::string id = id_of(pf);
            auto gts = load_ground_truth(opt.gt_dir, id);
            if (gts.empty()) {
                missing.push_back(id);
                continue;
            }
            LabelMap seg = fit_to(load_label_map(pf), gts[0].height, gts[0].width);
            EvalRecord rec;
            rec.id = id;
            rec.thresholds = {0.0};
            rec.gt_count = static_cast<int>(gts.size());
            rec.sc.push_back(segmentation_covering(seg, gts));
            rec.pri.push_back(probabilistic_rand(seg, gts));
            rec.vi.push_back(variation_of_information(seg, gts));
            records.push_back(std::move(rec));
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw DataError("missing ground truth for: " + list);
    }
    if (records.empty()) throw DataError("nothing evaluated");

    fs::create_directories(opt.out_dir);
    write_report_csv((fs::path(opt.out_dir) / "report.csv").string(), records);
    OdsOisSummary summary = ods_ois(records);
    std::string table = summary_table(summary);
    std::ofstream sf(fs::path(opt.out_dir) / "summary.txt");
    sf << table;
    write_manifest(opt.out_dir, cfg, {opt.pred_dir, opt.gt_dir}, "eval");
    std::cout << table;
}

// ---- synth --------------------------------------------------------------------

void cmd_synth(const PipelineConfig& cfg, const std::string& out_dir) {
    const SynthConfig& sc = cfg.synth;
    if (sc.count < 1 || sc.size < 8 || sc.min_regions < 1 || sc.max_regions < sc.min_regions)
        throw ParamError("synth: invalid corpus parameters");
    fs::create_directories(out_dir);
    Rng rng(sc.seed);

    // saturated, well separated palette
    const double palette[8][3] = {{0.90, 0.10, 0.10}, {0.10, 0.80, 0.15}, {0.15, 0.20, 0.90},
                                  {0.95, 0.85, 0.10}, {0.85, 0.15, 0.85}, {0.10, 0.85, 0.85},
                                  {0.95, 0.55, 0.10}, {0.30, 0.18, 0.05}};

    std::vector<std::string> written;
    for (int idx = 0; idx < sc.count; ++idx) {
        const int n = sc.size;
        int regions = sc.min_regions + rng.next_int(sc.max_regions - sc.min_regions + 1);

        // shuffled colour assignment
        int order[8] = {0, 1, 2, 3, 4, 5, 6, 7};
        for (int i = 7; i > 0; --i) std::swap(order[i], order[rng.next_int(i + 1)]);

        // Voronoi seeds with a minimum separation
        std::vector<std::pair<int, int>> seeds;
        while (static_cast<int>(seeds.size()) < regions) {
            int sy = rng.next_int(n), sx = rng.next_int(n);
            bool ok = true;
            for (auto [py, px] : seeds) {
                int d2 = (py - sy) * (py - sy) + (px - sx) * (px - sx);
                if (d2 < (n / 4) * (n / 4)) {
                    ok = false;
                    break;
                }
            }
            if (ok || seeds.size() > 50) seeds.emplace_back(sy, sx);
        }

        LabelMap gt(n, n);
        ImageTensor img(n, n, 3);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                int best = 0;
                long bd = static_cast<long>(y - seeds[0].first) * (y - seeds[0].first) +
                          static_cast<long>(x - seeds[0].second) * (x - seeds[0].second);
                for (int s = 1; s < regions; ++s) {
                    long d = static_cast<long>(y - seeds[s].first) * (y - seeds[s].first) +
                             static_cast<long>(x - seeds[s].second) * (x - seeds[s].second);
                    if (d < bd) {
                        bd = d;
                        best = s;
                    }
                }
                gt.at(y, x) = best;
                double shade = 1.0 - sc.gradient + sc.gradient * (static_cast<double>(x) / (n - 1));
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = palette[order[best]][c] * shade;
            }
        // noise, clamp, 8-bit quantization so PPM round-trips are exact
        for (auto& v : img.data) {
            if (sc.noise_sigma > 0) v += sc.noise_sigma * rng.normal();
            v = std::clamp(v, 0.0, 1.0);
            v = std::round(v * 255.0) / 255.0;
        }

        char stem[32];
        std::snprintf(stem, sizeof(stem), "img%03d", idx);
        std::string base = (fs::path(out_dir) / stem).string();
        save_pnm(img, base + ".ppm");
        save_label_map(gt, base + ".gt.pgm");
        std::ofstream side(base + ".txt");
        side << "regions=" << regions << "\n";
        side << "seeds=";
        for (size_t s = 0; s < seeds.size(); ++s)
            side << (s ? ";" : "") << seeds[s].second << "," << seeds[s].first;
        side << "\ncolors=";
        for (int s = 0; s < regions; ++s)
            side << (s ? ";" : "") << palette[order[s]][0] << "," << palette[order[s]][1] << ","
                 << palette[order[s]][2];
        side << "\nnoise_sigma=" << sc.noise_sigma << "\n";
        side << "gradient=" << sc.gradient << "\n";
        written.push_back(std::string(stem) + ".ppm");
    }
    write_manifest(out_dir, cfg, written, "synth");
    std::cout << "wrote " << sc.count << " synthetic images to " << out_dir << "\n";
}

}  // namespace wnet
