// Command-line front end: synthetic dataset generation, detector training,
// inference and CSV reporting. Exit codes: 0 success, 1 usage error, 2 data
// or processing error.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cascadedet/ap_oracle.hpp"
#include "cascadedet/cascade.hpp"
#include "cascadedet/dataset.hpp"
#include "cascadedet/eval.hpp"
#include "cascadedet/serialize.hpp"

namespace {

using namespace cascadedet;

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(std::stod(item));
        }
    }
    return out;
}

DatasetConfig dataset_config_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open: " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }

    DatasetConfig cfg;
    const std::vector<std::string> known = {
        "n_images",      "n_classes",   "gts_per_image",      "proposals_per_gt",
        "background_per_image",         "jitter_center_std",  "jitter_logsize_std",
        "image_width",   "image_height", "min_gt_size",       "max_gt_size",
        "seed"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            std::cerr << "warning: " << path << ": ignoring unknown field '" << key << "'\n";
        }
    }
    if (j.contains("n_images")) cfg.n_images = j["n_images"].get<int>();
    if (j.contains("n_classes")) cfg.n_classes = j["n_classes"].get<int>();
    if (j.contains("gts_per_image")) {
        const auto& r = j["gts_per_image"];
        if (!r.is_array() || r.size() != 2) {
            throw std::runtime_error(path + ": gts_per_image must be [min, max]");
        }
        cfg.min_gts_per_image = r[0].get<int>();
        cfg.max_gts_per_image = r[1].get<int>();
    }
    if (j.contains("proposals_per_gt")) cfg.proposals_per_gt = j["proposals_per_gt"].get<int>();
    if (j.contains("background_per_image")) {
        cfg.background_per_image = j["background_per_image"].get<int>();
    }
    if (j.contains("jitter_center_std")) {
        cfg.jitter_center_std = j["jitter_center_std"].get<double>();
    }
    if (j.contains("jitter_logsize_std")) {
        cfg.jitter_logsize_std = j["jitter_logsize_std"].get<double>();
    }
    if (j.contains("image_width")) cfg.image_width = j["image_width"].get<double>();
    if (j.contains("image_height")) cfg.image_height = j["image_height"].get<double>();
    if (j.contains("min_gt_size")) cfg.min_gt_size = j["min_gt_size"].get<double>();
    if (j.contains("max_gt_size")) cfg.max_gt_size = j["max_gt_size"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    return cfg;
}

std::vector<Scene> load_scenes(const std::string& path, int skip, int limit) {
    std::vector<Scene> scenes = load_dataset(path);
    if (skip > 0) {
        scenes.erase(scenes.begin(),
                     scenes.begin() + std::min<std::size_t>(scenes.size(),
                                                            static_cast<std::size_t>(skip)));
    }
    if (limit >= 0 && static_cast<std::size_t>(limit) < scenes.size()) {
        scenes.resize(static_cast<std::size_t>(limit));
    }
    return scenes;
}

int max_class_id(const std::vector<Scene>& scenes) {
    int m = 1;
    for (const Scene& s : scenes) {
        for (const GroundTruth& gt : s.gts) {
            m = std::max(m, gt.class_id);
        }
    }
    return m;
}

struct GenArgs {
    std::string config_path;
    std::string out_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_gen(const GenArgs& a) {
    DatasetConfig cfg;
    if (!a.config_path.empty()) {
        cfg = dataset_config_from_file(a.config_path);
    }
    if (a.seed_set) {
        cfg.seed = a.seed;
    }
    save_dataset(generate_dataset(cfg), a.out_path);
    return 0;
}

struct TrainArgs {
    std::string data_path;
    std::string out_path;
    std::string mode = "cascade";
    std::string ious = "0.5,0.6,0.7";
    int stages = 3;
    bool no_iou_up = false;
    bool no_stat = false;
    std::uint64_t seed = 42;
    int limit = -1;
};

int run_train(const TrainArgs& a) {
    const std::vector<Scene> scenes = load_scenes(a.data_path, 0, a.limit);
    if (scenes.empty()) {
        throw std::runtime_error("train: no scenes in " + a.data_path);
    }
    const std::vector<double> ious = parse_double_list(a.ious);
    if (ious.empty()) {
        throw std::runtime_error("train: --ious must list at least one threshold");
    }

    TrainConfig cfg;
    cfg.increasing_thresholds = !a.no_iou_up;
    cfg.sequential_stats = !a.no_stat;
    cfg.seed = a.seed;
    cfg.features.seed = a.seed;
    cfg.n_classes = max_class_id(scenes);

    if (a.mode == "baseline") {
        cfg.mode = DetectorMode::cascade;
        cfg.thresholds = {ious.front()};
    } else {
        cfg.mode = detector_mode_from_string(a.mode);
        if (cfg.mode == DetectorMode::iterative) {
            cfg.thresholds = {ious.front()};
            cfg.iterations = a.stages;
        } else {
            cfg.thresholds = ious;
            if (a.stages != static_cast<int>(ious.size())) {
                throw std::runtime_error("train: --stages must match the number of --ious");
            }
        }
    }

    save_model(train_detector(scenes, cfg), a.out_path);
    return 0;
}

struct InferArgs {
    std::string model_path;
    std::string data_path;
    std::string out_path;
    bool ensemble = false;
    bool add_gt = false;
    int skip = 0;
};

int run_infer(const InferArgs& a) {
    const CascadeModel model = load_model(a.model_path);
    const std::vector<Scene> scenes = load_scenes(a.data_path, a.skip, -1);
    InferOptions opts;
    opts.ensemble = a.ensemble;
    opts.add_gt = a.add_gt;
    std::vector<Detection> dets;
    for (const Scene& s : scenes) {
        auto scene_dets = infer_scene(model, s, opts);
        dets.insert(dets.end(), scene_dets.begin(), scene_dets.end());
    }
    save_detections(dets, a.out_path);
    return 0;
}

struct EvalArgs {
    std::string dets_path;
    std::string data_path;
    std::string out_path;
    int skip = 0;
};

int run_eval(const EvalArgs& a) {
    const std::vector<Detection> dets = load_detections(a.dets_path);
    const std::vector<Scene> scenes = load_scenes(a.data_path, a.skip, -1);
    write_ap_csv(coco_ap(dets, scenes), a.out_path);
    return 0;
}

struct ReportArgs {
    std::string model_path;
    std::string data_path;
    std::string out_path;
    int skip = 0;
};

int run_report(const ReportArgs& a) {
    const CascadeModel model = load_model(a.model_path);
    if (model.mode != DetectorMode::cascade) {
        throw std::runtime_error("report: requires a cascade-mode model");
    }
    const std::vector<Scene> scenes = load_scenes(a.data_path, a.skip, -1);
    write_stage_report_csv(stage_report(model, scenes), a.out_path);
    return 0;
}

struct HistArgs {
    std::string data_path;
    std::string out_path;
    std::string model_path;
    std::string fractions_path;
    std::string thresholds = "0.5,0.6,0.7";
    double bin_width = 0.05;
    int stage = 1;
    int skip = 0;
};

int run_hist(const HistArgs& a) {
    if (a.stage < 1) {
        throw std::runtime_error("hist: --stage must be >= 1");
    }
    const std::vector<Scene> scenes = load_scenes(a.data_path, a.skip, -1);
    CascadeModel model;
    if (a.stage > 1) {
        if (a.model_path.empty()) {
            throw std::runtime_error("hist: --stage > 1 requires --model");
        }
        model = load_model(a.model_path);
        if (a.stage > static_cast<int>(model.stages.size())) {
            throw std::runtime_error("hist: model has no stage " + std::to_string(a.stage));
        }
    }

    std::vector<LabeledSample> samples;
    for (const Scene& scene : scenes) {
        std::vector<Box> boxes = scene.proposals;
        for (int t = 0; t + 1 < a.stage; ++t) {
            const StageModel& st = model.stages[static_cast<std::size_t>(t)];
            for (Box& b : boxes) {
                const FeatureVector f = featurize(b, scene, model.features);
                b = clip_box(decode_delta(b, predict_delta(st, f)), scene.width, scene.height);
            }
        }
        auto labeled = match_and_label(boxes, scene.gts, 0.5);
        samples.insert(samples.end(), labeled.begin(), labeled.end());
    }

    const IouHistogram hist =
        iou_histogram(samples, a.bin_width, parse_double_list(a.thresholds));
    write_histogram_csv(hist, a.out_path);
    if (!a.fractions_path.empty()) {
        write_fractions_csv(hist, a.fractions_path);
    }
    for (std::size_t i = 0; i < hist.thresholds.size(); ++i) {
        std::cout << "iou >= " << hist.thresholds[i] << ": "
                  << 100.0 * hist.fraction_at_or_above[i] << "%\n";
    }
    return 0;
}

struct CurveArgs {
    std::string model_path;
    std::string data_path;
    std::string out_path;
    double bin_width = 0.05;
    int stage = 1;
    int skip = 0;
};

int run_curve(const CurveArgs& a) {
    const CascadeModel model = load_model(a.model_path);
    if (a.stage < 1 || a.stage > static_cast<int>(model.stages.size())) {
        throw std::runtime_error("curve: model has no stage " + std::to_string(a.stage));
    }
    const std::vector<Scene> scenes = load_scenes(a.data_path, a.skip, -1);
    const auto bins = localization_curve(model.stages[static_cast<std::size_t>(a.stage - 1)],
                                         model.features, scenes, a.bin_width);
    write_curve_csv(bins, a.out_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-stage box-refinement detector on synthetic scenes"};
    app.require_subcommand(1);

    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    gen->add_option("--config", gen_args.config_path, "Dataset config JSON");
    gen->add_option("--out", gen_args.out_path, "Output JSONL path")->required();
    auto* gen_seed = gen->add_option("--seed", gen_args.seed, "Random seed (default 42)");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a detector");
    train->add_option("--data", train_args.data_path, "Dataset JSONL")->required();
    train->add_option("--stages", train_args.stages, "Stage count (iterations for iterative)");
    train->add_option("--ious", train_args.ious, "Comma-separated IoU thresholds");
    train->add_flag("--no-iou-up", train_args.no_iou_up, "Label every stage at the first IoU");
    train->add_flag("--no-stat", train_args.no_stat, "Identity delta normalization");
    train->add_option("--mode", train_args.mode, "cascade|iterative|integral|baseline")
        ->check(CLI::IsMember({"cascade", "iterative", "integral", "baseline"}));
    train->add_option("--seed", train_args.seed, "Random seed");
    train->add_option("--limit", train_args.limit, "Use only the first N scenes");
    train->add_option("--out", train_args.out_path, "Output model JSON")->required();

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Run inference");
    infer->add_option("--model", infer_args.model_path, "Model JSON")->required();
    infer->add_option("--data", infer_args.data_path, "Dataset JSONL")->required();
    infer->add_flag("--ensemble", infer_args.ensemble, "Average all stage classifiers");
    infer->add_flag("--add-gt", infer_args.add_gt, "Append ground truths to the proposals");
    infer->add_option("--skip", infer_args.skip, "Skip the first N scenes");
    infer->add_option("--out", infer_args.out_path, "Output detections JSONL")->required();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate detections");
    eval->add_option("--dets", eval_args.dets_path, "Detections JSONL")->required();
    eval->add_option("--data", eval_args.data_path, "Dataset JSONL")->required();
    eval->add_option("--skip", eval_args.skip, "Skip the first N scenes");
    eval->add_option("--out", eval_args.out_path, "Output AP CSV")->required();

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "Per-stage / ensemble AP table");
    report->add_option("--model", report_args.model_path, "Model JSON")->required();
    report->add_option("--data", report_args.data_path, "Dataset JSONL")->required();
    report->add_option("--skip", report_args.skip, "Skip the first N scenes");
    report->add_option("--out", report_args.out_path, "Output CSV")->required();

    HistArgs hist_args;
    auto* hist = app.add_subcommand("hist", "IoU histogram of the sample distribution");
    hist->add_option("--data", hist_args.data_path, "Dataset JSONL")->required();
    hist->add_option("--model", hist_args.model_path, "Model JSON (for --stage > 1)");
    hist->add_option("--stage", hist_args.stage, "Distribution entering this stage");
    hist->add_option("--bin-width", hist_args.bin_width, "Histogram bin width");
    hist->add_option("--thresholds", hist_args.thresholds, "Fraction thresholds");
    hist->add_option("--fractions-out", hist_args.fractions_path, "Optional fractions CSV");
    hist->add_option("--skip", hist_args.skip, "Skip the first N scenes");
    hist->add_option("--out", hist_args.out_path, "Output CSV")->required();

    CurveArgs curve_args;
    auto* curve = app.add_subcommand("curve", "Input-vs-output IoU curve of one regressor");
    curve->add_option("--model", curve_args.model_path, "Model JSON")->required();
    curve->add_option("--data", curve_args.data_path, "Dataset JSONL")->required();
    curve->add_option("--stage", curve_args.stage, "1-based stage index");
    curve->add_option("--bin-width", curve_args.bin_width, "Curve bin width");
    curve->add_option("--skip", curve_args.skip, "Skip the first N scenes");
    curve->add_option("--out", curve_args.out_path, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    gen_args.seed_set = gen_seed->count() > 0;

    try {
        if (gen->parsed()) return run_gen(gen_args);
        if (train->parsed()) return run_train(train_args);
        if (infer->parsed()) return run_infer(infer_args);
        if (eval->parsed()) return run_eval(eval_args);
        if (report->parsed()) return run_report(report_args);
        if (hist->parsed()) return run_hist(hist_args);
        if (curve->parsed()) return run_curve(curve_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
