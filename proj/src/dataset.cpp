#include "cascadedet/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

namespace cascadedet {

namespace {

constexpr int kMaxAttempts = 1000;

double quantize(double v) { return std::round(v / kCoordQuantum) * kCoordQuantum; }

Box quantize_box(const Box& b) {
    return Box{quantize(b.cx), quantize(b.cy), quantize(b.w), quantize(b.h)};
}

Box sample_uniform_box(const DatasetConfig& cfg, Rng& rng) {
    const double w = std::exp(rng.uniform(std::log(cfg.min_gt_size), std::log(cfg.max_gt_size)));
    const double h = std::exp(rng.uniform(std::log(cfg.min_gt_size), std::log(cfg.max_gt_size)));
    const double cx = rng.uniform(0.5 * w, cfg.image_width - 0.5 * w);
    const double cy = rng.uniform(0.5 * h, cfg.image_height - 0.5 * h);
    return quantize_box(Box{cx, cy, w, h});
}

bool inside_image(const Box& b, const DatasetConfig& cfg) {
    return b.x_min() >= 0.0 && b.y_min() >= 0.0 && b.x_max() <= cfg.image_width &&
           b.y_max() <= cfg.image_height && b.w >= kCoordQuantum && b.h >= kCoordQuantum;
}

Box sample_gt_box(const DatasetConfig& cfg, Rng& rng) {
    if (cfg.min_gt_size > cfg.image_width || cfg.min_gt_size > cfg.image_height) {
        throw std::runtime_error("generate_dataset: gt size exceeds image dimensions");
    }
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const Box b = sample_uniform_box(cfg, rng);
        if (inside_image(b, cfg)) {
            return b;
        }
    }
    throw std::runtime_error("generate_dataset: could not place a ground truth box");
}

Box sample_jittered_proposal(const Box& gt, const DatasetConfig& cfg, Rng& rng) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        // center jitter scales with the half-extent per axis; this keeps the
        // default IoU histogram mode in the [0.4, 0.6) band
        Box p{
            gt.cx + rng.normal(0.0, cfg.jitter_center_std * 0.5 * gt.w),
            gt.cy + rng.normal(0.0, cfg.jitter_center_std * 0.5 * gt.h),
            gt.w * std::exp(rng.normal(0.0, cfg.jitter_logsize_std)),
            gt.h * std::exp(rng.normal(0.0, cfg.jitter_logsize_std)),
        };
        bool degenerate = false;
        p = quantize_box(clip_box(p, cfg.image_width, cfg.image_height, &degenerate));
        if (!degenerate && inside_image(p, cfg)) {
            return p;
        }
    }
    throw std::runtime_error("generate_dataset: could not place a jittered proposal");
}

Box sample_background_box(const std::vector<GroundTruth>& gts, const DatasetConfig& cfg,
                          Rng& rng) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const Box b = sample_uniform_box(cfg, rng);
        if (!inside_image(b, cfg)) {
            continue;
        }
        bool clear = true;
        for (const GroundTruth& gt : gts) {
            if (iou(b, gt.box) >= kBackgroundIouCeiling) {
                clear = false;
                break;
            }
        }
        if (clear) {
            return b;
        }
    }
    throw std::runtime_error("generate_dataset: could not place a background box");
}

} // namespace

std::vector<Scene> generate_dataset(const DatasetConfig& config) {
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(config.n_images));
    for (int i = 0; i < config.n_images; ++i) {
        Rng rng(mix64(config.seed, static_cast<std::uint64_t>(i)));
        Scene scene;
        scene.image_id = i;
        scene.width = config.image_width;
        scene.height = config.image_height;

        const int span = config.max_gts_per_image - config.min_gts_per_image + 1;
        const int n_gts = config.min_gts_per_image +
                          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
        for (int g = 0; g < n_gts; ++g) {
            GroundTruth gt;
            gt.box = sample_gt_box(config, rng);
            gt.class_id = 1 + static_cast<int>(
                                  rng.uniform_int(static_cast<std::uint64_t>(config.n_classes)));
            scene.gts.push_back(gt);
        }
        for (const GroundTruth& gt : scene.gts) {
            for (int p = 0; p < config.proposals_per_gt; ++p) {
                scene.proposals.push_back(sample_jittered_proposal(gt.box, config, rng));
            }
        }
        for (int b = 0; b < config.background_per_image; ++b) {
            scene.proposals.push_back(sample_background_box(scene.gts, config, rng));
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

std::array<double, 4> box_to_corner(const Box& b) {
    return {b.x_min(), b.y_min(), b.w, b.h};
}

Box box_from_corner(const std::array<double, 4>& c) {
    return Box{c[0] + 0.5 * c[2], c[1] + 0.5 * c[3], c[2], c[3]};
}

namespace {

nlohmann::json scene_to_json(const Scene& s) {
    nlohmann::json j;
    j["image_id"] = s.image_id;
    j["width"] = s.width;
    j["height"] = s.height;
    auto gts = nlohmann::json::array();
    for (const GroundTruth& gt : s.gts) {
        gts.push_back({{"box", box_to_corner(gt.box)}, {"class_id", gt.class_id}});
    }
    j["gts"] = std::move(gts);
    auto props = nlohmann::json::array();
    for (const Box& b : s.proposals) {
        props.push_back(box_to_corner(b));
    }
    j["proposals"] = std::move(props);
    return j;
}

std::array<double, 4> corner_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) {
        throw std::runtime_error("box must be a 4-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void warn_unknown_fields(const nlohmann::json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool found = false;
        for (const char* k : known) {
            if (key == k) {
                found = true;
                break;
            }
        }
        if (!found) {
            std::cerr << "warning: " << where << ": ignoring unknown field '" << key << "'\n";
        }
    }
}

Scene scene_from_json(const nlohmann::json& j, const std::string& where) {
    warn_unknown_fields(j, {"image_id", "width", "height", "gts", "proposals"}, where);
    Scene s;
    s.image_id = j.at("image_id").get<std::int64_t>();
    s.width = j.at("width").get<double>();
    s.height = j.at("height").get<double>();
    if (s.width <= 0.0 || s.height <= 0.0) {
        throw std::runtime_error("image dimensions must be positive");
    }
    for (const auto& g : j.at("gts")) {
        warn_unknown_fields(g, {"box", "class_id"}, where);
        GroundTruth gt;
        gt.box = box_from_corner(corner_from_json(g.at("box")));
        gt.class_id = g.at("class_id").get<int>();
        if (gt.class_id < 1) {
            throw std::runtime_error("gt class_id must be >= 1");
        }
        if (!box_valid(gt.box)) {
            throw std::runtime_error("invalid gt box");
        }
        s.gts.push_back(gt);
    }
    for (const auto& p : j.at("proposals")) {
        const Box b = box_from_corner(corner_from_json(p));
        if (!box_valid(b)) {
            throw std::runtime_error("invalid proposal box");
        }
        s.proposals.push_back(b);
    }
    return s;
}

} // namespace

void save_dataset(const std::vector<Scene>& scenes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    for (const Scene& s : scenes) {
        out << scene_to_json(s).dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

std::vector<Scene> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open: " + path);
    }
    std::vector<Scene> scenes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const std::string where = path + ":" + std::to_string(line_no);
        try {
            scenes.push_back(scene_from_json(nlohmann::json::parse(line), where));
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
    }
    return scenes;
}

} // namespace cascadedet
