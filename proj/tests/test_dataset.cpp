#include <doctest.h>

#include <stdexcept>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "cascadedet/dataset.hpp"

using namespace cascadedet;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

DatasetConfig small_config() {
    DatasetConfig cfg;
    cfg.n_images = 20;
    cfg.proposals_per_gt = 8;
    cfg.background_per_image = 4;
    return cfg;
}

} // namespace

TEST_CASE("generator respects requested counts and bounds") {
    const DatasetConfig cfg = small_config();
    const auto scenes = generate_dataset(cfg);
    REQUIRE(scenes.size() == 20);
    for (const Scene& s : scenes) {
        CHECK(s.gts.size() >= static_cast<std::size_t>(cfg.min_gts_per_image));
        CHECK(s.gts.size() <= static_cast<std::size_t>(cfg.max_gts_per_image));
        CHECK(s.proposals.size() == s.gts.size() * 8 + 4);
        for (const GroundTruth& gt : s.gts) {
            CHECK(gt.class_id >= 1);
            CHECK(gt.class_id <= cfg.n_classes);
            CHECK(gt.box.x_min() >= 0.0);
            CHECK(gt.box.x_max() <= cfg.image_width);
        }
        for (const Box& p : s.proposals) {
            CHECK(box_valid(p));
            CHECK(p.x_min() >= -1e-9);
            CHECK(p.x_max() <= cfg.image_width + 1e-9);
        }
        // trailing proposals are background: max IoU below the ceiling
        for (std::size_t i = s.proposals.size() - 4; i < s.proposals.size(); ++i) {
            for (const GroundTruth& gt : s.gts) {
                CHECK(iou(s.proposals[i], gt.box) < kBackgroundIouCeiling);
            }
        }
    }
}

TEST_CASE("zero jitter reproduces the gt boxes") {
    DatasetConfig cfg = small_config();
    cfg.jitter_center_std = 0.0;
    cfg.jitter_logsize_std = 0.0;
    cfg.background_per_image = 0;
    const auto scenes = generate_dataset(cfg);
    for (const Scene& s : scenes) {
        for (std::size_t g = 0; g < s.gts.size(); ++g) {
            for (int p = 0; p < cfg.proposals_per_gt; ++p) {
                CHECK(iou(s.proposals[g * 8 + static_cast<std::size_t>(p)], s.gts[g].box) ==
                      1.0);
            }
        }
    }
}

TEST_CASE("same seed produces byte-identical files") {
    const auto path_a = temp_path("cdet_seed_a.jsonl");
    const auto path_b = temp_path("cdet_seed_b.jsonl");
    save_dataset(generate_dataset(small_config()), path_a);
    save_dataset(generate_dataset(small_config()), path_b);
    const std::string a = slurp(path_a);
    CHECK(a == slurp(path_b));
    CHECK(!a.empty());
    std::remove(path_a.c_str());
    std::remove(path_b.c_str());
}

TEST_CASE("impossible geometry is rejected") {
    DatasetConfig cfg = small_config();
    cfg.min_gt_size = 10000.0;
    cfg.max_gt_size = 20000.0;
    CHECK_THROWS_AS(generate_dataset(cfg), std::runtime_error);
}

TEST_CASE("corner conversion") {
    const Box center{10, 10, 4, 4};
    const auto corner = box_to_corner(center);
    CHECK(corner == std::array<double, 4>{8, 8, 4, 4});
    CHECK(box_from_corner(corner) == center);
}

TEST_CASE("dataset round-trips exactly") {
    const auto path = temp_path("cdet_roundtrip.jsonl");
    const auto scenes = generate_dataset(small_config());
    save_dataset(scenes, path);
    const auto loaded = load_dataset(path);
    CHECK(loaded == scenes);
    std::remove(path.c_str());
}

TEST_CASE("empty dataset round-trips") {
    const auto path = temp_path("cdet_empty.jsonl");
    save_dataset({}, path);
    CHECK(load_dataset(path).empty());
    std::remove(path.c_str());
}

TEST_CASE("malformed lines report the line number") {
    const auto path = temp_path("cdet_malformed.jsonl");
    {
        std::ofstream out(path);
        out << R"({"image_id":0,"width":100,"height":100,"gts":[],"proposals":[]})" << '\n';
        out << "{not json}\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains(":2"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("unknown fields are ignored on load") {
    const auto path = temp_path("cdet_unknown.jsonl");
    {
        std::ofstream out(path);
        out << R"({"image_id":0,"width":100,"height":100,"gts":[],"proposals":[],)"
            << R"("extra_field":true})" << '\n';
    }
    const auto scenes = load_dataset(path);
    REQUIRE(scenes.size() == 1);
    CHECK(scenes[0].image_id == 0);
    std::remove(path.c_str());
}

TEST_CASE("invalid boxes and class ids are rejected") {
    const auto path = temp_path("cdet_invalid.jsonl");
    {
        std::ofstream out(path);
        out << R"({"image_id":0,"width":100,"height":100,)"
            << R"("gts":[{"box":[0,0,-5,5],"class_id":1}],"proposals":[]})" << '\n';
    }
    CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
    {
        std::ofstream out(path);
        out << R"({"image_id":0,"width":100,"height":100,)"
            << R"("gts":[{"box":[0,0,5,5],"class_id":0}],"proposals":[]})" << '\n';
    }
    CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("default calibration is dominated by low-quality proposals") {
    DatasetConfig cfg;  // the full default
    cfg.n_images = 120;
    const auto scenes = generate_dataset(cfg);

    std::int64_t matched = 0;
    std::int64_t below_06 = 0;
    std::vector<std::int64_t> bins(10, 0);
    for (const Scene& s : scenes) {
        // the leading gts*proposals_per_gt proposals are the jittered ones
        const std::size_t n_jittered = s.gts.size() * static_cast<std::size_t>(cfg.proposals_per_gt);
        for (std::size_t i = 0; i < n_jittered; ++i) {
            double best = 0.0;
            for (const GroundTruth& gt : s.gts) {
                best = std::max(best, iou(s.proposals[i], gt.box));
            }
            ++matched;
            below_06 += best < 0.6 ? 1 : 0;
            ++bins[std::min<std::size_t>(static_cast<std::size_t>(best * 10), 9)];
        }
    }
    // mode of the gt-matched IoU histogram lies in [0.4, 0.6)
    std::size_t mode = 0;
    for (std::size_t b = 1; b < bins.size(); ++b) {
        if (bins[b] > bins[mode]) {
            mode = b;
        }
    }
    CHECK(mode >= 4);
    CHECK(mode <= 5);
    CHECK(static_cast<double>(below_06) >= 0.6 * static_cast<double>(matched));
}
