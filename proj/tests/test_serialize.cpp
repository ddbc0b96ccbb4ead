#include <doctest.h>

#include <stdexcept>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "cascadedet/cascade.hpp"
#include "cascadedet/serialize.hpp"

using namespace cascadedet;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

CascadeModel trained_model(const std::vector<Scene>& scenes) {
    TrainConfig cfg;
    cfg.cls_epochs = 40;
    return train_cascade(scenes, cfg);
}

} // namespace

TEST_CASE("model round-trip reproduces inference bit-identically") {
    DatasetConfig data_cfg;
    data_cfg.n_images = 40;
    const auto scenes = generate_dataset(data_cfg);
    const CascadeModel model = trained_model(scenes);

    const auto path = temp_path("cdet_model.json");
    save_model(model, path);
    const CascadeModel loaded = load_model(path);
    CHECK(loaded == model);

    const Scene& scene = scenes[3];
    const InferenceTrace a = run_cascade(model, scene.proposals, scene);
    const InferenceTrace b = run_cascade(loaded, scene.proposals, scene);
    CHECK(a.stage_boxes == b.stage_boxes);
    CHECK(a.stage_posteriors == b.stage_posteriors);
    CHECK(a.final_posteriors == b.final_posteriors);
    std::remove(path.c_str());
}

TEST_CASE("model loading rejects bad files") {
    const auto path = temp_path("cdet_bad_model.json");

    {
        std::ofstream out(path);
        out << R"({"mode": "cascade", "n_classes": 3)";  // truncated
    }
    CHECK_THROWS_AS(load_model(path), std::runtime_error);

    {
        std::ofstream out(path);
        out << R"({"mode":"cascade","n_classes":3,"iterations":1,)"
            << R"("feature_config":{"observation_noise":0.01,"noise_growth":0.2,)"
            << R"("distractor_dims":8,"seed":42},"stages":[]})";
    }
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("format_version"),
                         std::runtime_error);

    std::remove(path.c_str());
}

TEST_CASE("model loading rejects dimension mismatches") {
    DatasetConfig data_cfg;
    data_cfg.n_images = 30;
    const auto scenes = generate_dataset(data_cfg);
    CascadeModel model = trained_model(scenes);
    model.stages[0].reg_weights = Matrix(3, 4);  // wrong feature dimension

    const auto path = temp_path("cdet_mismatch.json");
    save_model(model, path);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("dimension"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("detections round-trip") {
    std::vector<Detection> dets;
    Detection d;
    d.image_id = 12;
    d.class_id = 2;
    d.box = Box{10.5, 20.25, 8.125, 4.0625};
    d.score = 0.123456789012345;
    dets.push_back(d);
    d.image_id = 13;
    d.class_id = 1;
    d.score = 1.0;
    dets.push_back(d);

    const auto path = temp_path("cdet_dets.jsonl");
    save_detections(dets, path);
    CHECK(load_detections(path) == dets);
    std::remove(path.c_str());
}

TEST_CASE("detection loading reports the failing line") {
    const auto path = temp_path("cdet_bad_dets.jsonl");
    {
        std::ofstream out(path);
        out << R"({"image_id":0,"class_id":1,"box":[0,0,5,5],"score":0.5})" << '\n';
        out << R"({"image_id":0,"class_id":1,"box":[0,0,5,5]})" << '\n';  // missing score
    }
    CHECK_THROWS_WITH_AS(load_detections(path), doctest::Contains(":2"), std::runtime_error);
    std::remove(path.c_str());
}
