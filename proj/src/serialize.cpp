#include "cascadedet/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cascadedet/dataset.hpp"

namespace cascadedet {

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (static_cast<std::size_t>(data.size()) != m.data.size()) {
        throw std::runtime_error("matrix data length does not match rows*cols");
    }
    m.data = data.get<std::vector<double>>();
    return m;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    return out;
}

} // namespace

void save_model(const CascadeModel& model, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["mode"] = to_string(model.mode);
    j["n_classes"] = model.n_classes;
    j["iterations"] = model.iterations;
    j["feature_config"] = {{"observation_noise", model.features.observation_noise},
                           {"noise_growth", model.features.noise_growth},
                           {"distractor_dims", model.features.distractor_dims},
                           {"seed", model.features.seed}};
    auto stages = nlohmann::json::array();
    for (const StageModel& s : model.stages) {
        stages.push_back({{"u", s.u},
                          {"stats",
                           {{"mean", s.stats.mean}, {"std", s.stats.std}}},
                          {"reg_weights", matrix_to_json(s.reg_weights)},
                          {"cls_weights", matrix_to_json(s.cls_weights)}});
    }
    j["stages"] = std::move(stages);

    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

CascadeModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open: " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    if (!j.contains("format_version")) {
        throw std::runtime_error(path + ": missing format_version");
    }
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
        throw std::runtime_error(path + ": unsupported format_version");
    }

    CascadeModel model;
    model.mode = detector_mode_from_string(j.at("mode").get<std::string>());
    model.n_classes = j.at("n_classes").get<int>();
    model.iterations = j.at("iterations").get<int>();
    const auto& fc = j.at("feature_config");
    model.features.observation_noise = fc.at("observation_noise").get<double>();
    model.features.noise_growth = fc.at("noise_growth").get<double>();
    model.features.distractor_dims = fc.at("distractor_dims").get<int>();
    model.features.seed = fc.at("seed").get<std::uint64_t>();

    const int dim = model.features.dim();
    double prev_u = 0.0;
    for (const auto& sj : j.at("stages")) {
        StageModel s;
        s.u = sj.at("u").get<double>();
        if (s.u < prev_u) {
            throw std::runtime_error(path + ": stage thresholds must be non-decreasing");
        }
        prev_u = s.u;
        s.stats.mean = sj.at("stats").at("mean").get<std::array<double, 4>>();
        s.stats.std = sj.at("stats").at("std").get<std::array<double, 4>>();
        for (const double v : s.stats.std) {
            if (!(v > 0.0)) {
                throw std::runtime_error(path + ": stats std must be positive");
            }
        }
        s.reg_weights = matrix_from_json(sj.at("reg_weights"));
        s.cls_weights = matrix_from_json(sj.at("cls_weights"));
        if (s.reg_weights.rows != dim || s.reg_weights.cols != 4) {
            throw std::runtime_error(path + ": reg_weights dimension mismatch");
        }
        if (s.cls_weights.rows != model.n_classes + 1 || s.cls_weights.cols != dim) {
            throw std::runtime_error(path + ": cls_weights dimension mismatch");
        }
        model.stages.push_back(std::move(s));
    }
    if (model.stages.empty()) {
        throw std::runtime_error(path + ": model has no stages");
    }
    return model;
}

void save_detections(const std::vector<Detection>& dets, const std::string& path) {
    auto out = open_out(path);
    for (const Detection& d : dets) {
        nlohmann::json j;
        j["image_id"] = d.image_id;
        j["class_id"] = d.class_id;
        j["box"] = box_to_corner(d.box);
        j["score"] = d.score;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

std::vector<Detection> load_detections(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open: " + path);
    }
    std::vector<Detection> dets;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            Detection d;
            d.image_id = j.at("image_id").get<std::int64_t>();
            d.class_id = j.at("class_id").get<int>();
            const auto& b = j.at("box");
            if (!b.is_array() || b.size() != 4) {
                throw std::runtime_error("box must be a 4-element array");
            }
            d.box = box_from_corner({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                     b[3].get<double>()});
            d.score = j.at("score").get<double>();
            if (d.class_id < 1 || !box_valid(d.box) || !std::isfinite(d.score)) {
                throw std::runtime_error("invalid detection");
            }
            dets.push_back(d);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return dets;
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace

void write_ap_csv(const APReport& report, const std::string& path) {
    auto out = open_out(path);
    out << "threshold,ap\n";
    for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
        out << fixed6(report.thresholds[i]) << ',' << fixed6(report.ap[i]) << '\n';
    }
    out << "mean," << fixed6(report.mean_ap) << '\n';
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

void write_stage_report_csv(const StageReport& report, const std::string& path) {
    auto out = open_out(path);
    out << "test_stage,scoring,ap,ap50,ap60,ap70,ap80,ap90\n";
    for (const StageReportRow& row : report.rows) {
        out << row.test_stage << ',' << row.scoring << ',' << fixed6(row.report.mean_ap);
        for (const double t : {0.5, 0.6, 0.7, 0.8, 0.9}) {
            out << ',' << fixed6(row.report.ap_at(t));
        }
        out << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

void write_histogram_csv(const IouHistogram& hist, const std::string& path) {
    auto out = open_out(path);
    out << "bin_low,bin_high,count\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        out << fixed6(hist.bin_low(b)) << ',' << fixed6(hist.bin_high(b)) << ','
            << hist.counts[b] << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

void write_fractions_csv(const IouHistogram& hist, const std::string& path) {
    auto out = open_out(path);
    out << "threshold,fraction_at_or_above\n";
    for (std::size_t i = 0; i < hist.thresholds.size(); ++i) {
        out << fixed6(hist.thresholds[i]) << ',' << fixed6(hist.fraction_at_or_above[i]) << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

void write_curve_csv(const std::vector<CurveBin>& bins, const std::string& path) {
    auto out = open_out(path);
    out << "bin_low,bin_high,count,mean_input_iou,mean_output_iou\n";
    for (const CurveBin& b : bins) {
        out << fixed6(b.bin_low) << ',' << fixed6(b.bin_high) << ',' << b.count << ','
            << fixed6(b.mean_input_iou) << ',' << fixed6(b.mean_output_iou) << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

} // namespace cascadedet
