#include "cascadedet/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cascadedet {

std::string to_string(DetectorMode mode) {
    switch (mode) {
        case DetectorMode::cascade:
            return "cascade";
        case DetectorMode::iterative:
            return "iterative";
        case DetectorMode::integral:
            return "integral";
    }
    return "cascade";
}

DetectorMode detector_mode_from_string(const std::string& s) {
    if (s == "cascade") {
        return DetectorMode::cascade;
    }
    if (s == "iterative") {
        return DetectorMode::iterative;
    }
    if (s == "integral") {
        return DetectorMode::integral;
    }
    throw std::runtime_error("unknown detector mode: " + s);
}

namespace {

// One training box tied to the scene it came from.
struct PoolSample {
    int scene = 0;
    LabeledSample sample;
};

std::uint64_t minibatch_seed(std::uint64_t seed) { return mix64(seed, 0x6d62ULL); }
std::uint64_t classifier_seed(std::uint64_t seed, int stage) {
    return mix64(seed, 100 + static_cast<std::uint64_t>(stage));
}

void validate_thresholds(const std::vector<double>& u) {
    if (u.empty()) {
        throw std::runtime_error("train: empty threshold list");
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] <= 0.0 || u[i] >= 1.0) {
            throw std::runtime_error("train: thresholds must lie in (0, 1)");
        }
        if (i > 0 && u[i] < u[i - 1]) {
            throw std::runtime_error("train: thresholds must be non-decreasing");
        }
    }
}

/// Stage-1 pool: per-scene labeling at u plus minibatch sampling.
std::vector<PoolSample> build_stage1_pool(const std::vector<Scene>& dataset,
                                          const TrainConfig& config, double u) {
    Rng rng(minibatch_seed(config.seed));
    std::vector<PoolSample> pool;
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const auto labeled = match_and_label(dataset[s].proposals, dataset[s].gts, u);
        for (auto& sample :
             sample_minibatch(labeled, config.batch_size, config.fg_fraction, rng)) {
            pool.push_back(PoolSample{static_cast<int>(s), std::move(sample)});
        }
    }
    return pool;
}

void relabel_pool(std::vector<PoolSample>& pool, const std::vector<Scene>& dataset, double u) {
    // group by scene to reuse match_and_label unchanged
    std::vector<std::vector<Box>> boxes(dataset.size());
    std::vector<std::vector<std::size_t>> owners(dataset.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto s = static_cast<std::size_t>(pool[i].scene);
        boxes[s].push_back(pool[i].sample.box);
        owners[s].push_back(i);
    }
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const auto labeled = match_and_label(boxes[s], dataset[s].gts, u);
        for (std::size_t k = 0; k < labeled.size(); ++k) {
            pool[owners[s][k]].sample = labeled[k];
        }
    }
}

Matrix featurize_pool(const std::vector<PoolSample>& pool, const std::vector<Scene>& dataset,
                      const FeatureConfig& cfg) {
    Matrix x(static_cast<int>(pool.size()), cfg.dim());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto f = featurize(pool[i].sample.box,
                                 dataset[static_cast<std::size_t>(pool[i].scene)], cfg);
        for (int d = 0; d < cfg.dim(); ++d) {
            x.at(static_cast<int>(i), d) = f[static_cast<std::size_t>(d)];
        }
    }
    return x;
}

StageDiagnostics pool_diagnostics(const std::vector<PoolSample>& pool, int stage, double u,
                                  const NormStats& stats) {
    StageDiagnostics d;
    d.stage = stage;
    d.u = u;
    d.n_samples = static_cast<std::int64_t>(pool.size());
    d.stats = stats;
    double iou_sum = 0.0;
    std::int64_t iou_count = 0;
    for (const PoolSample& p : pool) {
        if (p.sample.label > 0) {
            ++d.n_positives;
        }
        if (p.sample.iou >= 0.5) {
            ++d.n_iou_ge_05;
            iou_sum += p.sample.iou;
            ++iou_count;
        }
        if (p.sample.iou >= 0.6) {
            ++d.n_iou_ge_06;
        }
        if (p.sample.iou >= 0.7) {
            ++d.n_iou_ge_07;
        }
    }
    d.mean_iou_ge_05 = iou_count > 0 ? iou_sum / static_cast<double>(iou_count) : 0.0;
    return d;
}

std::vector<int> pool_labels(const std::vector<PoolSample>& pool) {
    std::vector<int> labels;
    labels.reserve(pool.size());
    for (const PoolSample& p : pool) {
        labels.push_back(p.sample.label);
    }
    return labels;
}

// Smooth-L1 refinement of the stage regressor after the ridge init. The
// localization objective is the smooth-L1 of normalized residuals (the same
// term stage_loss reports), so the fit is robust to the outlier tail of the
// target distribution; under identity normalization the residuals stay deep
// in the quadratic zone and the refinement reduces to least squares.
constexpr int kRegRefineEpochs = 150;
constexpr double kRegRefineLr = 0.05;

void refine_regressor_smooth_l1(Matrix& w, const Matrix& x, const Matrix& targets,
                                double ridge) {
    const int n = x.rows;
    const int d = x.cols;
    if (n == 0) {
        return;
    }
    for (int epoch = 0; epoch < kRegRefineEpochs; ++epoch) {
        Matrix grad(d, 4);
        for (int r = 0; r < n; ++r) {
            double resid[4];
            for (int c = 0; c < 4; ++c) {
                double pred = 0.0;
                for (int j = 0; j < d; ++j) {
                    pred += w.at(j, c) * x.at(r, j);
                }
                const double res = pred - targets.at(r, c);
                // derivative of the smooth-L1: res inside |res| < 1, +-1 outside
                resid[c] = res > 1.0 ? 1.0 : (res < -1.0 ? -1.0 : res);
            }
            for (int j = 0; j < d; ++j) {
                const double xj = x.at(r, j);
                for (int c = 0; c < 4; ++c) {
                    grad.at(j, c) += resid[c] * xj;
                }
            }
        }
        const double step = kRegRefineLr / static_cast<double>(n);
        const double decay = kRegRefineLr * 2.0 * ridge / static_cast<double>(n);
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            w.data[i] -= step * grad.data[i] + decay * w.data[i];
        }
    }
}

/// Stage regressor over the pool's positives: closed-form ridge on the
/// stats-normalized targets, then smooth-L1 refinement.
Matrix fit_pool_regressor(const std::vector<PoolSample>& pool, const Matrix& x,
                          const NormStats& stats, double ridge) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].sample.label > 0 && pool[i].sample.target.has_value()) {
            rows.push_back(static_cast<int>(i));
        }
    }
    Matrix xpos(static_cast<int>(rows.size()), x.cols);
    Matrix tpos(static_cast<int>(rows.size()), 4);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int d = 0; d < x.cols; ++d) {
            xpos.at(static_cast<int>(r), d) = x.at(rows[r], d);
        }
        const Delta t = normalize_delta(*pool[static_cast<std::size_t>(rows[r])].sample.target,
                                        stats);
        const auto arr = t.to_array();
        for (int c = 0; c < 4; ++c) {
            tpos.at(static_cast<int>(r), c) = arr[static_cast<std::size_t>(c)];
        }
    }
    Matrix w = fit_regressor(xpos, tpos, ridge);
    refine_regressor_smooth_l1(w, xpos, tpos, ridge);
    return w;
}

std::int64_t count_positives(const std::vector<PoolSample>& pool) {
    std::int64_t n = 0;
    for (const PoolSample& p : pool) {
        if (p.sample.label > 0) {
            ++n;
        }
    }
    return n;
}

} // namespace

CascadeModel train_cascade(const std::vector<Scene>& dataset, const TrainConfig& config,
                           TrainDiagnostics* diagnostics) {
    validate_thresholds(config.thresholds);
    const int n_stages = static_cast<int>(config.thresholds.size());

    CascadeModel model;
    model.mode = DetectorMode::cascade;
    model.n_classes = config.n_classes;
    model.features = config.features;

    std::vector<PoolSample> pool;
    for (int t = 0; t < n_stages; ++t) {
        const double u = config.increasing_thresholds ? config.thresholds[static_cast<std::size_t>(t)]
                                                      : config.thresholds.front();
        if (t == 0) {
            pool = build_stage1_pool(dataset, config, u);
        } else {
            relabel_pool(pool, dataset, u);
        }
        if (count_positives(pool) < 2) {
            throw std::runtime_error("train_cascade: stage " + std::to_string(t + 1) + " (u=" +
                                     std::to_string(u) + ") has fewer than 2 positives");
        }

        StageModel stage;
        stage.u = u;
        std::vector<LabeledSample> flat;
        flat.reserve(pool.size());
        for (const PoolSample& p : pool) {
            flat.push_back(p.sample);
        }
        stage.stats = config.sequential_stats ? compute_stats(flat, u) : NormStats::identity();

        const Matrix x = featurize_pool(pool, dataset, config.features);
        stage.reg_weights = fit_pool_regressor(pool, x, stage.stats, config.ridge);
        stage.cls_weights = fit_classifier(x, pool_labels(pool), config.n_classes, config.cls_lr,
                                           config.cls_epochs, classifier_seed(config.seed, t));
        if (diagnostics != nullptr) {
            diagnostics->stages.push_back(pool_diagnostics(pool, t + 1, u, stage.stats));
        }

        if (t + 1 < n_stages) {
            // resample: regress every pool box forward through this stage
            std::vector<PoolSample> next;
            next.reserve(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i) {
                FeatureVector f(static_cast<std::size_t>(x.cols));
                for (int d = 0; d < x.cols; ++d) {
                    f[static_cast<std::size_t>(d)] = x.at(static_cast<int>(i), d);
                }
                const Scene& scene = dataset[static_cast<std::size_t>(pool[i].scene)];
                bool degenerate = false;
                const Box regressed =
                    clip_box(decode_delta(pool[i].sample.box, predict_delta(stage, f)),
                             scene.width, scene.height, &degenerate);
                if (degenerate) {
                    continue;
                }
                PoolSample p;
                p.scene = pool[i].scene;
                p.sample.box = regressed;
                next.push_back(std::move(p));
            }
            pool = std::move(next);
        }
        model.stages.push_back(std::move(stage));
    }
    return model;
}

CascadeModel train_integral(const std::vector<Scene>& dataset, const TrainConfig& config,
                            TrainDiagnostics* diagnostics) {
    validate_thresholds(config.thresholds);
    const double u0 = config.thresholds.front();

    CascadeModel model;
    model.mode = DetectorMode::integral;
    model.n_classes = config.n_classes;
    model.features = config.features;

    std::vector<PoolSample> pool = build_stage1_pool(dataset, config, u0);
    if (count_positives(pool) < 2) {
        throw std::runtime_error("train_integral: fewer than 2 positives at u=" +
                                 std::to_string(u0));
    }
    std::vector<LabeledSample> flat;
    flat.reserve(pool.size());
    for (const PoolSample& p : pool) {
        flat.push_back(p.sample);
    }
    const NormStats stats =
        config.sequential_stats ? compute_stats(flat, u0) : NormStats::identity();
    const Matrix x = featurize_pool(pool, dataset, config.features);
    const Matrix reg = fit_pool_regressor(pool, x, stats, config.ridge);

    // |U| classifiers over the same proposal distribution, relabeled per u
    for (std::size_t t = 0; t < config.thresholds.size(); ++t) {
        const double u = config.thresholds[t];
        if (t > 0) {
            relabel_pool(pool, dataset, u);
        }
        if (count_positives(pool) < 2) {
            throw std::runtime_error("train_integral: classifier " + std::to_string(t + 1) +
                                     " (u=" + std::to_string(u) + ") has fewer than 2 positives");
        }
        StageModel stage;
        stage.u = u;
        stage.stats = stats;
        stage.reg_weights = reg;
        stage.cls_weights =
            fit_classifier(x, pool_labels(pool), config.n_classes, config.cls_lr,
                           config.cls_epochs, classifier_seed(config.seed, static_cast<int>(t)));
        if (diagnostics != nullptr) {
            diagnostics->stages.push_back(
                pool_diagnostics(pool, static_cast<int>(t) + 1, u, stats));
        }
        model.stages.push_back(std::move(stage));
    }
    return model;
}

CascadeModel train_detector(const std::vector<Scene>& dataset, const TrainConfig& config,
                            TrainDiagnostics* diagnostics) {
    switch (config.mode) {
        case DetectorMode::cascade:
            return train_cascade(dataset, config, diagnostics);
        case DetectorMode::integral:
            return train_integral(dataset, config, diagnostics);
        case DetectorMode::iterative: {
            TrainConfig single = config;
            single.thresholds = {config.thresholds.front()};
            CascadeModel model = train_cascade(dataset, single, diagnostics);
            model.mode = DetectorMode::iterative;
            model.iterations = config.iterations;
            return model;
        }
    }
    throw std::runtime_error("train_detector: unknown mode");
}

InferenceTrace run_cascade(const CascadeModel& model, const std::vector<Box>& proposals,
                           const Scene& scene) {
    InferenceTrace trace;
    std::vector<Box> boxes = proposals;
    for (const StageModel& stage : model.stages) {
        std::vector<std::vector<double>> posteriors;
        posteriors.reserve(boxes.size());
        std::vector<Box> next;
        next.reserve(boxes.size());
        for (const Box& b : boxes) {
            const FeatureVector f = featurize(b, scene, model.features);
            posteriors.push_back(predict_scores(stage, f));
            next.push_back(
                clip_box(decode_delta(b, predict_delta(stage, f)), scene.width, scene.height));
        }
        trace.stage_posteriors.push_back(std::move(posteriors));
        trace.stage_boxes.push_back(std::move(next));
        boxes = trace.stage_boxes.back();
    }
    // every classifier re-evaluated on the final boxes, for ensembling
    for (const StageModel& stage : model.stages) {
        std::vector<std::vector<double>> posteriors;
        posteriors.reserve(boxes.size());
        for (const Box& b : boxes) {
            posteriors.push_back(predict_scores(stage, featurize(b, scene, model.features)));
        }
        trace.final_posteriors.push_back(std::move(posteriors));
    }
    return trace;
}

std::vector<std::vector<double>> ensemble_scores(const InferenceTrace& trace) {
    if (trace.final_posteriors.empty()) {
        return {};
    }
    const std::size_t n = trace.final_posteriors.front().size();
    const std::size_t t_count = trace.final_posteriors.size();
    std::vector<std::vector<double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> mean(trace.final_posteriors.front()[i].size(), 0.0);
        for (std::size_t t = 0; t < t_count; ++t) {
            for (std::size_t k = 0; k < mean.size(); ++k) {
                mean[k] += trace.final_posteriors[t][i][k];
            }
        }
        for (double& v : mean) {
            v /= static_cast<double>(t_count);
        }
        out[i] = std::move(mean);
    }
    return out;
}

std::vector<Box> iterative_bbox(const StageModel& stage, const FeatureConfig& cfg,
                                const std::vector<Box>& proposals, const Scene& scene, int k) {
    std::vector<Box> boxes = proposals;
    for (int pass = 0; pass < k; ++pass) {
        for (Box& b : boxes) {
            const FeatureVector f = featurize(b, scene, cfg);
            b = clip_box(decode_delta(b, predict_delta(stage, f)), scene.width, scene.height);
        }
    }
    return boxes;
}

std::vector<Box> add_gt_to_proposals(const std::vector<Box>& proposals,
                                     const std::vector<GroundTruth>& gts) {
    std::vector<Box> out = proposals;
    out.reserve(proposals.size() + gts.size());
    for (const GroundTruth& gt : gts) {
        out.push_back(gt.box);
    }
    return out;
}

std::vector<Detection> detections_from_scores(const std::vector<Box>& boxes,
                                              const std::vector<std::vector<double>>& posteriors,
                                              const Scene& scene, int n_classes,
                                              double nms_threshold) {
    std::vector<Detection> dets;
    for (int c = 1; c <= n_classes; ++c) {
        std::vector<ScoredBox> scored;
        scored.reserve(boxes.size());
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            scored.push_back(ScoredBox{boxes[i], posteriors[i][static_cast<std::size_t>(c)]});
        }
        for (const ScoredBox& kept : nms(scored, nms_threshold)) {
            Detection d;
            d.image_id = scene.image_id;
            d.class_id = c;
            d.box = kept.box;
            d.score = kept.score;
            dets.push_back(d);
        }
    }
    return dets;
}

std::vector<Detection> infer_scene(const CascadeModel& model, const Scene& scene,
                                   const InferOptions& options) {
    const std::vector<Box> proposals =
        options.add_gt ? add_gt_to_proposals(scene.proposals, scene.gts) : scene.proposals;
    if (model.stages.empty()) {
        throw std::runtime_error("infer_scene: model has no stages");
    }

    switch (model.mode) {
        case DetectorMode::cascade: {
            const InferenceTrace trace = run_cascade(model, proposals, scene);
            const auto& boxes = trace.stage_boxes.back();
            const auto scores =
                options.ensemble ? ensemble_scores(trace) : trace.stage_posteriors.back();
            return detections_from_scores(boxes, scores, scene, model.n_classes,
                                          options.nms_threshold);
        }
        case DetectorMode::iterative: {
            const StageModel& stage = model.stages.front();
            const std::vector<Box> boxes =
                iterative_bbox(stage, model.features, proposals, scene, model.iterations);
            std::vector<std::vector<double>> scores;
            scores.reserve(proposals.size());
            for (const Box& b : proposals) {
                scores.push_back(predict_scores(stage, featurize(b, scene, model.features)));
            }
            return detections_from_scores(boxes, scores, scene, model.n_classes,
                                          options.nms_threshold);
        }
        case DetectorMode::integral: {
            const StageModel& reg_stage = model.stages.front();
            std::vector<Box> boxes;
            boxes.reserve(proposals.size());
            for (const Box& b : proposals) {
                const FeatureVector f = featurize(b, scene, model.features);
                boxes.push_back(clip_box(decode_delta(b, predict_delta(reg_stage, f)),
                                         scene.width, scene.height));
            }
            // average the per-threshold posteriors on the once-regressed boxes
            std::vector<std::vector<double>> scores;
            scores.reserve(boxes.size());
            for (const Box& b : boxes) {
                const FeatureVector f = featurize(b, scene, model.features);
                std::vector<double> mean(static_cast<std::size_t>(model.n_classes) + 1, 0.0);
                for (const StageModel& stage : model.stages) {
                    const auto p = predict_scores(stage, f);
                    for (std::size_t k = 0; k < mean.size(); ++k) {
                        mean[k] += p[k];
                    }
                }
                for (double& v : mean) {
                    v /= static_cast<double>(model.stages.size());
                }
                scores.push_back(std::move(mean));
            }
            return detections_from_scores(boxes, scores, scene, model.n_classes,
                                          options.nms_threshold);
        }
    }
    throw std::runtime_error("infer_scene: unknown mode");
}

} // namespace cascadedet
