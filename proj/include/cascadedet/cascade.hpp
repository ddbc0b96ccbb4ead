#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascadedet/dataset.hpp"
#include "cascadedet/detection.hpp"
#include "cascadedet/model.hpp"

namespace cascadedet {

enum class DetectorMode { cascade, iterative, integral };

std::string to_string(DetectorMode mode);
DetectorMode detector_mode_from_string(const std::string& s);

/// A trained multi-stage detector. For `iterative` the single stage is
/// applied `iterations` times at inference; for `integral` all stages share
/// one regressor and differ only in their classifiers' label thresholds.
struct CascadeModel {
    DetectorMode mode = DetectorMode::cascade;
    int n_classes = 0;
    FeatureConfig features;
    std::vector<StageModel> stages;
    int iterations = 1;

    bool operator==(const CascadeModel&) const = default;
};

struct TrainConfig {
    std::vector<double> thresholds{0.5, 0.6, 0.7};
    DetectorMode mode = DetectorMode::cascade;
    bool increasing_thresholds = true;  // off: every stage labels at thresholds[0]
    bool sequential_stats = true;       // off: identity normalization at every stage
    int batch_size = 128;
    double fg_fraction = 0.25;
    double ridge = 1e-3;
    double cls_lr = 0.1;
    int cls_epochs = 300;
    int iterations = 1;                 // refinement passes for iterative mode
    std::uint64_t seed = 42;
    FeatureConfig features;
    int n_classes = 3;
};

/// Per-stage view of the training distribution, for histogram/statistics
/// reporting and the resampling checks.
struct StageDiagnostics {
    int stage = 0;              // 1-based
    double u = 0.0;
    std::int64_t n_samples = 0;
    std::int64_t n_positives = 0;
    std::int64_t n_iou_ge_05 = 0;
    std::int64_t n_iou_ge_06 = 0;
    std::int64_t n_iou_ge_07 = 0;
    double mean_iou_ge_05 = 0.0;  // mean IoU over samples with iou >= 0.5
    NormStats stats;
};

struct TrainDiagnostics {
    std::vector<StageDiagnostics> stages;
};

/// Trains stage t on the boxes regressed forward by stage t-1 (stage 1 uses
/// minibatch-sampled raw proposals), recomputing labels and delta statistics
/// at each stage's threshold. Throws std::runtime_error naming the stage if
/// fewer than 2 positives survive at its threshold.
CascadeModel train_cascade(const std::vector<Scene>& dataset, const TrainConfig& config,
                           TrainDiagnostics* diagnostics = nullptr);

/// One shared regressor (trained at min U) plus one classifier per threshold
/// in U, all trained on the stage-1 proposal distribution.
CascadeModel train_integral(const std::vector<Scene>& dataset, const TrainConfig& config,
                            TrainDiagnostics* diagnostics = nullptr);

/// Dispatches on config.mode.
CascadeModel train_detector(const std::vector<Scene>& dataset, const TrainConfig& config,
                            TrainDiagnostics* diagnostics = nullptr);

/// Inference record for one scene: boxes after each stage, each stage's
/// posteriors on its input boxes, and every stage's posteriors re-evaluated
/// on the final boxes (for classifier ensembling).
struct InferenceTrace {
    std::vector<std::vector<Box>> stage_boxes;
    std::vector<std::vector<std::vector<double>>> stage_posteriors;
    std::vector<std::vector<std::vector<double>>> final_posteriors;
};

/// Refines the proposals through all stages with re-featurization after
/// every regression; regressed boxes are clipped to the image.
InferenceTrace run_cascade(const CascadeModel& model, const std::vector<Box>& proposals,
                           const Scene& scene);

/// Arithmetic mean of the per-stage posteriors evaluated on the final boxes.
std::vector<std::vector<double>> ensemble_scores(const InferenceTrace& trace);

/// The same single regressor applied k times with re-featurization; no
/// relabeling and no per-iteration statistics.
std::vector<Box> iterative_bbox(const StageModel& stage, const FeatureConfig& cfg,
                                const std::vector<Box>& proposals, const Scene& scene, int k);

/// Appends the ground-truth boxes to the proposal set.
std::vector<Box> add_gt_to_proposals(const std::vector<Box>& proposals,
                                     const std::vector<GroundTruth>& gts);

// IoU threshold of the final per-class suppression.
inline constexpr double kNmsThreshold = 0.9;

struct InferOptions {
    bool ensemble = false;
    bool add_gt = false;
    double nms_threshold = kNmsThreshold;
};

/// Full per-scene inference for any detector mode: refine, score, and apply
/// per-class NMS. Detections are ordered by class then descending score.
std::vector<Detection> infer_scene(const CascadeModel& model, const Scene& scene,
                                   const InferOptions& options = {});

/// Builds per-class detections from scored boxes (per-class NMS applied).
std::vector<Detection> detections_from_scores(const std::vector<Box>& boxes,
                                              const std::vector<std::vector<double>>& posteriors,
                                              const Scene& scene, int n_classes,
                                              double nms_threshold = kNmsThreshold);

} // namespace cascadedet
