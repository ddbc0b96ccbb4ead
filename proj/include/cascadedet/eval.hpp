#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascadedet/cascade.hpp"
#include "cascadedet/dataset.hpp"
#include "cascadedet/detection.hpp"

namespace cascadedet {

/// AP per IoU threshold plus their arithmetic mean.
struct APReport {
    std::vector<double> thresholds;
    std::vector<double> ap;  // parallel to thresholds
    double mean_ap = 0.0;

    double ap_at(double threshold) const;
};

/// The 0.50:0.05:0.95 sweep.
std::vector<double> coco_thresholds();

/// TP/FP flag per detection (index-parallel). Within each (image, class)
/// group, detections are processed in descending score order (ties keep the
/// lower detection index) and greedily match the highest-IoU unmatched
/// same-class ground truth with IoU >= iou_t; each gt matches at most once.
std::vector<std::uint8_t> match_detections(const std::vector<Detection>& dets,
                                           const std::vector<Scene>& scenes, double iou_t);

/// 101-point interpolated average precision. `tp_flags` must be ordered by
/// descending score (ties by detection index). Zero when n_gt == 0.
double average_precision(const std::vector<std::uint8_t>& tp_flags, std::int64_t n_gt);

/// AP at every COCO threshold, class-averaged over classes with at least one
/// ground truth, plus the mean over thresholds.
APReport coco_ap(const std::vector<Detection>& dets, const std::vector<Scene>& scenes);

struct StageReportRow {
    int test_stage = 0;
    std::string scoring;  // "stage" or "ensemble"
    APReport report;
};

struct StageReport {
    std::vector<StageReportRow> rows;
};

/// Evaluates each stage's boxes with its own classifier, then the classifier
/// ensembles on stage-2..T boxes.
StageReport stage_report(const CascadeModel& model, const std::vector<Scene>& scenes);

struct CurveBin {
    double bin_low = 0.0;
    double bin_high = 0.0;
    std::int64_t count = 0;
    double mean_input_iou = 0.0;
    double mean_output_iou = 0.0;
};

/// Mean IoU after one application of the stage regressor, binned by input
/// IoU. Proposals in scenes without ground truths are skipped; empty bins
/// are omitted.
std::vector<CurveBin> localization_curve(const StageModel& stage, const FeatureConfig& cfg,
                                         const std::vector<Scene>& scenes, double bin_width);

} // namespace cascadedet
