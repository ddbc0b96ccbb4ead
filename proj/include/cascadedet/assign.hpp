#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cascadedet/geometry.hpp"
#include "cascadedet/rng.hpp"

namespace cascadedet {

/// Annotated object: class_id >= 1, 0 is reserved for background.
struct GroundTruth {
    Box box;
    int class_id = 1;

    bool operator==(const GroundTruth&) const = default;
};

/// A proposal with its IoU-threshold label. Positives (label > 0) carry the
/// matched ground-truth index and the raw, unnormalized regression target;
/// `iou` is the max IoU over all ground truths for every sample.
struct LabeledSample {
    Box box;
    int label = 0;
    std::optional<int> matched_gt;
    double iou = 0.0;
    std::optional<Delta> target;
};

/// Matches each proposal to its argmax-IoU ground truth (ties keep the
/// lowest index). The label is the ground truth's class when IoU >= u,
/// background otherwise.
std::vector<LabeledSample> match_and_label(const std::vector<Box>& proposals,
                                           const std::vector<GroundTruth>& gts,
                                           double u);

/// Samples up to batch_size * fg_fraction positives without replacement,
/// filling the remainder (and any positive shortfall) with negatives.
std::vector<LabeledSample> sample_minibatch(const std::vector<LabeledSample>& samples,
                                            int batch_size, double fg_fraction, Rng& rng);

// Lower bound applied to every std component of computed statistics.
inline constexpr double kStdFloor = 1e-4;

/// Componentwise mean and population standard deviation of the raw targets
/// over positives with iou >= u (samples below u are treated as outliers
/// and excluded). Throws std::runtime_error with fewer than 2 qualifying
/// positives.
NormStats compute_stats(const std::vector<LabeledSample>& samples, double u);

struct IouHistogram {
    double bin_width = 0.05;
    std::vector<std::int64_t> counts;          // bins covering [0, 1]
    std::int64_t total = 0;
    std::vector<double> thresholds;
    std::vector<double> fraction_at_or_above;  // parallel to thresholds, in [0, 1]

    double bin_low(std::size_t i) const { return static_cast<double>(i) * bin_width; }
    double bin_high(std::size_t i) const {
        return i + 1 == counts.size() ? 1.0 : static_cast<double>(i + 1) * bin_width;
    }
};

/// Histogram of sample IoUs over [0, 1] plus, for each threshold, the
/// fraction of samples at or above it.
IouHistogram iou_histogram(const std::vector<LabeledSample>& samples, double bin_width,
                           const std::vector<double>& thresholds);

} // namespace cascadedet
