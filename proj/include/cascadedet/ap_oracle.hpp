#pragma once

#include <vector>

#include "cascadedet/dataset.hpp"
#include "cascadedet/detection.hpp"

namespace cascadedet {

// Exhaustive-instance guard for the oracle below.
inline constexpr int kOracleMaxDetectionsPerImage = 12;

/// Verification-only re-implementation of single-class average precision:
/// explicit greedy matching over corner coordinates and a literal scan of
/// every prefix for each of the 101 recall points. Shares no code with the
/// evaluation module. All detections and ground truths must belong to one
/// class; images with more than kOracleMaxDetectionsPerImage detections are
/// rejected with std::runtime_error.
double brute_force_ap_oracle(const std::vector<Detection>& dets,
                             const std::vector<Scene>& scenes, double iou_t);

} // namespace cascadedet
