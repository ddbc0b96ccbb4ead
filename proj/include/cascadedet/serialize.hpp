#pragma once

#include <string>
#include <vector>

#include "cascadedet/assign.hpp"
#include "cascadedet/cascade.hpp"
#include "cascadedet/detection.hpp"
#include "cascadedet/eval.hpp"

namespace cascadedet {

inline constexpr int kModelFormatVersion = 1;

/// Single JSON document: mode, thresholds, per-stage statistics and weight
/// matrices (row-major, full round-trip precision). load(save(m)) reproduces
/// inference bit-identically. Missing version or mismatched dimensions are
/// errors.
void save_model(const CascadeModel& model, const std::string& path);
CascadeModel load_model(const std::string& path);

/// JSON-lines, one detection per line, boxes in corner form.
void save_detections(const std::vector<Detection>& dets, const std::string& path);
std::vector<Detection> load_detections(const std::string& path);

// CSV emission: header row, fixed column order, 6-decimal fixed point,
// newline-terminated rows.
void write_ap_csv(const APReport& report, const std::string& path);
void write_stage_report_csv(const StageReport& report, const std::string& path);
void write_histogram_csv(const IouHistogram& hist, const std::string& path);
void write_fractions_csv(const IouHistogram& hist, const std::string& path);
void write_curve_csv(const std::vector<CurveBin>& bins, const std::string& path);

} // namespace cascadedet
