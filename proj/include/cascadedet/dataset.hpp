#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cascadedet/assign.hpp"
#include "cascadedet/geometry.hpp"

namespace cascadedet {

/// One synthetic image: annotated objects plus the proposal set a region
/// proposal stage would have produced for it.
struct Scene {
    std::int64_t image_id = 0;
    double width = 0.0;
    double height = 0.0;
    std::vector<GroundTruth> gts;
    std::vector<Box> proposals;

    bool operator==(const Scene&) const = default;
};

/// Knobs of the synthetic proposal generator. The jitter defaults are
/// calibrated so the proposal IoU histogram is dominated by low-quality
/// boxes, the regime a first detection stage actually faces.
struct DatasetConfig {
    int n_images = 500;
    int n_classes = 3;
    int min_gts_per_image = 1;
    int max_gts_per_image = 4;
    int proposals_per_gt = 8;
    int background_per_image = 8;
    double jitter_center_std = 0.35;   // fraction of the gt's size
    double jitter_logsize_std = 0.30;
    double image_width = 640.0;
    double image_height = 480.0;
    double min_gt_size = 24.0;
    double max_gt_size = 160.0;
    std::uint64_t seed = 42;
};

// Background proposals are rejection-sampled below this IoU against every gt.
inline constexpr double kBackgroundIouCeiling = 0.3;

// All generated coordinates are rounded to this grid so corner-form
// serialization round-trips exactly.
inline constexpr double kCoordQuantum = 1.0 / 64.0;

/// Deterministic given config.seed; each scene derives its own stream from
/// (seed, image_id). Throws std::runtime_error on impossible geometry.
std::vector<Scene> generate_dataset(const DatasetConfig& config);

/// Lossless conversion between the internal center form and the
/// corner-form [x_min, y_min, w, h] used on disk.
std::array<double, 4> box_to_corner(const Box& b);
Box box_from_corner(const std::array<double, 4>& c);

/// JSON-lines persistence, one scene per line. load(save(d)) == d exactly.
void save_dataset(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> load_dataset(const std::string& path);

} // namespace cascadedet
