#pragma once

#include <array>
#include <vector>

namespace cascadedet {

/// Axis-aligned box in image coordinates, stored as center + size.
/// Valid boxes have w > 0, h > 0 and finite fields.
struct Box {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    double x_min() const { return cx - 0.5 * w; }
    double y_min() const { return cy - 0.5 * h; }
    double x_max() const { return cx + 0.5 * w; }
    double y_max() const { return cy + 0.5 * h; }
    double area() const { return w * h; }

    bool operator==(const Box&) const = default;
};

/// Scale/location-invariant regression distances between a box and a target.
struct Delta {
    double dx = 0.0;
    double dy = 0.0;
    double dw = 0.0;
    double dh = 0.0;

    std::array<double, 4> to_array() const { return {dx, dy, dw, dh}; }
    static Delta from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

    bool operator==(const Delta&) const = default;
};

/// Componentwise mean / standard deviation used to normalize deltas.
/// Every std component must be > 0.
struct NormStats {
    std::array<double, 4> mean{0.0, 0.0, 0.0, 0.0};
    std::array<double, 4> std{1.0, 1.0, 1.0, 1.0};

    static NormStats identity() { return NormStats{}; }

    bool operator==(const NormStats&) const = default;
};

struct ScoredBox {
    Box box;
    double score = 0.0;
};

bool box_valid(const Box& b);

/// Intersection over union in [0, 1]; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

/// Distance vector from box b to target g:
/// dx = (g.cx - b.cx) / b.w, dy = (g.cy - b.cy) / b.h,
/// dw = log(g.w / b.w),      dh = log(g.h / b.h).
Delta encode_delta(const Box& b, const Box& g);

// Log-size growth cap applied in decode_delta; exp(4.135) ~ 62.5.
inline constexpr double kDecodeLogCap = 4.135;

/// Inverse of encode_delta. dw/dh above kDecodeLogCap are clamped and
/// reported through `clamped` when non-null.
Box decode_delta(const Box& b, const Delta& d, bool* clamped = nullptr);

Delta normalize_delta(const Delta& d, const NormStats& s);
Delta denormalize_delta(const Delta& d, const NormStats& s);

/// Sum over components of the Huber-style loss:
/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(const Delta& d);

/// Greedy suppression by descending score (equal scores keep the lower
/// index first). Survivors are pairwise below `iou_threshold`.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& detections, double iou_threshold);

// Side length assigned to fully-degenerate clip results.
inline constexpr double kMinClippedSize = 1e-3;

/// Intersects the box with the image rectangle [0,width]x[0,height].
/// Boxes entirely outside are pinned to a kMinClippedSize box at the nearest
/// border point and flagged through `degenerate` when non-null.
Box clip_box(const Box& b, double width, double height, bool* degenerate = nullptr);

} // namespace cascadedet
