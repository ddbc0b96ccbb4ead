#include "cascadedet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cascadedet {

bool box_valid(const Box& b) {
    return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
           std::isfinite(b.h) && b.w > 0.0 && b.h > 0.0;
}

double iou(const Box& a, const Box& b) {
    // areas come from the same corner coordinates as the intersection, so
    // iou(a, a) is exactly 1
    const double ax0 = a.x_min(), ax1 = a.x_max(), ay0 = a.y_min(), ay1 = a.y_max();
    const double bx0 = b.x_min(), bx1 = b.x_max(), by0 = b.y_min(), by1 = b.y_max();
    const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
    const double ih = std::min(ay1, by1) - std::max(ay0, by0);
    if (iw <= 0.0 || ih <= 0.0) {
        return 0.0;
    }
    const double inter = iw * ih;
    const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    return inter / uni;
}

Delta encode_delta(const Box& b, const Box& g) {
    return Delta{
        (g.cx - b.cx) / b.w,
        (g.cy - b.cy) / b.h,
        std::log(g.w / b.w),
        std::log(g.h / b.h),
    };
}

Box decode_delta(const Box& b, const Delta& d, bool* clamped) {
    const bool hit_cap = d.dw > kDecodeLogCap || d.dh > kDecodeLogCap;
    if (clamped != nullptr) {
        *clamped = hit_cap;
    }
    const double dw = std::min(d.dw, kDecodeLogCap);
    const double dh = std::min(d.dh, kDecodeLogCap);
    return Box{
        b.cx + d.dx * b.w,
        b.cy + d.dy * b.h,
        b.w * std::exp(dw),
        b.h * std::exp(dh),
    };
}

Delta normalize_delta(const Delta& d, const NormStats& s) {
    return Delta{
        (d.dx - s.mean[0]) / s.std[0],
        (d.dy - s.mean[1]) / s.std[1],
        (d.dw - s.mean[2]) / s.std[2],
        (d.dh - s.mean[3]) / s.std[3],
    };
}

Delta denormalize_delta(const Delta& d, const NormStats& s) {
    return Delta{
        d.dx * s.std[0] + s.mean[0],
        d.dy * s.std[1] + s.mean[1],
        d.dw * s.std[2] + s.mean[2],
        d.dh * s.std[3] + s.mean[3],
    };
}

double smooth_l1(const Delta& d) {
    double total = 0.0;
    for (const double x : d.to_array()) {
        const double ax = std::fabs(x);
        total += ax < 1.0 ? 0.5 * x * x : ax - 0.5;
    }
    return total;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& detections, double iou_threshold) {
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[a].score > detections[b].score;
    });

    std::vector<ScoredBox> kept;
    for (const std::size_t i : order) {
        bool suppressed = false;
        for (const ScoredBox& k : kept) {
            if (iou(detections[i].box, k.box) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(detections[i]);
        }
    }
    return kept;
}

Box clip_box(const Box& b, double width, double height, bool* degenerate) {
    if (b.x_min() >= 0.0 && b.y_min() >= 0.0 && b.x_max() <= width && b.y_max() <= height) {
        if (degenerate != nullptr) {
            *degenerate = false;
        }
        return b;
    }
    const double x0 = std::max(b.x_min(), 0.0);
    const double y0 = std::max(b.y_min(), 0.0);
    const double x1 = std::min(b.x_max(), width);
    const double y1 = std::min(b.y_max(), height);
    const bool degen = !(x1 > x0) || !(y1 > y0);
    if (degenerate != nullptr) {
        *degenerate = degen;
    }
    if (degen) {
        const double s = kMinClippedSize;
        return Box{
            std::clamp(b.cx, 0.5 * s, width - 0.5 * s),
            std::clamp(b.cy, 0.5 * s, height - 0.5 * s),
            s,
            s,
        };
    }
    return Box{0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

} // namespace cascadedet
