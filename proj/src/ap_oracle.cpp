#include "cascadedet/ap_oracle.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace cascadedet {

namespace {

// Corner-coordinate IoU, written out locally so the oracle stays
// self-contained.
double corner_iou(const Box& a, const Box& b) {
    const double ax0 = a.cx - a.w / 2.0, ax1 = a.cx + a.w / 2.0;
    const double ay0 = a.cy - a.h / 2.0, ay1 = a.cy + a.h / 2.0;
    const double bx0 = b.cx - b.w / 2.0, bx1 = b.cx + b.w / 2.0;
    const double by0 = b.cy - b.h / 2.0, by1 = b.cy + b.h / 2.0;
    const double ox = std::min(ax1, bx1) - std::max(ax0, bx0);
    const double oy = std::min(ay1, by1) - std::max(ay0, by0);
    if (ox <= 0.0 || oy <= 0.0) {
        return 0.0;
    }
    const double overlap = ox * oy;
    return overlap / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - overlap);
}

} // namespace

double brute_force_ap_oracle(const std::vector<Detection>& dets,
                             const std::vector<Scene>& scenes, double iou_t) {
    std::map<std::int64_t, int> per_image;
    for (const Detection& d : dets) {
        if (++per_image[d.image_id] > kOracleMaxDetectionsPerImage) {
            throw std::runtime_error("brute_force_ap_oracle: instance too large");
        }
    }

    std::size_t n_gt = 0;
    for (const Scene& s : scenes) {
        n_gt += s.gts.size();
    }

    // score-descending order, equal scores keep the lower detection index
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) {
            return dets[a].score > dets[b].score;
        }
        return a < b;
    });

    std::map<std::int64_t, std::vector<bool>> gt_taken;
    for (const Scene& s : scenes) {
        gt_taken[s.image_id] = std::vector<bool>(s.gts.size(), false);
    }

    std::vector<bool> is_tp(order.size(), false);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const Detection& det = dets[order[rank]];
        const Scene* scene = nullptr;
        for (const Scene& s : scenes) {
            if (s.image_id == det.image_id) {
                scene = &s;
                break;
            }
        }
        if (scene == nullptr) {
            continue;
        }
        auto& taken = gt_taken[det.image_id];
        int best_gt = -1;
        double best_overlap = -1.0;
        for (std::size_t g = 0; g < scene->gts.size(); ++g) {
            if (taken[g]) {
                continue;
            }
            const double v = corner_iou(det.box, scene->gts[g].box);
            if (v >= iou_t && v > best_overlap) {
                best_overlap = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            taken[static_cast<std::size_t>(best_gt)] = true;
            is_tp[rank] = true;
        }
    }

    if (n_gt == 0 || order.empty()) {
        return 0.0;
    }

    // explicit PR table
    std::vector<double> precision;
    std::vector<double> recall;
    int tp_so_far = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (is_tp[rank]) {
            ++tp_so_far;
        }
        precision.push_back(static_cast<double>(tp_so_far) / static_cast<double>(rank + 1));
        recall.push_back(static_cast<double>(tp_so_far) / static_cast<double>(n_gt));
    }

    // 101-point interpolation by literally scanning every prefix per point
    double total = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = static_cast<double>(i) / 100.0;
        double best_precision = 0.0;
        for (std::size_t k = 0; k < precision.size(); ++k) {
            if (recall[k] >= r && precision[k] > best_precision) {
                best_precision = precision[k];
            }
        }
        total += best_precision;
    }
    return total / 101.0;
}

} // namespace cascadedet
