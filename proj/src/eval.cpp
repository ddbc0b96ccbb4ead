#include "cascadedet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace cascadedet {

double APReport::ap_at(double threshold) const {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (std::fabs(thresholds[i] - threshold) < 1e-9) {
            return ap[i];
        }
    }
    throw std::runtime_error("APReport: no AP at threshold " + std::to_string(threshold));
}

std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int i = 50; i <= 95; i += 5) {
        t.push_back(static_cast<double>(i) / 100.0);
    }
    return t;
}

std::vector<std::uint8_t> match_detections(const std::vector<Detection>& dets,
                                           const std::vector<Scene>& scenes, double iou_t) {
    std::map<std::int64_t, const Scene*> by_id;
    for (const Scene& s : scenes) {
        by_id[s.image_id] = &s;
    }

    // group detection indices per (image, class)
    std::map<std::pair<std::int64_t, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        groups[{dets[i].image_id, dets[i].class_id}].push_back(i);
    }

    std::vector<std::uint8_t> tp(dets.size(), 0);
    for (auto& [key, indices] : groups) {
        std::stable_sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
            return dets[a].score > dets[b].score;
        });
        const auto it = by_id.find(key.first);
        if (it == by_id.end()) {
            continue;  // detections for unknown images are false positives
        }
        const Scene& scene = *it->second;
        std::vector<std::uint8_t> gt_used(scene.gts.size(), 0);
        for (const std::size_t di : indices) {
            int best = -1;
            double best_iou = 0.0;
            for (std::size_t g = 0; g < scene.gts.size(); ++g) {
                if (gt_used[g] || scene.gts[g].class_id != key.second) {
                    continue;
                }
                const double v = iou(dets[di].box, scene.gts[g].box);
                if (v >= iou_t && v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(g);
                }
            }
            if (best >= 0) {
                gt_used[static_cast<std::size_t>(best)] = 1;
                tp[di] = 1;
            }
        }
    }
    return tp;
}

double average_precision(const std::vector<std::uint8_t>& tp_flags, std::int64_t n_gt) {
    if (n_gt <= 0 || tp_flags.empty()) {
        return 0.0;
    }
    const std::size_t n = tp_flags.size();
    std::vector<double> precision(n);
    std::vector<double> recall(n);
    std::int64_t tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        tp += tp_flags[k];
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
    }
    // precision envelope from the right
    for (std::size_t k = n - 1; k-- > 0;) {
        precision[k] = std::max(precision[k], precision[k + 1]);
    }
    double sum = 0.0;
    std::size_t k = 0;
    for (int i = 0; i <= 100; ++i) {
        const double r = static_cast<double>(i) / 100.0;
        while (k < n && recall[k] < r) {
            ++k;
        }
        if (k == n) {
            break;
        }
        sum += precision[k];
    }
    return sum / 101.0;
}

APReport coco_ap(const std::vector<Detection>& dets, const std::vector<Scene>& scenes) {
    std::set<int> classes;
    std::map<int, std::int64_t> gt_count;
    for (const Scene& s : scenes) {
        for (const GroundTruth& gt : s.gts) {
            classes.insert(gt.class_id);
            ++gt_count[gt.class_id];
        }
    }

    // per class, detection indices sorted once by descending score (ties by index)
    std::map<int, std::vector<std::size_t>> per_class;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        per_class[dets[i].class_id].push_back(i);
    }
    for (auto& [c, indices] : per_class) {
        std::stable_sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
            return dets[a].score > dets[b].score;
        });
    }

    APReport report;
    report.thresholds = coco_thresholds();
    for (const double t : report.thresholds) {
        const auto flags = match_detections(dets, scenes, t);
        double sum = 0.0;
        for (const int c : classes) {
            std::vector<std::uint8_t> ordered;
            if (auto it = per_class.find(c); it != per_class.end()) {
                ordered.reserve(it->second.size());
                for (const std::size_t i : it->second) {
                    ordered.push_back(flags[i]);
                }
            }
            sum += average_precision(ordered, gt_count[c]);
        }
        report.ap.push_back(classes.empty() ? 0.0 : sum / static_cast<double>(classes.size()));
    }
    double mean = 0.0;
    for (const double v : report.ap) {
        mean += v;
    }
    report.mean_ap = report.ap.empty() ? 0.0 : mean / static_cast<double>(report.ap.size());
    return report;
}

StageReport stage_report(const CascadeModel& model, const std::vector<Scene>& scenes) {
    const int t_count = static_cast<int>(model.stages.size());
    std::vector<InferenceTrace> traces;
    traces.reserve(scenes.size());
    for (const Scene& s : scenes) {
        traces.push_back(run_cascade(model, s.proposals, s));
    }

    StageReport out;
    for (int k = 0; k < t_count; ++k) {
        std::vector<Detection> dets;
        for (std::size_t s = 0; s < scenes.size(); ++s) {
            auto scene_dets =
                detections_from_scores(traces[s].stage_boxes[static_cast<std::size_t>(k)],
                                       traces[s].stage_posteriors[static_cast<std::size_t>(k)],
                                       scenes[s], model.n_classes);
            dets.insert(dets.end(), scene_dets.begin(), scene_dets.end());
        }
        out.rows.push_back(StageReportRow{k + 1, "stage", coco_ap(dets, scenes)});
    }
    for (int k = 1; k < t_count; ++k) {
        // ensemble of classifiers 1..k+1 on stage k+1 boxes
        std::vector<Detection> dets;
        for (std::size_t s = 0; s < scenes.size(); ++s) {
            const auto& boxes = traces[s].stage_boxes[static_cast<std::size_t>(k)];
            std::vector<std::vector<double>> mean_scores(boxes.size());
            for (std::size_t i = 0; i < boxes.size(); ++i) {
                const FeatureVector f = featurize(boxes[i], scenes[s], model.features);
                std::vector<double> mean(static_cast<std::size_t>(model.n_classes) + 1, 0.0);
                for (int t = 0; t <= k; ++t) {
                    const auto p =
                        predict_scores(model.stages[static_cast<std::size_t>(t)], f);
                    for (std::size_t c = 0; c < mean.size(); ++c) {
                        mean[c] += p[c];
                    }
                }
                for (double& v : mean) {
                    v /= static_cast<double>(k + 1);
                }
                mean_scores[i] = std::move(mean);
            }
            auto scene_dets =
                detections_from_scores(boxes, mean_scores, scenes[s], model.n_classes);
            dets.insert(dets.end(), scene_dets.begin(), scene_dets.end());
        }
        out.rows.push_back(StageReportRow{k + 1, "ensemble", coco_ap(dets, scenes)});
    }
    return out;
}

std::vector<CurveBin> localization_curve(const StageModel& stage, const FeatureConfig& cfg,
                                         const std::vector<Scene>& scenes, double bin_width) {
    const auto n_bins = static_cast<std::size_t>(std::ceil(1.0 / bin_width - 1e-12));
    std::vector<std::int64_t> count(n_bins, 0);
    std::vector<double> in_sum(n_bins, 0.0);
    std::vector<double> out_sum(n_bins, 0.0);

    for (const Scene& scene : scenes) {
        if (scene.gts.empty()) {
            continue;
        }
        for (const Box& p : scene.proposals) {
            int best = -1;
            double best_iou = 0.0;
            for (std::size_t g = 0; g < scene.gts.size(); ++g) {
                const double v = iou(p, scene.gts[g].box);
                if (v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(g);
                }
            }
            if (best < 0) {
                best = 0;  // disjoint proposal: measure against the first gt
            }
            const FeatureVector f = featurize(p, scene, cfg);
            const Box refined = clip_box(decode_delta(p, predict_delta(stage, f)), scene.width,
                                         scene.height);
            const double out_iou = iou(refined, scene.gts[static_cast<std::size_t>(best)].box);
            auto bin = static_cast<std::size_t>(best_iou / bin_width);
            bin = std::min(bin, n_bins - 1);
            ++count[bin];
            in_sum[bin] += best_iou;
            out_sum[bin] += out_iou;
        }
    }

    std::vector<CurveBin> bins;
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (count[b] == 0) {
            continue;
        }
        CurveBin cb;
        cb.bin_low = static_cast<double>(b) * bin_width;
        cb.bin_high = b + 1 == n_bins ? 1.0 : static_cast<double>(b + 1) * bin_width;
        cb.count = count[b];
        cb.mean_input_iou = in_sum[b] / static_cast<double>(count[b]);
        cb.mean_output_iou = out_sum[b] / static_cast<double>(count[b]);
        bins.push_back(cb);
    }
    return bins;
}

} // namespace cascadedet
