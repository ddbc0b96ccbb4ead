#include "cascadedet/assign.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cascadedet {

std::vector<LabeledSample> match_and_label(const std::vector<Box>& proposals,
                                           const std::vector<GroundTruth>& gts,
                                           double u) {
    std::vector<LabeledSample> out;
    out.reserve(proposals.size());
    for (const Box& p : proposals) {
        LabeledSample s;
        s.box = p;
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double v = iou(p, gts[g].box);
            if (v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        s.iou = best_iou;
        if (best >= 0 && best_iou >= u) {
            s.label = gts[static_cast<std::size_t>(best)].class_id;
            s.matched_gt = best;
            s.target = encode_delta(p, gts[static_cast<std::size_t>(best)].box);
        }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

// Draws k indices from `pool` without replacement (partial Fisher-Yates).
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool,
                                                  std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

} // namespace

std::vector<LabeledSample> sample_minibatch(const std::vector<LabeledSample>& samples,
                                            int batch_size, double fg_fraction, Rng& rng) {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (samples[i].label > 0 ? pos : neg).push_back(i);
    }

    const auto target_pos = static_cast<std::size_t>(
        std::llround(static_cast<double>(batch_size) * fg_fraction));
    const std::size_t n_pos = std::min(target_pos, pos.size());
    const std::size_t n_neg =
        std::min(static_cast<std::size_t>(batch_size) - n_pos, neg.size());

    std::vector<LabeledSample> batch;
    batch.reserve(n_pos + n_neg);
    for (const std::size_t i : draw_without_replacement(std::move(pos), n_pos, rng)) {
        batch.push_back(samples[i]);
    }
    for (const std::size_t i : draw_without_replacement(std::move(neg), n_neg, rng)) {
        batch.push_back(samples[i]);
    }
    return batch;
}

NormStats compute_stats(const std::vector<LabeledSample>& samples, double u) {
    std::vector<std::array<double, 4>> targets;
    for (const LabeledSample& s : samples) {
        if (s.label > 0 && s.iou >= u && s.target.has_value()) {
            targets.push_back(s.target->to_array());
        }
    }
    if (targets.size() < 2) {
        throw std::runtime_error("compute_stats: fewer than 2 positives with iou >= " +
                                 std::to_string(u));
    }

    NormStats stats;
    const double n = static_cast<double>(targets.size());
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (const auto& t : targets) {
            mean += t[static_cast<std::size_t>(c)];
        }
        mean /= n;
        double var = 0.0;
        for (const auto& t : targets) {
            const double d = t[static_cast<std::size_t>(c)] - mean;
            var += d * d;
        }
        var /= n;
        stats.mean[static_cast<std::size_t>(c)] = mean;
        stats.std[static_cast<std::size_t>(c)] = std::max(std::sqrt(var), kStdFloor);
    }
    return stats;
}

IouHistogram iou_histogram(const std::vector<LabeledSample>& samples, double bin_width,
                           const std::vector<double>& thresholds) {
    IouHistogram h;
    h.bin_width = bin_width;
    const auto n_bins = static_cast<std::size_t>(std::ceil(1.0 / bin_width - 1e-12));
    h.counts.assign(n_bins, 0);
    h.total = static_cast<std::int64_t>(samples.size());
    h.thresholds = thresholds;

    for (const LabeledSample& s : samples) {
        auto bin = static_cast<std::size_t>(s.iou / bin_width);
        bin = std::min(bin, n_bins - 1);
        ++h.counts[bin];
    }
    for (const double t : thresholds) {
        std::int64_t at_or_above = 0;
        for (const LabeledSample& s : samples) {
            if (s.iou >= t) {
                ++at_or_above;
            }
        }
        h.fraction_at_or_above.push_back(
            samples.empty() ? 0.0
                            : static_cast<double>(at_or_above) / static_cast<double>(h.total));
    }
    return h;
}

} // namespace cascadedet
