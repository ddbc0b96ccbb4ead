#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "cascadedet/assign.hpp"

using namespace cascadedet;

namespace {

// 1-D center shift s between unit-width boxes gives IoU (10-s)/(10+s) for
// width-10 boxes; nested width-w boxes give IoU w/10.
std::vector<GroundTruth> one_gt(int class_id, const Box& b) {
    return {GroundTruth{b, class_id}};
}

std::vector<LabeledSample> fake_samples(int positives, int negatives) {
    std::vector<LabeledSample> out;
    for (int i = 0; i < positives; ++i) {
        LabeledSample s;
        s.box = Box{5, 5, 10, 10};
        s.label = 1;
        s.matched_gt = 0;
        s.iou = 0.8;
        s.target = Delta{0, 0, 0, 0};
        out.push_back(s);
    }
    for (int i = 0; i < negatives; ++i) {
        LabeledSample s;
        s.box = Box{50, 50, 10, 10};
        s.iou = 0.1;
        out.push_back(s);
    }
    return out;
}

} // namespace

TEST_CASE("match_and_label thresholding") {
    const Box gt{5, 5, 10, 10};

    // IoU 0.6 via center shift of 2.5
    auto labeled = match_and_label({Box{7.5, 5, 10, 10}}, one_gt(3, gt), 0.5);
    REQUIRE(labeled.size() == 1);
    CHECK(labeled[0].iou == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(labeled[0].label == 3);
    CHECK(labeled[0].matched_gt == 0);
    REQUIRE(labeled[0].target.has_value());
    CHECK(labeled[0].target->dx == doctest::Approx(-0.25));

    // IoU 0.49 via nested box of width 4.9
    labeled = match_and_label({Box{5, 5, 4.9, 10}}, one_gt(2, gt), 0.5);
    CHECK(labeled[0].iou == doctest::Approx(0.49).epsilon(1e-12));
    CHECK(labeled[0].label == 0);
    CHECK_FALSE(labeled[0].matched_gt.has_value());
    CHECK_FALSE(labeled[0].target.has_value());

    // no ground truths
    labeled = match_and_label({Box{5, 5, 10, 10}}, {}, 0.5);
    CHECK(labeled[0].label == 0);
    CHECK(labeled[0].iou == 0.0);
}

TEST_CASE("match_and_label argmax with index tie-break") {
    const std::vector<GroundTruth> gts{{Box{5, 5, 10, 10}, 1}, {Box{5, 5, 10, 10}, 2}};
    const auto labeled = match_and_label({Box{5, 5, 10, 10}}, gts, 0.5);
    CHECK(labeled[0].label == 1);
    CHECK(labeled[0].matched_gt == 0);
}

TEST_CASE("labeling is monotone in u and stores exact ious") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruth> gts;
        for (int g = 0; g < 3; ++g) {
            gts.push_back({Box{rng.uniform(10, 90), rng.uniform(10, 90), rng.uniform(5, 30),
                               rng.uniform(5, 30)},
                           1 + static_cast<int>(rng.uniform_int(3))});
        }
        std::vector<Box> proposals;
        for (int p = 0; p < 10; ++p) {
            proposals.push_back(Box{rng.uniform(10, 90), rng.uniform(10, 90),
                                    rng.uniform(5, 30), rng.uniform(5, 30)});
        }
        const double u_low = rng.uniform(0.2, 0.5);
        const double u_high = u_low + rng.uniform(0.0, 0.4);
        const auto low = match_and_label(proposals, gts, u_low);
        const auto high = match_and_label(proposals, gts, u_high);
        for (std::size_t i = 0; i < proposals.size(); ++i) {
            if (low[i].label == 0) {
                CHECK(high[i].label == 0);
            }
            if (low[i].matched_gt.has_value()) {
                const auto g = static_cast<std::size_t>(*low[i].matched_gt);
                CHECK(low[i].iou == iou(low[i].box, gts[g].box));
            }
        }
    }
}

TEST_CASE("sample_minibatch counts") {
    Rng rng(1);
    auto batch = sample_minibatch(fake_samples(200, 800), 128, 0.25, rng);
    int pos = 0;
    for (const auto& s : batch) {
        pos += s.label > 0 ? 1 : 0;
    }
    CHECK(batch.size() == 128);
    CHECK(pos == 32);

    Rng rng2(1);
    batch = sample_minibatch(fake_samples(10, 500), 128, 0.25, rng2);
    pos = 0;
    for (const auto& s : batch) {
        pos += s.label > 0 ? 1 : 0;
    }
    CHECK(batch.size() == 128);
    CHECK(pos == 10);

    Rng rng3(9);
    CHECK(sample_minibatch({}, 128, 0.25, rng3).empty());
}

TEST_CASE("sample_minibatch is deterministic given the seed") {
    const auto samples = fake_samples(50, 300);
    Rng a(123);
    Rng b(123);
    const auto batch_a = sample_minibatch(samples, 64, 0.25, a);
    const auto batch_b = sample_minibatch(samples, 64, 0.25, b);
    REQUIRE(batch_a.size() == batch_b.size());
    for (std::size_t i = 0; i < batch_a.size(); ++i) {
        CHECK(batch_a[i].box == batch_b[i].box);
        CHECK(batch_a[i].label == batch_b[i].label);
    }
}

TEST_CASE("compute_stats") {
    // two positives with dx = +-0.1: population std 0.1, mean 0
    std::vector<LabeledSample> samples = fake_samples(2, 0);
    samples[0].target = Delta{0.1, 0, 0, 0};
    samples[1].target = Delta{-0.1, 0, 0, 0};
    NormStats stats = compute_stats(samples, 0.5);
    CHECK(stats.mean[0] == doctest::Approx(0.0));
    CHECK(stats.std[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(stats.std[1] == kStdFloor);  // degenerate component hits the floor

    // identical targets: std clamped to the floor, mean preserved
    samples[1].target = Delta{0.1, 0, 0, 0};
    stats = compute_stats(samples, 0.5);
    CHECK(stats.mean[0] == doctest::Approx(0.1));
    CHECK(stats.std[0] == kStdFloor);

    // samples below u are excluded from the statistic
    std::vector<LabeledSample> mixed = fake_samples(3, 0);
    mixed[0].iou = 0.55;
    mixed[0].target = Delta{100, 0, 0, 0};
    mixed[1].iou = 0.75;
    mixed[1].target = Delta{0.2, 0, 0, 0};
    mixed[2].iou = 0.8;
    mixed[2].target = Delta{0.4, 0, 0, 0};
    stats = compute_stats(mixed, 0.7);
    CHECK(stats.mean[0] == doctest::Approx(0.3));

    CHECK_THROWS_AS(compute_stats(fake_samples(1, 10), 0.5), std::runtime_error);
}

TEST_CASE("iou_histogram") {
    // top-bin accumulation
    auto samples = fake_samples(0, 0);
    for (int i = 0; i < 5; ++i) {
        LabeledSample s;
        s.iou = 1.0;
        samples.push_back(s);
    }
    auto hist = iou_histogram(samples, 0.1, {0.5, 0.9});
    CHECK(hist.counts.back() == 5);
    CHECK(hist.fraction_at_or_above[0] == 1.0);
    CHECK(hist.fraction_at_or_above[1] == 1.0);

    // empty input
    hist = iou_histogram({}, 0.1, {0.5});
    for (const auto c : hist.counts) {
        CHECK(c == 0);
    }
    CHECK(hist.fraction_at_or_above[0] == 0.0);

    // uniform {0.1, ..., 1.0}: 6 of 10 samples at or above 0.5
    samples.clear();
    for (int i = 1; i <= 10; ++i) {
        LabeledSample s;
        s.iou = static_cast<double>(i) / 10.0;
        samples.push_back(s);
    }
    hist = iou_histogram(samples, 0.05, {0.5});
    CHECK(hist.fraction_at_or_above[0] == doctest::Approx(0.6));
    CHECK(hist.total == 10);
}
