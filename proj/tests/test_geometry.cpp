#include <doctest.h>

#include <cmath>

#include "cascadedet/geometry.hpp"
#include "cascadedet/rng.hpp"

using namespace cascadedet;

namespace {

// size ratios stay under the decode log cap so encode/decode round-trips
Box random_box(Rng& rng) {
    return Box{rng.uniform(-50.0, 700.0), rng.uniform(-50.0, 500.0), rng.uniform(1.0, 60.0),
               rng.uniform(1.0, 60.0)};
}

} // namespace

TEST_CASE("iou identical, disjoint, partial") {
    const Box a{5, 5, 10, 10};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, Box{100, 100, 10, 10}) == 0.0);
    // intersection 50, union 150
    CHECK(iou(a, Box{10, 5, 10, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou is symmetric, bounded, and 1 on self") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const Box a = random_box(rng);
        const Box b = random_box(rng);
        const double ab = iou(a, b);
        CHECK(ab == iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(iou(a, a) == 1.0);
    }
}

TEST_CASE("encode_delta known values") {
    const Box b{5, 5, 10, 10};
    CHECK(encode_delta(b, b) == Delta{0, 0, 0, 0});
    const Delta shifted = encode_delta(b, Box{10, 5, 10, 10});
    CHECK(shifted.dx == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(shifted.dy == 0.0);
    CHECK(shifted.dw == 0.0);
    CHECK(shifted.dh == 0.0);
    const Delta grown = encode_delta(b, Box{5, 5, 20, 10});
    CHECK(grown.dw == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(grown.dx == 0.0);
}

TEST_CASE("decode_delta inverts encode_delta") {
    const Box b{5, 5, 10, 10};
    CHECK(decode_delta(b, Delta{0, 0, 0, 0}) == b);
    const Box g = decode_delta(b, Delta{0.5, 0, 0, 0});
    CHECK(g.cx == doctest::Approx(10.0));
    CHECK(g.w == doctest::Approx(10.0));

    Rng rng(11);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Box base = random_box(rng);
        const Box target = random_box(rng);
        const Box back = decode_delta(base, encode_delta(base, target));
        worst = std::max({worst, std::fabs(back.cx - target.cx), std::fabs(back.cy - target.cy),
                          std::fabs(back.w - target.w), std::fabs(back.h - target.h)});
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("decode_delta clamps runaway growth") {
    bool clamped = false;
    const Box out = decode_delta(Box{5, 5, 10, 10}, Delta{0, 0, 10.0, 0}, &clamped);
    CHECK(clamped);
    CHECK(out.w == doctest::Approx(10.0 * std::exp(kDecodeLogCap)));
    decode_delta(Box{5, 5, 10, 10}, Delta{0, 0, 1.0, 0}, &clamped);
    CHECK_FALSE(clamped);
}

TEST_CASE("normalize/denormalize round trip") {
    NormStats s;
    s.mean = {0.1, -0.2, 0.05, 0.0};
    s.std = {2.0, 0.5, 1.5, 3.0};
    CHECK(normalize_delta(Delta{0.1, -0.2, 0.05, 0.0}, s) == Delta{0, 0, 0, 0});

    NormStats halves;
    halves.std = {2, 2, 2, 2};
    CHECK(normalize_delta(Delta{1, 1, 1, 1}, halves) == Delta{0.5, 0.5, 0.5, 0.5});

    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const Delta d{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
                      rng.uniform(-2, 2)};
        const Delta back = denormalize_delta(normalize_delta(d, s), s);
        CHECK(std::fabs(back.dx - d.dx) < 1e-12);
        CHECK(std::fabs(back.dy - d.dy) < 1e-12);
        CHECK(std::fabs(back.dw - d.dw) < 1e-12);
        CHECK(std::fabs(back.dh - d.dh) < 1e-12);
    }
}

TEST_CASE("smooth_l1 values and branch continuity") {
    CHECK(smooth_l1(Delta{0, 0, 0, 0}) == 0.0);
    CHECK(smooth_l1(Delta{0.5, 0, 0, 0}) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(smooth_l1(Delta{2, 0, 0, 0}) == doctest::Approx(1.5).epsilon(1e-15));
    // both branch formulas agree exactly at |x| = 1
    CHECK(0.5 * 1.0 * 1.0 == 1.0 - 0.5);
    CHECK(smooth_l1(Delta{1, 0, 0, 0}) == 0.5);
    CHECK(smooth_l1(Delta{-1, 0, 0, 0}) == 0.5);

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const Delta d{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3),
                      rng.uniform(-3, 3)};
        const double v = smooth_l1(d);
        CHECK(v >= 0.0);
        if (d.dx != 0.0 || d.dy != 0.0 || d.dw != 0.0 || d.dh != 0.0) {
            CHECK(v > 0.0);
        }
    }
}

TEST_CASE("nms basics") {
    const std::vector<ScoredBox> single{{Box{5, 5, 10, 10}, 0.7}};
    CHECK(nms(single, 0.5).size() == 1);

    const std::vector<ScoredBox> dup{{Box{5, 5, 10, 10}, 0.9}, {Box{5, 5, 10, 10}, 0.8}};
    const auto kept = nms(dup, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);

    const std::vector<ScoredBox> apart{{Box{5, 5, 10, 10}, 0.4}, {Box{100, 100, 10, 10}, 0.6}};
    const auto both = nms(apart, 0.5);
    REQUIRE(both.size() == 2);
    CHECK(both[0].score == 0.6);  // sorted by descending score

    // equal scores: the lower index survives
    const std::vector<ScoredBox> tied{{Box{5, 5, 10, 10}, 0.5}, {Box{5.5, 5, 10, 10}, 0.5}};
    const auto winner = nms(tied, 0.3);
    REQUIRE(winner.size() == 1);
    CHECK(winner[0].box.cx == 5.0);
}

TEST_CASE("nms output is score-sorted and pairwise below threshold") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ScoredBox> dets;
        for (int i = 0; i < 30; ++i) {
            dets.push_back({Box{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(5, 40),
                                rng.uniform(5, 40)},
                            rng.uniform(0.0, 1.0)});
        }
        const double threshold = rng.uniform(0.2, 0.9);
        const auto kept = nms(dets, threshold);
        for (std::size_t i = 0; i + 1 < kept.size(); ++i) {
            CHECK(kept[i].score >= kept[i + 1].score);
        }
        for (std::size_t i = 0; i < kept.size(); ++i) {
            for (std::size_t j = i + 1; j < kept.size(); ++j) {
                CHECK(iou(kept[i].box, kept[j].box) < threshold);
            }
        }
    }
}

TEST_CASE("clip_box") {
    bool degenerate = true;
    const Box inside{50, 50, 10, 10};
    CHECK(clip_box(inside, 100, 100, &degenerate) == inside);
    CHECK_FALSE(degenerate);

    const Box corner = clip_box(Box{0, 0, 10, 10}, 100, 100, &degenerate);
    CHECK_FALSE(degenerate);
    CHECK(corner == Box{2.5, 2.5, 5, 5});

    clip_box(Box{-50, -50, 10, 10}, 100, 100, &degenerate);
    CHECK(degenerate);
}
