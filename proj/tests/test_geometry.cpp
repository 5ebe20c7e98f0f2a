#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dcl/common.hpp"
#include "dcl/geometry.hpp"
#include "oracles.hpp"

using dcl::Box;

TEST_CASE("iou identity and disjoint") {
    Box b{0.5, 0.5, 0.2, 0.2};
    CHECK(dcl::iou(b, b) == doctest::Approx(1.0));
    Box far{0.1, 0.1, 0.05, 0.05};
    CHECK(dcl::iou(b, far) == 0.0);
}

TEST_CASE("iou half-overlap example") {
    Box a{0.5, 0.5, 0.5, 0.5};
    Box b{0.75, 0.5, 0.5, 0.5};
    CHECK(dcl::iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(testor::rasterized_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(2e-3));
}

TEST_CASE("iou is symmetric, bounded, and matches the rasterized oracle") {
    dcl::Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        Box a{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.6),
              rng.uniform(0.05, 0.6)};
        Box b{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.6),
              rng.uniform(0.05, 0.6)};
        double ab = dcl::iou(a, b);
        CHECK(ab == dcl::iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        if (i < 40)  // raster oracle is slow
            CHECK(ab == doctest::Approx(testor::rasterized_iou(a, b, 500)).epsilon(5e-3));
    }
}

TEST_CASE("union box covers both inputs") {
    Box a{0.3, 0.3, 0.2, 0.2};
    Box b{0.7, 0.6, 0.1, 0.3};
    Box u = dcl::union_box(a, b);
    CHECK(u.x0() <= a.x0());
    CHECK(u.x1() >= b.x1());
    CHECK(u.y0() <= a.y0());
    CHECK(u.y1() >= b.y1());
}

TEST_CASE("format_g9 and fnv hash are stable") {
    CHECK(dcl::format_g9(0.123456789123) == "0.123456789");
    CHECK(dcl::format_g9(1.0) == "1");
    CHECK(dcl::hex16(dcl::fnv1a("abc")).size() == 16);
}

TEST_CASE("fit_linear_map reproduces exact targets") {
    dcl::Rng rng(3);
    std::vector<std::vector<double>> ins, outs;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> x(10), y(4);
        for (auto& v : x) v = rng.gauss();
        for (auto& v : y) v = rng.gauss();
        ins.push_back(x);
        outs.push_back(y);
    }
    dcl::Mat M = dcl::fit_linear_map(ins, outs, 1e-10);
    for (size_t i = 0; i < ins.size(); ++i)
        for (int r = 0; r < 4; ++r) {
            double got = 0;
            for (int c = 0; c < 10; ++c) got += M(r, c) * ins[i][size_t(c)];
            CHECK(got == doctest::Approx(outs[i][size_t(r)]).epsilon(1e-7));
        }
}
