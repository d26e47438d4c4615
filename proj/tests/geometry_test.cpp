#include <catch2/catch_amalgamated.hpp>

#include "crowdassign/geometry.hpp"
#include "crowdassign/rng.hpp"
#include "oracles.hpp"

using namespace crowdassign;

namespace {

Box random_box(Rng& rng, double span = 100.0, double max_side = 60.0) {
  const double x1 = rng.uniform(0.0, span);
  const double y1 = rng.uniform(0.0, span);
  return {x1, y1, x1 + rng.uniform(1.0, max_side), y1 + rng.uniform(1.0, max_side)};
}

}  // namespace

TEST_CASE("iou basics") {
  const Box a{0, 0, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou({0, 0, 1, 1}, {2, 2, 3, 3}) == 0.0);
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == Catch::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("iou degenerate boxes give zero without error") {
  CHECK(iou({1, 1, 1, 1}, {0, 0, 2, 2}) == 0.0);
  CHECK(iou({1, 1, 1, 3}, {1, 1, 1, 3}) == 0.0);
}

TEST_CASE("giou basics") {
  const Box a{0, 0, 2, 2};
  CHECK(giou(a, a) == 1.0);
  CHECK(giou({0, 0, 1, 1}, {500, 500, 501, 501}) < 0.0);   // far apart: negative
  CHECK(giou({0, 0, 1, 1}, {500, 500, 501, 501}) > -1.0);  // but never reaches -1
  // iou = 1/7, hull 9, union 7: giou = 1/7 - 2/9
  CHECK(giou({0, 0, 2, 2}, {1, 1, 3, 3}) ==
        Catch::Approx(1.0 / 7.0 - 2.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("contains uses closed boundaries") {
  const Box b{0, 0, 4, 4};
  CHECK(contains(b, {2, 2}));
  CHECK(contains(b, {4, 4}));
  CHECK(contains(b, {0, 0}));
  CHECK_FALSE(contains(b, {5, 2}));
  CHECK_FALSE(contains(b, {4.0001, 2}));
}

TEST_CASE("symmetry, ordering and translation invariance") {
  Rng rng(42);
  for (int n = 0; n < 200; ++n) {
    const Box a = random_box(rng);
    const Box b = random_box(rng);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(giou(a, b) == giou(b, a));
    CHECK(giou(a, b) <= iou(a, b) + 1e-15);
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
    CHECK(giou(a, b) >= -1.0);
    CHECK(giou(a, b) <= 1.0);

    // Shifting both boxes perturbs coordinate differences by a few ulps, so
    // invariance holds only to floating tolerance, not bit-exactly.
    const double dx = rng.uniform(-50.0, 50.0);
    const double dy = rng.uniform(-50.0, 50.0);
    CHECK(iou(translate(a, dx, dy), translate(b, dx, dy)) ==
          Catch::Approx(iou(a, b)).margin(1e-12));
    CHECK(giou(translate(a, dx, dy), translate(b, dx, dy)) ==
          Catch::Approx(giou(a, b)).margin(1e-12));
  }
}

TEST_CASE("giou equals iou exactly when hull equals union") {
  // One box containing the other: hull == outer box == union.
  const Box outer{0, 0, 10, 10};
  const Box inner{2, 2, 5, 7};
  CHECK(giou(outer, inner) == Catch::Approx(iou(outer, inner)).epsilon(1e-15));
}

TEST_CASE("scale invariance to floating tolerance") {
  Rng rng(7);
  for (int n = 0; n < 100; ++n) {
    const Box a = random_box(rng);
    const Box b = random_box(rng);
    const double s = rng.uniform(0.1, 20.0);
    const Box as{a.x1 * s, a.y1 * s, a.x2 * s, a.y2 * s};
    const Box bs{b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s};
    CHECK(iou(as, bs) == Catch::Approx(iou(a, b)).margin(1e-9));
    CHECK(giou(as, bs) == Catch::Approx(giou(a, b)).margin(1e-9));
  }
}

TEST_CASE("intersect and hull round out the box algebra") {
  const Box a{0, 0, 2, 2};
  const Box b{1, 1, 3, 3};
  const Box i = intersect(a, b);
  CHECK(i.x1 == 1.0);
  CHECK(i.y1 == 1.0);
  CHECK(i.x2 == 2.0);
  CHECK(i.y2 == 2.0);
  CHECK(intersect(Box{0, 0, 1, 1}, Box{5, 5, 6, 6}).area() == 0.0);
  const Box h = hull(a, b);
  CHECK(h.area() == 9.0);
}

TEST_CASE("analytic values agree with a quick Monte-Carlo spot check") {
  // The full 10^6-sample batch over 100 pairs runs in the acceptance gate;
  // this is a fast smoke version of the same oracle.
  Rng rng(1234);
  for (int n = 0; n < 5; ++n) {
    const Box a = random_box(rng);
    const Box b = random_box(rng);
    const auto est = oracles::mc_iou_giou(a, b, 200000, 999 + n);
    CHECK(std::abs(iou(a, b) - est.iou_mean) <= 3.0 * est.iou_se + 1e-9);
    CHECK(std::abs(giou(a, b) - est.giou_mean) <= 3.0 * est.giou_se + 1e-9);
  }
}
