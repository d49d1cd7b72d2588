#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "geoprobe/mds.hpp"
#include "geoprobe/random.hpp"

using namespace geoprobe;

namespace {

PointSet2D random_points(Rng& rng, std::size_t n, double spread = 10.0) {
    PointSet2D pts;
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back({rng.uniform(-spread, spread), rng.uniform(-spread, spread)});
    return pts;
}

}  // namespace

TEST_CASE("raw_stress: exact embedding scores zero") {
    DissimilarityMatrix d(2);
    d.set(0, 1, 1.0);
    CHECK(raw_stress(d, {{0, 0}, {1, 0}}) == 0.0);
}

TEST_CASE("raw_stress: coincident points against delta=1 scores one") {
    DissimilarityMatrix d(2);
    d.set(0, 1, 1.0);
    CHECK(raw_stress(d, {{0, 0}, {0, 0}}) == 1.0);
}

TEST_CASE("raw_stress: unit square against its own distance matrix") {
    const PointSet2D square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const DissimilarityMatrix d = DissimilarityMatrix::from_points(square);
    CHECK_THAT(d(0, 2), Catch::Matchers::WithinAbs(std::sqrt(2.0), 1e-15));
    CHECK(raw_stress(d, square) == 0.0);
}

TEST_CASE("raw_stress: dimension mismatch") {
    DissimilarityMatrix d(3);
    CHECK_THROWS_AS(raw_stress(d, {{0, 0}, {1, 0}}), std::invalid_argument);
}

TEST_CASE("matrix invariants are enforced") {
    CHECK_THROWS_AS(DissimilarityMatrix(1), std::invalid_argument);
    DissimilarityMatrix d(3);
    CHECK_THROWS_AS(d.set(0, 0, 1.0), std::invalid_argument);   // diagonal
    CHECK_THROWS_AS(d.set(0, 1, -1.0), std::invalid_argument);  // negative
    CHECK_THROWS_AS(d.set(0, 1, std::nan("")), std::invalid_argument);
    CHECK_THROWS_AS(DissimilarityMatrix::from_values(2, {0, 1, 2, 0}), std::invalid_argument);
    CHECK_NOTHROW(DissimilarityMatrix::from_values(2, {0, 1, 1, 0}));
    d.set(0, 1, 3.0);
    CHECK(d(1, 0) == 3.0);  // set mirrors
}

TEST_CASE("smacof: two points at delta 1 embed at distance 1") {
    DissimilarityMatrix d(2);
    d.set(0, 1, 1.0);
    const SmacofResult r = smacof_fit(d, {{0, 0}, {2, 0}});
    CHECK_THAT(euclidean(r.points[0], r.points[1]), Catch::Matchers::WithinAbs(1.0, 1e-6));
    CHECK(r.stress == raw_stress(d, r.points));
}

TEST_CASE("smacof: equilateral triangle") {
    DissimilarityMatrix d(3);
    d.set(0, 1, 1.0);
    d.set(0, 2, 1.0);
    d.set(1, 2, 1.0);
    const SmacofResult r = smacof_fit(d, {{0, 0}, {1.5, 0}, {0.2, 1.2}});
    CHECK_THAT(euclidean(r.points[0], r.points[1]), Catch::Matchers::WithinAbs(1.0, 1e-6));
    CHECK_THAT(euclidean(r.points[0], r.points[2]), Catch::Matchers::WithinAbs(1.0, 1e-6));
    CHECK_THAT(euclidean(r.points[1], r.points[2]), Catch::Matchers::WithinAbs(1.0, 1e-6));
    CHECK(r.stress < 1e-10);
}

TEST_CASE("smacof: recovers a 10-point planar configuration from noisy init") {
    Rng rng(99);
    const PointSet2D truth = random_points(rng, 10);
    const DissimilarityMatrix d = DissimilarityMatrix::from_points(truth);
    PointSet2D init = truth;
    for (Point2& p : init) {
        p.x += rng.uniform(-0.01, 0.01);
        p.y += rng.uniform(-0.01, 0.01);
    }
    const SmacofResult r = smacof_fit(d, init, {2000, 1e-15});
    CHECK(r.stress < 1e-8);
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t j = i + 1; j < truth.size(); ++j) {
            const double want = d(i, j);
            CHECK_THAT(euclidean(r.points[i], r.points[j]) / want,
                       Catch::Matchers::WithinAbs(1.0, 1e-4));
        }
}

TEST_CASE("smacof: per-iteration stress never increases") {
    Rng rng(123);
    const PointSet2D truth = random_points(rng, 12);
    const DissimilarityMatrix d = DissimilarityMatrix::from_points(truth);
    const PointSet2D init = random_points(rng, 12);  // far from truth
    std::vector<double> trace;
    smacof_fit(d, init, {500, 1e-12}, [&](int, double s) { trace.push_back(s); });
    REQUIRE(trace.size() > 2);
    for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1] + 1e-12);
}

TEST_CASE("smacof: final stress is invariant under a rigid motion of the init") {
    Rng rng(5);
    const PointSet2D truth = random_points(rng, 8);
    const DissimilarityMatrix d = DissimilarityMatrix::from_points(truth);
    PointSet2D init = random_points(rng, 8);
    const SmacofResult a = smacof_fit(d, init);
    const double ct = std::cos(0.7), st = std::sin(0.7);
    PointSet2D rotated;
    for (const Point2& p : init)
        rotated.push_back({ct * p.x - st * p.y + 3.0, st * p.x + ct * p.y - 1.5});
    const SmacofResult b = smacof_fit(d, rotated);
    CHECK_THAT(a.stress, Catch::Matchers::WithinAbs(b.stress, 1e-9));
}

TEST_CASE("smacof: deterministic for identical inputs") {
    Rng rng(17);
    const PointSet2D truth = random_points(rng, 6);
    const DissimilarityMatrix d = DissimilarityMatrix::from_points(truth);
    const PointSet2D init = random_points(rng, 6);
    const SmacofResult a = smacof_fit(d, init);
    const SmacofResult b = smacof_fit(d, init);
    REQUIRE(a.iterations == b.iterations);
    CHECK(a.stress == b.stress);
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
    }
}

TEST_CASE("smacof: zero off-diagonal dissimilarities are representable") {
    DissimilarityMatrix d(3);
    d.set(0, 1, 0.0);  // coincident pair requested
    d.set(0, 2, 1.0);
    d.set(1, 2, 1.0);
    const SmacofResult r = smacof_fit(d, {{0, 0}, {0.3, 0}, {0, 1}});
    CHECK(euclidean(r.points[0], r.points[1]) < 1e-3);
}

TEST_CASE("smacof: error paths") {
    DissimilarityMatrix d(3);
    d.set(0, 1, 1.0);
    CHECK_THROWS_AS(smacof_fit(d, {{0, 0}, {1, 0}}), std::invalid_argument);  // size
    CHECK_THROWS_AS(smacof_fit(d, {{1, 1}, {1, 1}, {1, 1}}), std::invalid_argument);  // degenerate
    CHECK_THROWS_AS(smacof_fit(d, {{0, 0}, {1, 0}, {0, 1}}, {0, 1e-9}), std::invalid_argument);
    CHECK_THROWS_AS(smacof_fit(d, {{0, 0}, {1, 0}, {0, 1}}, {100, 0.0}), std::invalid_argument);
}
