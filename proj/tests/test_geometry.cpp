#include "nclust/error.hpp"
#include "nclust/geometry.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

using namespace nclust;
using namespace nclust::geometry;
using nclust::testing::random_chain;
using nclust::testing::random_points;
using nclust::testing::random_rotation;
using nclust::testing::rigid_transform;

namespace {

// O(N²) oracle: every pair, sorted self-first then by (distance², index).
std::vector<std::vector<std::size_t>> brute_force_neighbors(const std::vector<Vec3>& pts, double radius,
                                                            std::size_t cap) {
    std::vector<std::vector<std::size_t>> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::tuple<bool, double, std::size_t>> c;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1], dz = pts[i][2] - pts[j][2];
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 <= radius * radius) c.emplace_back(i != j, d2, j);
        }
        std::sort(c.begin(), c.end());
        for (std::size_t k = 0; k < std::min(cap, c.size()); ++k) out[i].push_back(std::get<2>(c[k]));
    }
    return out;
}

double orthonormality_error(const Mat3& o) {
    double e = 0.0;
    const Mat3 oto = mat_t_mat(o, o);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) e = std::max(e, std::abs(oto[i][j] - (i == j ? 1.0 : 0.0)));
    return e;
}

} // namespace

TEST_CASE("radius_neighbors on two points") {
    SUBCASE("out of range") {
        const std::vector<Vec3> pts{{0, 0, 0}, {5, 0, 0}};
        auto nl = radius_neighbors(pts, 4.0);
        CHECK(nl.lists[0] == std::vector<std::size_t>{0});
        CHECK(nl.lists[1] == std::vector<std::size_t>{1});
    }
    SUBCASE("in range") {
        const std::vector<Vec3> pts{{0, 0, 0}, {3, 0, 0}};
        auto nl = radius_neighbors(pts, 4.0);
        CHECK(nl.lists[0] == std::vector<std::size_t>{0, 1});
        CHECK(nl.lists[1] == std::vector<std::size_t>{1, 0});
    }
    CHECK_THROWS_AS(radius_neighbors(std::vector<Vec3>{{0, 0, 0}}, 0.0), SchemaError);
}

TEST_CASE("radius_neighbors equals the brute-force scan") {
    Rng rng(31337);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(300);
        const double extent = rng.uniform(5, 60);
        auto pts = random_points(n, extent, rng);
        if (trial % 7 == 0 && n > 3) pts[2] = pts[1]; // coincident points
        const double radius = (trial % 2 ? 0.2 : rng.uniform(0.05, 0.6)) * extent;
        const std::size_t cap = trial % 3 == 0 ? 8 : default_neighbor_cap;
        auto nl = radius_neighbors(pts, radius, cap);
        CHECK(nl.lists == brute_force_neighbors(pts, radius, cap));
    }
}

TEST_CASE("every list starts with its medoid and respects radius and cap") {
    Rng rng(8);
    auto pts = random_points(200, 20, rng);
    pts[5] = pts[3];
    auto nl = radius_neighbors(pts, 6.0, 10);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        REQUIRE(!nl.lists[i].empty());
        CHECK(nl.lists[i].front() == i);
        CHECK(nl.lists[i].size() <= 10);
        for (auto m : nl.lists[i]) CHECK(squared_distance(pts[i], pts[m]) <= 36.0);
    }
}

TEST_CASE("local_frames on short chains are invalid identity frames") {
    for (std::size_t n : {1, 2}) {
        std::vector<Vec3> pts;
        for (std::size_t i = 0; i < n; ++i) pts.push_back({3.8 * static_cast<double>(i), 0, 0});
        auto f = local_frames(pts);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(!f.valid[i]);
            CHECK(f.frames[i] == identity3());
        }
    }
}

TEST_CASE("local_frames on a right-angle chain in the xy-plane") {
    const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    auto f = local_frames(pts);
    CHECK(!f.valid[0]);
    CHECK(!f.valid[3]);
    REQUIRE(f.valid[1]);
    REQUIRE(f.valid[2]);
    // Node 1: u1 = x̂, u2 = ŷ, so b = (x̂ − ŷ)/√2, j = ẑ, b × j = (−x̂ − ŷ)/√2.
    const double s = 1.0 / std::sqrt(2.0);
    const Mat3 expected{{{s, 0, -s}, {-s, 0, -s}, {0, 1, 0}}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(f.frames[1][i][j] == doctest::Approx(expected[i][j]).epsilon(1e-14));
    for (std::size_t n : {1, 2}) {
        CHECK(orthonormality_error(f.frames[n]) <= 1e-12);
        CHECK(det(f.frames[n]) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("collinear chains have invalid interior frames") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 6; ++i) pts.push_back({1.5 * i, 0.5 * i, -0.25 * i});
    auto f = local_frames(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(!f.valid[i]);
}

TEST_CASE("valid frames on random chains are proper rotations") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto f = local_frames(random_chain(50, rng));
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!f.valid[i]) continue;
            CHECK(orthonormality_error(f.frames[i]) <= 1e-6);
            CHECK(std::abs(det(f.frames[i]) - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("quat_from_rotation") {
    CHECK(quat_from_rotation(identity3()) == std::array<double, 4>{1, 0, 0, 0});
    const Mat3 rz180{{{-1, 0, 0}, {0, -1, 0}, {0, 0, 1}}};
    auto q = quat_from_rotation(rz180);
    CHECK(q[0] == doctest::Approx(0.0));
    CHECK(q[1] == doctest::Approx(0.0));
    CHECK(q[2] == doctest::Approx(0.0));
    CHECK(q[3] == doctest::Approx(1.0));

    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const Mat3 r = random_rotation(rng);
        auto qr = quat_from_rotation(r);
        CHECK(qr[0] >= 0.0);
        CHECK(std::abs(qr[0] * qr[0] + qr[1] * qr[1] + qr[2] * qr[2] + qr[3] * qr[3] - 1.0) <= 1e-12);
        const Mat3 back = rotation_from_quat(qr);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(std::abs(back[i][j] - r[i][j]) <= 1e-8);
    }

    const Mat3 reflection{{{1, 0, 0}, {0, 1, 0}, {0, 0, -1}}};
    CHECK_THROWS_AS(quat_from_rotation(reflection), NumericalError);
    const Mat3 scaled{{{2, 0, 0}, {0, 2, 0}, {0, 0, 2}}};
    CHECK_THROWS_AS(quat_from_rotation(scaled), NumericalError);
}

TEST_CASE("pair_encoding of the self pair") {
    Rng rng(1);
    auto pts = random_chain(10, rng);
    std::vector<int> seq(10);
    std::iota(seq.begin(), seq.end(), 1);
    auto f = local_frames(pts);
    auto e = pair_encoding(f, pts, seq, 4, 4, 4.0, pts.size());
    CHECK(e.distance == 0.0);
    CHECK(e.direction == Vec3{0, 0, 0});
    CHECK(e.orientation_quat == std::array<double, 4>{1, 0, 0, 0});
    CHECK(e.rel_seq == 0.0);
    CHECK(e.dist_lift[0] == 1.0);
}

TEST_CASE("distance equal to the radius peaks in the last RBF bin") {
    auto lift = rbf_lift(8.0, 8.0);
    CHECK(lift.back() == 1.0);
    for (std::size_t b = 0; b + 1 < lift.size(); ++b) CHECK(lift[b] < lift.back());
    // Bin spacing is radius/15, so the previous bin sits one width away.
    CHECK(lift[rbf_bins - 2] == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("pair_encoding is invariant under rigid motion") {
    Rng rng(2718);
    for (int protein = 0; protein < 50; ++protein) {
        const std::size_t n = 5 + rng.below(60);
        auto pts = random_chain(n, rng);
        std::vector<int> seq(n);
        std::iota(seq.begin(), seq.end(), 0);
        const Mat3 r = random_rotation(rng);
        const Vec3 t{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
        auto moved = rigid_transform(pts, r, t);
        auto fa = local_frames(pts);
        auto fb = local_frames(moved);
        auto nl = radius_neighbors(pts, 10.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto k : nl.lists[i]) {
                std::array<double, pair_feature_dim> a{}, b{};
                pair_encoding(fa, pts, seq, i, k, 10.0, n).write_features(a);
                pair_encoding(fb, moved, seq, i, k, 10.0, n).write_features(b);
                for (std::size_t c = 0; c < pair_feature_dim; ++c) CHECK(std::abs(a[c] - b[c]) <= 1e-10);
            }
        }
    }
}

TEST_CASE("direction has unit norm off the diagonal for valid frames") {
    Rng rng(12);
    auto pts = random_chain(30, rng);
    std::vector<int> seq(30);
    std::iota(seq.begin(), seq.end(), 0);
    auto f = local_frames(pts);
    for (std::size_t k = 0; k < 30; ++k) {
        if (k == 10) continue;
        auto e = pair_encoding(f, pts, seq, 10, k, 12.0, 30);
        REQUIRE(f.valid[10]);
        CHECK(norm(e.direction) == doctest::Approx(1.0).epsilon(1e-12));
        const auto& q = e.orientation_quat;
        CHECK(std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]) == doctest::Approx(1.0));
    }
}
