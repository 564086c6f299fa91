#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mganet/sdt.hpp"
#include "oracles.hpp"

using namespace mganet;

namespace {

void check_against_brute_force(const BinaryMask& m, double tol = 1e-5) {
    SdtMap s = signed_distance(m, 1e6);  // pre-cap comparison
    auto ref = oracle::brute_force_sdt(m);
    for (size_t i = 0; i < ref.size(); i++) {
        REQUIRE(std::abs(double(s.data[i]) - ref[i]) <=
                tol * std::max(1.0, std::abs(ref[i])));
    }
}

}  // namespace

TEST_CASE("sdt matches brute force on a single interior voxel") {
    BinaryMask m = BinaryMask::zeros({5, 5, 5});
    m.at(2, 2, 2) = 1;
    check_against_brute_force(m);
}

TEST_CASE("sdt on an anisotropic half-space varies only along z") {
    BinaryMask m = BinaryMask::zeros({8, 8, 8}, {1, 1, 2});
    for (int z = 0; z < 4; z++)
        for (int y = 0; y < 8; y++)
            for (int x = 0; x < 8; x++) m.at(x, y, z) = 1;
    check_against_brute_force(m);

    SdtMap s = signed_distance(m, 1e6);
    for (int z = 0; z < 8; z++) {
        float v0 = s.at(0, 0, z);
        for (int y = 0; y < 8; y++)
            for (int x = 0; x < 8; x++) CHECK(s.at(x, y, z) == Catch::Approx(v0));
    }
    // steps of 2 mm away from the interface
    CHECK(s.at(0, 0, 3) == Catch::Approx(2.0));
    CHECK(s.at(0, 0, 2) == Catch::Approx(4.0));
    CHECK(s.at(0, 0, 4) == Catch::Approx(-2.0));
    CHECK(s.at(0, 0, 5) == Catch::Approx(-4.0));
}

TEST_CASE("uniform masks are rejected") {
    CHECK_THROWS_AS(signed_distance(BinaryMask::zeros({4, 4, 4}), 5.0), DegenerateMask);
    BinaryMask ones({4, 4, 4}, {1, 1, 1}, std::vector<uint8_t>(64, 1));
    CHECK_THROWS_AS(signed_distance(ones, 5.0), DegenerateMask);
}

TEST_CASE("sdt matches brute force on random masks incl. anisotropic") {
    std::mt19937_64 rng(4242);
    const Vec3d spacings[] = {{1, 1, 1}, {0.7, 0.7, 0.7}, {1, 1, 2}, {0.5, 0.9, 1.3}};
    for (int trial = 0; trial < 24; trial++) {
        Vec3i dims{int(rng() % 13) + 4, int(rng() % 13) + 4, int(rng() % 13) + 4};
        BinaryMask m = oracle::random_mask(rng, dims, spacings[trial % 4], 0.35);
        size_t c = mask_count(m);
        if (c == 0 || c == m.voxel_count()) continue;
        check_against_brute_force(m);
    }
}

TEST_CASE("values saturate at the cap") {
    BinaryMask m = BinaryMask::zeros({16, 16, 16});
    m.at(8, 8, 8) = 1;
    SdtMap s = signed_distance(m, 3.0);
    for (float v : s.data) {
        CHECK(v <= 3.0f);
        CHECK(v >= -3.0f);
    }
    CHECK(s.at(0, 0, 0) == -3.0f);
}

TEST_CASE("threshold at zero reproduces the mask exactly") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 12; trial++) {
        BinaryMask m = oracle::random_mask(rng, {9, 8, 7}, {1, 0.8, 1.4}, 0.4);
        size_t c = mask_count(m);
        if (c == 0 || c == m.voxel_count()) continue;
        SdtMap s = signed_distance(m, 5.0);
        BinaryMask back = threshold_mask(s, 0.0);
        REQUIRE(back.data == m.data);
    }
}

TEST_CASE("threshold grows monotonically") {
    std::mt19937_64 rng(7);
    BinaryMask m = oracle::sphere_mask({12, 12, 12}, {1, 1, 1}, {5.5, 5.5, 5.5}, 3.0);
    SdtMap s = signed_distance(m, 8.0);
    BinaryMask prev = threshold_mask(s, 0.0);
    for (double tau : {0.5, 1.0, 2.0, 4.0, 7.0}) {
        BinaryMask cur = threshold_mask(s, tau);
        for (size_t i = 0; i < cur.data.size(); i++) REQUIRE(cur.data[i] >= prev.data[i]);
        prev = cur;
    }
    CHECK_THROWS_AS(threshold_mask(s, -0.1), NegativeTau);
}

TEST_CASE("thresholded sphere equals brute-force dilation") {
    BinaryMask m = oracle::sphere_mask({14, 14, 14}, {1, 1, 1}, {6.5, 6.5, 6.5}, 3.5);
    SdtMap s = signed_distance(m, 6.0);
    BinaryMask got = threshold_mask(s, 2.0);
    BinaryMask want = oracle::brute_force_dilate(m, 2.0);
    CHECK(got.data == want.data);
}

TEST_CASE("reference mask is a 4 mm dilation") {
    BinaryMask m = oracle::sphere_mask({20, 20, 20}, {1, 1, 1}, {9.5, 9.5, 9.5}, 5.0);
    BinaryMask ref = reference_mask(m);
    BinaryMask want = oracle::brute_force_dilate(m, 4.0);
    CHECK(ref.data == want.data);
    // superset of the original
    for (size_t i = 0; i < m.data.size(); i++) REQUIRE(ref.data[i] >= m.data[i]);
}

TEST_CASE("reference mask clips at the grid border") {
    BinaryMask m = oracle::sphere_mask({8, 8, 8}, {1, 1, 1}, {0.0, 0.0, 0.0}, 2.0);
    REQUIRE(mask_count(m) > 0);
    BinaryMask ref = reference_mask(m);
    CHECK(ref.dims == m.dims);
    CHECK(mask_count(ref) >= mask_count(m));
}

TEST_CASE("negating the mask negates the sdt") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 6; trial++) {
        BinaryMask m = oracle::random_mask(rng, {7, 9, 6}, {1, 1, 1}, 0.45);
        size_t c = mask_count(m);
        if (c == 0 || c == m.voxel_count()) continue;
        SdtMap a = signed_distance(m, 5.0);
        SdtMap b = signed_distance(complement(m), 5.0);
        for (size_t i = 0; i < a.data.size(); i++)
            REQUIRE(a.data[i] == Catch::Approx(-b.data[i]).margin(1e-6));
    }
}

TEST_CASE("sdt is 1-Lipschitz within each sign class") {
    std::mt19937_64 rng(555);
    BinaryMask m = oracle::random_mask(rng, {10, 10, 10}, {0.9, 1.1, 1.0}, 0.4);
    SdtMap s = signed_distance(m, 1e6);
    const int dirs[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int z = 0; z < 10; z++)
        for (int y = 0; y < 10; y++)
            for (int x = 0; x < 10; x++)
                for (auto& d : dirs) {
                    int xx = x + d[0], yy = y + d[1], zz = z + d[2];
                    if (xx >= 10 || yy >= 10 || zz >= 10) continue;
                    if (m.at(x, y, z) != m.at(xx, yy, zz)) continue;
                    double step = oracle::center_dist_mm(m.spacing, x, y, z, xx, yy, zz);
                    REQUIRE(std::abs(s.at(x, y, z) - s.at(xx, yy, zz)) <= step + 1e-6);
                }
}
