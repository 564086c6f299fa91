#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mganet/volume.hpp"
#include "oracles.hpp"

using namespace mganet;

TEST_CASE("voxel_volume is the product of spacings") {
    CHECK(voxel_volume(Volume::zeros({4, 4, 4}, {1, 1, 1})) == Catch::Approx(1.0));
    CHECK(voxel_volume(Volume::zeros({4, 4, 4}, {0.7, 0.7, 0.7})) ==
          Catch::Approx(0.343).epsilon(1e-12));
    CHECK(voxel_volume(Volume::zeros({4, 4, 4}, {0.9, 0.9, 1.2})) ==
          Catch::Approx(0.972).epsilon(1e-12));
}

TEST_CASE("mask_count") {
    BinaryMask zero = BinaryMask::zeros({4, 4, 4});
    CHECK(mask_count(zero) == 0);

    BinaryMask one({4, 4, 4}, {1, 1, 1}, std::vector<uint8_t>(64, 1));
    CHECK(mask_count(one) == 64);

    std::mt19937_64 rng(77);
    BinaryMask m = oracle::random_mask(rng, {8, 8, 8}, {1, 1, 1});
    size_t total = 0;
    for (int z = 0; z < 8; z++)
        for (int y = 0; y < 8; y++)
            for (int x = 0; x < 8; x++) total += m.at(x, y, z);
    CHECK(mask_count(m) == total);
}

TEST_CASE("complement partitions the grid") {
    std::mt19937_64 rng(123);
    for (int i = 0; i < 10; i++) {
        BinaryMask m = oracle::random_mask(rng, {6, 5, 7}, {1, 1, 1});
        CHECK(mask_count(m) + mask_count(complement(m)) == m.voxel_count());
    }
}

TEST_CASE("volume invariants are enforced") {
    CHECK_THROWS_AS(Volume({0, 4, 4}, {1, 1, 1}, std::vector<float>{}), DimOutOfRange);
    CHECK_THROWS_AS(Volume({2, 2, 2}, {1, 1, 1}, std::vector<float>(7, 0.f)),
                    GeometryMismatch);
    CHECK_THROWS_AS(Volume({2, 2, 2}, {1, 1, -1}, std::vector<float>(8, 0.f)),
                    GeometryMismatch);

    Affine singular;  // zero linear part
    CHECK_THROWS_AS(Volume({2, 2, 2}, {1, 1, 1}, singular, std::vector<float>(8, 0.f)),
                    GeometryMismatch);

    std::vector<uint8_t> bad(8, 0);
    bad[3] = 2;
    CHECK_THROWS_AS(BinaryMask({2, 2, 2}, {1, 1, 1}, bad), GeometryMismatch);
}

TEST_CASE("index -> world -> index round trip") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int trial = 0; trial < 20; trial++) {
        Affine a = Affine::diagonal({0.5 + trial * 0.1, 0.9, 1.3});
        for (int i = 0; i < 3; i++)
            for (int j = 0; j < 3; j++) a.linear[i][j] += u(rng);
        a.origin = {u(rng) * 50, u(rng) * 50, u(rng) * 50};
        if (!a.invertible()) continue;
        Vec3d idx{3.25, 1.5, 7.75};
        Vec3d back = a.apply_inverse(a.apply(idx));
        for (int i = 0; i < 3; i++) CHECK(back[i] == Catch::Approx(idx[i]).margin(1e-9));
    }
}

TEST_CASE("intensity range is recorded") {
    std::vector<float> d = {0.f, -2.f, 5.f, 1.f, 0.5f, 3.f, -1.f, 2.f};
    Volume v({2, 2, 2}, {1, 1, 1}, d);
    CHECK(v.intensity_min == -2.f);
    CHECK(v.intensity_max == 5.f);
}
