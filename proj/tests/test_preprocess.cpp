#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mganet/preprocess.hpp"
#include "oracles.hpp"

using namespace mganet;

namespace {

Volume random_unit_volume(uint64_t seed, Vec3i dims, double p_bg = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.01f, 1.0f);
    std::uniform_real_distribution<double> bg(0.0, 1.0);
    std::vector<float> d(size_t(dims[0]) * dims[1] * dims[2]);
    for (auto& v : d) v = bg(rng) < p_bg ? 0.0f : u(rng);
    return Volume(dims, {1, 1, 1}, std::move(d));
}

/// Mid-rank global equalization over nonzero voxels: (#below + 0.5 #equal)/n.
float equalize_oracle(const Volume& v, float x) {
    size_t below = 0, equal = 0, n = 0;
    for (float u : v.data) {
        if (u == 0.0f) continue;
        n++;
        if (u < x) below++;
        if (u == x) equal++;
    }
    return float((below + 0.5 * equal) / double(n));
}

}  // namespace

TEST_CASE("resize_pad pads small inputs without touching the data") {
    Volume v = random_unit_volume(1, {64, 64, 64});
    auto r = resize_pad(v, 128);
    REQUIRE(r.volume.dims == Vec3i{128, 128, 128});
    CHECK(r.info.pad_lo == Vec3i{32, 32, 32});
    for (int z = 0; z < 64; z++)
        for (int y = 0; y < 64; y++)
            for (int x = 0; x < 64; x++)
                REQUIRE(r.volume.at(x + 32, y + 32, z + 32) == v.at(x, y, z));
    // border is zero
    CHECK(r.volume.at(0, 0, 0) == 0.0f);
    CHECK(r.volume.at(127, 127, 127) == 0.0f);

    Volume back = unpad_restore(r.volume, r.info);
    REQUIRE(back.dims == v.dims);
    REQUIRE(back.data == v.data);
}

TEST_CASE("resize_pad scales oversized inputs by N/max-dim") {
    Volume v = random_unit_volume(2, {256, 128, 128});
    v.spacing = {0.5, 1.0, 1.0};
    v.affine = Affine::diagonal(v.spacing);
    auto r = resize_pad(v, 128);
    REQUIRE(r.volume.dims == Vec3i{128, 128, 128});
    CHECK(r.info.scaled_dims == Vec3i{128, 64, 64});
    CHECK(r.volume.spacing[0] == Catch::Approx(1.0));  // doubled on axis 0
    CHECK(r.volume.spacing[1] == Catch::Approx(2.0));
    CHECK(r.volume.spacing[2] == Catch::Approx(2.0));

    Volume back = unpad_restore(r.volume, r.info);
    REQUIRE(back.dims == v.dims);
    CHECK(back.spacing[0] == Catch::Approx(0.5));
}

TEST_CASE("resize_pad of a constant volume keeps interior constant") {
    Volume v({40, 30, 20}, {1, 1, 1}, std::vector<float>(40 * 30 * 20, 0.75f));
    auto r = resize_pad(v, 32);
    REQUIRE(r.volume.dims == Vec3i{32, 32, 32});
    double interior_sum = 0.0;
    size_t interior_n = 0;
    for (float x : r.volume.data)
        if (x != 0.0f) {
            interior_sum += x;
            interior_n++;
        }
    CHECK(interior_sum / double(interior_n) == Catch::Approx(0.75).margin(1e-4));
}

TEST_CASE("clahe leaves a uniform volume nearly unchanged") {
    Volume v({24, 24, 24}, {1, 1, 1}, std::vector<float>(24 * 24 * 24, 0.4f));
    Volume out = clahe(v, {.clip = 2.0, .tiles = 8});
    for (float x : out.data) REQUIRE(x == Catch::Approx(0.4).margin(1e-3));
}

TEST_CASE("clahe with one tile matches global equalization") {
    // two-level step volume, values placed mid-bin
    Vec3i dims{16, 16, 16};
    std::vector<float> d(16 * 16 * 16);
    for (size_t i = 0; i < d.size(); i++) d[i] = i < d.size() / 4 ? 0.3f : 0.8f;
    Volume v(dims, {1, 1, 1}, d);
    ClaheConfig cfg;
    cfg.tiles = 1;
    cfg.clip = 1e9;  // generous clip: plain equalization
    Volume out = clahe(v, cfg);
    for (size_t i = 0; i < d.size(); i++)
        REQUIRE(out.data[i] == Catch::Approx(equalize_oracle(v, d[i])).margin(1e-3));
}

TEST_CASE("clahe output stays in [0,1] and preserves zeros") {
    Volume v = random_unit_volume(33, {20, 18, 22});
    Volume out = clahe(v);
    REQUIRE(out.dims == v.dims);
    for (size_t i = 0; i < v.data.size(); i++) {
        REQUIRE(out.data[i] >= 0.0f);
        REQUIRE(out.data[i] <= 1.0f);
        if (v.data[i] == 0.0f) REQUIRE(out.data[i] == 0.0f);
    }
}

TEST_CASE("clahe per-slice mode runs and preserves zeros") {
    Volume v = random_unit_volume(34, {16, 16, 8});
    ClaheConfig cfg;
    cfg.per_slice = true;
    cfg.tiles = 4;
    Volume out = clahe(v, cfg);
    for (size_t i = 0; i < v.data.size(); i++) {
        REQUIRE(out.data[i] >= 0.0f);
        REQUIRE(out.data[i] <= 1.0f);
        if (v.data[i] == 0.0f) REQUIRE(out.data[i] == 0.0f);
    }
}

TEST_CASE("histogram matching to own histogram is near-identity") {
    Volume v = random_unit_volume(5, {12, 12, 12}, 0.2);
    Histogram own = histogram_of(v, 256);
    Volume out = histogram_match(v, own, 256);
    for (size_t i = 0; i < v.data.size(); i++)
        REQUIRE(out.data[i] == Catch::Approx(v.data[i]).margin(1.0 / 256 + 1e-6));
}

TEST_CASE("ramp matched to a uniform reference becomes uniform") {
    Vec3i dims{16, 16, 16};
    std::vector<float> d(16 * 16 * 16);
    for (size_t i = 0; i < d.size(); i++) d[i] = float(i + 1) / float(d.size());
    Volume v(dims, {1, 1, 1}, d);

    Histogram ref;
    int nb = 256;
    ref.edges.resize(nb + 1);
    for (int i = 0; i <= nb; i++) ref.edges[i] = double(i) / nb;
    ref.counts.assign(nb, 1.0);

    Volume out = histogram_match(v, ref, nb);
    // Kolmogorov distance of output ECDF to uniform
    std::vector<float> vals;
    for (float x : out.data) vals.push_back(x);
    std::sort(vals.begin(), vals.end());
    double ks = 0.0;
    for (size_t i = 0; i < vals.size(); i++) {
        double ecdf = double(i + 1) / double(vals.size());
        ks = std::max(ks, std::abs(ecdf - double(vals[i])));
    }
    CHECK(ks <= 2.0 / nb);
}

TEST_CASE("histogram matching preserves background and ordering") {
    Volume v = random_unit_volume(6, {10, 10, 10});
    Histogram ref = histogram_of(random_unit_volume(7, {10, 10, 10}), 256);
    Volume out = histogram_match(v, ref, 256);
    for (size_t i = 0; i < v.data.size(); i++)
        if (v.data[i] == 0.0f) REQUIRE(out.data[i] == 0.0f);
    // monotone: ordering preserved on nonzero voxels
    for (size_t i = 0; i < v.data.size(); i++)
        for (size_t j = i + 1; j < std::min(v.data.size(), i + 50); j++) {
            if (v.data[i] == 0.0f || v.data[j] == 0.0f) continue;
            if (v.data[i] < v.data[j]) REQUIRE(out.data[i] <= out.data[j] + 1e-6f);
        }
}

TEST_CASE("all-background volume passes through histogram matching") {
    Volume v = Volume::zeros({4, 4, 4});
    Histogram ref;
    ref.edges = {0.0, 0.5, 1.0};
    ref.counts = {1.0, 1.0};
    Volume out = histogram_match(v, ref);
    REQUIRE(out.data == v.data);
}

TEST_CASE("empty reference histogram is rejected") {
    Volume v = random_unit_volume(8, {6, 6, 6});
    Histogram ref;
    ref.edges = {0.0, 0.5, 1.0};
    ref.counts = {0.0, 0.0};
    CHECK_THROWS_AS(histogram_match(v, ref), EmptyReference);
}

TEST_CASE("average_histogram") {
    CHECK_THROWS_AS(average_histogram({}, 16), EmptyList);

    Volume a = random_unit_volume(10, {8, 8, 8});
    Histogram ha = histogram_of(a, 64);
    Histogram avg1 = average_histogram({a}, 64);
    for (int b = 0; b < 64; b++)
        CHECK(avg1.counts[b] == Catch::Approx(ha.counts[b] / ha.total()).margin(1e-12));

    Histogram avg2 = average_histogram({a, a}, 64);
    for (int b = 0; b < 64; b++)
        CHECK(avg2.counts[b] == Catch::Approx(avg1.counts[b]).margin(1e-12));

    // disjoint intensity supports average bin-wise
    std::vector<float> lo(512), hi(512);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> u1(0.1f, 0.2f), u2(0.7f, 0.9f);
    for (auto& x : lo) x = u1(rng);
    for (auto& x : hi) x = u2(rng);
    Volume vlo({8, 8, 8}, {1, 1, 1}, lo), vhi({8, 8, 8}, {1, 1, 1}, hi);
    Histogram h1 = histogram_of(vlo, 64), h2 = histogram_of(vhi, 64);
    Histogram avg = average_histogram({vlo, vhi}, 64);
    for (int b = 0; b < 64; b++)
        CHECK(avg.counts[b] ==
              Catch::Approx(0.5 * (h1.counts[b] / h1.total() + h2.counts[b] / h2.total()))
                  .margin(1e-12));
}

TEST_CASE("normalize_intensity maps the nonzero range onto [eps, 1]") {
    Volume v({3, 1, 1}, {1, 1, 1}, std::vector<float>{0.f, 10.f, 20.f});
    Volume out = normalize_intensity(v);
    CHECK(out.data[0] == 0.0f);
    CHECK(out.data[1] == Catch::Approx(1e-3));
    CHECK(out.data[2] == Catch::Approx(1.0));

    // idempotent on an already-normalized volume
    Volume again = normalize_intensity(out);
    for (size_t i = 0; i < out.data.size(); i++)
        CHECK(again.data[i] == Catch::Approx(out.data[i]).margin(1e-6));

    Volume constant({2, 2, 2}, {1, 1, 1}, std::vector<float>(8, 3.f));
    CHECK_THROWS_AS(normalize_intensity(constant), ConstantVolume);
    CHECK_THROWS_AS(normalize_intensity(Volume::zeros({2, 2, 2})), ConstantVolume);
}

TEST_CASE("build_reference restricts to the 4 mm dilated mask") {
    BinaryMask m = oracle::sphere_mask({20, 20, 20}, {1, 1, 1}, {9.5, 9.5, 9.5}, 4.0);
    Volume v = random_unit_volume(12, {20, 20, 20}, 0.0);
    Volume ref = build_reference(v, m);
    BinaryMask want = oracle::brute_force_dilate(m, 4.0);
    for (size_t i = 0; i < v.data.size(); i++) {
        if (want.data[i])
            REQUIRE(ref.data[i] == v.data[i]);
        else
            REQUIRE(ref.data[i] == 0.0f);
    }

    BinaryMask wrong = BinaryMask::zeros({10, 10, 10});
    CHECK_THROWS_AS(build_reference(v, wrong), GeometryMismatch);
}

TEST_CASE("denoise and bias flatten keep the support") {
    Volume v = random_unit_volume(13, {16, 16, 16});
    for (const Volume& out : {denoise_gaussian(v, 0.5), bias_flatten(v)}) {
        REQUIRE(out.dims == v.dims);
        for (size_t i = 0; i < v.data.size(); i++)
            if (v.data[i] == 0.0f) REQUIRE(out.data[i] == 0.0f);
    }
}
