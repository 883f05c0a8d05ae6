#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "atlasloom/autodiff.hpp"
#include "atlasloom/volume.hpp"

using namespace atlasloom;
using namespace atlasloom::vol;

namespace {

Volume3D make_ramp_volume(std::array<int, 3> dims) {
    Volume3D v(dims, centered_grid(dims, {1, 1, 1}).affine);
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) v.at(x, y, z) = static_cast<float>(x + 2 * y + 3 * z);
    return v;
}

Volume3D make_random_volume(std::array<int, 3> dims, std::uint64_t seed) {
    Volume3D v(dims, centered_grid(dims, {1, 1, 1}).affine);
    ad::Rng rng(seed);
    for (auto& d : v.data()) d = static_cast<float>(rng.uniform_range(0.1, 1.0));
    return v;
}

}  // namespace

TEST_CASE("trilinear sampling reproduces stored values at grid nodes") {
    auto v = make_random_volume({4, 5, 3}, 11);
    for (int z = 0; z < 3; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 4; ++x) {
                auto s = trilinear_sample(v, {double(x), double(y), double(z)});
                CHECK(s.value == v.at(x, y, z));
                CHECK_FALSE(s.extrapolated);
            }
}

TEST_CASE("trilinear sampling is exact on fields affine in voxel coordinates") {
    auto v = make_ramp_volume({6, 6, 6});
    CHECK(trilinear_sample(v, {0.5, 0.5, 0.5}).value == doctest::Approx(3.0));

    // Random affine fields, random interior points.
    ad::Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const double a = rng.uniform_range(-2, 2), b = rng.uniform_range(-2, 2);
        const double c = rng.uniform_range(-2, 2), d = rng.uniform_range(-2, 2);
        Volume3D w({5, 5, 5}, centered_grid({5, 5, 5}, {1, 1, 1}).affine);
        for (int z = 0; z < 5; ++z)
            for (int y = 0; y < 5; ++y)
                for (int x = 0; x < 5; ++x)
                    w.at(x, y, z) = static_cast<float>(a * x + b * y + c * z + d);
        for (int q = 0; q < 10; ++q) {
            const Vec3 p{rng.uniform_range(0, 4), rng.uniform_range(0, 4), rng.uniform_range(0, 4)};
            const double expect = a * p.x + b * p.y + c * p.z + d;
            CHECK(trilinear_sample(w, p).value ==
                  doctest::Approx(expect).epsilon(1e-5));
        }
    }
}

TEST_CASE("hand-computed linear blend on a 2x1x1 volume") {
    Volume3D v({2, 1, 1}, centered_grid({2, 1, 1}, {1, 1, 1}).affine);
    v.at(0, 0, 0) = 0.0f;
    v.at(1, 0, 0) = 10.0f;
    CHECK(trilinear_sample(v, {0.25, 0, 0}).value == doctest::Approx(2.5));
}

TEST_CASE("out-of-domain sampling clamps to edge and flags") {
    auto v = make_ramp_volume({4, 4, 4});
    auto s = trilinear_sample(v, {-0.5, 1.0, 1.0});
    CHECK(s.extrapolated);
    CHECK(s.value == v.at(0, 1, 1));
    auto s2 = trilinear_sample(v, {3.7, 3.0, 3.0});
    CHECK(s2.extrapolated);
    CHECK(s2.value == v.at(3, 3, 3));
}

TEST_CASE("identity resample onto own grid is the identity map") {
    auto v = make_random_volume({7, 6, 5}, 3);
    auto out = resample(v, v.grid(), SampleMode::Trilinear);
    CHECK(out.data() == v.data());
}

TEST_CASE("downsampling a constant volume preserves the constant") {
    Volume3D v({8, 8, 8}, centered_grid({8, 8, 8}, {1, 1, 1}).affine, 7.0f);
    auto target = centered_grid({4, 4, 4}, {2, 2, 2});
    auto out = resample(v, target, SampleMode::Trilinear);
    for (float f : out.data()) CHECK(f == doctest::Approx(7.0));
}

TEST_CASE("upsampled stack voxels agree with direct trilinear sampling") {
    auto v = make_random_volume({6, 6, 4}, 17);
    // 4 mm slices along z upsampled to 1 mm.
    Mat4 a = Mat4::identity();
    a.at(2, 2) = 4.0;
    Volume3D src(v.dims(), a);
    src.data() = v.data();

    auto target = GridSpec{{6, 6, 13}, Mat4::identity()};
    auto out = resample(src, target, SampleMode::Trilinear);

    const Mat4 to_src = src.affine().inverse_affine() * target.affine;
    for (int z = 0; z < 13; ++z)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                const Vec3 p = to_src.apply({double(x), double(y), double(z)});
                if (p.x < 0 || p.y < 0 || p.z < 0 || p.x > 5 || p.y > 5 || p.z > 3) continue;
                CHECK(out.at(x, y, z) == doctest::Approx(trilinear_sample(src, p).value));
            }
}

TEST_CASE("resample rejects a singular transform") {
    auto v = make_random_volume({4, 4, 4}, 2);
    Mat4 singular{};  // all zeros
    CHECK_THROWS_AS(resample(v, v.grid(), singular, SampleMode::Trilinear),
                    std::invalid_argument);
}

TEST_CASE("signed permutation identity and involution") {
    auto v = make_random_volume({6, 5, 4}, 9);

    SUBCASE("identity permutation returns the input") {
        auto out = apply_signed_permutation(v, SignedPermutation::identity());
        CHECK(out.data() == v.data());
        CHECK(out.affine().equals(v.affine(), 0.0));
    }

    SUBCASE("180-degree rotation about z applied twice restores the input") {
        SignedPermutation p;
        p.m = {-1, 0, 0, 0, -1, 0, 0, 0, 1};
        auto once = apply_signed_permutation(v, p);
        auto twice = apply_signed_permutation(once, p);
        CHECK(twice.data() == v.data());
        CHECK(twice.affine().equals(v.affine(), 0.0));
    }

    SUBCASE("P then P inverse restores the input for a non-symmetric permutation") {
        SignedPermutation p;
        p.m = {0, 1, 0, 0, 0, -1, -1, 0, 0};
        REQUIRE(p.valid());
        auto fwd = apply_signed_permutation(v, p);
        auto back = apply_signed_permutation(fwd, p.inverse());
        CHECK(back.data() == v.data());
        CHECK(back.affine().equals(v.affine(), 0.0));
    }
}

TEST_CASE("signed permutation application is a group action") {
    auto v = make_random_volume({5, 4, 3}, 21);
    const std::array<std::array<int, 9>, 4> klein = {{{1, 0, 0, 0, 1, 0, 0, 0, 1},
                                                      {1, 0, 0, 0, -1, 0, 0, 0, -1},
                                                      {-1, 0, 0, 0, 1, 0, 0, 0, -1},
                                                      {-1, 0, 0, 0, -1, 0, 0, 0, 1}}};
    for (const auto& ma : klein)
        for (const auto& mb : klein) {
            SignedPermutation pa, pb;
            pa.m = ma;
            pb.m = mb;
            auto lhs = apply_signed_permutation(v, pa * pb);
            auto rhs = apply_signed_permutation(apply_signed_permutation(v, pb), pa);
            CHECK(lhs.data() == rhs.data());
            CHECK(lhs.affine().equals(rhs.affine(), 1e-9));
        }
}

TEST_CASE("signed permutation preserves world positions of content") {
    // A voxel's value must follow the rotation of the volume about its centre.
    auto v = make_random_volume({4, 4, 4}, 33);
    SignedPermutation p;
    p.m = {0, -1, 0, 1, 0, 0, 0, 0, 1};  // 90 degrees about z
    REQUIRE(p.valid());
    REQUIRE(p.det() == 1);
    auto out = apply_signed_permutation(v, p);
    const Mat4 world_map = signed_permutation_world_map(v, p);

    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const Vec3 w_old = v.voxel_to_world({double(x), double(y), double(z)});
                const Vec3 w_new = world_map.apply(w_old);
                const Vec3 idx = out.world_to_voxel(w_new);
                const int ix = static_cast<int>(std::lround(idx.x));
                const int iy = static_cast<int>(std::lround(idx.y));
                const int iz = static_cast<int>(std::lround(idx.z));
                CHECK(out.at(ix, iy, iz) == v.at(x, y, z));
            }
}

TEST_CASE("labeled volume validation") {
    auto v = make_random_volume({3, 3, 3}, 1);
    LabeledVolume lv;
    lv.intensity = v;
    lv.labels = Volume3D({3, 3, 3}, v.affine(), 1.0f);
    lv.num_classes = 2;
    CHECK_NOTHROW(validate_labeled_volume(lv));
    lv.labels.at(0, 0, 0) = 5.0f;
    CHECK_THROWS_AS(validate_labeled_volume(lv), std::invalid_argument);
}

TEST_CASE("volume invariants are enforced") {
    CHECK_THROWS_AS(Volume3D({0, 4, 4}, Mat4::identity()), std::invalid_argument);
    Mat4 singular{};
    CHECK_THROWS_AS(Volume3D({4, 4, 4}, singular), std::invalid_argument);

    Volume3D v({4, 4, 4}, centered_grid({4, 4, 4}, {0.8, 1.0, 2.0}).affine);
    CHECK(v.spacing().x == doctest::Approx(0.8));
    CHECK(v.spacing().y == doctest::Approx(1.0));
    CHECK(v.spacing().z == doctest::Approx(2.0));
    CHECK(v.num_voxels() == 64);
}
