#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "atlasloom/autodiff.hpp"
#include "atlasloom/phantom.hpp"
#include "atlasloom/registration.hpp"

using namespace atlasloom;
using namespace atlasloom::reg;
using vol::Volume3D;

namespace {

Volume3D noise_volume(std::array<int, 3> dims, std::uint64_t seed) {
    Volume3D v(dims, vol::centered_grid(dims, {1, 1, 1}).affine);
    ad::Rng rng(seed);
    for (auto& d : v.data()) d = static_cast<float>(rng.uniform_range(0.01, 1.0));
    return v;
}

phantom::Phantom small_phantom(double tau = 28.0, std::uint64_t seed = 3) {
    phantom::PhantomSpec spec;
    spec.tau_weeks = tau;
    spec.dims = {48, 48, 48};
    spec.spacing_mm = 1.25;
    spec.seed = seed;
    return phantom::generate_phantom(spec);
}

}  // namespace

TEST_CASE("nmi of a volume with itself is 2") {
    auto v = noise_volume({24, 24, 24}, 5);
    const auto r = nmi(v, v, 64);
    CHECK_FALSE(r.degenerate);
    CHECK(r.value == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("nmi of independent noise volumes is near 1") {
    auto a = noise_volume({32, 32, 32}, 11);
    auto b = noise_volume({32, 32, 32}, 12);
    const auto r = nmi(a, b, 64);
    CHECK_FALSE(r.degenerate);
    CHECK(std::abs(r.value - 1.0) < 0.05);
}

TEST_CASE("nmi is symmetric") {
    auto a = noise_volume({16, 16, 16}, 1);
    auto b = noise_volume({16, 16, 16}, 2);
    CHECK(std::abs(nmi(a, b).value - nmi(b, a).value) <= 1e-9);
}

TEST_CASE("nmi is invariant under a bin-aligned affine intensity remap") {
    auto a = noise_volume({16, 16, 16}, 8);
    Volume3D remapped = a;
    for (auto& v : remapped.data()) v = 2.0f * v + 5.0f;
    const auto self = nmi(a, a, 32);
    const auto cross = nmi(a, remapped, 32);
    CHECK(cross.value == doctest::Approx(self.value).epsilon(1e-9));
}

TEST_CASE("nmi is invariant when the same permutation is applied to both volumes") {
    auto p = small_phantom();
    auto a = p.vol.intensity;
    Volume3D b(a.dims(), a.affine(), 0.0f);
    ad::Rng rng(4);
    for (auto& d : b.data()) d = static_cast<float>(rng.uniform_range(0.01, 1.0));
    for (std::size_t i = 0; i < b.data().size(); ++i)
        b.data()[i] = a.data()[i] > 0 ? a.data()[i] + b.data()[i] * 10.0f : 0.0f;
    SignedPermutation perm;
    perm.m = {0, 1, 0, 1, 0, 0, 0, 0, -1};
    REQUIRE(perm.valid());
    const auto before = nmi(a, b);
    const auto after =
        nmi(vol::apply_signed_permutation(a, perm), vol::apply_signed_permutation(b, perm));
    CHECK(after.value == doctest::Approx(before.value).epsilon(1e-9));
}

TEST_CASE("constant image gives a degenerate score of 1") {
    auto b = noise_volume({8, 8, 8}, 3);
    Volume3D a(b.dims(), b.affine(), 3.0f);
    const auto r = nmi(a, b);
    CHECK(r.degenerate);
    CHECK(r.value == 1.0);
}

TEST_CASE("nmi rejects mismatched grids and bad bin counts") {
    auto a = noise_volume({8, 8, 8}, 1);
    auto b = noise_volume({8, 8, 9}, 1);
    CHECK_THROWS_AS(nmi(a, b), std::invalid_argument);
    CHECK_THROWS_AS(nmi(a, a, 1), std::invalid_argument);
}

TEST_CASE("candidate orientation sets") {
    const auto four = candidate_orientations(OrientationMode::Four);
    REQUIRE(four.size() == 4);
    for (const auto& p : four) {
        CHECK(p.valid());
        CHECK(p.det() == 1);
    }

    SUBCASE("four-mode set is closed under products (Klein four-group)") {
        for (const auto& a : four)
            for (const auto& b : four) {
                const auto prod = a * b;
                bool found = false;
                for (const auto& c : four) found = found || (prod == c);
                CHECK(found);
            }
    }

    SUBCASE("full mode yields exactly the 24 proper rotations") {
        const auto full = candidate_orientations(OrientationMode::Full);
        CHECK(full.size() == 24);
        std::set<std::array<int, 9>> unique;
        for (const auto& p : full) {
            CHECK(p.valid());
            CHECK(p.det() == 1);
            unique.insert(p.m);
        }
        CHECK(unique.size() == 24);
    }
}

TEST_CASE("rigid registration of a volume to itself stays at identity") {
    auto p = small_phantom();
    const auto r = rigid_register(p.vol.intensity, p.vol.intensity, RigidTransform::identity());
    CHECK(std::abs(r.transform.rotation_deg.x) <= 0.1);
    CHECK(std::abs(r.transform.rotation_deg.y) <= 0.1);
    CHECK(std::abs(r.transform.rotation_deg.z) <= 0.1);
    CHECK(std::abs(r.transform.translation_mm.x) <= 0.1);
    CHECK(std::abs(r.transform.translation_mm.y) <= 0.1);
    CHECK(std::abs(r.transform.translation_mm.z) <= 0.1);
    CHECK(r.nmi > 1.5);
}

TEST_CASE("rigid registration recovers a known perturbation and improves its own objective") {
    auto ph = small_phantom();
    const auto& fixed = ph.vol.intensity;

    // Build the moving volume by pushing the phantom through a known map.
    const RigidTransform truth{{5.0, -3.0, 2.0}, {3.0, -2.0, 1.0}};
    // moving(w) = fixed(truth(w)), so registering moving to fixed should
    // recover exactly `truth` as the moving-to-fixed map.
    Volume3D moving(fixed.dims(), fixed.affine(), 0.0f);
    const Mat4 to_fixed_vox = fixed.affine().inverse_affine() * (truth.to_mat4() * moving.affine());
    for (int z = 0; z < fixed.dims()[2]; ++z)
        for (int y = 0; y < fixed.dims()[1]; ++y)
            for (int x = 0; x < fixed.dims()[0]; ++x) {
                const Vec3 p = to_fixed_vox.apply({double(x), double(y), double(z)});
                if (p.x < 0 || p.y < 0 || p.z < 0 || p.x > fixed.dims()[0] - 1 ||
                    p.y > fixed.dims()[1] - 1 || p.z > fixed.dims()[2] - 1)
                    continue;
                moving.at(x, y, z) = vol::trilinear_sample(fixed, p).value;
            }

    const auto r = rigid_register(moving, fixed, RigidTransform::identity());
    CHECK(rotation_angle_between_deg(r.transform, truth) <= 1.0);
    const Vec3 dt = r.transform.translation_mm - truth.translation_mm;
    CHECK(dt.norm() <= 1.0);
    CHECK(r.nmi >= r.init_nmi);
}

TEST_CASE("stack registration recovers the simulated orientation and offset") {
    phantom::PhantomSpec spec;
    spec.tau_weeks = 28.0;
    spec.dims = {48, 48, 48};
    spec.spacing_mm = 1.25;
    spec.seed = 21;
    const auto ph = phantom::generate_phantom(spec);

    phantom::AcquisitionSpec acq;
    acq.slice_axis = 2;
    acq.in_plane_mm = 1.25;
    acq.slice_thickness_mm = 4.0;
    acq.max_rotation_deg = 6.0;
    acq.max_translation_mm = 3.0;
    acq.noise_sigma = 2.0;
    acq.seed = 33;
    const auto sim = phantom::simulate_thick_stack(ph, acq);

    // Clean template: same anatomy without texture.
    phantom::PhantomSpec tspec = spec;
    tspec.textured = false;
    const auto tmpl = phantom::generate_phantom(tspec);

    const auto result = register_stack_to_template(sim.stack, tmpl.vol.intensity, {});
    CHECK(result.chosen == sim.truth_permutation);
    CHECK(rotation_angle_between_deg(result.rigid, sim.truth_rigid) <= 1.0);
    const Vec3 dt = result.rigid.translation_mm - sim.truth_rigid.translation_mm;
    CHECK(dt.norm() <= 1.0);
    CHECK(result.candidates_evaluated == 4);

    SUBCASE("registered stack lands on the template anatomy") {
        // Brain voxels of V* should overlap the template brain closely.
        const auto& vstar = result.vstar;
        std::int64_t brain = 0, hit = 0;
        for (std::int64_t i = 0; i < vstar.num_voxels(); ++i) {
            if (tmpl.vol.intensity.data()[static_cast<std::size_t>(i)] <= 0.0f) continue;
            ++brain;
            if (vstar.data()[static_cast<std::size_t>(i)] > 0.0f) ++hit;
        }
        CHECK(static_cast<double>(hit) / static_cast<double>(brain) > 0.95);
    }
}

TEST_CASE("identifier map marks each brain voxel uniquely") {
    auto ph = small_phantom();
    const auto ids = build_identifier_map(ph.vol.intensity);
    std::set<float> seen;
    std::int64_t brain = 0;
    for (std::int64_t i = 0; i < ids.num_voxels(); ++i) {
        const float v = ids.data()[static_cast<std::size_t>(i)];
        if (ph.vol.intensity.data()[static_cast<std::size_t>(i)] > 0) {
            ++brain;
            CHECK(v != 0.0f);
            seen.insert(v);
        } else {
            CHECK(v == 0.0f);
        }
    }
    CHECK(static_cast<std::int64_t>(seen.size()) == brain);
}

TEST_CASE("identity chain marks every brain voxel observed") {
    auto ph = small_phantom();
    const auto ids = build_identifier_map(ph.vol.intensity);
    const auto weights = propagate_identifier_map(ids, SignedPermutation::identity(),
                                                  RigidTransform::identity(), ph.vol.intensity);
    for (std::int64_t i = 0; i < weights.num_voxels(); ++i) {
        const float w = weights.data()[static_cast<std::size_t>(i)];
        const bool brain = ph.vol.intensity.data()[static_cast<std::size_t>(i)] > 0;
        CHECK(w == (brain ? 1.0f : 0.0f));
    }
}

TEST_CASE("weight map fraction tracks the upsampling ratio and the exact forward count") {
    auto ph = small_phantom();
    // Source stack: 4x coarser along z.
    const auto src_grid = vol::centered_grid({48, 48, 12}, {1.25, 1.25, 5.0});
    const auto stack = vol::resample(ph.vol.intensity, src_grid, vol::SampleMode::Trilinear);
    const auto ids = build_identifier_map(stack);

    const auto weights = propagate_identifier_map(ids, SignedPermutation::identity(),
                                                  RigidTransform::identity(), ph.vol.intensity);

    // Exact count: distinct rounded forward-mapped source centres.
    const Mat4 to_target = ph.vol.intensity.affine().inverse_affine() * ids.affine();
    std::set<std::int64_t> targets;
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) {
                if (ids.at(x, y, z) == 0.0f) continue;
                const Vec3 p = to_target.apply({double(x), double(y), double(z)});
                const int ix = static_cast<int>(std::lround(p.x));
                const int iy = static_cast<int>(std::lround(p.y));
                const int iz = static_cast<int>(std::lround(p.z));
                if (ix < 0 || iy < 0 || iz < 0 || ix >= 48 || iy >= 48 || iz >= 48) continue;
                targets.insert(ph.vol.intensity.index_of(ix, iy, iz));
            }

    std::int64_t n_obs = 0, n_int = 0;
    for (std::int64_t i = 0; i < weights.num_voxels(); ++i) {
        const float w = weights.data()[static_cast<std::size_t>(i)];
        CHECK((w == 0.0f || w == 0.25f || w == 1.0f));
        if (w == 1.0f) ++n_obs;
        if (w == 0.25f) ++n_int;
    }
    CHECK(n_obs == static_cast<std::int64_t>(targets.size()));

    // Roughly a quarter of brain voxels are observed under 4x upsampling.
    const double frac = static_cast<double>(n_obs) / static_cast<double>(n_obs + n_int);
    CHECK(frac > 0.15);
    CHECK(frac < 0.35);
}

TEST_CASE("degenerate inputs fail with a registration error") {
    Volume3D flat({16, 16, 16}, Mat4::identity(), 0.0f);
    vol::ThickSliceStack stack{flat, 2, 4.0, 1.0};
    Volume3D tmpl = noise_volume({16, 16, 16}, 2);
    CHECK_THROWS_AS(register_stack_to_template(stack, tmpl, {}), RegistrationError);
}
