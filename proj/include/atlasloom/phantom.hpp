// Synthetic cohort oracle: analytic nested-ellipsoid brain phantoms with a
// known growth law, plus a thick-slice acquisition simulator with known
// PSF and known rigid motion. Everything here has a closed form so the
// acceptance experiments can check against exact ground truth.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "atlasloom/manifest.hpp"
#include "atlasloom/volume.hpp"

namespace atlasloom::phantom {

inline constexpr int kNumClasses = 5;  // background, CSF, cortex, WM, deep

struct TissueShape {
    double radius_base = 0.0;   // mm at tau = 0
    double radius_slope = 0.0;  // mm per week, strictly positive
    Vec3 axis_scale;            // per-axis anisotropy of the ellipsoid
    Vec3 center_mm;             // offset from the grid centre; breaks symmetry
    double intensity = 0.0;
};

// Nested ellipsoids ordered outside-in: CSF, cortex, white matter, deep
// grey. A voxel's label is the innermost region containing it.
struct GrowthModel {
    std::array<TissueShape, 4> tissues;
    double texture_amplitude = 6.0;
    double texture_wavelength_min_mm = 8.0;
    double texture_wavelength_max_mm = 14.0;

    static GrowthModel defaults();
};

struct PhantomSpec {
    double tau_weeks = 28.0;
    std::array<int, 3> dims{96, 96, 96};
    double spacing_mm = 0.8;
    GrowthModel model = GrowthModel::defaults();
    std::uint64_t seed = 1;
    bool textured = true;
};

struct Phantom {
    vol::LabeledVolume vol;
    std::array<double, kNumClasses> analytic_volumes_cm3{};
};

// Closed-form per-class volumes (shell differences of nested ellipsoids).
std::array<double, kNumClasses> analytic_tissue_volumes_cm3(const GrowthModel& model,
                                                            double tau_weeks);

// Deterministic for a seed. Throws when the outer ellipsoid exceeds the
// grid or the nesting is violated.
Phantom generate_phantom(const PhantomSpec& spec);

struct AcquisitionSpec {
    int slice_axis = 2;
    double in_plane_mm = 1.0;
    double slice_thickness_mm = 4.0;
    double slice_gap_mm = 0.0;
    double max_rotation_deg = 8.0;
    double max_translation_mm = 4.0;
    double noise_sigma = 4.0;
    std::uint64_t seed = 1;
    // Quadrature density for the PSF integral: the phantom is sampled on a
    // grid refined by these factors per stack voxel and blurred with exact
    // discrete Gaussians before decimation.
    int psf_taps_slice = 16;
    int psf_taps_inplane = 8;
};

struct SimulatedStack {
    vol::ThickSliceStack stack;
    SignedPermutation truth_permutation;
    RigidTransform truth_rigid;
};

// Applies a random orientation candidate plus a random rigid perturbation,
// integrates a Gaussian slice profile by dense quadrature, and adds noise
// to brain voxels. The slice-axis sigma follows the FWHM = thickness rule;
// acquisitions no thicker than their in-plane spacing get no blur, which
// keeps the degenerate case an exact resample.
SimulatedStack simulate_thick_stack(const Phantom& phantom, const AcquisitionSpec& acq);

struct CohortOptions {
    int subjects = 12;
    double ga_min = 22.0;
    double ga_max = 35.0;
    int stacks_per_subject = 3;
    std::array<int, 3> grid_dims{72, 72, 72};
    double spacing_mm = 0.8;
    double slice_thickness_mm = 4.0;
    double in_plane_mm = 1.0;
    double slice_gap_mm = 0.0;
    double max_rotation_deg = 8.0;
    double max_translation_mm = 4.0;
    double noise_sigma = 4.0;
    double texture_amplitude = 6.0;
    std::uint64_t seed = 7;
};

// Writes template, per-subject ground truth, segmentations and stacks into
// out_dir together with a manifest JSON. Ages are spread uniformly over
// [ga_min, ga_max]. Returns the manifest (paths relative to out_dir).
io::CohortManifest generate_cohort(const CohortOptions& opts, const std::string& out_dir);

}  // namespace atlasloom::phantom
