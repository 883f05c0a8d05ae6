#include "atlasloom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "atlasloom/autodiff.hpp"
#include "atlasloom/nifti.hpp"
#include "atlasloom/registration.hpp"

namespace atlasloom::phantom {

using ad::Rng;
using vol::Volume3D;

GrowthModel GrowthModel::defaults() {
    GrowthModel m;
    // Radii in mm as affine functions of gestational age; the off-centre
    // inner structures break the 180-degree symmetries so orientation
    // recovery is well posed.
    m.tissues[0] = {4.0, 0.55, {1.00, 0.88, 0.82}, {0.0, 0.0, 0.0}, 200.0};  // CSF
    m.tissues[1] = {3.2, 0.50, {0.95, 0.84, 0.78}, {0.8, 0.5, 0.3}, 95.0};   // cortex
    m.tissues[2] = {2.2, 0.42, {0.88, 0.78, 0.72}, {1.6, 1.0, 0.6}, 150.0};  // white matter
    m.tissues[3] = {0.8, 0.22, {0.80, 0.70, 0.62}, {3.0, 2.0, 1.2}, 120.0};  // deep grey
    return m;
}

namespace {

struct Ellipsoid {
    Vec3 center;
    Vec3 semi;  // semi-axes, mm
};

Ellipsoid ellipsoid_at(const TissueShape& t, double tau) {
    const double r = t.radius_base + t.radius_slope * tau;
    if (r <= 0.0) throw std::invalid_argument("phantom: non-positive tissue radius");
    return {t.center_mm, {r * t.axis_scale.x, r * t.axis_scale.y, r * t.axis_scale.z}};
}

bool inside(const Ellipsoid& e, const Vec3& p) {
    const double dx = (p.x - e.center.x) / e.semi.x;
    const double dy = (p.y - e.center.y) / e.semi.y;
    const double dz = (p.z - e.center.z) / e.semi.z;
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

double ellipsoid_volume_mm3(const Ellipsoid& e) {
    return 4.0 / 3.0 * kPi * e.semi.x * e.semi.y * e.semi.z;
}

// Checks that the inner ellipsoid lies inside the outer one by sampling
// surface directions on a Fibonacci lattice.
void check_nested(const Ellipsoid& outer, const Ellipsoid& inner) {
    const int n = 512;
    for (int i = 0; i < n; ++i) {
        const double zc = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - zc * zc));
        const double phi = kPi * (1.0 + std::sqrt(5.0)) * i;
        const Vec3 u{r * std::cos(phi), r * std::sin(phi), zc};
        const Vec3 p{inner.center.x + inner.semi.x * u.x, inner.center.y + inner.semi.y * u.y,
                     inner.center.z + inner.semi.z * u.z};
        if (!inside(outer, p))
            throw std::invalid_argument("phantom: tissue nesting violated");
    }
}

struct TextureField {
    double amplitude = 0.0;
    std::array<Vec3, 3> freq;   // rad/mm
    std::array<double, 3> phase{};

    double eval(const Vec3& w) const {
        if (amplitude == 0.0) return 0.0;
        double s = 0.0;
        for (int h = 0; h < 3; ++h)
            s += std::sin(freq[h].dot(w) + phase[h]);
        return amplitude * s / 3.0;
    }
};

TextureField make_texture(const GrowthModel& model, std::uint64_t seed, bool textured) {
    TextureField t;
    t.amplitude = textured ? model.texture_amplitude : 0.0;
    Rng rng(Rng::mix(seed ^ 0x7e37a7u));
    for (int h = 0; h < 3; ++h) {
        // Random direction and wavelength; smooth relative to voxel size.
        Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
        const double n = std::max(dir.norm(), 1e-9);
        const double wavelength = rng.uniform_range(model.texture_wavelength_min_mm,
                                                    model.texture_wavelength_max_mm);
        t.freq[h] = dir * (2.0 * kPi / (wavelength * n));
        t.phase[h] = rng.uniform_range(0.0, 2.0 * kPi);
    }
    return t;
}

}  // namespace

std::array<double, kNumClasses> analytic_tissue_volumes_cm3(const GrowthModel& model,
                                                            double tau_weeks) {
    std::array<double, kNumClasses> out{};
    double vols[4];
    for (int k = 0; k < 4; ++k) vols[k] = ellipsoid_volume_mm3(ellipsoid_at(model.tissues[k], tau_weeks));
    // Shell volumes: each class is its ellipsoid minus the next one in.
    out[1] = (vols[0] - vols[1]) / 1000.0;
    out[2] = (vols[1] - vols[2]) / 1000.0;
    out[3] = (vols[2] - vols[3]) / 1000.0;
    out[4] = vols[3] / 1000.0;
    return out;
}

Phantom generate_phantom(const PhantomSpec& spec) {
    Ellipsoid ells[4];
    for (int k = 0; k < 4; ++k) {
        if (spec.model.tissues[k].radius_slope <= 0.0)
            throw std::invalid_argument("phantom: radius must be strictly increasing in tau");
        ells[k] = ellipsoid_at(spec.model.tissues[k], spec.tau_weeks);
    }
    for (int k = 0; k < 3; ++k) check_nested(ells[k], ells[k + 1]);

    const auto grid = vol::centered_grid(spec.dims, {spec.spacing_mm, spec.spacing_mm, spec.spacing_mm});
    for (int c = 0; c < 3; ++c) {
        const double half_extent = (spec.dims[c] - 1) / 2.0 * spec.spacing_mm;
        if (std::abs(ells[0].center[c]) + ells[0].semi[c] > half_extent)
            throw std::invalid_argument("phantom: outer ellipsoid exceeds the grid");
    }

    const TextureField tex = make_texture(spec.model, spec.seed, spec.textured);

    Phantom out;
    out.vol.num_classes = kNumClasses;
    out.vol.intensity = Volume3D(spec.dims, grid.affine, 0.0f);
    out.vol.labels = Volume3D(spec.dims, grid.affine, 0.0f);
    out.analytic_volumes_cm3 = analytic_tissue_volumes_cm3(spec.model, spec.tau_weeks);

    auto& intensity = out.vol.intensity;
    auto& labels = out.vol.labels;
    const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                const Vec3 w = intensity.voxel_to_world({double(x), double(y), double(z)});
                int label = 0;
                // Innermost containing region wins.
                for (int k = 3; k >= 0; --k) {
                    if (inside(ells[k], w)) {
                        label = k + 1;
                        break;
                    }
                }
                if (label == 0) continue;
                labels.at(x, y, z) = static_cast<float>(label);
                intensity.at(x, y, z) = static_cast<float>(
                    spec.model.tissues[label - 1].intensity + tex.eval(w));
            }
        }
    }
    return out;
}

namespace {

// Normalized discrete Gaussian kernel with support +-3 sigma, in units of
// the sampling step.
std::vector<double> gaussian_kernel(double sigma, double step) {
    if (sigma <= 0.0) return {1.0};
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma / step)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double x = i * step;
        k[static_cast<std::size_t>(i + radius)] = std::exp(-x * x / (2.0 * sigma * sigma));
        total += k[static_cast<std::size_t>(i + radius)];
    }
    for (auto& v : k) v /= total;
    return k;
}

// In-place separable convolution along one axis, zero padded.
void convolve_axis(std::vector<float>& data, const std::array<int, 3>& dims, int axis,
                   const std::vector<double>& kernel) {
    if (kernel.size() <= 1) return;
    const int radius = static_cast<int>(kernel.size() / 2);
    const std::int64_t stride = axis == 0 ? 1
                                : axis == 1 ? dims[0]
                                            : static_cast<std::int64_t>(dims[0]) * dims[1];
    const int n = dims[axis];
    const int n0 = axis == 0 ? dims[1] : dims[0];
    const int n1 = axis == 2 ? dims[1] : dims[2];
    const std::int64_t stride0 = axis == 0 ? dims[0] : 1;
    const std::int64_t stride1 =
        axis == 2 ? dims[0] : static_cast<std::int64_t>(dims[0]) * dims[1];

    std::vector<float> line(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) firstprivate(line)
    for (int j = 0; j < n1; ++j) {
        for (int i = 0; i < n0; ++i) {
            float* base = data.data() + i * stride0 + j * stride1;
            for (int k = 0; k < n; ++k) line[static_cast<std::size_t>(k)] = base[k * stride];
            for (int k = 0; k < n; ++k) {
                double acc = 0.0;
                const int lo = std::max(0, k - radius);
                const int hi = std::min(n - 1, k + radius);
                for (int m = lo; m <= hi; ++m)
                    acc += kernel[static_cast<std::size_t>(m - k + radius)] *
                           line[static_cast<std::size_t>(m)];
                base[k * stride] = static_cast<float>(acc);
            }
        }
    }
}

}  // namespace

SimulatedStack simulate_thick_stack(const Phantom& phantom, const AcquisitionSpec& acq) {
    if (acq.slice_thickness_mm < acq.in_plane_mm)
        throw std::invalid_argument("simulate_thick_stack: thickness must be >= in-plane spacing");
    if (acq.slice_axis < 0 || acq.slice_axis > 2)
        throw std::invalid_argument("simulate_thick_stack: slice_axis must be 0, 1 or 2");
    if (acq.psf_taps_slice < 1 || acq.psf_taps_inplane < 1)
        throw std::invalid_argument("simulate_thick_stack: tap counts must be >= 1");

    Rng rng(Rng::mix(acq.seed));
    const auto klein = reg::candidate_orientations(reg::OrientationMode::Four);
    SimulatedStack out;
    out.truth_permutation = klein[static_cast<std::size_t>(rng.uniform_int(klein.size()))];
    out.truth_rigid.rotation_deg = {rng.uniform_range(-acq.max_rotation_deg, acq.max_rotation_deg),
                                    rng.uniform_range(-acq.max_rotation_deg, acq.max_rotation_deg),
                                    rng.uniform_range(-acq.max_rotation_deg, acq.max_rotation_deg)};
    out.truth_rigid.translation_mm = {
        rng.uniform_range(-acq.max_translation_mm, acq.max_translation_mm),
        rng.uniform_range(-acq.max_translation_mm, acq.max_translation_mm),
        rng.uniform_range(-acq.max_translation_mm, acq.max_translation_mm)};

    const Volume3D& src = phantom.vol.intensity;

    // Stack grid covering the phantom extent, centred on the origin.
    const Vec3 src_spacing = src.spacing();
    const double slice_spacing = acq.slice_thickness_mm + acq.slice_gap_mm;
    std::array<int, 3> dims;
    Vec3 spacing;
    for (int c = 0; c < 3; ++c) {
        const double extent = (src.dims()[c] - 1) * src_spacing[c];
        spacing[c] = c == acq.slice_axis ? slice_spacing : acq.in_plane_mm;
        dims[c] = static_cast<int>(std::floor(extent / spacing[c])) + 1;
    }
    const auto grid = vol::centered_grid(dims, spacing);

    // Anatomy at template point x appears in the stack at w with
    // x = rigid(P(w)); the registration chain must recover exactly that.
    const Mat4 perm_world = Mat4::from_linear(out.truth_permutation.to_mat3(), {0, 0, 0});
    const Mat4 chain = out.truth_rigid.to_mat4() * perm_world;

    const bool blurred = acq.slice_thickness_mm > acq.in_plane_mm;
    const double sigma_slice = blurred ? fwhm_to_sigma(acq.slice_thickness_mm) : 0.0;
    const double sigma_inplane = blurred ? 0.5 * fwhm_to_sigma(acq.in_plane_mm) : 0.0;

    Volume3D stack(dims, grid.affine, 0.0f);

    if (!blurred) {
        // Degenerate acquisition: a plain resample through the motion.
        stack = vol::resample(src, grid, chain.inverse_affine(), vol::SampleMode::Trilinear);
    } else {
        // Sample the moved phantom once on a fine grid aligned with the
        // stack axes, blur it with exact discrete Gaussians, then take the
        // stack voxels. The fine grid carries psf_taps samples per stack
        // voxel per axis plus padding for the kernel support.
        std::array<int, 3> refine;
        std::array<int, 3> pad;
        std::array<int, 3> fdims;
        Vec3 fspacing;
        for (int c = 0; c < 3; ++c) {
            const bool is_slice = c == acq.slice_axis;
            refine[c] = is_slice ? acq.psf_taps_slice : acq.psf_taps_inplane;
            fspacing[c] = spacing[c] / refine[c];
            const double sigma = is_slice ? sigma_slice : sigma_inplane;
            pad[c] = static_cast<int>(std::ceil(3.0 * sigma / fspacing[c]));
            fdims[c] = (dims[c] - 1) * refine[c] + 1 + 2 * pad[c];
        }
        Mat4 faffine = grid.affine;
        for (int c = 0; c < 3; ++c) {
            faffine.at(c, c) = fspacing[c];
            faffine.at(c, 3) = grid.affine.at(c, 3) - pad[c] * fspacing[c];
        }

        Volume3D fine(fdims, faffine, 0.0f);
        const Mat4 to_src_vox = src.affine().inverse_affine() * (chain * faffine);
        const auto& sd = src.dims();
#pragma omp parallel for schedule(static)
        for (int z = 0; z < fdims[2]; ++z)
            for (int y = 0; y < fdims[1]; ++y) {
                Vec3 p = to_src_vox.apply({0.0, double(y), double(z)});
                const Vec3 dp{to_src_vox.at(0, 0), to_src_vox.at(1, 0), to_src_vox.at(2, 0)};
                for (int x = 0; x < fdims[0]; ++x, p.x += dp.x, p.y += dp.y, p.z += dp.z) {
                    if (p.x < 0 || p.y < 0 || p.z < 0 || p.x > sd[0] - 1 || p.y > sd[1] - 1 ||
                        p.z > sd[2] - 1)
                        continue;
                    fine.at(x, y, z) = vol::trilinear_sample(src, p).value;
                }
            }

        for (int c = 0; c < 3; ++c) {
            const double sigma = c == acq.slice_axis ? sigma_slice : sigma_inplane;
            convolve_axis(fine.data(), fdims, c, gaussian_kernel(sigma, fspacing[c]));
        }

        for (int z = 0; z < dims[2]; ++z)
            for (int y = 0; y < dims[1]; ++y)
                for (int x = 0; x < dims[0]; ++x)
                    stack.at(x, y, z) = fine.at(pad[0] + x * refine[0], pad[1] + y * refine[1],
                                                pad[2] + z * refine[2]);
    }

    if (acq.noise_sigma > 0.0) {
        const std::uint64_t noise_seed = Rng::mix(acq.seed ^ 0x5eedau);
        for (std::int64_t i = 0; i < stack.num_voxels(); ++i) {
            float& v = stack.data()[static_cast<std::size_t>(i)];
            if (v <= 0.0f) continue;
            // Counter-based noise: independent of evaluation order.
            Rng vr(Rng::mix(noise_seed + static_cast<std::uint64_t>(i)));
            v = static_cast<float>(std::max(static_cast<double>(v) + acq.noise_sigma * vr.normal(),
                                            1e-3));
        }
    }

    out.stack.volume = std::move(stack);
    out.stack.slice_axis = acq.slice_axis;
    out.stack.slice_thickness_mm = acq.slice_thickness_mm;
    out.stack.in_plane_mm = acq.in_plane_mm;
    return out;
}

io::CohortManifest generate_cohort(const CohortOptions& opts, const std::string& out_dir) {
    if (opts.subjects < 1) throw std::invalid_argument("generate_cohort: need at least 1 subject");
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);

    io::CohortManifest manifest;
    manifest.num_classes = kNumClasses;

    GrowthModel model = GrowthModel::defaults();
    model.texture_amplitude = opts.texture_amplitude;

    // Template: clean mid-age phantom, no texture, no noise.
    PhantomSpec tmpl_spec;
    tmpl_spec.tau_weeks = 0.5 * (opts.ga_min + opts.ga_max);
    tmpl_spec.dims = opts.grid_dims;
    tmpl_spec.spacing_mm = opts.spacing_mm;
    tmpl_spec.model = model;
    tmpl_spec.textured = false;
    tmpl_spec.seed = opts.seed;
    const Phantom tmpl = generate_phantom(tmpl_spec);
    manifest.template_path = "template.nii";
    vol::write_volume(tmpl.vol.intensity, (dir / manifest.template_path).string());

    for (int i = 0; i < opts.subjects; ++i) {
        io::SubjectEntry subject;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%03d", i);
        subject.id = buf;
        subject.ga_weeks =
            opts.subjects == 1
                ? 0.5 * (opts.ga_min + opts.ga_max)
                : opts.ga_min + (opts.ga_max - opts.ga_min) * i / (opts.subjects - 1);

        PhantomSpec spec;
        spec.tau_weeks = subject.ga_weeks;
        spec.dims = opts.grid_dims;
        spec.spacing_mm = opts.spacing_mm;
        spec.model = model;
        spec.seed = ad::Rng::mix(opts.seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
        const Phantom ph = generate_phantom(spec);

        subject.gt = subject.id + "_gt.nii";
        subject.seg = subject.id + "_seg.nii";
        vol::write_volume(ph.vol.intensity, (dir / subject.gt).string());
        vol::write_volume(ph.vol.labels, (dir / subject.seg).string());
        subject.analytic_volumes_cm3.assign(ph.analytic_volumes_cm3.begin(),
                                            ph.analytic_volumes_cm3.end());

        for (int j = 0; j < opts.stacks_per_subject; ++j) {
            AcquisitionSpec acq;
            acq.slice_axis = std::array<int, 3>{2, 0, 1}[static_cast<std::size_t>(j % 3)];
            acq.in_plane_mm = opts.in_plane_mm;
            acq.slice_thickness_mm = opts.slice_thickness_mm;
            acq.slice_gap_mm = opts.slice_gap_mm;
            acq.max_rotation_deg = opts.max_rotation_deg;
            acq.max_translation_mm = opts.max_translation_mm;
            acq.noise_sigma = opts.noise_sigma;
            acq.seed = ad::Rng::mix(opts.seed ^ (0x2545f4914f6cdd1dull * (i * 16 + j + 1)));
            const SimulatedStack sim = simulate_thick_stack(ph, acq);

            io::StackEntry entry;
            entry.path = subject.id + "_stk" + std::to_string(j) + ".nii";
            entry.slice_axis = acq.slice_axis;
            entry.slice_thickness_mm = acq.slice_thickness_mm;
            entry.in_plane_mm = acq.in_plane_mm;
            entry.truth.permutation = sim.truth_permutation;
            entry.truth.rigid = sim.truth_rigid;
            vol::write_volume(sim.stack.volume, (dir / entry.path).string());
            subject.stacks.push_back(std::move(entry));
        }
        manifest.subjects.push_back(std::move(subject));
    }

    io::save_manifest(manifest, (dir / "manifest.json").string());
    return manifest;
}

}  // namespace atlasloom::phantom
