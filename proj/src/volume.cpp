#include "atlasloom/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace atlasloom::vol {

namespace {

void check_dims(const std::array<int, 3>& dims) {
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw std::invalid_argument("Volume3D: dims must be positive");
}

void check_affine(const Mat4& affine) {
    if (std::abs(affine.linear().det()) < 1e-12)
        throw std::invalid_argument("Volume3D: affine upper 3x3 block is singular");
}

}  // namespace

Volume3D::Volume3D(std::array<int, 3> dims, const Mat4& affine, float fill)
    : dims_(dims), affine_(affine) {
    check_dims(dims);
    check_affine(affine);
    const std::int64_t n = static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
    data_.assign(static_cast<std::size_t>(n), fill);
}

bool Volume3D::same_grid(const Volume3D& o, double affine_tol) const {
    return dims_ == o.dims_ && affine_.equals(o.affine_, affine_tol);
}

Vec3 Volume3D::spacing() const {
    Vec3 s;
    for (int c = 0; c < 3; ++c) {
        const Vec3 col{affine_.at(0, c), affine_.at(1, c), affine_.at(2, c)};
        s[c] = col.norm();
    }
    return s;
}

double Volume3D::voxel_volume_mm3() const {
    return std::abs(affine_.linear().det());
}

Vec3 Volume3D::center_world() const {
    return affine_.apply({(dims_[0] - 1) / 2.0, (dims_[1] - 1) / 2.0, (dims_[2] - 1) / 2.0});
}

float Volume3D::min_value() const {
    return *std::min_element(data_.begin(), data_.end());
}

float Volume3D::max_value() const {
    return *std::max_element(data_.begin(), data_.end());
}

GridSpec centered_grid(std::array<int, 3> dims, Vec3 spacing) {
    check_dims(dims);
    Mat4 a = Mat4::identity();
    for (int c = 0; c < 3; ++c) {
        a.at(c, c) = spacing[c];
        a.at(c, 3) = -(dims[c] - 1) / 2.0 * spacing[c];
    }
    return {dims, a};
}

TrilinearSample trilinear_sample(const Volume3D& vol, const Vec3& p) {
    const auto& d = vol.dims();
    bool extrapolated = false;
    double q[3] = {p.x, p.y, p.z};
    for (int c = 0; c < 3; ++c) {
        const double hi = static_cast<double>(d[c] - 1);
        if (q[c] < 0.0) {
            q[c] = 0.0;
            extrapolated = true;
        } else if (q[c] > hi) {
            q[c] = hi;
            extrapolated = true;
        }
    }

    int i0[3], i1[3];
    double f[3];
    for (int c = 0; c < 3; ++c) {
        i0[c] = static_cast<int>(std::floor(q[c]));
        if (i0[c] > d[c] - 2) i0[c] = std::max(0, d[c] - 2);
        i1[c] = std::min(i0[c] + 1, d[c] - 1);
        f[c] = q[c] - i0[c];
    }

    const double c000 = vol.at(i0[0], i0[1], i0[2]);
    const double c100 = vol.at(i1[0], i0[1], i0[2]);
    const double c010 = vol.at(i0[0], i1[1], i0[2]);
    const double c110 = vol.at(i1[0], i1[1], i0[2]);
    const double c001 = vol.at(i0[0], i0[1], i1[2]);
    const double c101 = vol.at(i1[0], i0[1], i1[2]);
    const double c011 = vol.at(i0[0], i1[1], i1[2]);
    const double c111 = vol.at(i1[0], i1[1], i1[2]);

    const double c00 = c000 + (c100 - c000) * f[0];
    const double c10 = c010 + (c110 - c010) * f[0];
    const double c01 = c001 + (c101 - c001) * f[0];
    const double c11 = c011 + (c111 - c011) * f[0];
    const double c0 = c00 + (c10 - c00) * f[1];
    const double c1 = c01 + (c11 - c01) * f[1];
    return {static_cast<float>(c0 + (c1 - c0) * f[2]), extrapolated};
}

Volume3D resample(const Volume3D& src, const GridSpec& target,
                  const Mat4& src_to_target_world, SampleMode mode) {
    if (std::abs(src_to_target_world.linear().det()) < 1e-12)
        throw std::invalid_argument("resample: singular transform rejected");
    check_dims(target.dims);
    check_affine(target.affine);

    // Single matrix from target voxel index to src voxel coordinate.
    const Mat4 to_src = src.affine().inverse_affine() *
                        (src_to_target_world.inverse_affine() * target.affine);

    Volume3D out(target.dims, target.affine, 0.0f);
    const auto& sd = src.dims();
    const int nx = target.dims[0], ny = target.dims[1], nz = target.dims[2];

#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                const Vec3 p = to_src.apply({static_cast<double>(x), static_cast<double>(y),
                                             static_cast<double>(z)});
                if (p.x < 0.0 || p.y < 0.0 || p.z < 0.0 || p.x > sd[0] - 1 ||
                    p.y > sd[1] - 1 || p.z > sd[2] - 1)
                    continue;  // fill 0
                if (mode == SampleMode::Trilinear) {
                    out.at(x, y, z) = trilinear_sample(src, p).value;
                } else {
                    const int ix = static_cast<int>(std::lround(p.x));
                    const int iy = static_cast<int>(std::lround(p.y));
                    const int iz = static_cast<int>(std::lround(p.z));
                    out.at(x, y, z) = src.at(std::min(ix, sd[0] - 1), std::min(iy, sd[1] - 1),
                                             std::min(iz, sd[2] - 1));
                }
            }
        }
    }
    return out;
}

namespace {

// Decomposition of a signed permutation: target axis r takes source axis
// src_axis[r] with direction sign[r].
struct AxisMap {
    int src_axis[3];
    int sign[3];
};

AxisMap axis_map_of(const SignedPermutation& perm) {
    if (!perm.valid())
        throw std::invalid_argument("apply_signed_permutation: matrix is not a signed permutation");
    AxisMap am{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            if (perm.at(r, c) != 0) {
                am.src_axis[r] = c;
                am.sign[r] = perm.at(r, c);
            }
        }
    }
    return am;
}

// Map from new voxel indices back to source indices, as a Mat4 with exact
// integer entries.
Mat4 index_map_inverse(const AxisMap& am, const std::array<int, 3>& src_dims) {
    Mat4 s_inv;  // zero-initialised
    s_inv.at(3, 3) = 1.0;
    for (int r = 0; r < 3; ++r) {
        const int c = am.src_axis[r];
        s_inv.at(c, r) = static_cast<double>(am.sign[r]);
        if (am.sign[r] < 0) s_inv.at(c, 3) = static_cast<double>(src_dims[c] - 1);
    }
    return s_inv;
}

}  // namespace

Mat4 signed_permutation_world_map(const Volume3D& vol, const SignedPermutation& perm) {
    const Vec3 c = vol.center_world();
    const Mat3 r = perm.to_mat3();
    const Vec3 rc = r * c;
    return Mat4::from_linear(r, {c.x - rc.x, c.y - rc.y, c.z - rc.z});
}

Volume3D apply_signed_permutation(const Volume3D& vol, const SignedPermutation& perm) {
    const AxisMap am = axis_map_of(perm);
    const auto& sd = vol.dims();
    const std::array<int, 3> nd = {sd[am.src_axis[0]], sd[am.src_axis[1]], sd[am.src_axis[2]]};

    const Mat4 s_inv = index_map_inverse(am, sd);
    const Mat4 new_affine = signed_permutation_world_map(vol, perm) * (vol.affine() * s_inv);

    Volume3D out(nd, new_affine, 0.0f);
    // out(x') = vol(S^-1 x'); gather with integer index arithmetic.
    int src_idx[3];
    for (int z = 0; z < nd[2]; ++z) {
        for (int y = 0; y < nd[1]; ++y) {
            for (int x = 0; x < nd[0]; ++x) {
                const int tgt[3] = {x, y, z};
                for (int r = 0; r < 3; ++r) {
                    const int c = am.src_axis[r];
                    src_idx[c] = am.sign[r] > 0 ? tgt[r] : sd[c] - 1 - tgt[r];
                }
                out.at(x, y, z) = vol.at(src_idx[0], src_idx[1], src_idx[2]);
            }
        }
    }
    return out;
}

void validate_labeled_volume(const LabeledVolume& lv) {
    if (!lv.intensity.same_grid(lv.labels))
        throw std::invalid_argument("LabeledVolume: intensity and labels must share a grid");
    if (lv.num_classes <= 0)
        throw std::invalid_argument("LabeledVolume: num_classes must be positive");
    for (const float v : lv.labels.data()) {
        const int lab = static_cast<int>(std::lround(v));
        if (lab < 0 || lab >= lv.num_classes)
            throw std::invalid_argument("LabeledVolume: label value out of range");
    }
}

}  // namespace atlasloom::vol
