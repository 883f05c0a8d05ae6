// Volume containers and resampling. Voxel data is stored x-fastest
// (index = x + nx*(y + ny*z)) as float32; the affine maps 0-based voxel
// indices to world millimetres and is kept in double precision.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "atlasloom/geometry.hpp"

namespace atlasloom::vol {

struct GridSpec {
    std::array<int, 3> dims{0, 0, 0};
    Mat4 affine = Mat4::identity();

    std::int64_t num_voxels() const {
        return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
    }
};

class Volume3D {
  public:
    Volume3D() = default;
    Volume3D(std::array<int, 3> dims, const Mat4& affine, float fill = 0.0f);

    static Volume3D like(const GridSpec& grid, float fill = 0.0f) {
        return Volume3D(grid.dims, grid.affine, fill);
    }

    const std::array<int, 3>& dims() const { return dims_; }
    const Mat4& affine() const { return affine_; }
    std::int64_t num_voxels() const { return static_cast<std::int64_t>(data_.size()); }

    GridSpec grid() const { return {dims_, affine_}; }
    bool same_grid(const Volume3D& o, double affine_tol = 1e-9) const;

    float& at(int x, int y, int z) { return data_[index_of(x, y, z)]; }
    float at(int x, int y, int z) const { return data_[index_of(x, y, z)]; }

    std::int64_t index_of(int x, int y, int z) const {
        return x + static_cast<std::int64_t>(dims_[0]) * (y + static_cast<std::int64_t>(dims_[1]) * z);
    }
    std::array<int, 3> coords_of(std::int64_t idx) const {
        const int x = static_cast<int>(idx % dims_[0]);
        const int y = static_cast<int>((idx / dims_[0]) % dims_[1]);
        const int z = static_cast<int>(idx / (static_cast<std::int64_t>(dims_[0]) * dims_[1]));
        return {x, y, z};
    }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    // Euclidean norms of the affine columns; strictly positive by invariant.
    Vec3 spacing() const;
    double voxel_volume_mm3() const;

    Vec3 voxel_to_world(const Vec3& voxel) const { return affine_.apply(voxel); }
    Vec3 world_to_voxel(const Vec3& world) const { return affine_.inverse_affine().apply(world); }

    // World position of the grid centre, (dims-1)/2 in voxel coordinates.
    Vec3 center_world() const;

    float min_value() const;
    float max_value() const;

  private:
    std::array<int, 3> dims_{0, 0, 0};
    Mat4 affine_ = Mat4::identity();
    std::vector<float> data_;
};

// Builds an axis-aligned grid centred on the world origin.
GridSpec centered_grid(std::array<int, 3> dims, Vec3 spacing);

struct TrilinearSample {
    float value = 0.0f;
    bool extrapolated = false;
};

// Trilinear blend of the 8 neighbours of a continuous voxel coordinate.
// Coordinates outside [0, dim-1] clamp to the edge and set the flag; the
// PSF jitter legitimately lands slightly outside the grid.
TrilinearSample trilinear_sample(const Volume3D& vol, const Vec3& p);

enum class SampleMode { Trilinear, Nearest };

// Pull-back resampling: every target voxel centre is mapped through the
// inverse of src_to_target (a world-space map) into src voxel space and
// sampled. Voxels mapping outside src become 0. Throws on a singular map.
Volume3D resample(const Volume3D& src, const GridSpec& target,
                  const Mat4& src_to_target_world, SampleMode mode);

inline Volume3D resample(const Volume3D& src, const GridSpec& target, SampleMode mode) {
    return resample(src, target, Mat4::identity(), mode);
}

// Losslessly reorders the voxel array along permuted/flipped axes and
// rotates the content about the volume's world centre by P. Applying P
// then P^-1 restores the input exactly (data bit-for-bit, affine exactly).
Volume3D apply_signed_permutation(const Volume3D& vol, const SignedPermutation& perm);

// World-space rotation induced by apply_signed_permutation: rotation by P
// about the volume centre.
Mat4 signed_permutation_world_map(const Volume3D& vol, const SignedPermutation& perm);

struct LabeledVolume {
    Volume3D intensity;
    Volume3D labels;  // integer values 0..num_classes-1 stored as float
    int num_classes = 0;

    int label_at(int x, int y, int z) const {
        return static_cast<int>(std::lround(labels.at(x, y, z)));
    }
};

// Shares dims/affine between intensity and labels and bounds label values.
void validate_labeled_volume(const LabeledVolume& lv);

struct ThickSliceStack {
    Volume3D volume;
    int slice_axis = 2;
    double slice_thickness_mm = 0.0;
    double in_plane_mm = 0.0;
};

}  // namespace atlasloom::vol
