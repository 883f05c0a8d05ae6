// Alignment of thick-slice stacks into the template frame: NMI scoring,
// discrete orientation candidates, derivative-free rigid refinement, and
// propagation of the observed-voxel identifier map into template space.
#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "atlasloom/volume.hpp"

namespace atlasloom::reg {

class RegistrationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct NmiResult {
    double value = 1.0;
    bool degenerate = false;
};

// Normalized mutual information (H(A)+H(B))/H(A,B) over the union of the
// two foreground regions, hard binning, range [1, 2]. A constant image
// makes the score degenerate and pins it to 1.
NmiResult nmi(const vol::Volume3D& a, const vol::Volume3D& b, int bins = 64);

enum class OrientationMode { Four, Full };

// Four: the 180-degree rotation group {I, diag(1,-1,-1), diag(-1,1,-1),
// diag(-1,-1,1)}. Full: all 24 proper axis-aligned rotations.
std::vector<SignedPermutation> candidate_orientations(OrientationMode mode);

struct RigidRegisterOptions {
    int bins = 64;
    double init_step_deg = 5.0;
    double init_step_mm = 5.0;
    double stop_step_deg = 0.1;
    double stop_step_mm = 0.1;
    // 200 evaluations per level leave the search a degree or more short on
    // desk-scale grids; 400 reaches the stop step reliably.
    int max_evals_per_level = 400;
    // Coarse-to-fine downsampling factors applied to both volumes.
    std::vector<double> levels{4.0, 2.0, 1.0};
    // Seeding at the coarsest level: translation grid spacing follows
    // init_step_mm; rotations are scanned densely over +-range at the given
    // step so the search starts inside the correct basin.
    bool coarse_seed = true;
    double rotation_seed_range_deg = 12.0;
    double rotation_seed_step_deg = 3.0;
};

struct RigidRegisterResult {
    RigidTransform transform;
    double nmi = 1.0;       // score of the returned transform
    double init_nmi = 1.0;  // score of the caller's init, same objective
    bool converged = false;
};

// Maximizes NMI over the 6 rigid parameters by multi-resolution pattern
// search with shrinking steps. NMI under hard binning is not
// differentiable, hence the derivative-free scheme.
RigidRegisterResult rigid_register(const vol::Volume3D& moving, const vol::Volume3D& fixed,
                                   const RigidTransform& init,
                                   const RigidRegisterOptions& opts = {});

struct RegisterStackOptions {
    OrientationMode mode = OrientationMode::Four;
    std::optional<SignedPermutation> hint;
    RigidRegisterOptions rigid;
};

struct StackRegistration {
    vol::Volume3D vstar;  // registered stack on the template grid
    SignedPermutation chosen;
    RigidTransform rigid;
    double nmi = 1.0;
    bool converged = false;
    int candidates_evaluated = 0;
};

// Upsamples the stack onto the template grid, applies the orientation hint
// when given, and returns the candidate/rigid pair with the best NMI.
// Ties keep the first candidate in enumeration order. Throws
// RegistrationError when every candidate scores degenerate.
StackRegistration register_stack_to_template(const vol::ThickSliceStack& stack,
                                             const vol::Volume3D& tmpl,
                                             const RegisterStackOptions& opts = {});

// One unique identifier per brain voxel of the source stack, 0 elsewhere.
vol::Volume3D build_identifier_map(const vol::Volume3D& stack);

struct WeightMapOptions {
    double w_obs = 1.0;
    double w_int = 0.25;
};

// Forward-maps every identified source voxel centre through the chosen
// permutation and rigid transform, rounds to the nearest template voxel,
// and marks those targets w_obs. Remaining brain voxels of vstar get
// w_int, background 0.
vol::Volume3D propagate_identifier_map(const vol::Volume3D& idmap, const SignedPermutation& chosen,
                                       const RigidTransform& rigid, const vol::Volume3D& vstar,
                                       const WeightMapOptions& opts = {});

}  // namespace atlasloom::reg
