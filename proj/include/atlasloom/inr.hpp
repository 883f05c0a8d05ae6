// Modulated sinusoidal coordinate network with per-subject latent grids.
// Shared MLP weights capture cohort-level structure; a trilinearly
// interpolated latent code modulates every layer (scale and shift on the
// pre-activation) and joins the head input. Training runs through the
// autodiff tape with a Monte-Carlo Gaussian PSF forward model and a
// spatially weighted L1 + cross-entropy objective.
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlasloom/autodiff.hpp"
#include "atlasloom/volume.hpp"

namespace atlasloom::inr {

class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

template <typename T>
struct LatentGridT {
    std::array<int, 3> dims{8, 8, 8};
    int d_z = 64;
    Vec3 lo, hi;  // world extent spanned by the lattice
    ad::TensorT<T> codes;  // {nx, ny, nz, d_z}, channel fastest

    ad::LatticeExtent extent() const { return {lo, hi}; }

    template <typename U>
    LatentGridT<U> cast() const {
        LatentGridT<U> g;
        g.dims = dims;
        g.d_z = d_z;
        g.lo = lo;
        g.hi = hi;
        g.codes = codes.template cast<U>();
        return g;
    }
};
using LatentGrid = LatentGridT<float>;

template <typename T>
struct ModelParamsT {
    int layers = 5;
    int width = 256;
    int d_z = 64;
    int num_classes = 0;
    double omega0 = 30.0;
    Vec3 norm_lo, norm_hi;  // coordinates map to [-1,1]^3 over this box

    std::vector<ad::TensorT<T>> w;      // {width, in}
    std::vector<ad::TensorT<T>> b;      // {width}
    std::vector<ad::TensorT<T>> mod_w;  // {2*width, d_z}
    std::vector<ad::TensorT<T>> mod_b;  // {2*width}; starts as identity modulation
    ad::TensorT<T> head_w;              // {1+C, width+d_z}
    ad::TensorT<T> head_b;              // {1+C}

    template <typename U>
    ModelParamsT<U> cast() const {
        ModelParamsT<U> p;
        p.layers = layers;
        p.width = width;
        p.d_z = d_z;
        p.num_classes = num_classes;
        p.omega0 = omega0;
        p.norm_lo = norm_lo;
        p.norm_hi = norm_hi;
        for (const auto& t : w) p.w.push_back(t.template cast<U>());
        for (const auto& t : b) p.b.push_back(t.template cast<U>());
        for (const auto& t : mod_w) p.mod_w.push_back(t.template cast<U>());
        for (const auto& t : mod_b) p.mod_b.push_back(t.template cast<U>());
        p.head_w = head_w.template cast<U>();
        p.head_b = head_b.template cast<U>();
        return p;
    }
};
using ModelParams = ModelParamsT<float>;

struct TrainConfig {
    int layers = 5;
    int width = 256;
    int d_z = 64;
    std::array<int, 3> latent_dims{8, 8, 8};
    double omega0 = 30.0;
    // Negative: derive from the cohort slice thickness (FWHM = thickness).
    double sigma_psf_mm = -1.0;
    int psf_samples = 8;
    double w_obs = 1.0;
    double w_int = 0.25;
    double lambda_seg = 1.0;
    double lr = 1e-4;
    int steps = 2000;
    int batch = 1024;
    std::uint64_t seed = 7;

    void validate() const;
};

// One registered stack: intensities on the template grid plus the
// observed/interpolated weight map from registration.
struct RegisteredStackData {
    vol::Volume3D vstar;
    vol::Volume3D weights;
    double slice_thickness_mm = 0.0;
};

struct SubjectRecord {
    std::string id;
    double ga_weeks = 0.0;
    std::vector<RegisteredStackData> stacks;
    vol::Volume3D segmentation;
};

// Parameter initialization. Sine layers follow the usual SIREN scheme;
// modulator projections start at identity (gamma 1, delta 0) so training
// begins as a plain SIREN; latent codes are N(0, 0.1^2).
ModelParams init_params(const TrainConfig& config, const vol::GridSpec& template_grid,
                        int num_classes, ad::Rng& rng);
LatentGrid init_latent(const TrainConfig& config, const vol::GridSpec& template_grid,
                       ad::Rng& rng);

// Gaussian PSF jitter around a query point, world mm. sigma 0 returns K
// copies of x.
std::vector<Vec3> psf_sample(const Vec3& x, double sigma_mm, int k, ad::Rng& rng);

// Ids of the shared parameters declared on a tape.
template <typename T>
struct SharedIds {
    std::vector<int> w, b, mod_w, mod_b;
    int head_w = -1, head_b = -1;

    std::vector<int> all() const {
        std::vector<int> ids;
        ids.insert(ids.end(), w.begin(), w.end());
        ids.insert(ids.end(), b.begin(), b.end());
        ids.insert(ids.end(), mod_w.begin(), mod_w.end());
        ids.insert(ids.end(), mod_b.begin(), mod_b.end());
        ids.push_back(head_w);
        ids.push_back(head_b);
        return ids;
    }
};

template <typename T>
SharedIds<T> declare_shared(ad::TapeT<T>& tape, const ModelParamsT<T>& params,
                            bool requires_grad);

// Forward pass for a coordinate batch against one latent grid already on
// the tape. Coordinates expand K-fold through the PSF only when the caller
// passes jittered points; group > 1 averages each group of consecutive
// rows (Monte-Carlo PSF expectation). Returns (intensity [B,1], logits
// [B,C]).
template <typename T>
std::pair<int, int> forward_from_ids(ad::TapeT<T>& tape, const ModelParamsT<T>& meta,
                                     const SharedIds<T>& ids, int latent_id,
                                     const ad::LatticeExtent& extent,
                                     const std::vector<Vec3>& coords, int group);

// Weighted mean absolute error: sum w |pred - target| / sum w.
template <typename T>
int loss_rec(ad::TapeT<T>& tape, int pred_intensity, const std::vector<T>& targets,
             const std::vector<T>& weights);

// Weighted mean softmax cross-entropy, same normalization.
template <typename T>
int loss_seg(ad::TapeT<T>& tape, int pred_logits, const std::vector<int>& labels,
             const std::vector<T>& weights);

template <typename T>
int loss_total(ad::TapeT<T>& tape, int rec, int seg, double lambda);

struct LossLogEntry {
    int step = 0;
    double rec = 0.0, seg = 0.0, total = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<LatentGrid> latents;  // one per subject, input order
    std::vector<LossLogEntry> log;
    float intensity_scale = 1.0f;
    double sigma_psf_mm = 0.0;
};

enum class Ablation { None, NoPsf, NoWeight, RandomWeight };

// Table-1-style ablations: NoPsf zeroes sigma, NoWeight flattens every
// nonzero weight to 1, RandomWeight shuffles the nonzero weights in place.
void apply_ablation(std::vector<SubjectRecord>& subjects, TrainConfig& config, Ablation mode,
                    std::uint64_t seed);

TrainResult train(const std::vector<SubjectRecord>& subjects, const TrainConfig& config,
                  const vol::GridSpec& template_grid, int num_classes,
                  const std::function<void(const LossLogEntry&)>& on_step = {});

// Plain float inference path (no tape, no PSF), used for dense queries.
// Matches the tape forward arithmetic operation for operation.
void infer_batch(const ModelParams& params, const LatentGrid& latent,
                 const std::vector<Vec3>& coords, float* intensity_out, float* logits_out);

// Dense grid query: intensity (rescaled) plus argmax labels, ties to the
// lowest class index.
vol::LabeledVolume synthesize_volume(const ModelParams& params, const LatentGrid& latent,
                                     const vol::GridSpec& grid, float intensity_scale);

extern template struct LatentGridT<double>;
extern template struct ModelParamsT<double>;

}  // namespace atlasloom::inr
