#include "atlasloom/inr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace atlasloom::inr {

using ad::LatticeExtent;
using ad::Rng;
using ad::TapeT;
using ad::TensorT;
using vol::GridSpec;
using vol::Volume3D;

void TrainConfig::validate() const {
    if (layers < 1 || width < 1 || d_z < 1) throw std::invalid_argument("train config: bad sizes");
    if (latent_dims[0] < 1 || latent_dims[1] < 1 || latent_dims[2] < 1)
        throw std::invalid_argument("train config: bad latent dims");
    if (psf_samples < 1) throw std::invalid_argument("train config: psf_samples must be >= 1");
    if (lambda_seg < 0.0) throw std::invalid_argument("train config: lambda must be >= 0");
    if (w_obs <= w_int || w_int <= 0.0)
        throw std::invalid_argument("train config: requires w_obs > w_int > 0");
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (steps < 1 || batch < 1) throw std::invalid_argument("train config: steps/batch must be >= 1");
}

namespace {

// World bounding box of the grid's voxel centres.
void grid_bounds(const GridSpec& grid, Vec3& lo, Vec3& hi) {
    lo = {1e300, 1e300, 1e300};
    hi = {-1e300, -1e300, -1e300};
    for (int corner = 0; corner < 8; ++corner) {
        const Vec3 idx{corner & 1 ? double(grid.dims[0] - 1) : 0.0,
                       corner & 2 ? double(grid.dims[1] - 1) : 0.0,
                       corner & 4 ? double(grid.dims[2] - 1) : 0.0};
        const Vec3 w = grid.affine.apply(idx);
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], w[c]);
            hi[c] = std::max(hi[c], w[c]);
        }
    }
}

}  // namespace

ModelParams init_params(const TrainConfig& config, const GridSpec& template_grid,
                        int num_classes, Rng& rng) {
    config.validate();
    if (num_classes < 1) throw std::invalid_argument("init_params: need at least one class");

    ModelParams p;
    p.layers = config.layers;
    p.width = config.width;
    p.d_z = config.d_z;
    p.num_classes = num_classes;
    p.omega0 = config.omega0;
    grid_bounds(template_grid, p.norm_lo, p.norm_hi);

    for (int t = 0; t < p.layers; ++t) {
        const int fan_in = t == 0 ? 3 : p.width;
        // First layer spans the full frequency range; hidden layers follow
        // the standard sine-layer scheme.
        const double bound =
            t == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / config.omega0;
        p.w.push_back(ad::Tensor::uniform({p.width, fan_in}, -bound, bound, rng));
        p.b.push_back(ad::Tensor::zeros({p.width}));
        p.mod_w.push_back(ad::Tensor::zeros({2 * p.width, p.d_z}));
        ad::Tensor mb({2 * p.width});
        for (int j = 0; j < p.width; ++j) mb.values[static_cast<std::size_t>(j)] = 1.0f;
        p.mod_b.push_back(std::move(mb));
    }
    const int head_in = p.width + p.d_z;
    const double head_bound = std::sqrt(6.0 / head_in) / config.omega0;
    p.head_w = ad::Tensor::uniform({1 + num_classes, head_in}, -head_bound, head_bound, rng);
    p.head_b = ad::Tensor::zeros({1 + num_classes});
    return p;
}

LatentGrid init_latent(const TrainConfig& config, const GridSpec& template_grid, Rng& rng) {
    LatentGrid g;
    g.dims = config.latent_dims;
    g.d_z = config.d_z;
    grid_bounds(template_grid, g.lo, g.hi);
    g.codes = ad::Tensor::gaussian({g.dims[0], g.dims[1], g.dims[2], g.d_z}, 0.1, rng);
    return g;
}

std::vector<Vec3> psf_sample(const Vec3& x, double sigma_mm, int k, Rng& rng) {
    if (k < 1) throw std::invalid_argument("psf_sample: k must be >= 1");
    std::vector<Vec3> out(static_cast<std::size_t>(k), x);
    if (sigma_mm <= 0.0) return out;
    for (auto& p : out) {
        p.x += sigma_mm * rng.normal();
        p.y += sigma_mm * rng.normal();
        p.z += sigma_mm * rng.normal();
    }
    return out;
}

template <typename T>
SharedIds<T> declare_shared(TapeT<T>& tape, const ModelParamsT<T>& params, bool requires_grad) {
    SharedIds<T> ids;
    for (int t = 0; t < params.layers; ++t) {
        ids.w.push_back(tape.leaf(params.w[static_cast<std::size_t>(t)], requires_grad));
        ids.b.push_back(tape.leaf(params.b[static_cast<std::size_t>(t)], requires_grad));
        ids.mod_w.push_back(tape.leaf(params.mod_w[static_cast<std::size_t>(t)], requires_grad));
        ids.mod_b.push_back(tape.leaf(params.mod_b[static_cast<std::size_t>(t)], requires_grad));
    }
    ids.head_w = tape.leaf(params.head_w, requires_grad);
    ids.head_b = tape.leaf(params.head_b, requires_grad);
    return ids;
}

template <typename T>
std::pair<int, int> forward_from_ids(TapeT<T>& tape, const ModelParamsT<T>& meta,
                                     const SharedIds<T>& ids, int latent_id,
                                     const LatticeExtent& extent,
                                     const std::vector<Vec3>& coords, int group) {
    const int n = static_cast<int>(coords.size());
    if (n == 0) throw std::invalid_argument("forward_from_ids: empty coordinate batch");

    // World coordinates feed the latent interpolation; the network itself
    // sees coordinates normalized to [-1,1]^3 over the template box.
    std::vector<double> world(static_cast<std::size_t>(n) * 3);
    TensorT<T> normed({n, 3});
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            const double w = coords[static_cast<std::size_t>(i)][c];
            world[static_cast<std::size_t>(i) * 3 + c] = w;
            const double span = meta.norm_hi[c] - meta.norm_lo[c];
            const double u = span != 0.0 ? 2.0 * (w - meta.norm_lo[c]) / span - 1.0 : 0.0;
            normed.values[static_cast<std::size_t>(i) * 3 + c] = static_cast<T>(u);
        }
    }

    const int z = tape.interp_latent(latent_id, std::move(world), extent);
    int y = tape.leaf(normed, false);

    for (int t = 0; t < meta.layers; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        const int pre = tape.add(tape.matmul(y, ids.w[ut]), ids.b[ut]);
        const int mod = tape.add(tape.matmul(z, ids.mod_w[ut]), ids.mod_b[ut]);
        const int gamma = tape.slice_cols(mod, 0, meta.width);
        const int delta = tape.slice_cols(mod, meta.width, 2 * meta.width);
        y = tape.sin_op(
            tape.add(tape.scale(tape.mul(gamma, pre), static_cast<T>(meta.omega0)), delta));
    }

    int out = tape.add(tape.matmul(tape.concat_cols(y, z), ids.head_w), ids.head_b);
    if (group > 1) out = tape.mean_row_groups(out, group);
    const int intensity = tape.slice_cols(out, 0, 1);
    const int logits = tape.slice_cols(out, 1, 1 + meta.num_classes);
    return {intensity, logits};
}

template <typename T>
int loss_rec(TapeT<T>& tape, int pred_intensity, const std::vector<T>& targets,
             const std::vector<T>& weights) {
    if (targets.size() != weights.size())
        throw std::invalid_argument("loss_rec: targets/weights size mismatch");
    T wsum = T(0);
    for (const T w : weights) {
        if (w < T(0)) throw std::invalid_argument("loss_rec: negative weight");
        wsum += w;
    }
    if (wsum <= T(0)) throw std::invalid_argument("loss_rec: all weights are zero");
    TensorT<T> tgt({static_cast<int>(targets.size()), 1});
    tgt.values = targets;
    const int diff = tape.add(pred_intensity, tape.scale(tape.leaf(tgt, false), T(-1)));
    const int sum = tape.weighted_sum(tape.abs_op(diff), weights);
    return tape.scale(sum, T(1) / wsum);
}

template <typename T>
int loss_seg(TapeT<T>& tape, int pred_logits, const std::vector<int>& labels,
             const std::vector<T>& weights) {
    if (labels.size() != weights.size())
        throw std::invalid_argument("loss_seg: labels/weights size mismatch");
    T wsum = T(0);
    for (const T w : weights) {
        if (w < T(0)) throw std::invalid_argument("loss_seg: negative weight");
        wsum += w;
    }
    if (wsum <= T(0)) throw std::invalid_argument("loss_seg: all weights are zero");
    const int sum = tape.softmax_xent_sum(pred_logits, labels, weights);
    return tape.scale(sum, T(1) / wsum);
}

template <typename T>
int loss_total(TapeT<T>& tape, int rec, int seg, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("loss_total: lambda must be >= 0");
    return tape.add(rec, tape.scale(seg, static_cast<T>(lambda)));
}

void apply_ablation(std::vector<SubjectRecord>& subjects, TrainConfig& config, Ablation mode,
                    std::uint64_t seed) {
    switch (mode) {
        case Ablation::None:
            return;
        case Ablation::NoPsf:
            config.sigma_psf_mm = 0.0;
            return;
        case Ablation::NoWeight:
            for (auto& s : subjects)
                for (auto& st : s.stacks)
                    for (auto& w : st.weights.data())
                        if (w > 0.0f) w = 1.0f;
            return;
        case Ablation::RandomWeight: {
            Rng rng(Rng::mix(seed ^ 0x575f7ull));
            for (auto& s : subjects)
                for (auto& st : s.stacks) {
                    std::vector<std::size_t> brain;
                    auto& data = st.weights.data();
                    for (std::size_t i = 0; i < data.size(); ++i)
                        if (data[i] > 0.0f) brain.push_back(i);
                    // Fisher-Yates over the nonzero entries.
                    for (std::size_t i = brain.size(); i > 1; --i) {
                        const std::size_t j =
                            static_cast<std::size_t>(rng.uniform_int(i));
                        std::swap(data[brain[i - 1]], data[brain[j]]);
                    }
                }
            return;
        }
    }
}

namespace {

struct StackSamples {
    std::vector<std::int64_t> brain;  // voxel indices with positive weight
};

}  // namespace

TrainResult train(const std::vector<SubjectRecord>& subjects, const TrainConfig& config,
                  const GridSpec& template_grid, int num_classes,
                  const std::function<void(const LossLogEntry&)>& on_step) {
    config.validate();
    if (subjects.empty()) throw std::invalid_argument("train: empty cohort");

    // Resolve the PSF width: FWHM equal to the slice thickness unless set.
    double sigma_psf = config.sigma_psf_mm;
    if (sigma_psf < 0.0) {
        double max_thickness = 0.0;
        for (const auto& s : subjects)
            for (const auto& st : s.stacks)
                max_thickness = std::max(max_thickness, st.slice_thickness_mm);
        sigma_psf = fwhm_to_sigma(max_thickness);
    }
    const int k_psf = sigma_psf > 0.0 ? config.psf_samples : 1;

    // Collect per-stack brain voxel lists and the intensity scale.
    const std::int64_t grid_voxels = template_grid.num_voxels();
    float intensity_scale = 0.0f;
    std::vector<std::vector<StackSamples>> samples(subjects.size());
    for (std::size_t si = 0; si < subjects.size(); ++si) {
        const auto& s = subjects[si];
        if (s.stacks.empty())
            throw std::invalid_argument("train: subject " + s.id + " has no stacks");
        if (s.segmentation.num_voxels() != grid_voxels)
            throw std::invalid_argument("train: segmentation of " + s.id +
                                        " is not on the template grid");
        bool any_brain = false;
        for (const auto& st : s.stacks) {
            if (st.vstar.num_voxels() != grid_voxels || st.weights.num_voxels() != grid_voxels)
                throw std::invalid_argument("train: stack volumes of " + s.id +
                                            " are not on the template grid");
            StackSamples ss;
            for (std::int64_t i = 0; i < grid_voxels; ++i)
                if (st.weights.data()[static_cast<std::size_t>(i)] > 0.0f) ss.brain.push_back(i);
            if (!ss.brain.empty()) any_brain = true;
            intensity_scale = std::max(intensity_scale, st.vstar.max_value());
            samples[si].push_back(std::move(ss));
        }
        if (!any_brain)
            throw std::invalid_argument("train: subject " + s.id + " has an empty brain mask");
        for (const float v : s.segmentation.data()) {
            const int lab = static_cast<int>(std::lround(v));
            if (lab < 0 || lab >= num_classes)
                throw std::invalid_argument("train: label out of range for subject " + s.id);
        }
    }
    if (intensity_scale <= 0.0f) throw std::invalid_argument("train: all stacks are empty");

    TrainResult result;
    result.intensity_scale = intensity_scale;
    result.sigma_psf_mm = sigma_psf;

    Rng param_rng(Rng::mix(config.seed ^ 0x704172616d73ull));
    result.params = init_params(config, template_grid, num_classes, param_rng);
    for (std::size_t si = 0; si < subjects.size(); ++si) {
        Rng latent_rng = Rng::derive(config.seed, 0x4c41u + si);
        result.latents.push_back(init_latent(config, template_grid, latent_rng));
    }

    // Adam over shared parameters followed by the latent grids.
    std::vector<ad::Tensor*> param_ptrs;
    for (int t = 0; t < config.layers; ++t) {
        param_ptrs.push_back(&result.params.w[static_cast<std::size_t>(t)]);
        param_ptrs.push_back(&result.params.b[static_cast<std::size_t>(t)]);
        param_ptrs.push_back(&result.params.mod_w[static_cast<std::size_t>(t)]);
        param_ptrs.push_back(&result.params.mod_b[static_cast<std::size_t>(t)]);
    }
    param_ptrs.push_back(&result.params.head_w);
    param_ptrs.push_back(&result.params.head_b);
    for (auto& lg : result.latents) param_ptrs.push_back(&lg.codes);
    ad::AdamState adam;
    adam.lr = static_cast<float>(config.lr);
    adam.init(param_ptrs);

    const LatticeExtent extent = result.latents.front().extent();
    const int per_subject =
        std::max<int>(1, config.batch / static_cast<int>(subjects.size()));
    Rng rng(Rng::mix(config.seed ^ 0x545241494eull));
    Volume3D grid_probe = Volume3D::like(template_grid);

    for (int step = 0; step < config.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        ad::Tape tape;
        const auto shared = declare_shared<float>(tape, result.params, true);
        std::vector<int> latent_ids;
        for (const auto& lg : result.latents) latent_ids.push_back(tape.leaf(lg.codes, true));

        int pred_int = -1, pred_logits = -1;
        std::vector<float> targets, weights;
        std::vector<int> labels;
        targets.reserve(static_cast<std::size_t>(per_subject) * subjects.size());

        for (std::size_t si = 0; si < subjects.size(); ++si) {
            const auto& subj = subjects[si];
            std::vector<Vec3> coords;
            coords.reserve(static_cast<std::size_t>(per_subject) * k_psf);
            for (int i = 0; i < per_subject; ++i) {
                const auto stack_idx =
                    static_cast<std::size_t>(rng.uniform_int(subj.stacks.size()));
                const auto& ss = samples[si][stack_idx];
                const std::int64_t voxel =
                    ss.brain[static_cast<std::size_t>(rng.uniform_int(ss.brain.size()))];
                const auto ijk = grid_probe.coords_of(voxel);
                const Vec3 x = template_grid.affine.apply(
                    {double(ijk[0]), double(ijk[1]), double(ijk[2])});
                const auto jittered = psf_sample(x, sigma_psf, k_psf, rng);
                coords.insert(coords.end(), jittered.begin(), jittered.end());

                const auto& st = subj.stacks[stack_idx];
                targets.push_back(st.vstar.data()[static_cast<std::size_t>(voxel)] /
                                  intensity_scale);
                weights.push_back(st.weights.data()[static_cast<std::size_t>(voxel)]);
                labels.push_back(static_cast<int>(
                    std::lround(subj.segmentation.data()[static_cast<std::size_t>(voxel)])));
            }
            auto [ii, ll] = forward_from_ids<float>(tape, result.params, shared,
                                                    latent_ids[si], extent, coords, k_psf);
            pred_int = pred_int < 0 ? ii : tape.concat_rows(pred_int, ii);
            pred_logits = pred_logits < 0 ? ll : tape.concat_rows(pred_logits, ll);
        }

        const int rec = loss_rec<float>(tape, pred_int, targets, weights);
        const int seg = loss_seg<float>(tape, pred_logits, labels, weights);
        const int total = loss_total<float>(tape, rec, seg, config.lambda_seg);

        const double total_v = tape.value(total).values[0];
        if (!std::isfinite(total_v))
            throw NumericError("train: non-finite loss at step " + std::to_string(step));

        tape.backward(total);

        std::vector<const ad::Tensor*> grads;
        for (int t = 0; t < config.layers; ++t) {
            const auto ut = static_cast<std::size_t>(t);
            grads.push_back(&tape.grad(shared.w[ut]));
            grads.push_back(&tape.grad(shared.b[ut]));
            grads.push_back(&tape.grad(shared.mod_w[ut]));
            grads.push_back(&tape.grad(shared.mod_b[ut]));
        }
        grads.push_back(&tape.grad(shared.head_w));
        grads.push_back(&tape.grad(shared.head_b));
        for (const int id : latent_ids) grads.push_back(&tape.grad(id));
        adam_step<float>(param_ptrs, grads, adam);

        LossLogEntry entry;
        entry.step = step;
        entry.rec = tape.value(rec).values[0];
        entry.seg = tape.value(seg).values[0];
        entry.total = total_v;
        entry.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        result.log.push_back(entry);
        if (on_step) on_step(entry);
    }
    return result;
}

void infer_batch(const ModelParams& params, const LatentGrid& latent,
                 const std::vector<Vec3>& coords, float* intensity_out, float* logits_out) {
    const int n = static_cast<int>(coords.size());
    const int w = params.width, dz = params.d_z, C = params.num_classes;
    const float om = static_cast<float>(params.omega0);
    const int nx = latent.dims[0], ny = latent.dims[1], nz = latent.dims[2];
    const double lo[3] = {latent.lo.x, latent.lo.y, latent.lo.z};
    const double hi[3] = {latent.hi.x, latent.hi.y, latent.hi.z};
    const int dims[3] = {nx, ny, nz};
    const float* codes = latent.codes.values.data();

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        // Latent interpolation, identical corner order to the tape op.
        std::vector<float> z(static_cast<std::size_t>(dz), 0.0f);
        {
            int i0[3], i1[3];
            double f[3];
            for (int c = 0; c < 3; ++c) {
                const double span = hi[c] - lo[c];
                double u = 0.0;
                if (dims[c] > 1 && span != 0.0)
                    u = (coords[static_cast<std::size_t>(i)][c] - lo[c]) / span * (dims[c] - 1);
                u = std::min(std::max(u, 0.0), static_cast<double>(dims[c] - 1));
                i0[c] = static_cast<int>(std::floor(u));
                if (i0[c] > dims[c] - 2) i0[c] = std::max(0, dims[c] - 2);
                i1[c] = std::min(i0[c] + 1, dims[c] - 1);
                f[c] = u - i0[c];
            }
            for (int cz = 0; cz < 2; ++cz) {
                const int iz = cz ? i1[2] : i0[2];
                const double wz = cz ? f[2] : 1.0 - f[2];
                for (int cy = 0; cy < 2; ++cy) {
                    const int iy = cy ? i1[1] : i0[1];
                    const double wy = cy ? f[1] : 1.0 - f[1];
                    for (int cx = 0; cx < 2; ++cx) {
                        const int ix = cx ? i1[0] : i0[0];
                        const float wgt = static_cast<float>((cx ? f[0] : 1.0 - f[0]) * wy * wz);
                        const float* cell =
                            codes + (static_cast<std::int64_t>(ix) +
                                     static_cast<std::int64_t>(nx) *
                                         (iy + static_cast<std::int64_t>(ny) * iz)) *
                                        dz;
                        for (int d = 0; d < dz; ++d) z[static_cast<std::size_t>(d)] += wgt * cell[d];
                    }
                }
            }
        }

        std::vector<float> y(3), act(static_cast<std::size_t>(w));
        for (int c = 0; c < 3; ++c) {
            const double span = params.norm_hi[c] - params.norm_lo[c];
            const double u =
                span != 0.0
                    ? 2.0 * (coords[static_cast<std::size_t>(i)][c] - params.norm_lo[c]) / span -
                          1.0
                    : 0.0;
            y[static_cast<std::size_t>(c)] = static_cast<float>(u);
        }

        for (int t = 0; t < params.layers; ++t) {
            const auto ut = static_cast<std::size_t>(t);
            const int fan_in = t == 0 ? 3 : w;
            const float* W = params.w[ut].values.data();
            const float* B = params.b[ut].values.data();
            const float* MW = params.mod_w[ut].values.data();
            const float* MB = params.mod_b[ut].values.data();
            for (int j = 0; j < w; ++j) {
                float pre = 0.0f;
                const float* wrow = W + static_cast<std::int64_t>(j) * fan_in;
                for (int k = 0; k < fan_in; ++k) pre += y[static_cast<std::size_t>(k)] * wrow[k];
                pre += B[j];
                float gamma = 0.0f, delta = 0.0f;
                const float* gw = MW + static_cast<std::int64_t>(j) * dz;
                const float* dw = MW + static_cast<std::int64_t>(j + w) * dz;
                for (int k = 0; k < dz; ++k) gamma += z[static_cast<std::size_t>(k)] * gw[k];
                for (int k = 0; k < dz; ++k) delta += z[static_cast<std::size_t>(k)] * dw[k];
                gamma += MB[j];
                delta += MB[j + w];
                act[static_cast<std::size_t>(j)] = std::sin(om * (gamma * pre) + delta);
            }
            y = act;
        }

        const float* HW = params.head_w.values.data();
        const float* HB = params.head_b.values.data();
        for (int j = 0; j < 1 + C; ++j) {
            float s = 0.0f;
            const float* hrow = HW + static_cast<std::int64_t>(j) * (w + dz);
            for (int k = 0; k < w; ++k) s += y[static_cast<std::size_t>(k)] * hrow[k];
            for (int k = 0; k < dz; ++k) s += z[static_cast<std::size_t>(k)] * hrow[w + k];
            s += HB[j];
            if (j == 0)
                intensity_out[i] = s;
            else
                logits_out[static_cast<std::int64_t>(i) * C + (j - 1)] = s;
        }
    }
}

vol::LabeledVolume synthesize_volume(const ModelParams& params, const LatentGrid& latent,
                                     const GridSpec& grid, float intensity_scale) {
    vol::LabeledVolume out;
    out.num_classes = params.num_classes;
    out.intensity = Volume3D::like(grid);
    out.labels = Volume3D::like(grid);

    const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
    const int C = params.num_classes;

#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        std::vector<Vec3> coords(static_cast<std::size_t>(nx));
        std::vector<float> intensity(static_cast<std::size_t>(nx));
        std::vector<float> logits(static_cast<std::size_t>(nx) * C);
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x)
                coords[static_cast<std::size_t>(x)] =
                    grid.affine.apply({double(x), double(y), double(z)});
            infer_batch(params, latent, coords, intensity.data(), logits.data());
            for (int x = 0; x < nx; ++x) {
                out.intensity.at(x, y, z) = intensity[static_cast<std::size_t>(x)] *
                                            intensity_scale;
                const float* row = logits.data() + static_cast<std::size_t>(x) * C;
                int best = 0;
                for (int c = 1; c < C; ++c)
                    if (row[c] > row[best]) best = c;  // ties keep the lowest index
                out.labels.at(x, y, z) = static_cast<float>(best);
            }
        }
    }
    return out;
}

template struct LatentGridT<double>;
template struct ModelParamsT<double>;

template SharedIds<float> declare_shared<float>(TapeT<float>&, const ModelParamsT<float>&, bool);
template SharedIds<double> declare_shared<double>(TapeT<double>&, const ModelParamsT<double>&,
                                                  bool);
template std::pair<int, int> forward_from_ids<float>(TapeT<float>&, const ModelParamsT<float>&,
                                                     const SharedIds<float>&, int,
                                                     const LatticeExtent&,
                                                     const std::vector<Vec3>&, int);
template std::pair<int, int> forward_from_ids<double>(TapeT<double>&, const ModelParamsT<double>&,
                                                      const SharedIds<double>&, int,
                                                      const LatticeExtent&,
                                                      const std::vector<Vec3>&, int);
template int loss_rec<float>(TapeT<float>&, int, const std::vector<float>&,
                             const std::vector<float>&);
template int loss_rec<double>(TapeT<double>&, int, const std::vector<double>&,
                              const std::vector<double>&);
template int loss_seg<float>(TapeT<float>&, int, const std::vector<int>&,
                             const std::vector<float>&);
template int loss_seg<double>(TapeT<double>&, int, const std::vector<int>&,
                              const std::vector<double>&);
template int loss_total<float>(TapeT<float>&, int, int, double);
template int loss_total<double>(TapeT<double>&, int, int, double);

}  // namespace atlasloom::inr
