#include "atlasloom/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <vector>

namespace atlasloom::reg {

using vol::GridSpec;
using vol::SampleMode;
using vol::Volume3D;

namespace {

struct Range {
    float lo = 0.0f, hi = 0.0f;
    bool valid = false;
};

Range foreground_range(const Volume3D& v) {
    Range r;
    for (const float f : v.data()) {
        if (f <= 0.0f) continue;
        if (!r.valid) {
            r.lo = r.hi = f;
            r.valid = true;
        } else {
            r.lo = std::min(r.lo, f);
            r.hi = std::max(r.hi, f);
        }
    }
    return r;
}

int bin_of(float v, float lo, float hi, int bins) {
    const int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    return std::min(std::max(b, 0), bins - 1);
}

double entropy_nats(const std::vector<double>& counts, double total) {
    double h = 0.0;
    for (const double c : counts) {
        if (c <= 0.0) continue;
        const double p = c / total;
        h -= p * std::log(p);
    }
    return h;
}

NmiResult nmi_from_joint(const std::vector<double>& joint, int bins) {
    double total = 0.0;
    for (const double c : joint) total += c;
    if (total <= 0.0) return {1.0, true};
    std::vector<double> ma(bins, 0.0), mb(bins, 0.0);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            ma[i] += joint[static_cast<std::size_t>(i) * bins + j];
            mb[j] += joint[static_cast<std::size_t>(i) * bins + j];
        }
    const double ha = entropy_nats(ma, total);
    const double hb = entropy_nats(mb, total);
    const double hab = entropy_nats(joint, total);
    if (hab <= 0.0) return {1.0, true};
    return {(ha + hb) / hab, false};
}

}  // namespace

NmiResult nmi(const Volume3D& a, const Volume3D& b, int bins) {
    if (!a.same_grid(b))
        throw std::invalid_argument("nmi: volumes must share a grid (resample first)");
    if (bins < 2) throw std::invalid_argument("nmi: bins must be >= 2");

    const Range ra = foreground_range(a);
    const Range rb = foreground_range(b);
    if (!ra.valid || !rb.valid || ra.hi <= ra.lo || rb.hi <= rb.lo) return {1.0, true};

    std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
    const auto& da = a.data();
    const auto& db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        if (da[i] <= 0.0f && db[i] <= 0.0f) continue;
        joint[static_cast<std::size_t>(bin_of(da[i], ra.lo, ra.hi, bins)) * bins +
              bin_of(db[i], rb.lo, rb.hi, bins)] += 1.0;
    }
    return nmi_from_joint(joint, bins);
}

std::vector<SignedPermutation> candidate_orientations(OrientationMode mode) {
    std::vector<SignedPermutation> out;
    if (mode == OrientationMode::Four) {
        const std::array<std::array<int, 9>, 4> klein = {{{1, 0, 0, 0, 1, 0, 0, 0, 1},
                                                          {1, 0, 0, 0, -1, 0, 0, 0, -1},
                                                          {-1, 0, 0, 0, 1, 0, 0, 0, -1},
                                                          {-1, 0, 0, 0, -1, 0, 0, 0, 1}}};
        for (const auto& m : klein) {
            SignedPermutation p;
            p.m = m;
            out.push_back(p);
        }
        return out;
    }
    // All signed permutations with det +1.
    std::array<int, 3> perm = {0, 1, 2};
    std::sort(perm.begin(), perm.end());
    do {
        for (int signs = 0; signs < 8; ++signs) {
            SignedPermutation p;
            p.m = {0, 0, 0, 0, 0, 0, 0, 0, 0};
            for (int r = 0; r < 3; ++r)
                p.at(r, perm[static_cast<std::size_t>(r)]) = (signs >> r) & 1 ? -1 : 1;
            if (p.det() == 1) out.push_back(p);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

namespace {

// Downsamples a volume by an isotropic factor onto a grid sharing its
// world centre.
Volume3D downsample(const Volume3D& v, double factor) {
    if (factor <= 1.0) return v;
    const Vec3 sp = v.spacing();
    std::array<int, 3> nd;
    Vec3 nsp;
    for (int c = 0; c < 3; ++c) {
        // Never shrink below 24 voxels per axis; coarser pyramids cannot
        // resolve rotations and their histograms are too sparse.
        nd[c] = std::max(std::min(24, v.dims()[c]),
                         static_cast<int>(std::ceil(v.dims()[c] / factor)));
        nsp[c] = sp[c] * static_cast<double>(v.dims()[c]) / nd[c];
    }
    // Keep the same world centre as the source grid.
    Mat4 a = Mat4::identity();
    const Vec3 centre = v.center_world();
    const Mat3 lin = v.affine().linear();
    // Scale each affine column to the new spacing, preserving direction.
    Mat3 nl = lin;
    for (int c = 0; c < 3; ++c) {
        const double scale = nsp[c] / sp[c];
        for (int r = 0; r < 3; ++r) nl.at(r, c) = lin.at(r, c) * scale;
    }
    const Vec3 off = nl * Vec3{(nd[0] - 1) / 2.0, (nd[1] - 1) / 2.0, (nd[2] - 1) / 2.0};
    a = Mat4::from_linear(nl, centre - off);
    return vol::resample(v, {nd, a}, SampleMode::Trilinear);
}

// Fused resample + joint histogram NMI of moving-under-transform against
// fixed, on the fixed grid. Intensity ranges are pinned per level so all
// evaluations at a level share binning. Samples are spread linearly over
// the two adjacent bins per image (partial-volume weighting): under hard
// binning the objective is jagged at the 1e-4 level, which stalls the
// pattern search a degree or more from the optimum.
class NmiScorer {
  public:
    NmiScorer(const Volume3D& moving, const Volume3D& fixed, int bins, double pad_mm = 18.0)
        : moving_(moving), fixed_(fixed), bins_(bins) {
        rm_ = foreground_range(moving);
        rf_ = foreground_range(fixed);
        to_moving_base_ = moving.affine().inverse_affine();
        mdata_ = moving.data().data();
        mnx_ = moving.dims()[0];
        mnxy_ = static_cast<std::int64_t>(moving.dims()[0]) * moving.dims()[1];
        // Evaluation window: fixed-foreground bounding box padded by the
        // plausible motion extent. Voxels outside are background in both
        // images for every candidate transform and contribute nothing.
        const auto& fd = fixed.dims();
        lo_ = {fd[0], fd[1], fd[2]};
        hi_ = {-1, -1, -1};
        for (int z = 0; z < fd[2]; ++z)
            for (int y = 0; y < fd[1]; ++y)
                for (int x = 0; x < fd[0]; ++x) {
                    if (fixed.at(x, y, z) <= 0.0f) continue;
                    lo_[0] = std::min(lo_[0], x);
                    lo_[1] = std::min(lo_[1], y);
                    lo_[2] = std::min(lo_[2], z);
                    hi_[0] = std::max(hi_[0], x);
                    hi_[1] = std::max(hi_[1], y);
                    hi_[2] = std::max(hi_[2], z);
                }
        const Vec3 sp = fixed.spacing();
        for (int c = 0; c < 3; ++c) {
            const int pad = static_cast<int>(std::ceil(pad_mm / sp[c]));
            lo_[c] = std::max(0, lo_[c] - pad);
            hi_[c] = std::min(fd[c] - 1, hi_[c] + pad);
            if (hi_[c] < lo_[c]) {  // no foreground at all
                lo_[c] = 0;
                hi_[c] = fd[c] - 1;
            }
        }
    }

    bool degenerate_ranges() const {
        return !rm_.valid || !rf_.valid || rm_.hi <= rm_.lo || rf_.hi <= rf_.lo;
    }

    // transform maps moving world to fixed world.
    double score(const RigidTransform& t) const {
        if (degenerate_ranges()) return 1.0;
        const Mat4 to_moving =
            to_moving_base_ * (t.to_mat4().inverse_affine() * fixed_.affine());
        const auto& md = moving_.dims();
        std::vector<double> joint(static_cast<std::size_t>(bins_) * bins_, 0.0);
        // March the moving-space coordinate incrementally along x rows.
        const Vec3 dp{to_moving.at(0, 0), to_moving.at(1, 0), to_moving.at(2, 0)};
        for (int z = lo_[2]; z <= hi_[2]; ++z)
            for (int y = lo_[1]; y <= hi_[1]; ++y) {
                Vec3 p = to_moving.apply({double(lo_[0]), double(y), double(z)});
                for (int x = lo_[0]; x <= hi_[0]; ++x, p.x += dp.x, p.y += dp.y, p.z += dp.z) {
                    const float fv = fixed_.at(x, y, z);
                    float mv = 0.0f;
                    if (p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x <= md[0] - 1 &&
                        p.y <= md[1] - 1 && p.z <= md[2] - 1) {
                        const int ix = std::min(static_cast<int>(p.x), md[0] - 2);
                        const int iy = std::min(static_cast<int>(p.y), md[1] - 2);
                        const int iz = std::min(static_cast<int>(p.z), md[2] - 2);
                        const double fxw = p.x - ix, fyw = p.y - iy, fzw = p.z - iz;
                        const float* c0 = mdata_ + ix + static_cast<std::int64_t>(mnx_) * iy +
                                          mnxy_ * iz;
                        const float* c1 = c0 + mnxy_;
                        const double a00 = c0[0] + (c0[1] - c0[0]) * fxw;
                        const double a10 = c0[mnx_] + (c0[mnx_ + 1] - c0[mnx_]) * fxw;
                        const double a01 = c1[0] + (c1[1] - c1[0]) * fxw;
                        const double a11 = c1[mnx_] + (c1[mnx_ + 1] - c1[mnx_]) * fxw;
                        const double b0 = a00 + (a10 - a00) * fyw;
                        const double b1 = a01 + (a11 - a01) * fyw;
                        mv = static_cast<float>(b0 + (b1 - b0) * fzw);
                    }
                    if (fv <= 0.0f && mv <= 0.0f) continue;
                    int mb0, mb1, fb0, fb1;
                    double mw, fw;
                    split_bin(mv, rm_, mb0, mb1, mw);
                    split_bin(fv, rf_, fb0, fb1, fw);
                    joint[static_cast<std::size_t>(mb0) * bins_ + fb0] += (1 - mw) * (1 - fw);
                    joint[static_cast<std::size_t>(mb0) * bins_ + fb1] += (1 - mw) * fw;
                    joint[static_cast<std::size_t>(mb1) * bins_ + fb0] += mw * (1 - fw);
                    joint[static_cast<std::size_t>(mb1) * bins_ + fb1] += mw * fw;
                }
            }
        return nmi_from_joint(joint, bins_).value;
    }

  private:
    void split_bin(float v, const Range& r, int& b0, int& b1, double& w) const {
        const double u = (v - r.lo) / (r.hi - r.lo) * bins_ - 0.5;
        const double uc = std::min(std::max(u, 0.0), static_cast<double>(bins_ - 1));
        b0 = std::min(static_cast<int>(uc), bins_ - 1);
        b1 = std::min(b0 + 1, bins_ - 1);
        w = uc - b0;
    }

    const Volume3D& moving_;
    const Volume3D& fixed_;
    int bins_;
    Range rm_, rf_;
    Mat4 to_moving_base_;
    std::array<int, 3> lo_{}, hi_{};
    const float* mdata_ = nullptr;
    int mnx_ = 0;
    std::int64_t mnxy_ = 0;
};

}  // namespace

RigidRegisterResult rigid_register(const Volume3D& moving, const Volume3D& fixed,
                                   const RigidTransform& init, const RigidRegisterOptions& opts) {
    RigidRegisterResult result;
    result.transform = init;
    result.nmi = 1.0;

    // Foreground-intensity centroid of the moving volume, world mm. The
    // search parameterizes rotations about this point so rotation and
    // translation axes decouple; in the origin-centred convention a
    // translation error makes every rotation look wrong, which breaks
    // basin ranking.
    Vec3 centroid{0, 0, 0};
    {
        double wsum = 0.0;
        Vec3 acc{0, 0, 0};
        const auto& md = moving.dims();
        for (int z = 0; z < md[2]; ++z)
            for (int y = 0; y < md[1]; ++y)
                for (int x = 0; x < md[0]; ++x) {
                    const float v = moving.at(x, y, z);
                    if (v <= 0.0f) continue;
                    const Vec3 w = moving.voxel_to_world({double(x), double(y), double(z)});
                    acc = acc + w * static_cast<double>(v);
                    wsum += v;
                }
        if (wsum > 0.0) centroid = acc * (1.0 / wsum);
    }

    auto to_rigid = [&](const double p[6]) {
        RigidTransform t{{p[0], p[1], p[2]}, {0, 0, 0}};
        const Vec3 rm = t.rotation_matrix() * centroid;
        t.translation_mm = {centroid.x - rm.x + p[3], centroid.y - rm.y + p[4],
                            centroid.z - rm.z + p[5]};
        return t;
    };
    auto from_rigid = [&](const RigidTransform& t, double p[6]) {
        p[0] = t.rotation_deg.x;
        p[1] = t.rotation_deg.y;
        p[2] = t.rotation_deg.z;
        const Vec3 rm = t.rotation_matrix() * centroid;
        p[3] = t.translation_mm.x - (centroid.x - rm.x);
        p[4] = t.translation_mm.y - (centroid.y - rm.y);
        p[5] = t.translation_mm.z - (centroid.z - rm.z);
    };

    // Resolve the pyramid up front; the 24-voxel floor can make adjacent
    // levels identical on small volumes, and duplicates waste budget.
    struct Level {
        Volume3D mv, fx;
        int bins = 0;
    };
    std::vector<Level> levels;
    {
        std::array<int, 3> prev_dims{-1, -1, -1};
        for (const double f : opts.levels) {
            Level lv{downsample(moving, f), downsample(fixed, f), 0};
            if (lv.fx.dims() == prev_dims) continue;
            prev_dims = lv.fx.dims();
            const double eff =
                static_cast<double>(fixed.dims()[0]) / static_cast<double>(lv.fx.dims()[0]);
            lv.bins = std::max(
                16, static_cast<int>(std::lround(opts.bins / std::max(1.0, eff))));
            levels.push_back(std::move(lv));
        }
    }
    if (levels.empty()) return result;
    const std::size_t n_levels = levels.size();
    const std::size_t mid = n_levels >= 2 ? n_levels - 2 : 0;

    bool converged = true;
    double params[6];
    from_rigid(init, params);

    for (std::size_t li = 0; li < n_levels; ++li) {
        NmiScorer scorer(levels[li].mv, levels[li].fx, levels[li].bins);
        if (scorer.degenerate_ranges()) continue;

        int evals = 0;
        // Coarse levels are cheap per evaluation and do the heavy lifting,
        // so they get exponentially larger budgets.
        const int eval_budget = opts.max_evals_per_level
                                << (n_levels - 1 - li);
        auto eval = [&](const double p[6]) {
            ++evals;
            return scorer.score(to_rigid(p));
        };
        double best = eval(params);
        if (li + 1 == n_levels) result.init_nmi = scorer.score(init);

        const double level_shrink = std::pow(0.5, static_cast<double>(li));
        double step_deg = 0.0, step_mm = 0.0;

        auto explore = [&](double x[6], double fx, int budget) {
            for (int d = 0; d < 6 && evals < budget; ++d) {
                const double step = d < 3 ? step_deg : step_mm;
                for (const double dir : {+1.0, -1.0}) {
                    const double old = x[d];
                    x[d] = old + dir * step;
                    const double sc = eval(x);
                    if (sc > fx) {
                        fx = sc;
                        break;
                    }
                    x[d] = old;
                    if (evals >= budget) break;
                }
            }
            return fx;
        };

        // Hooke-Jeeves pattern search with shrinking steps.
        auto pattern_search = [&](double x[6], double fx, int budget, double step0_deg,
                                  double step0_mm) {
            step_deg = step0_deg;
            step_mm = step0_mm;
            while ((step_deg >= opts.stop_step_deg || step_mm >= opts.stop_step_mm) &&
                   evals < budget) {
                double xe[6];
                std::copy(x, x + 6, xe);
                const double fe = explore(xe, fx, budget);
                if (fe <= fx) {
                    step_deg *= 0.5;
                    step_mm *= 0.5;
                    continue;
                }
                // Chase the accumulated direction while pattern moves pay off.
                double prev[6];
                std::copy(x, x + 6, prev);
                std::copy(xe, xe + 6, x);
                fx = fe;
                while (evals < budget) {
                    double xp[6];
                    for (int i = 0; i < 6; ++i) xp[i] = x[i] + (x[i] - prev[i]);
                    const double fp = explore(xp, eval(xp), budget);
                    if (fp <= fx) break;
                    std::copy(x, x + 6, prev);
                    std::copy(xp, xp + 6, x);
                    fx = fp;
                }
            }
            return fx;
        };

        if (li == 0 && opts.coarse_seed) {
            // Translation grid around the init; translations are recovered
            // reliably even at coarse resolution.
            const double sm = opts.init_step_mm;
            double base[6];
            std::copy(params, params + 6, base);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0 && dz == 0) continue;
                        double cand[6] = {base[0], base[1], base[2], base[3] + dx * sm,
                                          base[4] + dy * sm, base[5] + dz * sm};
                        const double sc = eval(cand);
                        if (sc > best) {
                            best = sc;
                            std::copy(cand, cand + 6, params);
                        }
                    }
        }

        if (li == mid && opts.coarse_seed) {
            // Basin selection. Rotation basins are only a few degrees wide
            // and near-ellipsoidal anatomy makes distant rotations score
            // deceptively well, so a dense rotation grid is scanned, the
            // top few mutually distant points are each refined briefly,
            // and the refined candidates are ranked at full resolution.
            struct Cand {
                double score;
                std::array<double, 6> p;
            };
            std::vector<Cand> grid;
            grid.push_back({best,
                            {params[0], params[1], params[2], params[3], params[4], params[5]}});
            const double range = opts.rotation_seed_range_deg;
            const double rstep = opts.rotation_seed_step_deg;
            for (double rz = -range; rz <= range + 1e-9; rz += rstep)
                for (double ry = -range; ry <= range + 1e-9; ry += rstep)
                    for (double rx = -range; rx <= range + 1e-9; rx += rstep) {
                        double cand[6] = {rx, ry, rz, params[3], params[4], params[5]};
                        grid.push_back({eval(cand),
                                        {cand[0], cand[1], cand[2], cand[3], cand[4], cand[5]}});
                    }
            std::stable_sort(grid.begin(), grid.end(),
                             [](const Cand& a, const Cand& b) { return a.score > b.score; });

            // Keep the best few points that are mutually distant in
            // rotation space, then refine each a little.
            std::vector<Cand> beam;
            for (const auto& c : grid) {
                bool distinct = true;
                for (const auto& b : beam) {
                    const double d = std::max({std::abs(c.p[0] - b.p[0]),
                                               std::abs(c.p[1] - b.p[1]),
                                               std::abs(c.p[2] - b.p[2])});
                    if (d < 1.5 * rstep) {
                        distinct = false;
                        break;
                    }
                }
                if (distinct) beam.push_back(c);
                if (beam.size() >= 6) break;
            }
            for (auto& c : beam) {
                double x[6];
                std::copy(c.p.begin(), c.p.end(), x);
                const int budget = evals + 200;
                c.score = pattern_search(x, c.score, budget, opts.init_step_deg * 0.25,
                                         opts.init_step_mm * 0.25);
                std::copy(x, x + 6, c.p.begin());
            }

            // Rank the refined candidates with the full-resolution scorer.
            NmiScorer full(levels.back().mv, levels.back().fx, levels.back().bins);
            double best_full = -1.0;
            for (const auto& c : beam) {
                const double sc = full.score(to_rigid(c.p.data()));
                if (sc > best_full) {
                    best_full = sc;
                    std::copy(c.p.begin(), c.p.end(), params);
                }
            }
            best = eval(params);
        }

        evals = 0;
        best = pattern_search(params, best, eval_budget, opts.init_step_deg * level_shrink,
                              opts.init_step_mm * level_shrink);
        // One polish restart on a shifted step lattice; the first descent
        // tends to stall on micro-plateaus half a step off the optimum.
        if (li + 1 == n_levels)
            best = pattern_search(params, best, eval_budget,
                                  opts.init_step_deg * level_shrink * 0.3,
                                  opts.init_step_mm * level_shrink * 0.3);

        if (li + 1 == n_levels) {
            // The objective can be nearly flat along some rotation axes
            // (the brain shell is close to rotation symmetric), and step
            // probes stall on micro-jags inside such valleys. Full line
            // scans see across the jags; two rounds with a short polish
            // after each.
            for (int round = 0; round < 2; ++round) {
                const double best_at_round_start = best;
                for (int d = 0; d < 6; ++d) {
                    const double span = d < 3 ? 4.0 : 2.0;
                    const double lstep = d < 3 ? 0.5 : 0.25;
                    double base[6];
                    std::copy(params, params + 6, base);
                    for (double off = -span; off <= span + 1e-9; off += lstep) {
                        if (std::abs(off) < 1e-12) continue;
                        double cand[6];
                        std::copy(base, base + 6, cand);
                        cand[d] = base[d] + off;
                        const double sc = eval(cand);
                        if (sc > best) {
                            best = sc;
                            std::copy(cand, cand + 6, params);
                        }
                    }
                }
                evals = 0;
                best = pattern_search(params, best, eval_budget / 2,
                                      opts.init_step_deg * level_shrink * 0.1,
                                      opts.init_step_mm * level_shrink * 0.1);
                if (best <= best_at_round_start + 1e-12) break;
            }
        }

        if (std::getenv("ATLASLOOM_DEBUG_REG"))
            std::fprintf(stderr,
                         "[reg] level %zu dims %dx%dx%d bins %d -> "
                         "(%.2f %.2f %.2f | %.2f %.2f %.2f) score %.6f evals %d\n",
                         li, levels[li].fx.dims()[0], levels[li].fx.dims()[1],
                         levels[li].fx.dims()[2], levels[li].bins, params[0], params[1], params[2],
                         params[3], params[4], params[5], best, evals);

        if (step_deg >= opts.stop_step_deg || step_mm >= opts.stop_step_mm) converged = false;

        result.transform = to_rigid(params);
        result.nmi = best;
    }
    result.converged = converged;
    return result;
}

StackRegistration register_stack_to_template(const vol::ThickSliceStack& stack,
                                             const Volume3D& tmpl,
                                             const RegisterStackOptions& opts) {
    // Operator U: bring the stack onto the isotropic template grid.
    const Volume3D upsampled = vol::resample(stack.volume, tmpl.grid(), SampleMode::Trilinear);

    std::vector<SignedPermutation> candidates;
    if (opts.hint) {
        if (!opts.hint->valid())
            throw std::invalid_argument("register_stack_to_template: invalid orientation hint");
        for (const auto& k : candidate_orientations(OrientationMode::Four))
            candidates.push_back(k * (*opts.hint));
    } else {
        candidates = candidate_orientations(opts.mode);
    }

    // Candidates are independent; the argmax reduction below walks them in
    // enumeration order, so results do not depend on scheduling.
    const int n_cand = static_cast<int>(candidates.size());
    std::vector<RigidRegisterResult> results(static_cast<std::size_t>(n_cand));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_cand; ++i) {
        const Volume3D oriented =
            vol::apply_signed_permutation(upsampled, candidates[static_cast<std::size_t>(i)]);
        results[static_cast<std::size_t>(i)] =
            rigid_register(oriented, tmpl, RigidTransform::identity(), opts.rigid);
    }

    StackRegistration best;
    bool have_best = false;
    for (int i = 0; i < n_cand; ++i) {
        const auto& rr = results[static_cast<std::size_t>(i)];
        if (rr.nmi <= 1.0) continue;  // degenerate candidate
        if (!have_best || rr.nmi > best.nmi) {
            have_best = true;
            best.chosen = candidates[static_cast<std::size_t>(i)];
            best.rigid = rr.transform;
            best.nmi = rr.nmi;
            best.converged = rr.converged;
        }
    }
    if (!have_best) throw RegistrationError("registration failed: all candidates degenerate");

    const Volume3D oriented = vol::apply_signed_permutation(upsampled, best.chosen);
    best.vstar = vol::resample(oriented, tmpl.grid(), best.rigid.to_mat4(), SampleMode::Trilinear);
    best.candidates_evaluated = n_cand;
    return best;
}

Volume3D build_identifier_map(const Volume3D& stack) {
    Volume3D ids(stack.dims(), stack.affine(), 0.0f);
    for (std::int64_t i = 0; i < stack.num_voxels(); ++i) {
        if (stack.data()[static_cast<std::size_t>(i)] > 0.0f)
            ids.data()[static_cast<std::size_t>(i)] = static_cast<float>(i + 1);
    }
    return ids;
}

Volume3D propagate_identifier_map(const Volume3D& idmap, const SignedPermutation& chosen,
                                  const RigidTransform& rigid, const Volume3D& vstar,
                                  const WeightMapOptions& opts) {
    if (opts.w_obs <= opts.w_int || opts.w_int <= 0.0)
        throw std::invalid_argument("propagate_identifier_map: requires w_obs > w_int > 0");

    // The permutation was applied on the template grid, so its world
    // rotation pivots on the template grid centre.
    const Mat4 chain = rigid.to_mat4() * vol::signed_permutation_world_map(vstar, chosen);
    const Mat4 src_to_target = vstar.affine().inverse_affine() * (chain * idmap.affine());

    std::vector<bool> observed(static_cast<std::size_t>(vstar.num_voxels()), false);
    const auto& td = vstar.dims();
    const auto& sd = idmap.dims();
    for (int z = 0; z < sd[2]; ++z)
        for (int y = 0; y < sd[1]; ++y)
            for (int x = 0; x < sd[0]; ++x) {
                if (idmap.at(x, y, z) == 0.0f) continue;
                const Vec3 p = src_to_target.apply({double(x), double(y), double(z)});
                const int ix = static_cast<int>(std::lround(p.x));
                const int iy = static_cast<int>(std::lround(p.y));
                const int iz = static_cast<int>(std::lround(p.z));
                if (ix < 0 || iy < 0 || iz < 0 || ix >= td[0] || iy >= td[1] || iz >= td[2])
                    continue;
                observed[static_cast<std::size_t>(vstar.index_of(ix, iy, iz))] = true;
            }

    Volume3D weights(vstar.dims(), vstar.affine(), 0.0f);
    for (std::int64_t i = 0; i < vstar.num_voxels(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (observed[ui])
            weights.data()[ui] = static_cast<float>(opts.w_obs);
        else if (vstar.data()[ui] > 0.0f)
            weights.data()[ui] = static_cast<float>(opts.w_int);
    }
    return weights;
}

}  // namespace atlasloom::reg
