#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "atlasloom/inr.hpp"
#include "atlasloom/phantom.hpp"

using namespace atlasloom;
using namespace atlasloom::inr;
using ad::Rng;
using vol::GridSpec;
using vol::Volume3D;

namespace {

GridSpec unit_grid() {
    // 9^3 grid spanning [-1,1]^3 so normalized coordinates equal world ones.
    return vol::centered_grid({9, 9, 9}, {0.25, 0.25, 0.25});
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.layers = 2;
    c.width = 8;
    c.d_z = 4;
    c.latent_dims = {3, 3, 3};
    c.omega0 = 30.0;
    c.psf_samples = 2;
    c.sigma_psf_mm = 0.5;
    c.steps = 5;
    c.batch = 16;
    return c;
}

ModelParams scalar_identity_model() {
    // One layer, width 1, d_z 1, pass-through head: f(x) = sin(30 x_0).
    ModelParams p;
    p.layers = 1;
    p.width = 1;
    p.d_z = 1;
    p.num_classes = 1;
    p.omega0 = 30.0;
    p.norm_lo = {-1, -1, -1};
    p.norm_hi = {1, 1, 1};
    ad::Tensor w({1, 3});
    w.values = {1, 0, 0};
    p.w = {w};
    p.b = {ad::Tensor::zeros({1})};
    p.mod_w = {ad::Tensor::zeros({2, 1})};
    ad::Tensor mb({2});
    mb.values = {1, 0};  // gamma 1, delta 0
    p.mod_b = {mb};
    ad::Tensor hw({2, 2});
    hw.values = {1, 0, 0, 0};  // intensity = y_1; logit = 0
    p.head_w = hw;
    p.head_b = ad::Tensor::zeros({2});
    return p;
}

LatentGrid flat_latent(float value = 0.0f) {
    LatentGrid g;
    g.dims = {2, 2, 2};
    g.d_z = 1;
    g.lo = {-1, -1, -1};
    g.hi = {1, 1, 1};
    g.codes = ad::Tensor({2, 2, 2, 1}, value);
    return g;
}

}  // namespace

TEST_CASE("scalar sine layer arithmetic") {
    const auto p = scalar_identity_model();
    const auto g = flat_latent();
    // Input pi/60 with omega0 30 lands on sin(pi/2) = 1.
    std::vector<Vec3> coords = {{kPi / 60.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
    std::vector<float> intensity(2);
    std::vector<float> logits(2);
    infer_batch(p, g, coords, intensity.data(), logits.data());
    CHECK(intensity[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(intensity[1] == doctest::Approx(0.0));
}

TEST_CASE("latent interpolation returns lattice codes exactly at nodes") {
    Rng rng(3);
    auto cfg = tiny_config();
    auto grid = unit_grid();
    auto latent = init_latent(cfg, grid, rng);
    // Lattice node (1,2,0) sits at world coordinates derived from extent.
    const Vec3 span = latent.hi - latent.lo;
    const Vec3 node{latent.lo.x + span.x * 1.0 / 2.0, latent.lo.y + span.y * 2.0 / 2.0,
                    latent.lo.z};
    ad::Tape tape;
    const int lid = tape.leaf(latent.codes, false);
    std::vector<double> world = {node.x, node.y, node.z};
    const int z = tape.interp_latent(lid, world, latent.extent());
    const std::int64_t cell = (1 + 3 * (2 + 3 * 0)) * cfg.d_z;
    for (int d = 0; d < cfg.d_z; ++d)
        CHECK(tape.value(z).values[static_cast<std::size_t>(d)] ==
              doctest::Approx(latent.codes.values[cell + d]));
}

TEST_CASE("constant latent grid gives a constant code everywhere") {
    auto g = flat_latent(0.37f);
    auto p = scalar_identity_model();
    // Route the code through the head instead of the coordinate.
    p.head_w.values = {0, 1, 0, 0};
    Rng rng(5);
    std::vector<Vec3> coords;
    for (int i = 0; i < 20; ++i)
        coords.push_back({rng.uniform_range(-1, 1), rng.uniform_range(-1, 1),
                          rng.uniform_range(-1, 1)});
    std::vector<float> intensity(coords.size());
    std::vector<float> logits(coords.size());
    infer_batch(p, g, coords, intensity.data(), logits.data());
    for (float v : intensity) CHECK(v == doctest::Approx(0.37f));
}

TEST_CASE("model outputs are pure and continuous") {
    Rng rng(11);
    auto cfg = tiny_config();
    auto grid = unit_grid();
    auto params = init_params(cfg, grid, 3, rng);
    auto latent = init_latent(cfg, grid, rng);

    std::vector<Vec3> coords = {{0.3, -0.2, 0.4}, {0.3, -0.2, 0.4}};
    std::vector<float> intensity(2);
    std::vector<float> logits(2 * static_cast<std::size_t>(params.num_classes));
    infer_batch(params, latent, coords, intensity.data(), logits.data());
    CHECK(intensity[0] == intensity[1]);

    // Shrinking perturbations shrink the output difference towards zero.
    double prev = 1e9;
    for (double eps = 0.1; eps >= 1e-4; eps *= 0.1) {
        std::vector<Vec3> pair = {{0.3, -0.2, 0.4}, {0.3 + eps, -0.2, 0.4}};
        std::vector<float> out(2), lg(2 * static_cast<std::size_t>(params.num_classes));
        infer_batch(params, latent, pair, out.data(), lg.data());
        const double diff = std::abs(out[0] - out[1]);
        CHECK(diff <= prev + 1e-7);
        prev = diff;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("psf sampling") {
    Rng rng(7);
    SUBCASE("zero sigma returns exact copies") {
        const auto pts = psf_sample({1, 2, 3}, 0.0, 5, rng);
        REQUIRE(pts.size() == 5);
        for (const auto& p : pts) {
            CHECK(p.x == 1.0);
            CHECK(p.y == 2.0);
            CHECK(p.z == 3.0);
        }
    }
    SUBCASE("sample mean concentrates around the centre") {
        const int k = 100000;
        const double sigma = 2.0;
        Rng r2(42);
        const auto pts = psf_sample({0, 0, 0}, sigma, k, r2);
        Vec3 mean{0, 0, 0};
        for (const auto& p : pts) mean = mean + p;
        mean = mean * (1.0 / k);
        const double bound = 4.0 * sigma / std::sqrt(double(k));
        CHECK(std::abs(mean.x) < bound);
        CHECK(std::abs(mean.y) < bound);
        CHECK(std::abs(mean.z) < bound);
    }
    SUBCASE("same seed reproduces the sample set") {
        Rng a(9), b(9);
        const auto pa = psf_sample({0, 0, 0}, 1.5, 16, a);
        const auto pb = psf_sample({0, 0, 0}, 1.5, 16, b);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(pa[i].x == pb[i].x);
            CHECK(pa[i].y == pb[i].y);
            CHECK(pa[i].z == pb[i].z);
        }
    }
}

TEST_CASE("psf forward with zero sigma equals the plain forward bitwise") {
    Rng rng(13);
    auto cfg = tiny_config();
    auto grid = unit_grid();
    auto params = init_params(cfg, grid, 3, rng);
    auto latent = init_latent(cfg, grid, rng);

    std::vector<Vec3> base = {{0.2, 0.1, -0.3}, {-0.5, 0.4, 0.0}, {0.9, -0.9, 0.9}};
    const int K = 4;
    std::vector<Vec3> expanded;
    for (const auto& x : base)
        for (int k = 0; k < K; ++k) expanded.push_back(x);  // sigma 0 jitter

    ad::Tape tape;
    const auto shared = declare_shared<float>(tape, params, false);
    const int lid = tape.leaf(latent.codes, false);
    const auto [ii, ll] =
        forward_from_ids<float>(tape, params, shared, lid, latent.extent(), expanded, K);

    std::vector<float> intensity(base.size());
    std::vector<float> logits(base.size() * static_cast<std::size_t>(params.num_classes));
    infer_batch(params, latent, base, intensity.data(), logits.data());

    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(tape.value(ii).values[i] == intensity[i]);
        for (int c = 0; c < params.num_classes; ++c)
            CHECK(tape.value(ll).values[i * params.num_classes + c] ==
                  logits[i * static_cast<std::size_t>(params.num_classes) + c]);
    }
}

TEST_CASE("monte-carlo psf variance decays like 1/K") {
    Rng rng(17);
    auto cfg = tiny_config();
    cfg.width = 16;
    auto grid = unit_grid();
    auto params = init_params(cfg, grid, 2, rng);
    auto latent = init_latent(cfg, grid, rng);
    const Vec3 x{0.15, -0.1, 0.2};
    const double sigma = 0.3;

    auto psf_mean = [&](int k, std::uint64_t seed) {
        Rng r(seed);
        const auto pts = psf_sample(x, sigma, k, r);
        std::vector<float> out(pts.size()), lg(pts.size() * params.num_classes);
        infer_batch(params, latent, pts, out.data(), lg.data());
        double acc = 0.0;
        for (float v : out) acc += v;
        return acc / k;
    };

    std::vector<double> ks = {1, 4, 16, 64};
    std::vector<double> vars;
    for (double k : ks) {
        double mean = 0.0, m2 = 0.0;
        const int reps = 200;
        for (int r = 0; r < reps; ++r) {
            const double v = psf_mean(static_cast<int>(k), 1000 + 7 * r + 131 * k);
            mean += v;
            m2 += v * v;
        }
        mean /= reps;
        vars.push_back(m2 / reps - mean * mean);
    }
    // Slope of log(var) vs log(K) should be about -1.
    const double slope = (std::log(vars.back()) - std::log(vars.front())) /
                         (std::log(ks.back()) - std::log(ks.front()));
    CHECK(slope == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("reconstruction loss examples") {
    ad::Tape tape;
    ad::Tensor pred({2, 1});
    pred.values = {1.3f, 0.4f};
    const int pid = tape.leaf(pred, false);

    SUBCASE("weighted example from hand arithmetic") {
        // errors (0.3, 0.6), weights (2, 1) -> 0.4
        const int l = loss_rec<float>(tape, pid, {1.0f, 1.0f}, {2.0f, 1.0f});
        CHECK(tape.value(l).values[0] == doctest::Approx(0.4));
    }
    SUBCASE("uniform weights reduce to plain MAE") {
        const int l = loss_rec<float>(tape, pid, {1.0f, 1.0f}, {1.0f, 1.0f});
        CHECK(tape.value(l).values[0] == doctest::Approx(0.45));
    }
    SUBCASE("perfect prediction gives zero") {
        const int l = loss_rec<float>(tape, pid, {1.3f, 0.4f}, {1.0f, 2.0f});
        CHECK(tape.value(l).values[0] == 0.0f);
    }
    SUBCASE("all-zero weights are rejected") {
        CHECK_THROWS_AS(loss_rec<float>(tape, pid, {1.0f, 1.0f}, {0.0f, 0.0f}),
                        std::invalid_argument);
    }
}

TEST_CASE("segmentation loss examples") {
    ad::Tape tape;
    SUBCASE("saturated logits vanish") {
        ad::Tensor logits({1, 3});
        logits.values = {50.0f, 0.0f, 0.0f};
        const int l = loss_seg<float>(tape, tape.leaf(logits, false), {0}, {1.0f});
        CHECK(tape.value(l).values[0] <= 1e-20f);
    }
    SUBCASE("uniform logits give ln C") {
        ad::Tensor logits({1, 4});
        const int l = loss_seg<float>(tape, tape.leaf(logits, false), {2}, {1.0f});
        CHECK(tape.value(l).values[0] == doctest::Approx(std::log(4.0)));
    }
    SUBCASE("weighted two-sample example") {
        // losses (ln4, 0), weights (1, 3) -> ln4 / 4
        ad::Tensor logits({2, 4});
        logits.values = {0, 0, 0, 0, 100, 0, 0, 0};
        const int l = loss_seg<float>(tape, tape.leaf(logits, false), {1, 0}, {1.0f, 3.0f});
        CHECK(tape.value(l).values[0] == doctest::Approx(std::log(4.0) / 4.0));
    }
}

TEST_CASE("total loss composition and weight rescaling invariance") {
    ad::Tape tape;
    ad::Tensor pred({2, 1});
    pred.values = {1.3f, 0.4f};
    ad::Tensor logits({2, 4});
    logits.values = {0, 0, 0, 0, 100, 0, 0, 0};
    const int pid = tape.leaf(pred, false);
    const int lid = tape.leaf(logits, false);

    const int rec = loss_rec<float>(tape, pid, {1.0f, 1.0f}, {2.0f, 1.0f});
    const int seg = loss_seg<float>(tape, lid, {1, 0}, {2.0f, 1.0f});

    SUBCASE("lambda composition") {
        const int t0 = loss_total<float>(tape, rec, seg, 0.0);
        CHECK(tape.value(t0).values[0] == tape.value(rec).values[0]);
        const int t1 = loss_total<float>(tape, rec, seg, 1.0);
        CHECK(tape.value(t1).values[0] ==
              doctest::Approx(tape.value(rec).values[0] + tape.value(seg).values[0]));
    }
    SUBCASE("scaling the weight map leaves both losses unchanged") {
        const int rec2 = loss_rec<float>(tape, pid, {1.0f, 1.0f}, {4.0f, 2.0f});
        const int seg2 = loss_seg<float>(tape, lid, {1, 0}, {4.0f, 2.0f});
        CHECK(tape.value(rec2).values[0] == tape.value(rec).values[0]);
        CHECK(tape.value(seg2).values[0] == tape.value(seg).values[0]);
    }
}

TEST_CASE("end-to-end gradients match finite differences in double") {
    Rng rng(23);
    auto cfg = tiny_config();
    auto grid = unit_grid();
    const int C = 3;
    auto paramsf = init_params(cfg, grid, C, rng);
    auto latentf = init_latent(cfg, grid, rng);
    auto params = paramsf.cast<double>();
    auto latent = latentf.cast<double>();

    // Fixed jittered coordinate set (PSF draws frozen up front).
    const int K = 2;
    std::vector<Vec3> coords;
    Rng jit(31);
    for (int i = 0; i < 6; ++i) {
        const Vec3 x{jit.uniform_range(-0.8, 0.8), jit.uniform_range(-0.8, 0.8),
                     jit.uniform_range(-0.8, 0.8)};
        const auto pts = psf_sample(x, 0.4, K, jit);
        coords.insert(coords.end(), pts.begin(), pts.end());
    }
    std::vector<double> targets = {0.2, -0.1, 0.4, 0.0, 0.3, -0.2};
    std::vector<int> labels = {0, 1, 2, 1, 0, 2};
    std::vector<double> weights = {1.0, 0.25, 1.0, 0.25, 1.0, 0.25};

    auto eval_loss = [&](const ModelParamsT<double>& p, const LatentGridT<double>& lg) {
        ad::TapeT<double> tape;
        const auto shared = declare_shared<double>(tape, p, true);
        const int lid = tape.leaf(lg.codes, true);
        const auto [ii, ll] = forward_from_ids<double>(tape, p, shared, lid, lg.extent(),
                                                       coords, K);
        const int rec = loss_rec<double>(tape, ii, targets, weights);
        const int seg = loss_seg<double>(tape, ll, labels, weights);
        const int total = loss_total<double>(tape, rec, seg, 1.0);
        return std::make_tuple(tape.value(total).values[0], 0.0);
    };

    // Analytic gradients.
    ad::TapeT<double> tape;
    const auto shared = declare_shared<double>(tape, params, true);
    const int lid = tape.leaf(latent.codes, true);
    const auto [ii, ll] =
        forward_from_ids<double>(tape, params, shared, lid, latent.extent(), coords, K);
    const int total = loss_total<double>(tape, loss_rec<double>(tape, ii, targets, weights),
                                         loss_seg<double>(tape, ll, labels, weights), 1.0);
    tape.backward(total);

    const double h = 1e-5;
    int checked = 0;
    auto check_param = [&](int id, const std::function<double*(ModelParamsT<double>&,
                                                               LatentGridT<double>&, std::size_t)>&
                                       access,
                           std::size_t count) {
        const auto& g = tape.grad(id);
        REQUIRE(g.values.size() == count);
        // Probe a deterministic subset of entries.
        for (std::size_t j = 0; j < count; j += std::max<std::size_t>(1, count / 7)) {
            auto pp = params;
            auto lp = latent;
            *access(pp, lp, j) += h;
            const auto [f_plus, _p] = eval_loss(pp, lp);
            *access(pp, lp, j) -= 2 * h;
            const auto [f_minus, _m] = eval_loss(pp, lp);
            const double numeric = (f_plus - f_minus) / (2 * h);
            const double analytic = g.values[j];
            const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
            CHECK(std::abs(numeric - analytic) / denom <= 1e-4);
            ++checked;
        }
    };

    for (int t = 0; t < cfg.layers; ++t) {
        check_param(shared.w[t],
                    [t](ModelParamsT<double>& p, LatentGridT<double>&, std::size_t j) {
                        return &p.w[t].values[j];
                    },
                    params.w[t].values.size());
        check_param(shared.mod_w[t],
                    [t](ModelParamsT<double>& p, LatentGridT<double>&, std::size_t j) {
                        return &p.mod_w[t].values[j];
                    },
                    params.mod_w[t].values.size());
        check_param(shared.mod_b[t],
                    [t](ModelParamsT<double>& p, LatentGridT<double>&, std::size_t j) {
                        return &p.mod_b[t].values[j];
                    },
                    params.mod_b[t].values.size());
    }
    check_param(shared.head_w,
                [](ModelParamsT<double>& p, LatentGridT<double>&, std::size_t j) {
                    return &p.head_w.values[j];
                },
                params.head_w.values.size());
    check_param(lid,
                [](ModelParamsT<double>&, LatentGridT<double>& l, std::size_t j) {
                    return &l.codes.values[j];
                },
                latent.codes.values.size());
    CHECK(checked > 50);
}

namespace {

std::vector<SubjectRecord> phantom_subject_cohort(int n, const GridSpec& grid,
                                                  std::uint64_t seed) {
    std::vector<SubjectRecord> subjects;
    for (int i = 0; i < n; ++i) {
        phantom::PhantomSpec spec;
        spec.tau_weeks = 21.0 + 1.5 * i;
        spec.dims = grid.dims;
        spec.spacing_mm = grid.affine.at(0, 0);
        spec.seed = seed + i;
        const auto ph = phantom::generate_phantom(spec);
        SubjectRecord s;
        s.id = "t" + std::to_string(i);
        s.ga_weeks = spec.tau_weeks;
        RegisteredStackData st;
        st.vstar = ph.vol.intensity;
        st.weights = Volume3D(grid.dims, grid.affine, 0.0f);
        for (std::int64_t v = 0; v < st.vstar.num_voxels(); ++v)
            if (st.vstar.data()[static_cast<std::size_t>(v)] > 0)
                st.weights.data()[static_cast<std::size_t>(v)] = 1.0f;
        st.slice_thickness_mm = 2.6;
        s.stacks.push_back(std::move(st));
        s.segmentation = ph.vol.labels;
        subjects.push_back(std::move(s));
    }
    return subjects;
}

}  // namespace

TEST_CASE("smoke training halves the loss on a small phantom") {
    const auto grid = vol::centered_grid({16, 16, 16}, {2.6, 2.6, 2.6});
    const auto subjects = phantom_subject_cohort(1, grid, 77);

    TrainConfig cfg;
    cfg.layers = 2;
    cfg.width = 32;
    cfg.d_z = 8;
    cfg.latent_dims = {4, 4, 4};
    cfg.sigma_psf_mm = 0.0;
    cfg.psf_samples = 1;
    cfg.steps = 500;
    cfg.batch = 256;
    cfg.lr = 3e-4;
    cfg.seed = 5;

    const auto result = train(subjects, cfg, grid, phantom::kNumClasses);
    REQUIRE(result.log.size() == 500);
    // Average over a few steps; single-batch losses are noisy.
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) head += result.log[static_cast<std::size_t>(i)].total;
    for (int i = 0; i < 10; ++i)
        tail += result.log[result.log.size() - 1 - static_cast<std::size_t>(i)].total;
    CHECK(tail < 0.5 * head);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto grid = vol::centered_grid({16, 16, 16}, {2.6, 2.6, 2.6});
    const auto subjects = phantom_subject_cohort(2, grid, 99);

    TrainConfig cfg;
    cfg.layers = 2;
    cfg.width = 16;
    cfg.d_z = 4;
    cfg.latent_dims = {3, 3, 3};
    cfg.sigma_psf_mm = 1.0;
    cfg.psf_samples = 2;
    cfg.steps = 40;
    cfg.batch = 64;
    cfg.seed = 123;

    const auto a = train(subjects, cfg, grid, phantom::kNumClasses);
    const auto b = train(subjects, cfg, grid, phantom::kNumClasses);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].rec == b.log[i].rec);
        CHECK(a.log[i].seg == b.log[i].seg);
        CHECK(a.log[i].total == b.log[i].total);
    }
    CHECK(a.params.head_w.values == b.params.head_w.values);
    CHECK(a.latents[0].codes.values == b.latents[0].codes.values);
}

TEST_CASE("shared-weight gradients of a fixed batch ignore subject order") {
    Rng rng(55);
    auto cfg = tiny_config();
    auto grid = unit_grid();
    const int C = 2;
    auto params = init_params(cfg, grid, C, rng).cast<double>();
    auto la = init_latent(cfg, grid, rng).cast<double>();
    auto lb = init_latent(cfg, grid, rng).cast<double>();

    std::vector<Vec3> ca = {{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.2}};
    std::vector<Vec3> cb = {{0.5, -0.5, 0.1}, {0.0, 0.3, -0.3}};
    std::vector<double> ta = {0.3, 0.1}, tb = {0.2, 0.4};
    std::vector<int> lla = {0, 1}, llb = {1, 0};

    auto grads_for = [&](bool a_first) {
        ad::TapeT<double> tape;
        const auto shared = declare_shared<double>(tape, params, true);
        const int ida = tape.leaf(la.codes, false);
        const int idb = tape.leaf(lb.codes, false);
        int pi = -1, pl = -1;
        std::vector<double> targets, weights;
        std::vector<int> labels;
        auto add_subject = [&](int lid, const LatentGridT<double>& lg,
                               const std::vector<Vec3>& cc, const std::vector<double>& tt,
                               const std::vector<int>& ll) {
            const auto [ii, lo] =
                forward_from_ids<double>(tape, params, shared, lid, lg.extent(), cc, 1);
            pi = pi < 0 ? ii : tape.concat_rows(pi, ii);
            pl = pl < 0 ? lo : tape.concat_rows(pl, lo);
            targets.insert(targets.end(), tt.begin(), tt.end());
            labels.insert(labels.end(), ll.begin(), ll.end());
            weights.insert(weights.end(), tt.size(), 1.0);
        };
        if (a_first) {
            add_subject(ida, la, ca, ta, lla);
            add_subject(idb, lb, cb, tb, llb);
        } else {
            add_subject(idb, lb, cb, tb, llb);
            add_subject(ida, la, ca, ta, lla);
        }
        const int total = loss_total<double>(tape, loss_rec<double>(tape, pi, targets, weights),
                                             loss_seg<double>(tape, pl, labels, weights), 1.0);
        tape.backward(total);
        return tape.grad(shared.head_w).values;
    };

    const auto g1 = grads_for(true);
    const auto g2 = grads_for(false);
    REQUIRE(g1.size() == g2.size());
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-9));
}

TEST_CASE("ablation transforms") {
    const auto grid = vol::centered_grid({12, 12, 12}, {3.2, 3.2, 3.2});
    auto subjects = phantom_subject_cohort(1, grid, 10);
    // Introduce mixed weights.
    auto& wdata = subjects[0].stacks[0].weights.data();
    int flip = 0;
    for (auto& w : wdata)
        if (w > 0 && ((flip++) % 3 == 0)) w = 0.25f;

    TrainConfig cfg = tiny_config();
    SUBCASE("no-psf zeroes sigma") {
        auto s = subjects;
        auto c = cfg;
        apply_ablation(s, c, Ablation::NoPsf, 1);
        CHECK(c.sigma_psf_mm == 0.0);
    }
    SUBCASE("no-weight flattens to uniform") {
        auto s = subjects;
        auto c = cfg;
        apply_ablation(s, c, Ablation::NoWeight, 1);
        for (float w : s[0].stacks[0].weights.data()) CHECK((w == 0.0f || w == 1.0f));
    }
    SUBCASE("random-weight preserves the multiset of weights") {
        auto s = subjects;
        auto c = cfg;
        apply_ablation(s, c, Ablation::RandomWeight, 1);
        auto sorted_before = wdata;
        auto sorted_after = s[0].stacks[0].weights.data();
        std::sort(sorted_before.begin(), sorted_before.end());
        std::sort(sorted_after.begin(), sorted_after.end());
        CHECK(sorted_before == sorted_after);
        CHECK(s[0].stacks[0].weights.data() != wdata);
    }
}
