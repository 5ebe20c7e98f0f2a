#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dcl/dynamics.hpp"
#include "dcl/worldsim.hpp"

using namespace dcl;
using namespace dcl::dyn;

namespace {

DynConfig tiny_config() {
    DynConfig cfg;
    cfg.w = 2;
    cfg.L = 2;
    cfg.hidden = 8;
    cfg.patch = 2;
    cfg.stride = 4;
    return cfg;
}

StridedVideo make_cv_video(int n, int steps, uint64_t seed, const DynConfig& cfg) {
    // constant-velocity strided world, objects far apart
    Rng rng(seed);
    StridedVideo v;
    std::vector<Box> boxes;
    std::vector<std::pair<double, double>> vel;
    for (int i = 0; i < n; ++i) {
        boxes.push_back(Box{0.15 + 0.3 * (i % 3), 0.2 + 0.4 * (i / 3), 0.1, 0.12});
        vel.emplace_back(rng.uniform(-0.008, 0.008), rng.uniform(-0.008, 0.008));
    }
    for (int s = 0; s < steps; ++s) {
        v.frames.push_back(s * cfg.stride + cfg.stride - 1);
        std::vector<ObjState> step;
        for (int i = 0; i < n; ++i) {
            ObjState o;
            o.present = true;
            o.box = boxes[size_t(i)];
            o.box.cx += vel[size_t(i)].first * s * cfg.stride;
            o.box.cy += vel[size_t(i)].second * s * cfg.stride;
            o.rgb = color_rgb(i % 8);
            step.push_back(o);
        }
        v.steps.push_back(std::move(step));
    }
    return v;
}

}  // namespace

TEST_CASE("shape soundness and determinism of encode/propagate") {
    DynConfig cfg = tiny_config();
    Rng rng(3);
    DynNets nets(cfg, rng);
    for (int n : {1, 2, 5}) {
        StridedVideo v = make_cv_video(n, 4, 7, cfg);
        StepInput in;
        in.window.assign(v.steps.begin(), v.steps.begin() + cfg.w);
        Encoded enc = encode_propagate(nets, in);
        CHECK(int(enc.e_o.size()) == n);
        for (const auto& e : enc.e_o) CHECK(int(e.size()) == cfg.eo_width());
        for (const auto& h : enc.h) CHECK(int(h.size()) == cfg.hidden);
        Encoded enc2 = encode_propagate(nets, in);
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < cfg.hidden; ++d)
                CHECK(enc.h[size_t(i)][size_t(d)] == enc2.h[size_t(i)][size_t(d)]);
        StepOutput out = predict_step(nets, in);
        CHECK(int(out.next.size()) == n);
        for (const auto& o : out.next) {
            CHECK(o.box.cx >= 0.0);
            CHECK(o.box.cx <= 1.0);
            CHECK(o.box.w >= 0.01);
        }
    }
}

TEST_CASE("zero networks give zero raw predictions in absolute mode") {
    DynConfig cfg = tiny_config();
    cfg.residual = false;
    Rng rng(4);
    DynNets nets(cfg, rng);
    for (ad::Param* p : nets.parameters()) std::fill(p->w.begin(), p->w.end(), 0.0);
    StridedVideo v = make_cv_video(2, 3, 9, cfg);
    StepInput in;
    in.window.assign(v.steps.begin(), v.steps.begin() + cfg.w);
    StepOutput out = predict_step(nets, in);
    for (int n = 0; n < 2; ++n)
        for (int d = 0; d < 4; ++d) CHECK(out.raw_box[size_t(n)][size_t(d)] == 0.0);
}

TEST_CASE("single object: influences come only from its own encoding") {
    DynConfig cfg = tiny_config();
    Rng rng(5);
    DynNets nets(cfg, rng);
    StridedVideo v = make_cv_video(1, 3, 2, cfg);
    StepInput in;
    in.window.assign(v.steps.begin(), v.steps.begin() + cfg.w);
    Encoded enc = encode_propagate(nets, in);
    CHECK(enc.e_o.size() == 1);
    CHECK(enc.h.size() == 1);
}

TEST_CASE("permutation equivariance") {
    DynConfig cfg = tiny_config();
    Rng rng(6);
    DynNets nets(cfg, rng);
    // close objects so edges are active
    StridedVideo v;
    for (int s = 0; s < cfg.w; ++s) {
        v.frames.push_back(s * 4 + 3);
        std::vector<ObjState> step;
        for (int i = 0; i < 4; ++i) {
            ObjState o;
            o.present = true;
            o.box = Box{0.3 + 0.12 * i + 0.01 * s, 0.5 - 0.05 * i, 0.1, 0.1};
            o.rgb = color_rgb(i);
            step.push_back(o);
        }
        v.steps.push_back(step);
    }
    StepInput in;
    in.window = v.steps;
    StepOutput base = predict_step(nets, in);

    std::vector<int> perm = {2, 0, 3, 1};
    StepInput pin;
    pin.window.assign(v.steps.size(), {});
    for (size_t s = 0; s < v.steps.size(); ++s) {
        pin.window[s].resize(4);
        for (int i = 0; i < 4; ++i) pin.window[s][size_t(i)] = v.steps[s][size_t(perm[size_t(i)])];
    }
    StepOutput permuted = predict_step(nets, pin);
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(permuted.next[size_t(i)].box.cx -
                       base.next[size_t(perm[size_t(i)])].box.cx) < 1e-6);
        CHECK(std::abs(permuted.next[size_t(i)].box.cy -
                       base.next[size_t(perm[size_t(i)])].box.cy) < 1e-6);
    }
}

TEST_CASE("propagation depth matters when edges are active") {
    DynConfig cfg = tiny_config();
    Rng rng(8);
    DynNets nets(cfg, rng);
    StridedVideo v;
    for (int s = 0; s < cfg.w; ++s) {
        std::vector<ObjState> step;
        for (int i = 0; i < 2; ++i) {
            ObjState o;
            o.present = true;
            o.box = Box{0.4 + 0.15 * i, 0.5, 0.1, 0.1};
            o.rgb = color_rgb(i);
            step.push_back(o);
        }
        v.steps.push_back(step);
    }
    StepInput in;
    in.window = v.steps;
    Encoded two = encode_propagate(nets, in);
    DynNets one = nets;
    one.cfg.L = 1;
    Encoded single = encode_propagate(one, in);
    double diff = 0;
    for (int d = 0; d < cfg.hidden; ++d)
        diff += std::abs(two.h[0][size_t(d)] - single.h[0][size_t(d)]);
    CHECK(diff > 1e-9);
}

TEST_CASE("taped loss matches plain forward and finite differences") {
    DynConfig cfg = tiny_config();
    Rng rng(11);
    DynNets nets(cfg, rng);
    StridedVideo v = make_cv_video(3, 4, 13, cfg);
    StepInput in;
    in.window.assign(v.steps.begin(), v.steps.begin() + cfg.w);
    const auto& target = v.steps[size_t(cfg.w)];

    // plain forward squared error computed independently
    StepOutput out = predict_step(nets, in);
    double plain_loss = 0.0;
    int terms = 0;
    for (int n = 0; n < 3; ++n) {
        double t[4] = {target[size_t(n)].box.cx, target[size_t(n)].box.cy,
                       target[size_t(n)].box.w, target[size_t(n)].box.h};
        for (int d = 0; d < 4; ++d) {
            double diff = out.raw_box[size_t(n)][size_t(d)] - t[size_t(d)];
            plain_loss += diff * diff;
        }
        ++terms;
    }
    plain_loss /= terms;

    ad::Tape tape;
    ad::Var loss = step_loss_t(tape, nets, in, target, false);
    CHECK(tape.value(loss) == doctest::Approx(plain_loss).epsilon(1e-10));

    auto params = nets.parameters();
    ad::zero_grads(params);
    tape.backward(loss);
    auto forward = [&]() {
        ad::Tape t2;
        return t2.value(step_loss_t(t2, nets, in, target, false));
    };
    int checked = 0;
    for (ad::Param* p : params) {
        for (size_t i = 0; i < p->size(); i += std::max<size_t>(1, p->size() / 3)) {
            double keep = p->w[i];
            double h = 1e-5;
            p->w[i] = keep + h;
            double hi = forward();
            p->w[i] = keep - h;
            double lo = forward();
            p->w[i] = keep;
            double fd = (hi - lo) / (2 * h);
            double got = p->g[i];
            CHECK(std::abs(got - fd) <= 1e-4 * std::max({1.0, std::abs(got), std::abs(fd)}));
            ++checked;
        }
    }
    CHECK(checked > 30);
}

TEST_CASE("training learns constant-velocity motion") {
    DynConfig cfg = tiny_config();
    cfg.hidden = 24;
    cfg.epochs_stage1 = 16;
    cfg.epochs_stage2 = 2;
    cfg.lr = 3e-3;
    Rng rng(17);
    DynNets nets(cfg, rng);
    std::vector<StridedVideo> corpus;
    for (uint64_t s = 0; s < 40; ++s) corpus.push_back(make_cv_video(3, 12, s, cfg));
    TrainStats stats = train_dynamics(nets, corpus, 5);
    REQUIRE(stats.epoch_loss.size() == size_t(cfg.epochs_stage1 + cfg.epochs_stage2));
    CHECK(stats.epoch_loss[4] < stats.epoch_loss[0]);

    // held-out rollout drift
    StridedVideo held = make_cv_video(3, 12, 999, cfg);
    StepInput window;
    window.window.assign(held.steps.begin(), held.steps.begin() + cfg.w);
    auto pred = rollout(nets, window.window, 8);
    double err = 0;
    int count = 0;
    for (int s = 0; s < 8; ++s)
        for (int n = 0; n < 3; ++n) {
            const ObjState& p = pred[size_t(s)][size_t(n)];
            const ObjState& g = held.steps[size_t(cfg.w + s)][size_t(n)];
            err += std::hypot(p.box.cx - g.box.cx, p.box.cy - g.box.cy);
            ++count;
        }
    CHECK(err / count < 0.02);

    // autoregressive prefix consistency
    auto r5 = rollout(nets, window.window, 5);
    auto r8 = rollout(nets, window.window, 8);
    for (int s = 0; s < 5; ++s)
        for (int n = 0; n < 3; ++n) {
            CHECK(r5[size_t(s)][size_t(n)].box.cx == r8[size_t(s)][size_t(n)].box.cx);
            CHECK(r5[size_t(s)][size_t(n)].box.cy == r8[size_t(s)][size_t(n)].box.cy);
        }
}

TEST_CASE("counterfactual rollout drops the removed object and nothing else far away") {
    DynConfig cfg = tiny_config();
    Rng rng(23);
    DynNets nets(cfg, rng);
    // pairwise distances stay beyond gate_radius for the whole horizon
    StridedVideo v;
    double px[3] = {0.12, 0.85, 0.40}, py[3] = {0.15, 0.30, 0.88};
    double vx[3] = {0.002, -0.001, 0.0015}, vy[3] = {0.001, 0.002, -0.001};
    for (int s = 0; s < 8; ++s) {
        v.frames.push_back(s * cfg.stride + cfg.stride - 1);
        std::vector<ObjState> step;
        for (int i = 0; i < 3; ++i) {
            ObjState o;
            o.present = true;
            o.box = Box{px[i] + vx[i] * s * cfg.stride, py[i] + vy[i] * s * cfg.stride, 0.1, 0.1};
            o.rgb = color_rgb(i);
            step.push_back(o);
        }
        v.steps.push_back(step);
    }
    auto full = rollout(nets, {v.steps.begin(), v.steps.begin() + cfg.w}, 4);
    auto cf = counterfactual_rollout(nets, v, 1, 4);
    REQUIRE(cf.size() == 4);
    for (int s = 0; s < 4; ++s) {
        CHECK_FALSE(cf[size_t(s)][1].present);
        for (int n : {0, 2}) {
            CHECK(std::abs(cf[size_t(s)][size_t(n)].box.cx - full[size_t(s)][size_t(n)].box.cx) <
                  1e-9);
            CHECK(std::abs(cf[size_t(s)][size_t(n)].box.cy - full[size_t(s)][size_t(n)].box.cy) <
                  1e-9);
        }
    }
    CHECK_THROWS_AS(counterfactual_rollout(nets, v, 7, 4), DataError);
    CHECK(rollout(nets, {v.steps.begin(), v.steps.begin() + cfg.w}, 0).empty());
}

TEST_CASE("dynamics checkpoints round-trip") {
    DynConfig cfg = tiny_config();
    Rng rng(29);
    DynNets nets(cfg, rng);
    std::string bytes = nets_to_bytes(nets);
    DynNets loaded = nets_from_bytes(bytes);
    CHECK(nets_to_bytes(loaded) == bytes);
    CHECK(loaded.cfg.hidden == cfg.hidden);
}
