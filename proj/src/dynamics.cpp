#include "dcl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dcl/concepts.hpp"

namespace dcl::dyn {

StridedVideo strided_from_trajectories(const std::vector<track::Trajectory>& trajs,
                                       const feat::Backbone& backbone, int T,
                                       const DynConfig& cfg) {
    StridedVideo v;
    for (int f = cfg.stride - 1; f < T; f += cfg.stride) v.frames.push_back(f);
    for (int f : v.frames) {
        std::vector<ObjState> step;
        for (size_t n = 0; n < trajs.size(); ++n) {
            ObjState s;
            s.present = f < int(trajs[n].present.size()) && trajs[n].present[size_t(f)];
            if (s.present) {
                s.box = trajs[n].boxes[size_t(f)];
                auto app = backbone.feature_of(int(n), f);
                s.rgb = color_rgb(track::appearance_argmax(app)[0]);
            }
            step.push_back(s);
        }
        v.steps.push_back(std::move(step));
    }
    return v;
}

namespace {

void init_layer(ad::Param& w, ad::Param& b, const std::string& name, int rows, int cols,
                Rng& rng) {
    w = ad::Param(name, rows, cols);
    double s = 1.0 / std::sqrt(double(cols));
    for (auto& v : w.w) v = rng.gauss(0.0, s);
    b = ad::Param(name + "_b", rows, 1);
}

std::vector<double> vertex_input(const DynConfig& cfg,
                                 const std::vector<std::vector<ObjState>>& window, int n) {
    // The encoder sees history boxes relative to the newest one (the newest
    // stays absolute). Same information as the raw concatenation, but the
    // motion signal arrives pre-differenced, which conditions the residual
    // predictor much better.
    std::vector<double> x;
    x.reserve(size_t(cfg.vertex_width()));
    const ObjState& last = window.back()[size_t(n)];
    for (size_t w = 0; w < window.size(); ++w) {
        const ObjState& s = window[w][size_t(n)];
        bool newest = w + 1 == window.size();
        if (s.present) {
            double bx = newest || !last.present ? 0.0 : last.box.cx;
            double by = newest || !last.present ? 0.0 : last.box.cy;
            double bw = newest || !last.present ? 0.0 : last.box.w;
            double bh = newest || !last.present ? 0.0 : last.box.h;
            x.push_back(s.box.cx - bx);
            x.push_back(s.box.cy - by);
            x.push_back(s.box.w - bw);
            x.push_back(s.box.h - bh);
            for (int c = 0; c < 3; ++c)
                for (int p = 0; p < cfg.patch * cfg.patch; ++p) x.push_back(s.rgb[size_t(c)]);
        } else {
            for (int i = 0; i < 4 + cfg.patch_vals(); ++i) x.push_back(0.0);
        }
    }
    return x;
}

std::vector<double> edge_input(const DynConfig& cfg,
                               const std::vector<std::vector<ObjState>>& window, int n1,
                               int n2) {
    std::vector<double> x;
    x.reserve(size_t(cfg.edge_width()));
    for (const auto& step : window) {
        const ObjState& a = step[size_t(n1)];
        const ObjState& b = step[size_t(n2)];
        if (a.present && b.present) {
            x.push_back(a.box.cx - b.box.cx);
            x.push_back(a.box.cy - b.box.cy);
            x.push_back(a.box.w - b.box.w);
            x.push_back(a.box.h - b.box.h);
        } else {
            for (int i = 0; i < 4; ++i) x.push_back(0.0);
        }
    }
    return x;
}

bool edge_gate(const DynConfig& cfg, const std::vector<std::vector<ObjState>>& window, int n1,
               int n2) {
    const ObjState& a = window.back()[size_t(n1)];
    const ObjState& b = window.back()[size_t(n2)];
    if (!a.present || !b.present) return false;
    double d = std::hypot(a.box.cx - b.box.cx, a.box.cy - b.box.cy);
    return d <= cfg.gate_radius;
}

std::vector<double> affine_plain(const ad::Param& W, const ad::Param* b,
                                 std::span<const double> x) {
    std::vector<double> y(size_t(W.rows), 0.0);
    for (int r = 0; r < W.rows; ++r) {
        const double* wr = W.w.data() + size_t(r) * size_t(W.cols);
        double s = b ? b->w[size_t(r)] : 0.0;
        for (int c = 0; c < W.cols; ++c) s += wr[c] * x[size_t(c)];
        y[size_t(r)] = s;
    }
    return y;
}

std::vector<double> mlp_plain(const ad::Param& w1, const ad::Param& b1, const ad::Param& w2,
                              const ad::Param& b2, std::span<const double> x) {
    std::vector<double> h = affine_plain(w1, &b1, x);
    for (auto& v : h) v = v > 0 ? v : 0;
    return affine_plain(w2, &b2, h);
}

}  // namespace

DynNets::DynNets(const DynConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    int H = cfg.hidden;
    init_layer(enc_o1, enc_o1b, "enc_o1", H, cfg.vertex_width(), rng);
    init_layer(enc_o2, enc_o2b, "enc_o2", H, H, rng);
    init_layer(enc_r1, enc_r1b, "enc_r1", H, cfg.edge_width(), rng);
    init_layer(enc_r2, enc_r2b, "enc_r2", H, H, rng);
    int E = cfg.eo_width();
    init_layer(prop_r1, prop_r1b, "prop_r1", H, 3 * H, rng);
    init_layer(prop_r2, prop_r2b, "prop_r2", H, H, rng);
    init_layer(prop_o1, prop_o1b, "prop_o1", H, E + 2 * H, rng);
    init_layer(prop_o2, prop_o2b, "prop_o2", H, H, rng);
    init_layer(pred_b1, pred_b1b, "pred_b1", H, E + H, rng);
    init_layer(pred_b2, pred_b2b, "pred_b2", 4, H, rng);
    init_layer(pred_p1, pred_p1b, "pred_p1", H, E + H, rng);
    init_layer(pred_p2, pred_p2b, "pred_p2", cfg.patch_vals(), H, rng);
    pred_b_skip = ad::Param("pred_b_skip", 4, E + H);
    // small output layers: predictions start near the last observed state
    for (auto& v : pred_b2.w) v *= 0.05;
    for (auto& v : pred_p2.w) v *= 0.05;
}

std::vector<ad::Param*> DynNets::parameters() {
    return {&enc_o1, &enc_o1b, &enc_o2, &enc_o2b, &enc_r1, &enc_r1b, &enc_r2, &enc_r2b,
            &prop_r1, &prop_r1b, &prop_r2, &prop_r2b, &prop_o1, &prop_o1b, &prop_o2, &prop_o2b,
            &pred_b1, &pred_b1b, &pred_b2, &pred_b2b, &pred_b_skip,
            &pred_p1, &pred_p1b, &pred_p2, &pred_p2b};
}

std::vector<const ad::Param*> DynNets::parameters() const {
    std::vector<const ad::Param*> ps;
    for (ad::Param* p : const_cast<DynNets*>(this)->parameters()) ps.push_back(p);
    return ps;
}

Encoded encode_propagate(const DynNets& nets, const StepInput& in) {
    const DynConfig& cfg = nets.cfg;
    if (int(in.window.size()) != cfg.w) throw DataError("predict_step: window size mismatch");
    int N = int(in.window[0].size());
    Encoded out;
    out.e_o.resize(size_t(N));
    out.e_r.assign(size_t(N), std::vector<std::vector<double>>(size_t(N)));
    for (int n = 0; n < N; ++n) {
        std::vector<double> v = vertex_input(cfg, in.window, n);
        std::vector<double> h1 = affine_plain(nets.enc_o1, &nets.enc_o1b, v);
        for (auto& x : h1) x = x > 0 ? x : 0;
        out.e_o[size_t(n)] = affine_plain(nets.enc_o2, &nets.enc_o2b, h1);
        // relative-box block rides along with the learned features
        for (size_t w = 0; w < in.window.size(); ++w)
            for (int d = 0; d < 4; ++d)
                out.e_o[size_t(n)].push_back(v[w * size_t(4 + cfg.patch_vals()) + size_t(d)]);
    }
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            if (a == b) continue;
            std::vector<double> e = edge_input(cfg, in.window, a, b);
            out.e_r[size_t(a)][size_t(b)] =
                mlp_plain(nets.enc_r1, nets.enc_r1b, nets.enc_r2, nets.enc_r2b, e);
        }

    std::vector<std::vector<double>> h(size_t(N),
                                       std::vector<double>(size_t(cfg.hidden), 0.0));
    for (int l = 0; l < cfg.L; ++l) {
        // relation influences from the previous object influences
        std::vector<std::vector<std::vector<double>>> infl;
        infl.assign(size_t(N), std::vector<std::vector<double>>(size_t(N)));
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) {
                if (a == b || !edge_gate(cfg, in.window, a, b)) continue;
                std::vector<double> x;
                x.reserve(size_t(3 * cfg.hidden));
                x.insert(x.end(), out.e_r[size_t(a)][size_t(b)].begin(),
                         out.e_r[size_t(a)][size_t(b)].end());
                x.insert(x.end(), h[size_t(a)].begin(), h[size_t(a)].end());
                x.insert(x.end(), h[size_t(b)].begin(), h[size_t(b)].end());
                infl[size_t(a)][size_t(b)] =
                    mlp_plain(nets.prop_r1, nets.prop_r1b, nets.prop_r2, nets.prop_r2b, x);
            }
        std::vector<std::vector<double>> h_next;
        h_next.assign(size_t(N), {});
        for (int n = 0; n < N; ++n) {
            std::vector<double> sum(size_t(cfg.hidden), 0.0);
            for (int a = 0; a < N; ++a) {
                if (a == n || infl[size_t(a)][size_t(n)].empty()) continue;
                for (int d = 0; d < cfg.hidden; ++d)
                    sum[size_t(d)] += infl[size_t(a)][size_t(n)][size_t(d)];
            }
            std::vector<double> x;
            x.reserve(size_t(3 * cfg.hidden));
            x.insert(x.end(), out.e_o[size_t(n)].begin(), out.e_o[size_t(n)].end());
            x.insert(x.end(), sum.begin(), sum.end());
            x.insert(x.end(), h[size_t(n)].begin(), h[size_t(n)].end());
            h_next[size_t(n)] =
                mlp_plain(nets.prop_o1, nets.prop_o1b, nets.prop_o2, nets.prop_o2b, x);
        }
        h = std::move(h_next);
    }
    out.h = std::move(h);
    return out;
}

StepOutput predict_step(const DynNets& nets, const StepInput& in) {
    const DynConfig& cfg = nets.cfg;
    Encoded enc = encode_propagate(nets, in);
    int N = int(in.window[0].size());
    StepOutput out;
    out.next.resize(size_t(N));
    out.raw_box.resize(size_t(N));
    for (int n = 0; n < N; ++n) {
        const ObjState& last = in.window.back()[size_t(n)];
        ObjState& nx = out.next[size_t(n)];
        nx.present = last.present;
        if (!last.present) continue;
        std::vector<double> x;
        x.reserve(size_t(2 * cfg.hidden));
        x.insert(x.end(), enc.e_o[size_t(n)].begin(), enc.e_o[size_t(n)].end());
        x.insert(x.end(), enc.h[size_t(n)].begin(), enc.h[size_t(n)].end());
        std::vector<double> db =
            mlp_plain(nets.pred_b1, nets.pred_b1b, nets.pred_b2, nets.pred_b2b, x);
        std::vector<double> skip = affine_plain(nets.pred_b_skip, nullptr, x);
        for (int d = 0; d < 4; ++d) db[size_t(d)] += skip[size_t(d)];
        std::array<double, 4> raw;
        double scale = cfg.residual ? cfg.delta_scale : 1.0;
        for (int d = 0; d < 4; ++d) raw[size_t(d)] = db[size_t(d)] * scale;
        if (cfg.residual) {
            raw[0] += last.box.cx;
            raw[1] += last.box.cy;
            raw[2] += last.box.w;
            raw[3] += last.box.h;
        }
        out.raw_box[size_t(n)] = raw;
        nx.box.cx = clamp01(raw[0]);
        nx.box.cy = clamp01(raw[1]);
        nx.box.w = std::clamp(raw[2], 0.01, 1.0);
        nx.box.h = std::clamp(raw[3], 0.01, 1.0);
        std::vector<double> pp =
            mlp_plain(nets.pred_p1, nets.pred_p1b, nets.pred_p2, nets.pred_p2b, x);
        // patch prediction is a solid fill; summarize by channel means
        int per = cfg.patch * cfg.patch;
        for (int c = 0; c < 3; ++c) {
            double m = 0.0;
            double base = cfg.residual ? last.rgb[size_t(c)] : 0.0;
            for (int p = 0; p < per; ++p) m += pp[size_t(c * per + p)];
            nx.rgb[size_t(c)] = clamp01(base + m / per);
        }
    }
    return out;
}

std::vector<std::vector<ObjState>> rollout(const DynNets& nets,
                                           const std::vector<std::vector<ObjState>>& window,
                                           int steps) {
    if (int(window.size()) < nets.cfg.w) throw DataError("rollout: too few observed frames");
    std::deque<std::vector<ObjState>> hist(window.end() - nets.cfg.w, window.end());
    std::vector<std::vector<ObjState>> out;
    for (int s = 0; s < steps; ++s) {
        StepInput in;
        in.window.assign(hist.begin(), hist.end());
        StepOutput step = predict_step(nets, in);
        out.push_back(step.next);
        hist.pop_front();
        hist.push_back(step.next);
    }
    return out;
}

std::vector<std::vector<ObjState>> counterfactual_rollout(const DynNets& nets,
                                                          const StridedVideo& video, int removed,
                                                          int steps) {
    if (removed < 0 || removed >= video.n_objects())
        throw DataError("counterfactual_rollout: unknown object");
    if (int(video.steps.size()) < nets.cfg.w)
        throw DataError("counterfactual_rollout: too few observed frames");
    std::vector<std::vector<ObjState>> window(video.steps.begin(),
                                              video.steps.begin() + nets.cfg.w);
    for (auto& step : window) step[size_t(removed)] = ObjState{};  // vertex and edges drop out
    return rollout(nets, window, steps);
}

// ---- training -----------------------------------------------------------------

namespace {

ad::Var mlp_t(ad::Tape& t, ad::Param& w1, ad::Param& b1, ad::Param& w2, ad::Param& b2,
              std::span<const double> x) {
    ad::Var h = t.relu(t.affine_const(w1, &b1, x));
    ad::Var hs[1] = {h};
    return t.affine(w2, &b2, hs);
}

ad::Var mlp_t(ad::Tape& t, ad::Param& w1, ad::Param& b1, ad::Param& w2, ad::Param& b2,
              std::span<const ad::Var> xs) {
    ad::Var h = t.relu(t.affine(w1, &b1, xs));
    ad::Var hs[1] = {h};
    return t.affine(w2, &b2, hs);
}

}  // namespace

ad::Var step_loss_t(ad::Tape& tape, DynNets& nets, const StepInput& in,
                    const std::vector<ObjState>& target, bool with_patch) {
    const DynConfig& cfg = nets.cfg;
    int N = int(in.window[0].size());

    // e_o = learned features plus the raw relative-box block
    std::vector<ad::Var> e_o_mlp, e_o_rel;
    e_o_mlp.assign(size_t(N), {});
    e_o_rel.assign(size_t(N), {});
    for (int n = 0; n < N; ++n) {
        std::vector<double> v = vertex_input(cfg, in.window, n);
        e_o_mlp[size_t(n)] =
            mlp_t(tape, nets.enc_o1, nets.enc_o1b, nets.enc_o2, nets.enc_o2b, v);
        std::vector<double> rel;
        for (size_t w = 0; w < in.window.size(); ++w)
            for (int d = 0; d < 4; ++d)
                rel.push_back(v[w * size_t(4 + cfg.patch_vals()) + size_t(d)]);
        e_o_rel[size_t(n)] = tape.input(rel);
    }
    std::vector<std::vector<ad::Var>> e_r;
    e_r.assign(size_t(N), std::vector<ad::Var>(size_t(N)));
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            if (a == b || !edge_gate(cfg, in.window, a, b)) continue;
            e_r[size_t(a)][size_t(b)] = mlp_t(tape, nets.enc_r1, nets.enc_r1b, nets.enc_r2,
                                              nets.enc_r2b, edge_input(cfg, in.window, a, b));
        }

    std::vector<double> zeros(size_t(cfg.hidden), 0.0);
    std::vector<ad::Var> h;
    h.assign(size_t(N), {});
    for (int n = 0; n < N; ++n) h[size_t(n)] = tape.input(zeros);
    for (int l = 0; l < cfg.L; ++l) {
        std::vector<std::vector<ad::Var>> infl;
        infl.assign(size_t(N), std::vector<ad::Var>(size_t(N)));
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) {
                if (a == b || !e_r[size_t(a)][size_t(b)].valid()) continue;
                ad::Var xs[3] = {e_r[size_t(a)][size_t(b)], h[size_t(a)], h[size_t(b)]};
                infl[size_t(a)][size_t(b)] =
                    mlp_t(tape, nets.prop_r1, nets.prop_r1b, nets.prop_r2, nets.prop_r2b, xs);
            }
        std::vector<ad::Var> h_next;
        h_next.assign(size_t(N), {});
        for (int n = 0; n < N; ++n) {
            ad::Var sum = tape.input(zeros);
            for (int a = 0; a < N; ++a)
                if (a != n && infl[size_t(a)][size_t(n)].valid())
                    sum = tape.add(sum, infl[size_t(a)][size_t(n)]);
            ad::Var xs[4] = {e_o_mlp[size_t(n)], e_o_rel[size_t(n)], sum, h[size_t(n)]};
            h_next[size_t(n)] =
                mlp_t(tape, nets.prop_o1, nets.prop_o1b, nets.prop_o2, nets.prop_o2b, xs);
        }
        h = std::move(h_next);
    }

    ad::Var loss = tape.scalar(0.0);
    int terms = 0;
    for (int n = 0; n < N; ++n) {
        const ObjState& last = in.window.back()[size_t(n)];
        const ObjState& tgt = target[size_t(n)];
        if (!last.present || !tgt.present) continue;
        ad::Var xs[3] = {e_o_mlp[size_t(n)], e_o_rel[size_t(n)], h[size_t(n)]};
        ad::Var raw = mlp_t(tape, nets.pred_b1, nets.pred_b1b, nets.pred_b2, nets.pred_b2b, xs);
        raw = tape.add(raw, tape.affine(nets.pred_b_skip, nullptr, xs));
        double base[4] = {0, 0, 0, 0};
        if (cfg.residual) {
            base[0] = last.box.cx;
            base[1] = last.box.cy;
            base[2] = last.box.w;
            base[3] = last.box.h;
        }
        double scale = cfg.residual ? cfg.delta_scale : 1.0;
        double tvals[4] = {(tgt.box.cx - base[0]) / scale, (tgt.box.cy - base[1]) / scale,
                           (tgt.box.w - base[2]) / scale, (tgt.box.h - base[3]) / scale};
        ad::Var diff = tape.sub(raw, tape.input(tvals));
        loss = tape.add(loss, tape.dot(diff, diff));
        ++terms;
        if (with_patch) {
            ad::Var praw =
                mlp_t(tape, nets.pred_p1, nets.pred_p1b, nets.pred_p2, nets.pred_p2b, xs);
            int per = cfg.patch * cfg.patch;
            std::vector<double> ptv(size_t(cfg.patch_vals()), 0.0);
            for (int c = 0; c < 3; ++c) {
                double pbase = cfg.residual ? last.rgb[size_t(c)] : 0.0;
                for (int p = 0; p < per; ++p)
                    ptv[size_t(c * per + p)] = tgt.rgb[size_t(c)] - pbase;
            }
            ad::Var pdiff = tape.sub(praw, tape.input(ptv));
            loss = tape.add(loss, tape.scale(tape.dot(pdiff, pdiff), 1.0 / cfg.patch_vals()));
        }
    }
    if (terms > 0) loss = tape.scale(loss, 1.0 / terms);
    return loss;
}

TrainStats train_dynamics(DynNets& nets, const std::vector<StridedVideo>& corpus,
                          uint64_t seed) {
    const DynConfig& cfg = nets.cfg;
    TrainStats stats;
    struct Sample {
        int video;
        int step;  // predicts steps[step + 1]
    };
    std::vector<Sample> samples;
    for (size_t v = 0; v < corpus.size(); ++v) {
        int steps = int(corpus[v].steps.size());
        for (int k = cfg.w - 1; k + 1 < steps; ++k) samples.push_back({int(v), k});
    }
    if (samples.empty()) throw DataError("train_dynamics: empty corpus");

    ad::Adam opt;
    opt.lr = cfg.lr;
    auto params = nets.parameters();
    Rng rng(seed ^ 0xD1DADULL);
    ad::Tape tape;

    int total_epochs = cfg.epochs_stage1 + cfg.epochs_stage2;
    for (int epoch = 0; epoch < total_epochs; ++epoch) {
        opt.lr = cfg.lr * std::pow(cfg.lr_decay, double(epoch));
        bool with_patch = epoch >= cfg.epochs_stage1;
        rng.shuffle(samples);
        double epoch_loss = 0.0;
        size_t count = 0;
        for (size_t base = 0; base < samples.size(); base += size_t(cfg.batch)) {
            ad::zero_grads(params);
            size_t hi = std::min(samples.size(), base + size_t(cfg.batch));
            double batch_loss = 0.0;
            for (size_t si = base; si < hi; ++si) {
                const Sample& s = samples[si];
                const StridedVideo& vid = corpus[size_t(s.video)];
                StepInput in;
                in.window.assign(vid.steps.begin() + (s.step - cfg.w + 1),
                                 vid.steps.begin() + s.step + 1);
                tape.reset();
                ad::Var loss = step_loss_t(tape, nets, in, vid.steps[size_t(s.step + 1)],
                                           with_patch);
                double lv = tape.value(loss);
                if (!std::isfinite(lv)) {
                    stats.aborted = true;
                    stats.abort_reason = "non-finite loss in batch " +
                                         std::to_string(base / size_t(cfg.batch)) + " of epoch " +
                                         std::to_string(epoch);
                    throw StageError(stats.abort_reason);
                }
                batch_loss += lv;
                tape.backward(loss);
            }
            double inv = 1.0 / double(hi - base);
            for (ad::Param* p : params)
                for (double& g : p->g) g *= inv;
            ad::clip_grad_norm(params, cfg.clip);
            opt.step(params);
            epoch_loss += batch_loss;
            count += hi - base;
        }
        stats.epoch_loss.push_back(epoch_loss / double(count));
    }
    return stats;
}

std::string nets_to_bytes(const DynNets& nets) {
    nlohmann::ordered_json h;
    h["kind"] = "dyn_nets";
    h["w"] = nets.cfg.w;
    h["l"] = nets.cfg.L;
    h["hidden"] = nets.cfg.hidden;
    h["stride"] = nets.cfg.stride;
    h["patch"] = nets.cfg.patch;
    h["gate_radius"] = num(nets.cfg.gate_radius);
    h["residual"] = nets.cfg.residual;
    return concepts::checkpoint_to_bytes(h, nets.parameters());
}

DynNets nets_from_bytes(const std::string& bytes) {
    if (bytes.size() < 12) throw DataError("checkpoint: too short");
    uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);
    nlohmann::json h = nlohmann::json::parse(bytes.substr(12, len));
    if (h.at("kind") != "dyn_nets") throw DataError("checkpoint: wrong kind");
    DynConfig cfg;
    cfg.w = h.at("w").get<int>();
    cfg.L = h.at("l").get<int>();
    cfg.hidden = h.at("hidden").get<int>();
    cfg.stride = h.at("stride").get<int>();
    cfg.patch = h.at("patch").get<int>();
    cfg.gate_radius = h.at("gate_radius").get<double>();
    cfg.residual = h.at("residual").get<bool>();
    Rng rng(0);
    DynNets nets(cfg, rng);
    auto params = nets.parameters();
    concepts::checkpoint_from_bytes(bytes, params);
    return nets;
}

}  // namespace dcl::dyn
