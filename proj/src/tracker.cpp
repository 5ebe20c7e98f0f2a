#include "dcl/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dcl::track {

namespace {
constexpr double kForbid = 1e9;  // gated pairing; never picked over dummies
constexpr int kAttrHistory = 8;  // Eq-3 history truncation
}  // namespace

int Trajectory::first_present() const {
    for (size_t t = 0; t < present.size(); ++t)
        if (present[t]) return int(t);
    return -1;
}

int Trajectory::last_present() const {
    for (size_t t = present.size(); t > 0; --t)
        if (present[t - 1]) return int(t - 1);
    return -1;
}

std::array<int, 3> appearance_argmax(const std::vector<double>& a) {
    auto arg = [&](int off, int len) {
        int best = 0;
        for (int i = 1; i < len; ++i)
            if (a[size_t(off + i)] > a[size_t(off + best)]) best = i;
        return best;
    };
    return {arg(0, kNumColors), arg(kNumColors, kNumMaterials),
            arg(kNumColors + kNumMaterials, kNumShapes)};
}

Quantizer oracle_quantizer() {
    return [](const Proposal& p, const ProposalFrame&) { return appearance_argmax(p.appearance); };
}

Assignment linear_assign(const Mat& cost) {
    int rows = cost.rows, cols = cost.cols;
    Assignment out;
    if (rows == 0 || cols == 0) return out;
    int n = std::max(rows, cols);

    // classic potentials + shortest augmenting path, 1-based internals
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(size_t(n + 1), 0.0), v(size_t(n + 1), 0.0);
    std::vector<int> p(size_t(n + 1), 0), way(size_t(n + 1), 0);
    auto c = [&](int i, int j) -> double {  // zero-padded square view
        if (i < rows && j < cols) return cost(i, j);
        return 0.0;
    };
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(size_t(n + 1), inf);
        std::vector<bool> used(size_t(n + 1), false);
        do {
            used[size_t(j0)] = true;
            int i0 = p[size_t(j0)], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[size_t(j)]) continue;
                double cur = c(i0 - 1, j - 1) - u[size_t(i0)] - v[size_t(j)];
                if (cur < minv[size_t(j)]) {
                    minv[size_t(j)] = cur;
                    way[size_t(j)] = j0;
                }
                if (minv[size_t(j)] < delta) {
                    delta = minv[size_t(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[size_t(j)]) {
                    u[size_t(p[size_t(j)])] += delta;
                    v[size_t(j)] -= delta;
                } else {
                    minv[size_t(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[size_t(j0)] != 0);
        do {
            int j1 = way[size_t(j0)];
            p[size_t(j0)] = p[size_t(j1)];
            j0 = j1;
        } while (j0);
    }

    out.row_to_col.assign(size_t(rows), -1);
    for (int j = 1; j <= n; ++j) {
        int i = p[size_t(j)] - 1;
        if (i >= 0 && i < rows && j - 1 < cols) {
            out.row_to_col[size_t(i)] = j - 1;
            out.total_cost += cost(i, j - 1);
        }
    }
    return out;
}

double connection_score(const Proposal& prev, const Proposal& next,
                        const ScoringParams& params) {
    return prev.score + next.score + params.lambda1 * iou(prev.box, next.box);
}

double f_appear(const std::vector<std::array<int, 3>>& history,
                const std::array<int, 3>& candidate) {
    if (history.empty()) return 0.0;
    size_t t = std::min(history.size(), size_t(kAttrHistory));
    int matches = 0;
    for (size_t i = history.size() - t; i < history.size(); ++i)
        for (int a = 0; a < 3; ++a)
            if (history[i][size_t(a)] == candidate[size_t(a)]) ++matches;
    return double(matches) / double(3 * t);
}

namespace {

struct LiveTrack {
    int id = 0;
    int last_frame = -1;       // last matched frame
    Box last_box;              // box at last matched frame
    Box coast;                 // extrapolated box for the current frame
    double dx = 0, dy = 0, dw = 0, dh = 0;  // per-frame deltas
    double last_score = 0.0;
    int misses = 0;
    std::vector<std::array<int, 3>> attrs;  // refined-mode label history
    Trajectory traj;
};

void advance_coast(LiveTrack& t) {
    t.coast.cx += t.dx;
    t.coast.cy += t.dy;
    t.coast.w = std::max(0.01, t.coast.w + t.dw);
    t.coast.h = std::max(0.01, t.coast.h + t.dh);
}

}  // namespace

std::vector<Trajectory> extract_trajectories(const std::vector<ProposalFrame>& frames,
                                             const ScoringParams& params, LinkMode mode,
                                             const Quantizer* quantizer) {
    if (mode == LinkMode::Refined && quantizer == nullptr)
        throw ConfigError("extract_trajectories: refined mode needs a quantizer");
    int T = int(frames.size());
    std::vector<LiveTrack> live;
    std::vector<Trajectory> done;
    int next_id = 0;
    double open_gate = -params.new_track_cost;

    auto close_track = [&](LiveTrack& t) { done.push_back(std::move(t.traj)); };

    auto open_track = [&](const Proposal& prop, int frame, const ProposalFrame& ctx) {
        LiveTrack t;
        t.id = next_id++;
        t.last_frame = frame;
        t.last_box = prop.box;
        t.coast = prop.box;
        t.last_score = prop.score;
        t.traj.track_id = t.id;
        t.traj.boxes.assign(size_t(T), Box{});
        t.traj.present.assign(size_t(T), false);
        t.traj.source_scores.assign(size_t(T), 0.0);
        t.traj.boxes[size_t(frame)] = prop.box;
        t.traj.present[size_t(frame)] = true;
        t.traj.source_scores[size_t(frame)] = prop.score;
        if (quantizer) t.attrs.push_back((*quantizer)(prop, ctx));
        live.push_back(std::move(t));
    };

    auto match_track = [&](LiveTrack& t, const Proposal& prop, int frame,
                           const ProposalFrame& ctx) {
        int gap = frame - t.last_frame;
        if (gap > 1) {
            // linear interpolation across the missed frames
            for (int g = 1; g < gap; ++g) {
                double a = double(g) / double(gap);
                Box b;
                b.cx = t.last_box.cx + a * (prop.box.cx - t.last_box.cx);
                b.cy = t.last_box.cy + a * (prop.box.cy - t.last_box.cy);
                b.w = t.last_box.w + a * (prop.box.w - t.last_box.w);
                b.h = t.last_box.h + a * (prop.box.h - t.last_box.h);
                t.traj.boxes[size_t(t.last_frame + g)] = b;
                t.traj.present[size_t(t.last_frame + g)] = true;
            }
        }
        t.dx = (prop.box.cx - t.last_box.cx) / gap;
        t.dy = (prop.box.cy - t.last_box.cy) / gap;
        t.dw = (prop.box.w - t.last_box.w) / gap;
        t.dh = (prop.box.h - t.last_box.h) / gap;
        t.last_box = prop.box;
        t.coast = prop.box;
        t.last_frame = frame;
        t.last_score = prop.score;
        t.misses = 0;
        t.traj.boxes[size_t(frame)] = prop.box;
        t.traj.present[size_t(frame)] = true;
        t.traj.source_scores[size_t(frame)] = prop.score;
        if (quantizer) {
            t.attrs.push_back((*quantizer)(prop, ctx));
            if (int(t.attrs.size()) > kAttrHistory)
                t.attrs.erase(t.attrs.begin(), t.attrs.end() - kAttrHistory);
        }
    };

    for (int t = 0; t < T; ++t) {
        const auto& props = frames[size_t(t)].proposals;
        int nt = int(live.size()), np = int(props.size());

        std::vector<int> track_match(size_t(nt), -1);
        std::vector<bool> prop_matched(size_t(np), false);
        if (nt > 0 && np > 0) {
            int dim = nt + np;
            Mat cost(dim, dim);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) cost(i, j) = kForbid;
            for (int i = 0; i < nt; ++i) {
                Proposal ref;
                ref.box = live[size_t(i)].coast;
                ref.score = live[size_t(i)].last_score;
                for (int j = 0; j < np; ++j) {
                    double overlap = iou(ref.box, props[size_t(j)].box);
                    if (overlap <= 0.0) continue;  // geometric gate
                    double s = connection_score(ref, props[size_t(j)], params);
                    if (mode == LinkMode::Refined) {
                        auto labels = (*quantizer)(props[size_t(j)], frames[size_t(t)]);
                        s += params.lambda2 * f_appear(live[size_t(i)].attrs, labels);
                    }
                    cost(i, j) = -s;
                }
                cost(i, np + i) = -params.new_track_cost;  // miss this frame
            }
            for (int j = 0; j < np; ++j) cost(nt + j, j) = -params.new_track_cost;
            for (int i = nt; i < dim; ++i)
                for (int j = np; j < dim; ++j) cost(i, j) = 0.0;

            Assignment as = linear_assign(cost);
            for (int i = 0; i < nt; ++i) {
                int j = as.row_to_col[size_t(i)];
                if (j >= 0 && j < np && cost(i, j) < kForbid * 0.5) {
                    track_match[size_t(i)] = j;
                    prop_matched[size_t(j)] = true;
                }
            }
        }

        std::vector<LiveTrack> still;
        for (int i = 0; i < nt; ++i) {
            auto& tr = live[size_t(i)];
            if (track_match[size_t(i)] >= 0) {
                match_track(tr, props[size_t(track_match[size_t(i)])], t, frames[size_t(t)]);
                still.push_back(std::move(tr));
            } else {
                tr.misses += 1;
                advance_coast(tr);
                if (tr.misses > params.miss_tolerance)
                    close_track(tr);
                else
                    still.push_back(std::move(tr));
            }
        }
        live = std::move(still);
        for (int j = 0; j < np; ++j) {
            if (prop_matched[size_t(j)]) continue;
            if (props[size_t(j)].score >= open_gate)
                open_track(props[size_t(j)], t, frames[size_t(t)]);
        }
    }
    for (auto& tr : live) close_track(tr);
    std::sort(done.begin(), done.end(),
              [](const Trajectory& a, const Trajectory& b) { return a.track_id < b.track_id; });
    return done;
}

Trajectory kalman_smooth(const Trajectory& traj) {
    int first = traj.first_present(), last = traj.last_present();
    if (first < 0) return traj;
    int count = 0;
    for (int t = first; t <= last; ++t) count += traj.present[size_t(t)] ? 1 : 0;
    if (count < 2) return traj;

    // four independent (value, velocity) filters over cx, cy, w, h
    constexpr double kR = 1e-4;   // measurement variance
    constexpr double kQ = 1e-5;  // velocity process noise; bounces change direction
    int second = -1;
    for (int t = first + 1; t <= last; ++t)
        if (traj.present[size_t(t)]) { second = t; break; }

    Trajectory out = traj;
    auto coord = [&](const Box& b, int d) {
        switch (d) {
            case 0: return b.cx;
            case 1: return b.cy;
            case 2: return b.w;
            default: return b.h;
        }
    };
    auto set_coord = [&](Box& b, int d, double v) {
        switch (d) {
            case 0: b.cx = v; break;
            case 1: b.cy = v; break;
            case 2: b.w = v; break;
            default: b.h = v; break;
        }
    };

    for (int d = 0; d < 4; ++d) {
        double x = coord(traj.boxes[size_t(second)], d);
        double v = (coord(traj.boxes[size_t(second)], d) - coord(traj.boxes[size_t(first)], d)) /
                   double(second - first);
        // state covariance
        double pxx = 1e-4, pxv = 0.0, pvv = 1e-4;
        set_coord(out.boxes[size_t(first)], d, coord(traj.boxes[size_t(first)], d));
        set_coord(out.boxes[size_t(second)], d, x);
        for (int t = second + 1; t <= last; ++t) {
            // predict
            x += v;
            pxx += 2 * pxv + pvv;
            pxv += pvv;
            pvv += kQ;
            if (traj.present[size_t(t)]) {
                double z = coord(traj.boxes[size_t(t)], d);
                double s = pxx + kR;
                double kx = pxx / s, kv = pxv / s;
                double innov = z - x;
                x += kx * innov;
                v += kv * innov;
                double nxx = (1 - kx) * pxx;
                double nxv = (1 - kx) * pxv;
                double nvv = pvv - kv * pxv;
                pxx = nxx;
                pxv = nxv;
                pvv = nvv;
            }
            set_coord(out.boxes[size_t(t)], d, x);
        }
    }
    return out;
}

double trajectory_iou(const Trajectory& a, const Trajectory& b) {
    size_t T = std::min(a.present.size(), b.present.size());
    double sum = 0.0;
    int frames = 0;
    for (size_t t = 0; t < T; ++t) {
        bool pa = a.present[t], pb = b.present[t];
        if (!pa && !pb) continue;
        ++frames;
        if (pa && pb) sum += iou(a.boxes[t], b.boxes[t]);
    }
    return frames == 0 ? 0.0 : sum / frames;
}

std::vector<EvalRow> eval_trajectories(const std::vector<Trajectory>& pred,
                                       const std::vector<Trajectory>& gt,
                                       const std::vector<double>& thresholds) {
    std::vector<EvalRow> rows;
    // pairwise IoUs once; greedy claiming per threshold
    std::vector<std::vector<double>> overlap(pred.size(), std::vector<double>(gt.size(), 0.0));
    for (size_t i = 0; i < pred.size(); ++i)
        for (size_t j = 0; j < gt.size(); ++j) overlap[i][j] = trajectory_iou(pred[i], gt[j]);

    for (double th : thresholds) {
        std::vector<bool> claimed(gt.size(), false);
        int correct = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            int best = -1;
            double best_iou = 0.0;
            for (size_t j = 0; j < gt.size(); ++j) {
                if (claimed[j]) continue;
                if (overlap[i][j] > best_iou) {
                    best_iou = overlap[i][j];
                    best = int(j);
                }
            }
            if (best >= 0 && best_iou > th) {
                claimed[size_t(best)] = true;
                ++correct;
            }
        }
        EvalRow r;
        r.threshold = th;
        r.precision = pred.empty() ? 0.0 : double(correct) / double(pred.size());
        if (!gt.empty()) r.recall = double(correct) / double(gt.size());
        rows.push_back(r);
    }
    return rows;
}

std::vector<Trajectory> gt_trajectories(const SceneRecord& scene) {
    // one row per object, aligned with scene.objects; counterfactual ghosts
    // become empty trajectories so indices stay stable
    std::vector<Trajectory> out;
    for (const auto& o : scene.objects) {
        Trajectory t;
        t.track_id = o.obj_id;
        t.boxes.assign(size_t(scene.T), Box{});
        t.present.assign(size_t(scene.T), false);
        t.source_scores.assign(size_t(scene.T), 1.0);
        for (int f = 0; f < scene.T; ++f) {
            if (f < int(o.present.size()) && o.present[size_t(f)]) {
                t.present[size_t(f)] = true;
                t.boxes[size_t(f)] = o.boxes[size_t(f)];
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

nlohmann::ordered_json trajectories_to_json(const std::vector<Trajectory>& trajs) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : trajs) {
        int first = t.first_present(), last = t.last_present();
        nlohmann::ordered_json jt;
        jt["track_id"] = t.track_id;
        jt["first_frame"] = first;
        nlohmann::ordered_json boxes = nlohmann::ordered_json::array();
        nlohmann::ordered_json present = nlohmann::ordered_json::array();
        for (int f = first; f >= 0 && f <= last; ++f) {
            const Box& b = t.boxes[size_t(f)];
            boxes.push_back(nlohmann::ordered_json::array(
                {num(b.cx), num(b.cy), num(b.w), num(b.h)}));
            present.push_back(t.present[size_t(f)]);
        }
        jt["boxes"] = std::move(boxes);
        jt["present"] = std::move(present);
        arr.push_back(std::move(jt));
    }
    return arr;
}

std::vector<Trajectory> trajectories_from_json(const nlohmann::json& j, int T) {
    std::vector<Trajectory> out;
    for (const auto& jt : j) {
        Trajectory t;
        t.track_id = jt.at("track_id").get<int>();
        t.boxes.assign(size_t(T), Box{});
        t.present.assign(size_t(T), false);
        t.source_scores.assign(size_t(T), 0.0);
        int first = jt.at("first_frame").get<int>();
        const auto& boxes = jt.at("boxes");
        const auto& present = jt.at("present");
        for (size_t i = 0; i < boxes.size(); ++i) {
            int f = first + int(i);
            if (f < 0 || f >= T) continue;
            const auto& jb = boxes.at(i);
            t.boxes[size_t(f)] = Box{jb.at(0).get<double>(), jb.at(1).get<double>(),
                                     jb.at(2).get<double>(), jb.at(3).get<double>()};
            t.present[size_t(f)] = present.at(i).get<bool>();
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::string eval_to_csv(const std::vector<EvalRow>& rows) {
    std::string s = "threshold,precision,recall\n";
    for (const auto& r : rows) {
        s += format_g9(r.threshold) + "," + format_g9(r.precision) + ",";
        if (r.recall) s += format_g9(*r.recall);
        s += "\n";
    }
    return s;
}

}  // namespace dcl::track
