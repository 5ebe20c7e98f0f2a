#include "dcl/features.hpp"

#include <cmath>
#include <cstring>

#include "dcl/common.hpp"

namespace dcl::feat {

SceneBackbone::SceneBackbone(const SceneRecord& scene) {
    for (const auto& o : scene.objects) app_.push_back(o.appearance());
}

std::vector<double> SceneBackbone::feature_of(int obj, int) const {
    return app_[size_t(obj)];
}

TrackBackbone::TrackBackbone(const std::vector<track::Trajectory>& trajs,
                             const std::vector<ProposalFrame>& frames) {
    app_.resize(trajs.size());
    for (size_t n = 0; n < trajs.size(); ++n) {
        const auto& t = trajs[n];
        int T = int(t.present.size());
        app_[n].assign(size_t(T), {});
        for (int f = 0; f < T; ++f) {
            if (!t.present[size_t(f)]) continue;
            if (f < int(frames.size())) {
                for (const auto& p : frames[size_t(f)].proposals) {
                    if (p.box == t.boxes[size_t(f)]) {
                        app_[n][size_t(f)] = p.appearance;
                        break;
                    }
                }
            }
        }
        // interpolated gap frames inherit the nearest matched appearance
        std::vector<double> last;
        for (int f = 0; f < T; ++f) {
            if (!app_[n][size_t(f)].empty())
                last = app_[n][size_t(f)];
            else if (t.present[size_t(f)] && !last.empty())
                app_[n][size_t(f)] = last;
        }
        for (int f = T - 1; f >= 0; --f) {
            if (!app_[n][size_t(f)].empty())
                last = app_[n][size_t(f)];
            else if (t.present[size_t(f)] && !last.empty())
                app_[n][size_t(f)] = last;
        }
    }
}

std::vector<double> TrackBackbone::feature_of(int obj, int frame) const {
    const auto& a = app_[size_t(obj)][size_t(frame)];
    if (a.empty()) return std::vector<double>(kAppearanceDim, 0.0);
    return a;
}

std::vector<int> sample_frames(int T, int K) {
    if (K > T) throw ConfigError("sample_frames: K must not exceed T");
    // end-aligned even sampling: the last frame is always sampled, and with
    // the default stride every frame sits within 2 of some sampled frame
    std::vector<int> ks(size_t(K), 0);
    for (int i = 0; i < K; ++i) ks[size_t(i)] = (i + 1) * T / K - 1;
    return ks;
}

int FeatureBundle::nearest_k(int frame) const {
    int best = 0;
    int best_d = std::abs(frame - k_frames[0]);
    for (int i = 1; i < int(k_frames.size()); ++i) {
        int d = std::abs(frame - k_frames[size_t(i)]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

std::vector<double> avg_visual_feature(const track::Trajectory& traj, int obj,
                                       const std::vector<track::Trajectory>& all,
                                       const Backbone& backbone, const BackboneConfig& cfg,
                                       const std::vector<int>& k_frames) {
    std::vector<double> out(size_t(cfg.d1()), 0.0);
    int count = 0;
    for (int f : k_frames) {
        if (f >= int(traj.present.size()) || !traj.present[size_t(f)]) continue;
        std::vector<double> app = backbone.feature_of(obj, f);
        // global context: mean appearance over objects present in this frame
        std::vector<double> ctx(size_t(cfg.d_app), 0.0);
        int present_n = 0;
        for (size_t m = 0; m < all.size(); ++m) {
            if (f >= int(all[m].present.size()) || !all[m].present[size_t(f)]) continue;
            std::vector<double> am = backbone.feature_of(int(m), f);
            for (int d = 0; d < cfg.d_app; ++d) ctx[size_t(d)] += am[size_t(d)];
            ++present_n;
        }
        if (present_n > 0)
            for (auto& v : ctx) v /= present_n;
        for (int d = 0; d < cfg.d_app; ++d) {
            out[size_t(d)] += app[size_t(d)];
            out[size_t(cfg.d_app + d)] += ctx[size_t(d)];
        }
        ++count;
    }
    if (count > 0)
        for (auto& v : out) v /= count;
    return out;
}

std::vector<double> temporal_sequence_feature(const track::Trajectory& traj, int T) {
    std::vector<double> row(size_t(4 * T), 0.0);
    for (int t = 0; t < T; ++t) {
        if (t >= int(traj.present.size()) || !traj.present[size_t(t)]) continue;
        const Box& b = traj.boxes[size_t(t)];
        row[size_t(4 * t + 0)] = b.cx;
        row[size_t(4 * t + 1)] = b.cy;
        row[size_t(4 * t + 2)] = b.w;
        row[size_t(4 * t + 3)] = b.h;
    }
    return row;
}

std::vector<double> frame_specific_feature(std::span<const double> fs_row, int T, int t_star,
                                           int tau) {
    if (t_star < 0 || t_star >= T) throw DataError("frame_specific_feature: t* out of range");
    std::vector<double> out(size_t(4 * T), 0.0);
    int lo = std::max(0, t_star - tau), hi = std::min(T - 1, t_star + tau);
    for (int t = lo; t <= hi; ++t)
        for (int d = 0; d < 4; ++d) out[size_t(4 * t + d)] = fs_row[size_t(4 * t + d)];
    return out;
}

std::vector<double> apply_time_mask(std::span<const double> fs_row,
                                    const std::vector<uint8_t>& mask) {
    std::vector<double> out(fs_row.begin(), fs_row.end());
    for (size_t t = 0; t < mask.size(); ++t) {
        double m = mask[t] ? 1.0 : 0.0;
        for (int d = 0; d < 4; ++d) out[4 * t + size_t(d)] *= m;
    }
    return out;
}

namespace {
Box traj_box(const track::Trajectory& t, int f) {
    if (f < 0 || f >= int(t.present.size()) || !t.present[size_t(f)]) return Box{};
    return t.boxes[size_t(f)];
}

// forward difference with a backward fallback at span ends
void traj_velocity(const track::Trajectory& t, int f, double& vx, double& vy) {
    vx = vy = 0.0;
    if (f < 0 || f >= int(t.present.size()) || !t.present[size_t(f)]) return;
    if (f + 1 < int(t.present.size()) && t.present[size_t(f + 1)]) {
        vx = t.boxes[size_t(f + 1)].cx - t.boxes[size_t(f)].cx;
        vy = t.boxes[size_t(f + 1)].cy - t.boxes[size_t(f)].cy;
    } else if (f > 0 && t.present[size_t(f - 1)]) {
        vx = t.boxes[size_t(f)].cx - t.boxes[size_t(f - 1)].cx;
        vy = t.boxes[size_t(f)].cy - t.boxes[size_t(f - 1)].cy;
    }
}
}  // namespace

std::vector<double> collision_feature(const track::Trajectory& ti, const track::Trajectory& tj,
                                      int obj_i, int obj_j, int k_frame, const Backbone& backbone,
                                      const BackboneConfig& cfg) {
    std::vector<double> out(size_t(cfg.d2()), 0.0);
    int T = int(ti.present.size());
    bool pi = k_frame >= 0 && k_frame < T && ti.present[size_t(k_frame)];
    bool pj = k_frame >= 0 && k_frame < int(tj.present.size()) && tj.present[size_t(k_frame)];
    if (!pi || !pj) return out;  // zero vector when either object is absent

    std::vector<double> ai = backbone.feature_of(obj_i, k_frame);
    std::vector<double> aj = backbone.feature_of(obj_j, k_frame);
    for (int d = 0; d < cfg.d_app; ++d) out[size_t(d)] = 0.5 * (ai[size_t(d)] + aj[size_t(d)]);
    double vix, viy, vjx, vjy;
    traj_velocity(ti, k_frame, vix, viy);
    traj_velocity(tj, k_frame, vjx, vjy);
    out[size_t(cfg.d_app)] = std::hypot(vix - vjx, viy - vjy);

    int w = cfg.loc_window;
    int frames = 2 * w + 1;
    int base = cfg.d_app + 1;
    for (int fi = 0; fi < frames; ++fi) {
        int f = std::clamp(k_frame - w + fi, 0, T - 1);
        Box bi = traj_box(ti, f), bj = traj_box(tj, f);
        // contact overlaps are shallow (a frame of penetration); amplify the
        // channel so it is not drowned by the unit-scale blocks
        double ov = iou(bi, bj) * cfg.iou_gain;
        double si[4] = {bi.cx, bi.cy, bi.w, bi.h};
        double sj[4] = {bj.cx, bj.cy, bj.w, bj.h};
        for (int d = 0; d < 4; ++d) {
            out[size_t(base + fi * 4 + d)] = ov;
            out[size_t(base + frames * 4 + fi * 4 + d)] = si[d] - sj[d];
            out[size_t(base + 2 * frames * 4 + fi * 4 + d)] = si[d] * sj[d];
        }
    }
    return out;
}

FeatureBundle build_bundle(const std::vector<track::Trajectory>& trajs, const Backbone& backbone,
                           const BackboneConfig& cfg, int T, int first_sampled_frame) {
    FeatureBundle b;
    b.N = int(trajs.size());
    b.T = T;
    b.D1 = cfg.d1();
    b.D2 = cfg.d2();
    for (int f : sample_frames(T, cfg.K))
        if (f >= first_sampled_frame) b.k_frames.push_back(f);
    b.K = int(b.k_frames.size());

    b.f_v.assign(size_t(b.N) * size_t(b.D1), 0.0);
    b.f_s.assign(size_t(b.N) * 4 * size_t(T), 0.0);
    b.f_c.assign(size_t(b.K) * size_t(b.N) * size_t(b.N) * size_t(b.D2), 0.0);
    for (int n = 0; n < b.N; ++n) {
        std::vector<double> fv =
            avg_visual_feature(trajs[size_t(n)], n, trajs, backbone, cfg, b.k_frames);
        std::copy(fv.begin(), fv.end(), b.f_v.begin() + size_t(n) * size_t(b.D1));
        std::vector<double> fs = temporal_sequence_feature(trajs[size_t(n)], T);
        std::copy(fs.begin(), fs.end(), b.f_s.begin() + size_t(n) * 4 * size_t(T));
        b.present.push_back(std::vector<bool>(size_t(T), false));
        for (int t = 0; t < T && t < int(trajs[size_t(n)].present.size()); ++t)
            b.present[size_t(n)][size_t(t)] = trajs[size_t(n)].present[size_t(t)];
        b.t_in.push_back(trajs[size_t(n)].first_present());
        b.t_out.push_back(trajs[size_t(n)].last_present());
    }
    for (int k = 0; k < b.K; ++k) {
        int f = b.k_frames[size_t(k)];
        for (int i = 0; i < b.N; ++i) {
            for (int j = i + 1; j < b.N; ++j) {
                std::vector<double> fc =
                    collision_feature(trajs[size_t(i)], trajs[size_t(j)], i, j, f, backbone, cfg);
                size_t off_ij = ((size_t(k) * b.N + size_t(i)) * b.N + size_t(j)) * size_t(b.D2);
                size_t off_ji = ((size_t(k) * b.N + size_t(j)) * b.N + size_t(i)) * size_t(b.D2);
                std::copy(fc.begin(), fc.end(), b.f_c.begin() + off_ij);
                // mirrored entry: IoU and products are symmetric, differences negate
                std::vector<double> rev = fc;
                int base = cfg.d_app + 1;
                int frames = 2 * cfg.loc_window + 1;
                for (int d = 0; d < frames * 4; ++d)
                    rev[size_t(base + frames * 4 + d)] = -rev[size_t(base + frames * 4 + d)];
                std::copy(rev.begin(), rev.end(), b.f_c.begin() + off_ji);
            }
        }
    }
    return b;
}

namespace {
template <class T>
void put(std::string& s, T v) {
    s.append(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T take(const std::string& s, size_t& off) {
    if (off + sizeof(T) > s.size()) throw DataError("bundle: truncated");
    T v;
    std::memcpy(&v, s.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}
}  // namespace

std::string bundle_to_bytes(const FeatureBundle& b) {
    std::string s;
    put<int32_t>(s, b.N);
    put<int32_t>(s, b.T);
    put<int32_t>(s, b.K);
    put<int32_t>(s, b.D1);
    put<int32_t>(s, b.D2);
    for (double v : b.f_v) put<float>(s, float(v));
    for (double v : b.f_s) put<float>(s, float(v));
    for (double v : b.f_c) put<float>(s, float(v));
    for (int v : b.k_frames) put<int32_t>(s, v);
    return s;
}

FeatureBundle bundle_from_bytes(const std::string& bytes) {
    FeatureBundle b;
    size_t off = 0;
    b.N = take<int32_t>(bytes, off);
    b.T = take<int32_t>(bytes, off);
    b.K = take<int32_t>(bytes, off);
    b.D1 = take<int32_t>(bytes, off);
    b.D2 = take<int32_t>(bytes, off);
    auto read_vec = [&](size_t n) {
        std::vector<double> v(n);
        for (size_t i = 0; i < n; ++i) v[i] = double(take<float>(bytes, off));
        return v;
    };
    b.f_v = read_vec(size_t(b.N) * size_t(b.D1));
    b.f_s = read_vec(size_t(b.N) * 4 * size_t(b.T));
    b.f_c = read_vec(size_t(b.K) * size_t(b.N) * size_t(b.N) * size_t(b.D2));
    for (int i = 0; i < b.K; ++i) b.k_frames.push_back(take<int32_t>(bytes, off));
    // presence reconstructed from the sequence feature (zero w marks absence)
    for (int n = 0; n < b.N; ++n) {
        std::vector<bool> p(size_t(b.T), false);
        for (int t = 0; t < b.T; ++t) p[size_t(t)] = b.f_s[size_t(n) * 4 * size_t(b.T) + size_t(4 * t + 2)] > 0.0;
        b.present.push_back(p);
        int first = -1, last = -1;
        for (int t = 0; t < b.T; ++t)
            if (p[size_t(t)]) {
                if (first < 0) first = t;
                last = t;
            }
        b.t_in.push_back(first);
        b.t_out.push_back(last);
    }
    return b;
}

}  // namespace dcl::feat
