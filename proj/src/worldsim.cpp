#include "dcl/worldsim.hpp"

#include <algorithm>
#include <cmath>

namespace dcl::world {

void WorldConfig::validate() const {
    if (n_min < 1 || n_max > 8 || n_min > n_max)
        throw ConfigError("world: object count must lie in [1, 8]");
    if (T < 16 || T > 256) throw ConfigError("world: frame count must lie in [16, 256]");
    if (size_min <= 0.0 || size_max < size_min || size_max > 0.56)
        throw ConfigError("world: bad size range");
    if (speed_min < 0.0 || speed_max < speed_min) throw ConfigError("world: bad speed range");
}

void TowerConfig::validate() const {
    if (blocks_min < 2 || blocks_max > 4 || blocks_min > blocks_max)
        throw ConfigError("tower: block count must lie in [2, 4]");
    if (T < 16 || T > 256) throw ConfigError("tower: frame count must lie in [16, 256]");
}

namespace {

struct Body {
    Box box;           // current center + size
    double vx = 0.0, vy = 0.0;
    bool traveler = false;
};

bool in_bounds(const Box& b) {
    return b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0;
}

void reflect_walls(Body& b) {
    double lo_x = b.box.w * 0.5, hi_x = 1.0 - b.box.w * 0.5;
    double lo_y = b.box.h * 0.5, hi_y = 1.0 - b.box.h * 0.5;
    for (int guard = 0; guard < 4; ++guard) {
        bool moved = false;
        if (b.box.cx < lo_x) { b.box.cx = 2 * lo_x - b.box.cx; b.vx = -b.vx; moved = true; }
        if (b.box.cx > hi_x) { b.box.cx = 2 * hi_x - b.box.cx; b.vx = -b.vx; moved = true; }
        if (b.box.cy < lo_y) { b.box.cy = 2 * lo_y - b.box.cy; b.vy = -b.vy; moved = true; }
        if (b.box.cy > hi_y) { b.box.cy = 2 * hi_y - b.box.cy; b.vy = -b.vy; moved = true; }
        if (!moved) break;
    }
}

// Equal-mass elastic exchange along the center-to-center normal.
void elastic_exchange(Body& a, Body& b) {
    double ux = b.box.cx - a.box.cx, uy = b.box.cy - a.box.cy;
    double d = std::sqrt(ux * ux + uy * uy);
    if (d < 1e-12) { ux = 1.0; uy = 0.0; } else { ux /= d; uy /= d; }
    double rel = (a.vx - b.vx) * ux + (a.vy - b.vy) * uy;
    if (rel <= 0.0) return;  // not approaching along the normal
    a.vx -= rel * ux; a.vy -= rel * uy;
    b.vx += rel * ux; b.vy += rel * uy;
}

// Push overlapping bodies apart along the center normal until their boxes
// clear. Penetration is recorded for exactly the collision frame; by the next
// frame the contact is resolved.
void separate_pair(Body& a, Body& b) {
    double sx = (a.box.w + b.box.w) * 0.5, sy = (a.box.h + b.box.h) * 0.5;
    double dx = b.box.cx - a.box.cx, dy = b.box.cy - a.box.cy;
    if (std::abs(dx) >= sx || std::abs(dy) >= sy) return;
    double d = std::sqrt(dx * dx + dy * dy);
    double ux = d < 1e-12 ? 1.0 : dx / d;
    double uy = d < 1e-12 ? 0.0 : dy / d;
    double delta = 1e300;
    if (std::abs(ux) > 1e-9) delta = std::min(delta, (sx - std::abs(dx)) / std::abs(ux));
    if (std::abs(uy) > 1e-9) delta = std::min(delta, (sy - std::abs(dy)) / std::abs(uy));
    delta = delta * 0.5 + 5e-4;
    a.box.cx -= ux * delta;
    a.box.cy -= uy * delta;
    b.box.cx += ux * delta;
    b.box.cy += uy * delta;
}

void run_bounce_sim(std::vector<Body> bodies, int T, double contact_iou, SceneRecord& out) {
    int n = int(bodies.size());
    for (auto& o : out.objects) {
        o.boxes.assign(size_t(T), Box{});
        o.present.assign(size_t(T), false);
        o.vx.assign(size_t(T), 0.0);
        o.vy.assign(size_t(T), 0.0);
    }
    std::vector<std::vector<bool>> touching(size_t(n), std::vector<bool>(size_t(n), false));
    int next_event = 0;
    std::vector<EventGT> collisions;

    for (int t = 0; t < T; ++t) {
        // contact onset: log + exchange before recording the frame
        std::vector<std::pair<int, int>> new_contacts;
        std::vector<std::vector<bool>> is_new(size_t(n), std::vector<bool>(size_t(n), false));
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                bool contact =
                    iou(bodies[size_t(i)].box, bodies[size_t(j)].box) >= contact_iou;
                bool was = touching[size_t(i)][size_t(j)];
                touching[size_t(i)][size_t(j)] = contact;
                if (!contact || was) continue;
                if (!in_bounds(bodies[size_t(i)].box) || !in_bounds(bodies[size_t(j)].box))
                    continue;  // off-screen contact is neither logged nor resolved
                EventGT e;
                e.event_id = next_event++;
                e.kind = EventKind::Collision;
                e.participants = {i, j};
                e.frame = t;
                collisions.push_back(e);
                new_contacts.emplace_back(i, j);
                is_new[size_t(i)][size_t(j)] = true;
                elastic_exchange(bodies[size_t(i)], bodies[size_t(j)]);
            }
        }
        // sub-trigger grazes are nudged apart unrecorded: an overlap in the
        // saved boxes always marks a collision frame. A push can open a new
        // overlap with a third body, so sweep to a fixed point.
        for (int pass = 0; pass < 8; ++pass) {
            bool any = false;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (!is_new[size_t(i)][size_t(j)] &&
                        overlap_area(bodies[size_t(i)].box, bodies[size_t(j)].box) > 0.0) {
                        separate_pair(bodies[size_t(i)], bodies[size_t(j)]);
                        any = true;
                    }
            if (!any) break;
        }
        for (int i = 0; i < n; ++i) {
            auto& b = bodies[size_t(i)];
            auto& o = out.objects[size_t(i)];
            bool p = in_bounds(b.box);
            o.present[size_t(t)] = p;
            o.boxes[size_t(t)] = b.box;
            o.vx[size_t(t)] = b.vx;
            o.vy[size_t(t)] = b.vy;
            b.box.cx += b.vx;
            b.box.cy += b.vy;
        }
        for (auto [i, j] : new_contacts) separate_pair(bodies[size_t(i)], bodies[size_t(j)]);
        for (auto& b : bodies)
            if (!b.traveler) reflect_walls(b);
        for (auto [i, j] : new_contacts) separate_pair(bodies[size_t(i)], bodies[size_t(j)]);
    }

    // in/out events from presence spans, then the collision log
    out.events.clear();
    std::vector<EventGT> inout;
    for (int i = 0; i < n; ++i) {
        const auto& o = out.objects[size_t(i)];
        int first = o.first_present(), last = o.last_present();
        if (first > 0) {
            EventGT e;
            e.event_id = 0;
            e.kind = EventKind::In;
            e.participants = {i};
            e.frame = first;
            inout.push_back(e);
        }
        if (first >= 0 && last < T - 1) {
            EventGT e;
            e.event_id = 0;
            e.kind = EventKind::Out;
            e.participants = {i};
            e.frame = last + 1;
            inout.push_back(e);
        }
    }
    for (auto& e : inout) out.events.push_back(e);
    for (auto& e : collisions) out.events.push_back(e);
    std::sort(out.events.begin(), out.events.end(), [](const EventGT& a, const EventGT& b) {
        if (a.frame != b.frame) return a.frame < b.frame;
        if (a.kind != b.kind) return int(a.kind) < int(b.kind);
        return a.participants < b.participants;
    });
    for (size_t i = 0; i < out.events.size(); ++i) out.events[i].event_id = int(i);

    out.causal_edges.clear();
    for (const auto& c : out.events) {
        if (c.kind != EventKind::Collision) continue;
        for (const auto& e : out.events) {
            if (e.frame <= c.frame) continue;
            bool shares = false;
            for (int p : e.participants)
                shares |= (p == c.participants[0] || p == c.participants[1]);
            if (shares) out.causal_edges.emplace_back(c.event_id, e.event_id);
        }
    }
}

}  // namespace

SceneRecord gen_video(const WorldConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    SceneRecord s;
    s.video_id = "bounce-" + std::to_string(seed);
    s.T = config.T;
    s.world_kind = WorldKind::Bounce;

    int n = rng.range(config.n_min, config.n_max);
    std::vector<int> colors(8);
    for (int i = 0; i < 8; ++i) colors[size_t(i)] = i;
    rng.shuffle(colors);

    std::vector<Body> bodies;
    int statics_left = 2;  // a couple of stationary objects per scene at most
    for (int i = 0; i < n; ++i) {
        ObjectGT o;
        o.obj_id = i;
        o.color = colors[size_t(i)];
        o.material = int(rng.below(kNumMaterials));
        o.shape = int(rng.below(kNumShapes));
        s.objects.push_back(o);

        Body b;
        double sz = rng.uniform(config.size_min, config.size_max);
        b.box.w = sz;
        b.box.h = std::clamp(sz * rng.uniform(0.75, 1.3), config.size_min, config.size_max);
        b.traveler = rng.chance(config.traveler_frac);
        if (b.traveler) {
            double speed = rng.uniform(std::max(config.speed_min, 0.006), config.speed_max);
            int side = int(rng.below(4));
            int entry_frame = rng.range(6, std::max(7, config.T * 3 / 5));
            double along = rng.uniform(0.25, 0.75);
            double tilt = rng.uniform(-0.35, 0.35);
            double ex, ey, vx, vy;
            switch (side) {
                case 0: ex = 0.0; ey = along; vx = speed; vy = speed * tilt; break;
                case 1: ex = 1.0; ey = along; vx = -speed; vy = speed * tilt; break;
                case 2: ex = along; ey = 0.0; vx = speed * tilt; vy = speed; break;
                default: ex = along; ey = 1.0; vx = speed * tilt; vy = -speed; break;
            }
            b.vx = vx;
            b.vy = vy;
            b.box.cx = ex - vx * entry_frame;
            b.box.cy = ey - vy * entry_frame;
        } else {
            bool is_static = statics_left > 0 && rng.chance(config.static_frac);
            if (is_static) --statics_left;
            double speed = is_static ? 0.0 : rng.uniform(config.speed_min, config.speed_max);
            double ang = rng.uniform(0.0, 6.283185307179586);
            b.vx = speed * std::cos(ang);
            b.vy = speed * std::sin(ang);
            // rejection placement away from already placed residents
            for (int attempt = 0; attempt < 400; ++attempt) {
                b.box.cx = rng.uniform(sz * 0.5 + 0.02, 0.98 - sz * 0.5);
                b.box.cy = rng.uniform(sz * 0.5 + 0.02, 0.98 - sz * 0.5);
                bool clear = true;
                for (const auto& other : bodies)
                    if (overlap_area(b.box, other.box) > 0.0) clear = false;
                if (clear) break;
            }
        }
        bodies.push_back(b);
    }

    run_bounce_sim(std::move(bodies), config.T, config.contact_iou, s);
    return s;
}

SceneRecord gen_tower_video(const TowerConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    SceneRecord s;
    s.video_id = "tower-" + std::to_string(seed);
    s.T = config.T;
    s.world_kind = WorldKind::Tower;

    int n = rng.range(config.blocks_min, config.blocks_max);
    std::vector<int> colors(8);
    for (int i = 0; i < 8; ++i) colors[size_t(i)] = i;
    rng.shuffle(colors);

    double ground = 0.92;  // y of the stack's resting line (bottom block's base)
    double thresh = config.stability_ratio * config.block_w;

    bool unstable = rng.chance(config.unstable_frac);
    int pivot = unstable ? rng.range(1, n - 1) : -1;

    std::vector<double> xs(size_t(n), 0.0), ys(size_t(n), 0.0);
    double base_x = rng.uniform(0.35, 0.65);
    xs[0] = base_x;
    ys[0] = ground - config.block_h * 0.5;
    for (int i = 1; i < n; ++i) {
        double off;
        if (i == pivot) {
            off = rng.uniform(1.25 * thresh, 2.0 * thresh) * (rng.chance(0.5) ? 1.0 : -1.0);
        } else {
            off = rng.uniform(-0.8 * thresh, 0.8 * thresh);
        }
        xs[size_t(i)] = xs[size_t(i - 1)] + off;
        ys[size_t(i)] = ys[size_t(i - 1)] - config.block_h;
    }

    for (int i = 0; i < n; ++i) {
        ObjectGT o;
        o.obj_id = i;
        o.color = colors[size_t(i)];
        o.material = int(rng.below(kNumMaterials));
        o.shape = 0;  // cubes
        o.falling = pivot >= 0 && i >= pivot;
        o.boxes.assign(size_t(config.T), Box{});
        o.present.assign(size_t(config.T), true);
        o.vx.assign(size_t(config.T), 0.0);
        o.vy.assign(size_t(config.T), 0.0);
        s.objects.push_back(o);
    }

    std::vector<double> drift(size_t(n), 0.0);
    if (pivot >= 0) {
        double dir = xs[size_t(pivot)] > xs[size_t(pivot - 1)] ? 1.0 : -1.0;
        for (int i = pivot; i < n; ++i)
            drift[size_t(i)] = dir * rng.uniform(0.0015, 0.0035) * (1.0 + 0.25 * (i - pivot));
    }

    std::vector<double> px = xs, py = ys, vx(size_t(n), 0.0), vy(size_t(n), 0.0);
    double rest_y = ground - config.block_h * 0.5;
    for (int t = 0; t < config.T; ++t) {
        for (int i = 0; i < n; ++i) {
            auto& o = s.objects[size_t(i)];
            o.boxes[size_t(t)] = Box{px[size_t(i)], py[size_t(i)], config.block_w, config.block_h};
            o.vx[size_t(t)] = vx[size_t(i)];
            o.vy[size_t(t)] = vy[size_t(i)];
        }
        for (int i = 0; i < n; ++i) {
            if (!s.objects[size_t(i)].falling) continue;
            bool landed = py[size_t(i)] >= rest_y - 1e-9 && t > 0;
            if (landed) { vx[size_t(i)] = 0.0; vy[size_t(i)] = 0.0; continue; }
            vy[size_t(i)] += config.gravity;
            vx[size_t(i)] = drift[size_t(i)];
            px[size_t(i)] = std::clamp(px[size_t(i)] + vx[size_t(i)], config.block_w * 0.5,
                                       1.0 - config.block_w * 0.5);
            py[size_t(i)] = std::min(py[size_t(i)] + vy[size_t(i)], rest_y);
        }
    }
    return s;
}

std::vector<ProposalFrame> emit_proposals(const SceneRecord& scene, const NoiseConfig& noise,
                                          uint64_t seed) {
    Rng rng(seed);
    std::vector<ProposalFrame> frames;
    frames.reserve(size_t(scene.T));
    for (int t = 0; t < scene.T; ++t) {
        ProposalFrame f;
        f.frame = t;
        for (const auto& o : scene.objects) {
            if (t >= int(o.present.size()) || !o.present[size_t(t)]) continue;
            bool dropped = rng.chance(noise.drop_rate);
            Box b = o.boxes[size_t(t)];
            double jit[4] = {rng.gauss(0, noise.jitter_sigma), rng.gauss(0, noise.jitter_sigma),
                             rng.gauss(0, noise.jitter_sigma), rng.gauss(0, noise.jitter_sigma)};
            double sc = rng.uniform(noise.true_score_min, noise.true_score_max);
            std::vector<double> app = o.appearance();
            for (auto& v : app) v += rng.gauss(0, noise.appearance_sigma);
            if (dropped) continue;  // rng consumed above keeps streams aligned
            Proposal p;
            p.box.cx = clamp01(b.cx + jit[0]);
            p.box.cy = clamp01(b.cy + jit[1]);
            p.box.w = std::max(0.01, std::min(1.0, b.w + jit[2]));
            p.box.h = std::max(0.01, std::min(1.0, b.h + jit[3]));
            p.score = sc;
            p.appearance = std::move(app);
            f.proposals.push_back(std::move(p));
        }
        if (rng.chance(noise.spurious_rate)) {
            Proposal p;
            p.box.cx = rng.uniform(0.05, 0.95);
            p.box.cy = rng.uniform(0.05, 0.95);
            p.box.w = rng.uniform(0.08, 0.16);
            p.box.h = rng.uniform(0.08, 0.16);
            p.score = rng.uniform(noise.spurious_score_min, noise.spurious_score_max);
            p.appearance.assign(kAppearanceDim, 0.0);
            for (auto& v : p.appearance) v = rng.uniform(0.0, 0.4);
            f.proposals.push_back(std::move(p));
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

SceneRecord resimulate_without(const SceneRecord& scene, int removed_obj,
                               const WorldConfig& config) {
    if (removed_obj < 0 || removed_obj >= int(scene.objects.size()))
        throw DataError("resimulate_without: unknown object id");
    SceneRecord s;
    s.video_id = scene.video_id + "_cf" + std::to_string(removed_obj);
    s.T = scene.T;
    s.world_kind = scene.world_kind;

    // The removed object stays in the list as a never-present ghost so that
    // object indices keep lining up with the original scene.
    std::vector<Body> bodies;
    std::vector<int> body_obj;
    for (const auto& o : scene.objects) {
        ObjectGT copy;
        copy.obj_id = o.obj_id;
        copy.color = o.color;
        copy.material = o.material;
        copy.shape = o.shape;
        copy.present.assign(size_t(s.T), false);
        copy.boxes.assign(size_t(s.T), Box{});
        copy.vx.assign(size_t(s.T), 0.0);
        copy.vy.assign(size_t(s.T), 0.0);
        s.objects.push_back(copy);
        if (o.obj_id == removed_obj) continue;

        int first = o.first_present();
        if (first < 0) continue;
        Body b;
        b.box = o.boxes[size_t(first)];
        b.vx = o.vx[size_t(first)];
        b.vy = o.vy[size_t(first)];
        // rewind the straight pre-entry segment; collisions need presence, so
        // the recorded entry velocity is the spawn velocity
        b.box.cx -= b.vx * first;
        b.box.cy -= b.vy * first;
        // travelers are exactly the objects with an in or out event
        b.traveler = first > 0 || o.last_present() < scene.T - 1;
        bodies.push_back(b);
        body_obj.push_back(o.obj_id);
    }

    SceneRecord sim;
    sim.T = s.T;
    sim.objects.assign(bodies.size(), ObjectGT{});
    run_bounce_sim(std::move(bodies), s.T, config.contact_iou, sim);
    for (size_t bi = 0; bi < body_obj.size(); ++bi) {
        auto& dst = s.objects[size_t(body_obj[bi])];
        const auto& src = sim.objects[bi];
        dst.boxes = src.boxes;
        dst.present = src.present;
        dst.vx = src.vx;
        dst.vy = src.vy;
    }
    s.events = sim.events;
    s.causal_edges = sim.causal_edges;
    for (auto& e : s.events)
        for (auto& p : e.participants) p = body_obj[size_t(p)];
    return s;
}

bool gt_moving_video(const ObjectGT& o) {
    for (size_t t = 0; t < o.present.size(); ++t)
        if (o.present[t] && std::abs(o.vx[t]) + std::abs(o.vy[t]) > 1e-9) return true;
    return false;
}

}  // namespace dcl::world
