#include "dcl/executor.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "dcl/tracker.hpp"

namespace dcl::exec {

using prog::OpCode;
using prog::Program;
using prog::Type;

std::vector<uint8_t> start_mask(int T) {
    std::vector<uint8_t> m(size_t(T), 0);
    for (int t = 0; t < T && t < 5; ++t) m[size_t(t)] = 1;
    return m;
}

std::vector<uint8_t> end_mask(int T) {
    std::vector<uint8_t> m(size_t(T), 0);
    for (int t = 0; t < T; ++t)
        if (t > T - 5) m[size_t(t)] = 1;
    return m;
}

namespace {

// ---- value model -----------------------------------------------------------

struct EvKey {
    int kind = 2;   // 0 in, 1 out, 2 collision, 3 start/end marker
    int a = -1, b = -1;  // object ids (b for collisions)
    int k = -1;          // sampled index for collisions
    int frame = -1;
};

template <class S>
struct ObjectsVal {
    std::vector<S> p;
};
template <class S>
struct ObjectRef {
    int n = -1;
    S p{};
};
template <class S>
struct EventsVal {
    bool unseen = false;
    bool in_active = false, out_active = false, col_active = false;
    std::vector<S> in_p, out_p;  // per object
    std::vector<S> col;          // canonical i<j entries, index (k*N+i)*N+j
};
template <class S>
struct EventRef {
    EvKey key;
    S p{};
};

template <class S>
struct Value {
    Type type = Type::Bool;
    bool valid = true;
    ObjectsVal<S> objects;
    ObjectRef<S> object;
    EventsVal<S> events;
    EventRef<S> event;
    int frame = -1;
    S boolean{};
    std::string literal;
    std::vector<std::pair<std::string, S>> dist;
};

// ---- plain-double environment ----------------------------------------------

struct PlainEnv {
    using S = double;
    const feat::FeatureBundle& bundle;
    const concepts::ConceptSpace& space;
    const PredictedScene* predicted;
    ScoreCache* cache;

    int N() const { return bundle.N; }
    int T() const { return bundle.T; }
    const std::vector<int>& k_frames(bool unseen) const {
        return unseen ? predicted->unseen.k_frames : bundle.k_frames;
    }
    int K(bool unseen) const { return int(k_frames(unseen).size()); }

    double c(double v) const { return v; }
    double val(double v) const { return v; }
    double smin(double a, double b) const { return std::min(a, b); }
    double smax(double a, double b) const { return std::max(a, b); }
    double combine(double a, double b) const { return a * b; }
    double add(double a, double b) const { return a + b; }
    double one_minus(double a) const { return 1.0 - a; }
    double gate(double p, bool on) const { return on ? p : 0.0; }
    double ratio(double a, double b) const { return a / b; }

    const std::vector<double>& static_scores(const std::string& name) {
        auto it = cache->statics.find(name);
        if (it != cache->statics.end()) return it->second;
        std::vector<double> s(size_t(N()), 0.0);
        for (int n = 0; n < N(); ++n)
            s[size_t(n)] =
                concepts::concept_score(bundle.fv_row(n), name, concepts::Family::StaticAttr, space);
        return cache->statics.emplace(name, std::move(s)).first->second;
    }
    double static_prob(int n, const std::string& name) {
        return concepts::score_to_prob(static_scores(name)[size_t(n)]);
    }

    double dyn_prob(int n, const std::string& name, const std::vector<uint8_t>* mask,
                    int t_star, bool moment) {
        if (!mask) {
            if (moment) {
                auto& per_t = cache->moment[name];
                auto it = per_t.find(t_star);
                if (it == per_t.end()) {
                    it = per_t.emplace(t_star,
                                       concepts::obj_filter(name, bundle, space, nullptr, t_star))
                             .first;
                }
                return concepts::score_to_prob(it->second[size_t(n)]);
            }
            auto it = cache->video_dyn.find(name);
            if (it == cache->video_dyn.end())
                it = cache->video_dyn.emplace(name, concepts::obj_filter(name, bundle, space))
                         .first;
            return concepts::score_to_prob(it->second[size_t(n)]);
        }
        std::vector<double> s =
            concepts::obj_filter(name, bundle, space, mask, moment ? t_star : -1);
        return concepts::score_to_prob(s[size_t(n)]);
    }

    const std::vector<double>& inout_scores(bool out) {
        auto& slot = out ? cache->out_scores : cache->in_scores;
        if (!slot) {
            std::vector<double> s(size_t(N()), 0.0);
            for (int n = 0; n < N(); ++n)
                s[size_t(n)] = concepts::concept_score(bundle.fs_row(n), out ? "out" : "in",
                                                       concepts::Family::Dynamic, space);
            slot = std::move(s);
        }
        return *slot;
    }
    double in_prob(int n) { return concepts::score_to_prob(inout_scores(false)[size_t(n)]); }
    double out_prob(int n) { return concepts::score_to_prob(inout_scores(true)[size_t(n)]); }

    const std::vector<double>& col_scores(bool unseen) {
        auto& slot = unseen ? cache->col_unseen : cache->col;
        if (!slot) {
            const feat::FeatureBundle& src = unseen ? predicted->unseen : bundle;
            std::vector<double> s(size_t(src.K) * size_t(N()) * size_t(N()), -1e9);
            for (int k = 0; k < src.K; ++k)
                for (int i = 0; i < N(); ++i)
                    for (int j = i + 1; j < N(); ++j)
                        s[(size_t(k) * size_t(N()) + size_t(i)) * size_t(N()) + size_t(j)] =
                            concepts::concept_score(src.fc_entry(k, i, j), "collision",
                                                    concepts::Family::Collision, space);
            slot = std::move(s);
        }
        return *slot;
    }
    double col_prob(int i, int j, int k, bool unseen) {
        if (i > j) std::swap(i, j);
        double s = col_scores(unseen)[(size_t(k) * size_t(N()) + size_t(i)) * size_t(N()) +
                                      size_t(j)];
        return concepts::score_to_prob(s);
    }

    int t_in(int n) const { return bundle.t_in[size_t(n)]; }
    int t_out_frame(int n) const {  // out-event frame
        int last = bundle.t_out[size_t(n)];
        return last < 0 ? -1 : last + 1;
    }
    bool unseen_object_valid(int n) const {
        return !predicted || predicted->object_valid[size_t(n)];
    }
    // predicted-scene out events (presence-derived, crisp)
    double unseen_out_p(int n) const {
        if (!predicted) return 0.0;
        const auto& u = predicted->unseen;
        if (!predicted->object_valid[size_t(n)]) return 0.0;
        int last = u.t_out[size_t(n)];
        if (last < 0 || last >= u.T - 1) return 0.0;
        return 1.0;
    }
    int unseen_out_frame(int n) const {
        if (!predicted) return -1;
        int last = predicted->unseen.t_out[size_t(n)];
        return last < 0 ? -1 : last + 1;
    }
};

// ---- taped environment -------------------------------------------------------

struct TapeEnv {
    using S = ad::Var;
    ad::Tape& tape;
    const feat::FeatureBundle& bundle;
    concepts::ConceptSpace& space;
    const PredictedScene* predicted;

    // per-item memo
    std::map<std::pair<std::string, int>, ad::Var> static_memo;          // (concept, n)
    std::map<std::tuple<std::string, int, int, int>, ad::Var> dyn_memo;  // (concept, n, t*, mv)
    std::map<std::pair<int, int>, ad::Var> inout_memo;                   // (out?, n)
    std::map<std::tuple<int, int, int, int>, ad::Var> col_memo;          // (unseen?, k, i, j)
    int mask_version = 0;

    int N() const { return bundle.N; }
    int T() const { return bundle.T; }
    const std::vector<int>& k_frames(bool unseen) const {
        return unseen ? predicted->unseen.k_frames : bundle.k_frames;
    }
    int K(bool unseen) const { return int(k_frames(unseen).size()); }

    ad::Var c(double v) { return tape.scalar(v); }
    double val(ad::Var v) const { return tape.value(v); }
    ad::Var smin(ad::Var a, ad::Var b) { return tape.vmin(a, b); }
    ad::Var smax(ad::Var a, ad::Var b) { return tape.vmax(a, b); }
    ad::Var combine(ad::Var a, ad::Var b) { return tape.mul(a, b); }
    ad::Var add(ad::Var a, ad::Var b) { return tape.add(a, b); }
    ad::Var one_minus(ad::Var a) { return tape.offset(tape.scale(a, -1.0), 1.0); }
    ad::Var gate(ad::Var p, bool on) { return on ? p : tape.scalar(0.0); }
    ad::Var ratio(ad::Var a, ad::Var b) { return tape.div(a, b); }

    ad::Var static_prob(int n, const std::string& name) {
        auto key = std::make_pair(name, n);
        auto it = static_memo.find(key);
        if (it == static_memo.end()) {
            ad::Var s = concepts::concept_score_t(tape, bundle.fv_row(n), name,
                                                  concepts::Family::StaticAttr, space);
            it = static_memo.emplace(key, tape.sigmoid(s)).first;
        }
        return it->second;
    }

    ad::Var dyn_prob(int n, const std::string& name, const std::vector<uint8_t>* mask,
                     int t_star, bool moment) {
        int mv = mask ? mask_version : 0;
        auto key = std::make_tuple(name, n, moment ? t_star : -1, mv);
        auto it = dyn_memo.find(key);
        if (it != dyn_memo.end()) return it->second;
        std::vector<double> row(bundle.fs_row(n).begin(), bundle.fs_row(n).end());
        if (mask) row = feat::apply_time_mask(row, *mask);
        if (moment) row = feat::frame_specific_feature(row, bundle.T, t_star, space.tau_raw());
        ad::Var s = concepts::concept_score_t(tape, row, name, concepts::Family::Dynamic, space);
        return dyn_memo.emplace(key, tape.sigmoid(s)).first->second;
    }

    ad::Var inout_prob(int n, bool out) {
        auto key = std::make_pair(out ? 1 : 0, n);
        auto it = inout_memo.find(key);
        if (it == inout_memo.end()) {
            ad::Var s = concepts::concept_score_t(tape, bundle.fs_row(n), out ? "out" : "in",
                                                  concepts::Family::Dynamic, space);
            it = inout_memo.emplace(key, tape.sigmoid(s)).first;
        }
        return it->second;
    }
    ad::Var in_prob(int n) { return inout_prob(n, false); }
    ad::Var out_prob(int n) { return inout_prob(n, true); }

    ad::Var col_prob(int i, int j, int k, bool unseen) {
        if (i > j) std::swap(i, j);
        auto key = std::make_tuple(unseen ? 1 : 0, k, i, j);
        auto it = col_memo.find(key);
        if (it == col_memo.end()) {
            const feat::FeatureBundle& src = unseen ? predicted->unseen : bundle;
            ad::Var s = concepts::concept_score_t(tape, src.fc_entry(k, i, j), "collision",
                                                  concepts::Family::Collision, space);
            it = col_memo.emplace(key, tape.sigmoid(s)).first;
        }
        return it->second;
    }

    int t_in(int n) const { return bundle.t_in[size_t(n)]; }
    int t_out_frame(int n) const {
        int last = bundle.t_out[size_t(n)];
        return last < 0 ? -1 : last + 1;
    }
    bool unseen_object_valid(int n) const {
        return !predicted || predicted->object_valid[size_t(n)];
    }
    ad::Var unseen_out_p(int n) {
        if (!predicted) return tape.scalar(0.0);
        const auto& u = predicted->unseen;
        if (!predicted->object_valid[size_t(n)]) return tape.scalar(0.0);
        int last = u.t_out[size_t(n)];
        return tape.scalar(last >= 0 && last < u.T - 1 ? 1.0 : 0.0);
    }
    int unseen_out_frame(int n) const {
        if (!predicted) return -1;
        int last = predicted->unseen.t_out[size_t(n)];
        return last < 0 ? -1 : last + 1;
    }
};

struct InvalidValue {};  // propagated, never escapes execute()

// ---- evaluator ---------------------------------------------------------------

template <class Env>
struct Evaluator {
    Env& env;
    const Program& p;
    std::vector<TraceEntry>* trace;
    std::vector<uint8_t> mask;  // current valid-time mask over raw frames
    bool masked = false;

    using S = typename Env::S;
    using Val = Value<S>;

    explicit Evaluator(Env& e, const Program& program, std::vector<TraceEntry>* tr)
        : env(e), p(program), trace(tr) {
        mask.assign(size_t(env.T()), 1);
    }

    bool frame_ok(int f) const {
        return f >= 0 && f < int(mask.size()) && mask[size_t(f)] != 0;
    }

    void narrow_mask(int t_star, bool after) {
        for (int t = 0; t < int(mask.size()); ++t) {
            bool keep = after ? t > t_star : t < t_star;
            if (!keep) mask[size_t(t)] = 0;
        }
        masked = true;
        if constexpr (requires { env.mask_version; }) env.mask_version++;
    }

    EventsVal<S> all_events(bool unseen) {
        EventsVal<S> ev;
        ev.unseen = unseen;
        int N = env.N();
        int K = env.K(unseen);
        const auto& kf = env.k_frames(unseen);
        ev.in_active = !unseen;
        ev.out_active = true;
        ev.col_active = true;
        ev.in_p.assign(size_t(N), env.c(0.0));
        ev.out_p.assign(size_t(N), env.c(0.0));
        ev.col.assign(size_t(K) * size_t(N) * size_t(N), env.c(0.0));
        for (int n = 0; n < N; ++n) {
            if (!unseen) {
                int ti = env.t_in(n);
                ev.in_p[size_t(n)] = env.gate(env.in_prob(n), ti > 0 && frame_ok(ti));
                int to = env.t_out_frame(n);
                ev.out_p[size_t(n)] =
                    env.gate(env.out_prob(n), to > 0 && to < env.T() && frame_ok(to));
            } else {
                int to = env.unseen_out_frame(n);
                ev.out_p[size_t(n)] = env.gate(env.unseen_out_p(n), to > 0 && frame_ok(to));
            }
        }
        for (int k = 0; k < K; ++k) {
            bool ok = frame_ok(kf[size_t(k)]);
            for (int i = 0; i < N; ++i)
                for (int j = i + 1; j < N; ++j) {
                    bool valid = ok && (!unseen || (env.unseen_object_valid(i) &&
                                                    env.unseen_object_valid(j)));
                    ev.col[(size_t(k) * size_t(N) + size_t(i)) * size_t(N) + size_t(j)] =
                        env.gate(env.col_prob(i, j, k, unseen), valid);
                }
        }
        return ev;
    }

    void remask_events(EventsVal<S>& ev) {
        int N = env.N();
        const auto& kf = env.k_frames(ev.unseen);
        for (int n = 0; n < N; ++n) {
            int ti = env.t_in(n);
            if (ev.in_active && !frame_ok(ti))
                ev.in_p[size_t(n)] = env.gate(ev.in_p[size_t(n)], false);
            int to = ev.unseen ? env.unseen_out_frame(n) : env.t_out_frame(n);
            if (ev.out_active && !frame_ok(to))
                ev.out_p[size_t(n)] = env.gate(ev.out_p[size_t(n)], false);
        }
        for (int k = 0; k < int(kf.size()); ++k) {
            if (frame_ok(kf[size_t(k)])) continue;
            for (int i = 0; i < N; ++i)
                for (int j = i + 1; j < N; ++j)
                    ev.col[(size_t(k) * size_t(N) + size_t(i)) * size_t(N) + size_t(j)] =
                        env.gate(
                            ev.col[(size_t(k) * size_t(N) + size_t(i)) * size_t(N) + size_t(j)],
                            false);
        }
    }

    struct Detected {
        EvKey key;
        double p;
    };

    std::vector<Detected> detected_events(const EventsVal<S>& ev, double threshold = 0.5) {
        std::vector<Detected> out;
        int N = env.N();
        const auto& kf = env.k_frames(ev.unseen);
        if (ev.in_active)
            for (int n = 0; n < N; ++n) {
                double v = env.val(ev.in_p[size_t(n)]);
                if (v > threshold) out.push_back({EvKey{0, n, -1, -1, env.t_in(n)}, v});
            }
        if (ev.out_active)
            for (int n = 0; n < N; ++n) {
                double v = env.val(ev.out_p[size_t(n)]);
                int f = ev.unseen ? env.unseen_out_frame(n) : env.t_out_frame(n);
                if (v > threshold) out.push_back({EvKey{1, n, -1, -1, f}, v});
            }
        if (ev.col_active)
            for (int k = 0; k < int(kf.size()); ++k)
                for (int i = 0; i < N; ++i)
                    for (int j = i + 1; j < N; ++j) {
                        double v = env.val(
                            ev.col[(size_t(k) * size_t(N) + size_t(i)) * size_t(N) + size_t(j)]);
                        if (v > threshold)
                            out.push_back({EvKey{2, i, j, k, kf[size_t(k)]}, v});
                    }
        std::sort(out.begin(), out.end(), [](const Detected& a, const Detected& b) {
            if (a.key.frame != b.key.frame) return a.key.frame < b.key.frame;
            if (a.key.kind != b.key.kind) return a.key.kind < b.key.kind;
            if (a.key.a != b.key.a) return a.key.a < b.key.a;
            if (a.key.b != b.key.b) return a.key.b < b.key.b;
            return a.key.k < b.key.k;
        });
        return out;
    }

    S event_lookup(const EventsVal<S>& ev, const EvKey& key) {
        int N = env.N();
        if (key.kind == 0 && ev.in_active) return ev.in_p[size_t(key.a)];
        if (key.kind == 1 && ev.out_active) return ev.out_p[size_t(key.a)];
        if (key.kind == 2 && ev.col_active && key.k >= 0 && key.k < env.K(ev.unseen)) {
            int i = key.a, j = key.b;
            if (i > j) std::swap(i, j);
            return ev.col[(size_t(key.k) * size_t(N) + size_t(i)) * size_t(N) + size_t(j)];
        }
        return env.c(0.0);
    }

    Val invalid(Type t) {
        Val v;
        v.type = t;
        v.valid = false;
        return v;
    }

    Val eval(int idx) {
        Val out = eval_node(idx);
        if (trace) {
            TraceEntry e;
            e.node = idx;
            e.op = p.at(idx).op == OpCode::Literal ? ("'" + p.at(idx).literal + "'")
                                                   : prog::op_name(p.at(idx).op);
            e.type = p.at(idx).type ? prog::type_name(*p.at(idx).type) : "?";
            e.value_summary = summarize(out);
            trace->push_back(e);
        }
        return out;
    }

    std::string summarize(const Val& v) {
        if (!v.valid) return "invalid";
        char buf[96];
        switch (v.type) {
            case Type::Objects: {
                double mx = 0;
                for (const auto& s : v.objects.p) mx = std::max(mx, env.val(s));
                std::snprintf(buf, sizeof(buf), "objects[%d] max=%.3f", int(v.objects.p.size()),
                              mx);
                return buf;
            }
            case Type::Object:
                std::snprintf(buf, sizeof(buf), "object %d p=%.3f", v.object.n,
                              env.val(v.object.p));
                return buf;
            case Type::Events: {
                auto det = detected_events(v.events);
                std::snprintf(buf, sizeof(buf), "events detected=%d", int(det.size()));
                return buf;
            }
            case Type::Event:
                std::snprintf(buf, sizeof(buf), "event kind=%d frame=%d p=%.3f", v.event.key.kind,
                              v.event.key.frame, env.val(v.event.p));
                return buf;
            case Type::Frame:
                std::snprintf(buf, sizeof(buf), "frame %d", v.frame);
                return buf;
            case Type::Bool:
                std::snprintf(buf, sizeof(buf), "p=%.4f", env.val(v.boolean));
                return buf;
            case Type::Int:
                std::snprintf(buf, sizeof(buf), "count=%.4f", env.val(v.boolean));
                return buf;
            case Type::StaticConcept: {
                if (v.dist.empty()) return v.literal;
                double mx = -1;
                std::string best;
                for (const auto& [name, s] : v.dist) {
                    double pv = env.val(s);
                    if (pv > mx) {
                        mx = pv;
                        best = name;
                    }
                }
                std::snprintf(buf, sizeof(buf), "dist argmax=%s p=%.3f", best.c_str(), mx);
                return buf;
            }
            default:
                return v.literal.empty() ? "-" : v.literal;
        }
    }

    Val eval_node(int idx) {
        const prog::Node& n = p.at(idx);
        switch (n.op) {
            case OpCode::Literal: {
                Val v;
                v.type = n.type.value_or(Type::StaticConcept);
                v.literal = n.literal;
                return v;
            }
            case OpCode::Objects: {
                Val v;
                v.type = Type::Objects;
                v.objects.p.assign(size_t(env.N()), env.c(1.0));
                return v;
            }
            case OpCode::Events: {
                Val v;
                v.type = Type::Events;
                v.events = all_events(false);
                return v;
            }
            case OpCode::UnseenEvents: {
                if (!has_predicted())
                    throw ConfigError("UnseenEvents: no predicted scene supplied");
                Val v;
                v.type = Type::Events;
                v.events = all_events(true);
                return v;
            }
            case OpCode::Start:
            case OpCode::End: {
                Val v;
                v.type = Type::Event;
                v.event.key = EvKey{3, -1, -1, -1, n.op == OpCode::Start ? 0 : env.T() - 1};
                v.event.p = env.c(1.0);
                return v;
            }
            case OpCode::FilterStaticConcept: {
                Val objs = eval(n.args[0]);
                Val cn = eval(n.args[1]);
                if (!objs.valid) return invalid(Type::Objects);
                Val v;
                v.type = Type::Objects;
                v.objects.p.resize(objs.objects.p.size());
                for (int i = 0; i < env.N(); ++i)
                    v.objects.p[size_t(i)] =
                        env.combine(objs.objects.p[size_t(i)], env.static_prob(i, cn.literal));
                return v;
            }
            case OpCode::FilterDynamicConcept: {
                Val objs = eval(n.args[0]);
                Val cn = eval(n.args[1]);
                Val fr = eval(n.args[2]);
                if (!objs.valid || !fr.valid) return invalid(Type::Objects);
                int t_star = fr.type == Type::Event ? fr.event.key.frame : fr.frame;
                const prog::ConceptInfo* ci = prog::Vocab::instance().find(cn.literal);
                bool moment = ci && ci->moment_specific;
                if (moment && (t_star < 0 || t_star >= env.T()))
                    return invalid(Type::Objects);
                Val v;
                v.type = Type::Objects;
                v.objects.p.resize(objs.objects.p.size());
                const std::vector<uint8_t>* m = masked ? &mask : nullptr;
                for (int i = 0; i < env.N(); ++i)
                    v.objects.p[size_t(i)] = env.combine(objs.objects.p[size_t(i)],
                                                         env.dyn_prob(i, cn.literal, m, t_star,
                                                                      moment));
                return v;
            }
            case OpCode::FilterIn:
            case OpCode::FilterOut: {
                Val evs = eval(n.args[0]);
                Val objs = eval(n.args[1]);
                if (!evs.valid || !objs.valid) return invalid(Type::Events);
                bool out = n.op == OpCode::FilterOut;
                Val v;
                v.type = Type::Events;
                v.events.unseen = evs.events.unseen;
                v.events.in_active = !out && evs.events.in_active;
                v.events.out_active = out && evs.events.out_active;
                v.events.col_active = false;
                v.events.in_p.assign(size_t(env.N()), env.c(0.0));
                v.events.out_p.assign(size_t(env.N()), env.c(0.0));
                v.events.col.assign(evs.events.col.size(), env.c(0.0));
                for (int i = 0; i < env.N(); ++i) {
                    if (v.events.in_active)
                        v.events.in_p[size_t(i)] =
                            env.combine(evs.events.in_p[size_t(i)], objs.objects.p[size_t(i)]);
                    if (v.events.out_active)
                        v.events.out_p[size_t(i)] =
                            env.combine(evs.events.out_p[size_t(i)], objs.objects.p[size_t(i)]);
                }
                return v;
            }
            case OpCode::FilterCollision: {
                Val evs = eval(n.args[0]);
                Val objs = eval(n.args[1]);
                if (!evs.valid || !objs.valid) return invalid(Type::Events);
                Val v;
                v.type = Type::Events;
                v.events.unseen = evs.events.unseen;
                v.events.col_active = evs.events.col_active;
                v.events.in_active = false;
                v.events.out_active = false;
                v.events.in_p.assign(size_t(env.N()), env.c(0.0));
                v.events.out_p.assign(size_t(env.N()), env.c(0.0));
                v.events.col.assign(evs.events.col.size(), env.c(0.0));
                int N = env.N();
                for (int k = 0; k < env.K(v.events.unseen); ++k)
                    for (int i = 0; i < N; ++i)
                        for (int j = i + 1; j < N; ++j) {
                            size_t off =
                                (size_t(k) * size_t(N) + size_t(i)) * size_t(N) + size_t(j);
                            // objs^exp: a collision involves the object set if
                            // either participant does
                            S expanded =
                                env.smax(objs.objects.p[size_t(i)], objs.objects.p[size_t(j)]);
                            v.events.col[off] = env.combine(evs.events.col[off], expanded);
                        }
                return v;
            }
            case OpCode::GetColPartner: {
                Val ev = eval(n.args[0]);
                Val obj = eval(n.args[1]);
                if (!ev.valid || !obj.valid) return invalid(Type::Object);
                if (ev.event.key.kind != 2) return invalid(Type::Object);
                int a = ev.event.key.a, b = ev.event.key.b;
                int x = obj.object.n;
                if (x != a && x != b) return invalid(Type::Object);
                Val v;
                v.type = Type::Object;
                v.object.n = x == a ? b : a;
                v.object.p = env.combine(ev.event.p, obj.object.p);
                return v;
            }
            case OpCode::FilterBefore:
            case OpCode::FilterAfter: {
                Val evs = eval(n.args[0]);
                // the anchor names an event in the full timeline: resolve it
                // against a pristine mask so repeated filters stay idempotent
                std::vector<uint8_t> saved = mask;
                bool saved_dirty = masked;
                mask.assign(mask.size(), 1);
                masked = false;
                if constexpr (requires { env.mask_version; }) env.mask_version++;
                Val anchor = eval(n.args[1]);
                mask = std::move(saved);
                masked = saved_dirty;
                if constexpr (requires { env.mask_version; }) env.mask_version++;
                if (!evs.valid || !anchor.valid) return invalid(Type::Events);
                narrow_mask(anchor.event.key.frame, n.op == OpCode::FilterAfter);
                Val v;
                v.type = Type::Events;
                v.events = evs.events;
                remask_events(v.events);
                return v;
            }
            case OpCode::FilterOrder: {
                Val evs = eval(n.args[0]);
                Val ord = eval(n.args[1]);
                if (!evs.valid) return invalid(Type::Event);
                auto det = detected_events(evs.events);
                if (det.empty()) return invalid(Type::Event);
                size_t pick = 0;
                if (ord.literal == "first")
                    pick = 0;
                else if (ord.literal == "second")
                    pick = 1;
                else
                    pick = det.size() - 1;  // last
                if (pick >= det.size()) return invalid(Type::Event);
                Val v;
                v.type = Type::Event;
                v.event.key = det[pick].key;
                v.event.p = event_lookup(evs.events, det[pick].key);
                return v;
            }
            case OpCode::FilterAncestor: {
                Val target = eval(n.args[0]);
                Val evs = eval(n.args[1]);
                if (!target.valid || !evs.valid) return invalid(Type::Events);
                if (target.event.key.kind != 2) return invalid(Type::Events);
                auto det = detected_events(evs.events);
                // chain closure: causes are collisions sharing a participant,
                // strictly earlier in time
                std::vector<EvKey> frontier = {target.event.key};
                std::vector<bool> is_anc(det.size(), false);
                bool grew = true;
                while (grew) {
                    grew = false;
                    for (size_t i = 0; i < det.size(); ++i) {
                        if (is_anc[i] || det[i].key.kind != 2) continue;
                        for (const EvKey& f : frontier) {
                            if (det[i].key.frame >= f.frame) continue;
                            bool shares = det[i].key.a == f.a || det[i].key.a == f.b ||
                                          det[i].key.b == f.a || det[i].key.b == f.b;
                            if (shares) {
                                is_anc[i] = true;
                                frontier.push_back(det[i].key);
                                grew = true;
                                break;
                            }
                        }
                    }
                }
                Val v;
                v.type = Type::Events;
                v.events.unseen = evs.events.unseen;
                v.events.col_active = true;
                v.events.in_p.assign(size_t(env.N()), env.c(0.0));
                v.events.out_p.assign(size_t(env.N()), env.c(0.0));
                v.events.col.assign(evs.events.col.size(), env.c(0.0));
                int N = env.N();
                for (size_t i = 0; i < det.size(); ++i) {
                    if (!is_anc[i]) continue;
                    const EvKey& key = det[i].key;
                    int a = key.a, b = key.b;
                    if (a > b) std::swap(a, b);
                    size_t off = (size_t(key.k) * size_t(N) + size_t(a)) * size_t(N) + size_t(b);
                    v.events.col[off] = event_lookup(evs.events, key);
                }
                return v;
            }
            case OpCode::GetFrame: {
                Val ev = eval(n.args[0]);
                if (!ev.valid) return invalid(Type::Frame);
                Val v;
                v.type = Type::Frame;
                v.frame = ev.event.key.frame;
                return v;
            }
            case OpCode::QueryAttribute: {
                Val obj = eval(n.args[0]);
                Val attr = eval(n.args[1]);
                if (!obj.valid) return invalid(Type::StaticConcept);
                int a = attr.literal == "color" ? 0 : attr.literal == "material" ? 1 : 2;
                auto names = prog::Vocab::instance().attribute_concepts(a);
                Val v;
                v.type = Type::StaticConcept;
                S total = env.c(0.0);
                std::vector<S> probs;
                for (const auto& name : names) {
                    S pr = env.static_prob(obj.object.n, name);
                    probs.push_back(pr);
                    total = env.add(total, pr);
                }
                if (env.val(total) <= 0.0) return invalid(Type::StaticConcept);
                for (size_t i = 0; i < names.size(); ++i)
                    v.dist.emplace_back(names[i], env.ratio(probs[i], total));
                return v;
            }
            case OpCode::Count: {
                Val arg = eval(n.args[0]);
                if (!arg.valid) return invalid(Type::Int);
                Val v;
                v.type = Type::Int;
                S total = env.c(0.0);
                if (arg.type == Type::Objects) {
                    for (const auto& s : arg.objects.p) total = env.add(total, s);
                } else {
                    int N = env.N();
                    if (arg.events.in_active)
                        for (const auto& s : arg.events.in_p) total = env.add(total, s);
                    if (arg.events.out_active)
                        for (const auto& s : arg.events.out_p) total = env.add(total, s);
                    if (arg.events.col_active)
                        for (int k = 0; k < env.K(arg.events.unseen); ++k)
                            for (int i = 0; i < N; ++i)
                                for (int j = i + 1; j < N; ++j)
                                    total = env.add(
                                        total, arg.events.col[(size_t(k) * size_t(N) + size_t(i)) *
                                                                  size_t(N) +
                                                              size_t(j)]);
                }
                v.boolean = total;
                return v;
            }
            case OpCode::Exist: {
                Val arg = eval(n.args[0]);
                if (!arg.valid) return invalid(Type::Bool);
                Val v;
                v.type = Type::Bool;
                S best = env.c(0.0);
                if (arg.type == Type::Objects) {
                    for (const auto& s : arg.objects.p) best = env.smax(best, s);
                } else {
                    int N = env.N();
                    if (arg.events.in_active)
                        for (const auto& s : arg.events.in_p) best = env.smax(best, s);
                    if (arg.events.out_active)
                        for (const auto& s : arg.events.out_p) best = env.smax(best, s);
                    if (arg.events.col_active)
                        for (int k = 0; k < env.K(arg.events.unseen); ++k)
                            for (int i = 0; i < N; ++i)
                                for (int j = i + 1; j < N; ++j)
                                    best = env.smax(
                                        best, arg.events.col[(size_t(k) * size_t(N) + size_t(i)) *
                                                                 size_t(N) +
                                                             size_t(j)]);
                }
                v.boolean = best;
                return v;
            }
            case OpCode::BelongTo: {
                Val ev = eval(n.args[0]);
                Val evs = eval(n.args[1]);
                if (!ev.valid || !evs.valid) return invalid(Type::Bool);
                Val v;
                v.type = Type::Bool;
                v.boolean = env.combine(ev.event.p, event_lookup(evs.events, ev.event.key));
                return v;
            }
            case OpCode::Negate: {
                Val b = eval(n.args[0]);
                if (!b.valid) return invalid(Type::Bool);
                Val v;
                v.type = Type::Bool;
                v.boolean = env.one_minus(b.boolean);
                return v;
            }
            case OpCode::Unique: {
                Val arg = eval(n.args[0]);
                if (!arg.valid) return invalid(arg.type == Type::Objects ? Type::Object
                                                                         : Type::Event);
                if (arg.type == Type::Objects) {
                    int best = -1;
                    double bv = 0.0;
                    for (int i = 0; i < int(arg.objects.p.size()); ++i) {
                        double pv = env.val(arg.objects.p[size_t(i)]);
                        if (pv > bv) {
                            bv = pv;
                            best = i;
                        }
                    }
                    if (best < 0) return invalid(Type::Object);
                    Val v;
                    v.type = Type::Object;
                    v.object.n = best;
                    v.object.p = arg.objects.p[size_t(best)];
                    return v;
                }
                auto det = detected_events(arg.events, 0.0);
                if (det.empty()) return invalid(Type::Event);
                size_t best = 0;
                for (size_t i = 1; i < det.size(); ++i)
                    if (det[i].p > det[best].p) best = i;
                Val v;
                v.type = Type::Event;
                v.event.key = det[best].key;
                v.event.p = event_lookup(arg.events, det[best].key);
                return v;
            }
        }
        throw DataError("eval: unhandled operator");
    }

    bool has_predicted() {
        if constexpr (requires { env.predicted; }) return env.predicted != nullptr;
        return false;
    }
};

template <class Env>
AnswerOut build_answer(Env& env, Value<typename Env::S>& v) {
    AnswerOut out;
    if (!v.valid) return out;
    switch (v.type) {
        case Type::StaticConcept: {
            out.kind = AnswerOut::Kind::ConceptDist;
            double best = -1.0;
            for (const auto& [name, s] : v.dist) {
                double pv = env.val(s);
                out.dist.emplace_back(name, pv);
                if (pv > best) {
                    best = pv;
                    out.presented = name;
                }
            }
            if constexpr (std::is_same_v<typename Env::S, ad::Var>)
                for (const auto& [name, s] : v.dist) out.dist_vars.emplace_back(name, s);
            break;
        }
        case Type::Int: {
            out.kind = AnswerOut::Kind::Integer;
            out.count_value = env.val(v.boolean);
            long r = std::lround(out.count_value);
            out.integer = int(std::clamp(r, 0L, 8L));
            out.presented = std::to_string(out.integer);
            if constexpr (std::is_same_v<typename Env::S, ad::Var>) out.count_var = v.boolean;
            break;
        }
        case Type::Bool: {
            out.kind = AnswerOut::Kind::BooleanProb;
            out.prob = env.val(v.boolean);
            out.presented = out.prob > 0.5 ? "yes" : "no";
            if constexpr (std::is_same_v<typename Env::S, ad::Var>) out.prob_var = v.boolean;
            break;
        }
        default:
            break;  // invalid for answer-shaped programs
    }
    return out;
}

}  // namespace

AnswerOut execute(const Program& program, const feat::FeatureBundle& bundle,
                  const concepts::ConceptSpace& space, const ExecOptions& opts) {
    ScoreCache local;
    PlainEnv env{bundle, space, opts.predicted, opts.cache ? opts.cache : &local};
    Evaluator<PlainEnv> ev(env, program, opts.trace);
    Value<double> v = ev.eval(program.root);
    return build_answer(env, v);
}

AnswerOut execute_t(ad::Tape& tape, const Program& program, const feat::FeatureBundle& bundle,
                    concepts::ConceptSpace& space, const PredictedScene* predicted) {
    TapeEnv env{tape, bundle, space, predicted};
    Evaluator<TapeEnv> ev(env, program, nullptr);
    Value<ad::Var> v = ev.eval(program.root);
    return build_answer(env, v);
}

std::vector<AnswerOut> execute_many_t(ad::Tape& tape, const std::vector<Program>& programs,
                                      const feat::FeatureBundle& bundle,
                                      concepts::ConceptSpace& space,
                                      const PredictedScene* predicted) {
    TapeEnv env{tape, bundle, space, predicted};
    std::vector<AnswerOut> out;
    for (const Program& p : programs) {
        Evaluator<TapeEnv> ev(env, p, nullptr);
        Value<ad::Var> v = ev.eval(p.root);
        out.push_back(build_answer(env, v));
    }
    return out;
}

GroundOut ground(const Program& program, const feat::FeatureBundle& bundle,
                 const concepts::ConceptSpace& space, const ExecOptions& opts) {
    ScoreCache local;
    PlainEnv env{bundle, space, opts.predicted, opts.cache ? opts.cache : &local};
    Evaluator<PlainEnv> ev(env, program, opts.trace);
    Value<double> v = ev.eval(program.root);
    GroundOut out;
    if (!v.valid) return out;
    if (v.type == Type::Object) {
        out.valid = true;
        out.object = v.object.n;
        out.confidence = v.object.p;
        return out;
    }
    if (v.type == Type::Event) {
        out.valid = true;
        out.is_event = true;
        out.object = v.event.key.a;
        out.partner = v.event.key.b;
        out.event_kind = v.event.key.kind == 0   ? EventKind::In
                         : v.event.key.kind == 1 ? EventKind::Out
                                                 : EventKind::Collision;
        out.frame = v.event.key.frame;
        out.confidence = v.event.p;
        return out;
    }
    return out;
}

nlohmann::ordered_json trace_to_json(const std::vector<TraceEntry>& trace) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : trace) {
        nlohmann::ordered_json je;
        je["node"] = e.node;
        je["op"] = e.op;
        je["type"] = e.type;
        je["value_summary"] = e.value_summary;
        arr.push_back(std::move(je));
    }
    return arr;
}

}  // namespace dcl::exec
