#include <algorithm>
#include <set>

#include "dcl/executor.hpp"
#include "dcl/tracker.hpp"
#include "dcl/worldsim.hpp"

namespace dcl::exec {

using prog::OpCode;
using prog::Program;
using prog::Type;

namespace {

// Crisp values for the set-based reference executor.
struct OVal {
    Type type = Type::Bool;
    bool valid = true;
    std::set<int> objects;          // obj ids
    int object = -1;
    std::vector<int> events;        // event ids, or -2/-3 markers for Start/End
    int event = -1;
    int event_frame = -1;           // frame of the single event (incl. Start/End)
    int frame = -1;
    bool boolean = false;
    int count = 0;
    std::string literal;
};

struct OracleEval {
    const Program& p;
    const SceneRecord& scene;
    const OracleContext& ctx;
    std::vector<uint8_t> mask;

    OracleEval(const Program& program, const SceneRecord& s, const OracleContext& c)
        : p(program), scene(s), ctx(c) {
        mask.assign(size_t(scene.T), 1);
    }

    bool frame_ok(int f) const { return f >= 0 && f < int(mask.size()) && mask[size_t(f)]; }

    const ObjectGT& obj(int id) const {
        for (const auto& o : scene.objects)
            if (o.obj_id == id) return o;
        throw DataError("oracle: unknown object id");
    }

    OVal invalid(Type t) {
        OVal v;
        v.type = t;
        v.valid = false;
        return v;
    }

    bool event_is_unseen(const EventGT& e) const {
        return ctx.unseen == UnseenMode::All ||
               (ctx.unseen == UnseenMode::AfterFrame && e.frame >= ctx.cut_frame);
    }

    std::vector<int> base_events(bool unseen) {
        std::vector<int> out;
        for (const auto& e : scene.events) {
            bool u = event_is_unseen(e);
            if (u != unseen) continue;
            if (!frame_ok(e.frame)) continue;
            out.push_back(e.event_id);
        }
        return out;
    }

    void sort_events(std::vector<int>& ids) {
        std::sort(ids.begin(), ids.end(), [&](int a, int b) {
            const EventGT* ea = scene.find_event(a);
            const EventGT* eb = scene.find_event(b);
            if (ea->frame != eb->frame) return ea->frame < eb->frame;
            if (ea->kind != eb->kind) return int(ea->kind) < int(eb->kind);
            return ea->participants < eb->participants;
        });
    }

    bool moving_at(const ObjectGT& o, int t) const { return world::gt_moving_at(o, t); }

    bool dynamic_holds(const ObjectGT& o, const std::string& concept_name, int t_star,
                       bool moment) const {
        if (concept_name == "falling") return o.falling;
        bool mv = moment ? moving_at(o, t_star) : world::gt_moving_video(o);
        bool present =
            !moment || (t_star < int(o.present.size()) && o.present[size_t(t_star)]);
        if (concept_name == "moving") return present && mv;
        if (concept_name == "stationary") return present && !mv;
        throw DataError("oracle: unknown dynamic concept " + concept_name);
    }

    OVal eval(int idx) {
        const prog::Node& n = p.at(idx);
        switch (n.op) {
            case OpCode::Literal: {
                OVal v;
                v.type = n.type.value_or(Type::StaticConcept);
                v.literal = n.literal;
                return v;
            }
            case OpCode::Objects: {
                OVal v;
                v.type = Type::Objects;
                for (const auto& o : scene.objects)
                    if (o.first_present() >= 0) v.objects.insert(o.obj_id);
                return v;
            }
            case OpCode::Events: {
                OVal v;
                v.type = Type::Events;
                v.events = base_events(false);
                return v;
            }
            case OpCode::UnseenEvents: {
                if (ctx.unseen == UnseenMode::None)
                    throw ConfigError("oracle UnseenEvents: no predicted context");
                OVal v;
                v.type = Type::Events;
                v.events = base_events(true);
                return v;
            }
            case OpCode::Start:
            case OpCode::End: {
                OVal v;
                v.type = Type::Event;
                v.event = n.op == OpCode::Start ? -2 : -3;
                v.event_frame = n.op == OpCode::Start ? 0 : scene.T - 1;
                return v;
            }
            case OpCode::FilterStaticConcept: {
                OVal objs = eval(n.args[0]);
                OVal cn = eval(n.args[1]);
                if (!objs.valid) return invalid(Type::Objects);
                const prog::ConceptInfo* ci = prog::Vocab::instance().find(cn.literal);
                OVal v;
                v.type = Type::Objects;
                for (int id : objs.objects) {
                    const ObjectGT& o = obj(id);
                    bool keep = (ci->attribute == 0 && o.color == ci->index_in_attribute) ||
                                (ci->attribute == 1 && o.material == ci->index_in_attribute) ||
                                (ci->attribute == 2 && o.shape == ci->index_in_attribute);
                    if (keep) v.objects.insert(id);
                }
                return v;
            }
            case OpCode::FilterDynamicConcept: {
                OVal objs = eval(n.args[0]);
                OVal cn = eval(n.args[1]);
                OVal fr = eval(n.args[2]);
                if (!objs.valid || !fr.valid) return invalid(Type::Objects);
                int t_star = fr.type == Type::Event ? fr.event_frame : fr.frame;
                const prog::ConceptInfo* ci = prog::Vocab::instance().find(cn.literal);
                bool moment = ci && ci->moment_specific;
                if (moment && (t_star < 0 || t_star >= scene.T)) return invalid(Type::Objects);
                OVal v;
                v.type = Type::Objects;
                for (int id : objs.objects)
                    if (dynamic_holds(obj(id), cn.literal, t_star, moment)) v.objects.insert(id);
                return v;
            }
            case OpCode::FilterIn:
            case OpCode::FilterOut: {
                OVal evs = eval(n.args[0]);
                OVal objs = eval(n.args[1]);
                if (!evs.valid || !objs.valid) return invalid(Type::Events);
                EventKind want = n.op == OpCode::FilterIn ? EventKind::In : EventKind::Out;
                OVal v;
                v.type = Type::Events;
                for (int id : evs.events) {
                    const EventGT* e = scene.find_event(id);
                    if (!e || e->kind != want) continue;
                    if (objs.objects.count(e->participants[0])) v.events.push_back(id);
                }
                return v;
            }
            case OpCode::FilterCollision: {
                OVal evs = eval(n.args[0]);
                OVal objs = eval(n.args[1]);
                if (!evs.valid || !objs.valid) return invalid(Type::Events);
                OVal v;
                v.type = Type::Events;
                for (int id : evs.events) {
                    const EventGT* e = scene.find_event(id);
                    if (!e || e->kind != EventKind::Collision) continue;
                    bool involves = objs.objects.count(e->participants[0]) ||
                                    objs.objects.count(e->participants[1]);
                    if (involves) v.events.push_back(id);
                }
                return v;
            }
            case OpCode::GetColPartner: {
                OVal ev = eval(n.args[0]);
                OVal ob = eval(n.args[1]);
                if (!ev.valid || !ob.valid) return invalid(Type::Object);
                const EventGT* e = scene.find_event(ev.event);
                if (!e || e->kind != EventKind::Collision) return invalid(Type::Object);
                if (e->participants[0] == ob.object) {
                    OVal v;
                    v.type = Type::Object;
                    v.object = e->participants[1];
                    return v;
                }
                if (e->participants[1] == ob.object) {
                    OVal v;
                    v.type = Type::Object;
                    v.object = e->participants[0];
                    return v;
                }
                return invalid(Type::Object);
            }
            case OpCode::FilterBefore:
            case OpCode::FilterAfter: {
                OVal evs = eval(n.args[0]);
                // anchor resolves against the pristine timeline
                std::vector<uint8_t> saved = mask;
                mask.assign(mask.size(), 1);
                OVal anchor = eval(n.args[1]);
                mask = std::move(saved);
                if (!evs.valid || !anchor.valid) return invalid(Type::Events);
                int t_star = anchor.event_frame;
                bool after = n.op == OpCode::FilterAfter;
                for (int t = 0; t < int(mask.size()); ++t) {
                    bool keep = after ? t > t_star : t < t_star;
                    if (!keep) mask[size_t(t)] = 0;
                }
                OVal v;
                v.type = Type::Events;
                for (int id : evs.events)
                    if (frame_ok(scene.find_event(id)->frame)) v.events.push_back(id);
                return v;
            }
            case OpCode::FilterOrder: {
                OVal evs = eval(n.args[0]);
                OVal ord = eval(n.args[1]);
                if (!evs.valid) return invalid(Type::Event);
                std::vector<int> ids = evs.events;
                if (ids.empty()) return invalid(Type::Event);
                sort_events(ids);
                size_t pick = ord.literal == "first"    ? 0
                              : ord.literal == "second" ? 1
                                                        : ids.size() - 1;
                if (pick >= ids.size()) return invalid(Type::Event);
                OVal v;
                v.type = Type::Event;
                v.event = ids[pick];
                v.event_frame = scene.find_event(ids[pick])->frame;
                return v;
            }
            case OpCode::FilterAncestor: {
                OVal target = eval(n.args[0]);
                OVal evs = eval(n.args[1]);
                if (!target.valid || !evs.valid) return invalid(Type::Events);
                if (target.event < 0) return invalid(Type::Events);
                std::vector<int> anc = scene.ancestor_ids(target.event);
                OVal v;
                v.type = Type::Events;
                for (int id : evs.events)
                    if (std::find(anc.begin(), anc.end(), id) != anc.end())
                        v.events.push_back(id);
                return v;
            }
            case OpCode::GetFrame: {
                OVal ev = eval(n.args[0]);
                if (!ev.valid) return invalid(Type::Frame);
                OVal v;
                v.type = Type::Frame;
                v.frame = ev.event_frame;
                return v;
            }
            case OpCode::QueryAttribute: {
                OVal ob = eval(n.args[0]);
                OVal attr = eval(n.args[1]);
                if (!ob.valid) return invalid(Type::StaticConcept);
                const ObjectGT& o = obj(ob.object);
                OVal v;
                v.type = Type::StaticConcept;
                if (attr.literal == "color")
                    v.literal = color_names()[size_t(o.color)];
                else if (attr.literal == "material")
                    v.literal = material_names()[size_t(o.material)];
                else
                    v.literal = shape_names()[size_t(o.shape)];
                return v;
            }
            case OpCode::Count: {
                OVal arg = eval(n.args[0]);
                if (!arg.valid) return invalid(Type::Int);
                OVal v;
                v.type = Type::Int;
                v.count = arg.type == Type::Objects ? int(arg.objects.size())
                                                    : int(arg.events.size());
                return v;
            }
            case OpCode::Exist: {
                OVal arg = eval(n.args[0]);
                if (!arg.valid) return invalid(Type::Bool);
                OVal v;
                v.type = Type::Bool;
                v.boolean = arg.type == Type::Objects ? !arg.objects.empty()
                                                      : !arg.events.empty();
                return v;
            }
            case OpCode::BelongTo: {
                OVal ev = eval(n.args[0]);
                OVal evs = eval(n.args[1]);
                if (!ev.valid || !evs.valid) return invalid(Type::Bool);
                OVal v;
                v.type = Type::Bool;
                v.boolean =
                    std::find(evs.events.begin(), evs.events.end(), ev.event) != evs.events.end();
                return v;
            }
            case OpCode::Negate: {
                OVal b = eval(n.args[0]);
                if (!b.valid) return invalid(Type::Bool);
                OVal v;
                v.type = Type::Bool;
                v.boolean = !b.boolean;
                return v;
            }
            case OpCode::Unique: {
                OVal arg = eval(n.args[0]);
                if (!arg.valid)
                    return invalid(arg.type == Type::Objects ? Type::Object : Type::Event);
                if (arg.type == Type::Objects) {
                    if (arg.objects.size() != 1) return invalid(Type::Object);
                    OVal v;
                    v.type = Type::Object;
                    v.object = *arg.objects.begin();
                    return v;
                }
                if (arg.events.size() != 1) return invalid(Type::Event);
                OVal v;
                v.type = Type::Event;
                v.event = arg.events[0];
                v.event_frame = scene.find_event(arg.events[0])->frame;
                return v;
            }
        }
        throw DataError("oracle eval: unhandled operator");
    }
};

}  // namespace

std::string oracle_execute(const Program& program, const SceneRecord& scene,
                           const OracleContext& ctx) {
    OracleEval ev(program, scene, ctx);
    OVal v = ev.eval(program.root);
    if (!v.valid) return "invalid";
    switch (v.type) {
        case Type::StaticConcept: return v.literal;
        case Type::Int: return std::to_string(std::clamp(v.count, 0, 8));
        case Type::Bool: return v.boolean ? "yes" : "no";
        default: return "invalid";
    }
}

OracleGround oracle_ground(const Program& program, const SceneRecord& scene,
                           const OracleContext& ctx) {
    OracleEval ev(program, scene, ctx);
    OVal v = ev.eval(program.root);
    OracleGround g;
    if (!v.valid) return g;
    if (v.type == Type::Object) {
        g.valid = true;
        g.object = v.object;
        return g;
    }
    if (v.type == Type::Event && v.event >= 0) {
        g.valid = true;
        g.is_event = true;
        g.event_id = v.event;
        return g;
    }
    return g;
}

PredictedScene predicted_from_scene(const SceneRecord& scene, const feat::BackboneConfig& cfg,
                                    int first_sampled_frame, bool counterfactual,
                                    int removed_obj) {
    PredictedScene ps;
    ps.counterfactual = counterfactual;
    ps.removed_obj = removed_obj;
    auto trajs = track::gt_trajectories(scene);
    feat::SceneBackbone backbone(scene);
    ps.unseen = feat::build_bundle(trajs, backbone, cfg, scene.T, first_sampled_frame);
    for (const auto& o : scene.objects) ps.object_valid.push_back(o.first_present() >= 0);
    return ps;
}

}  // namespace dcl::exec
