#include "dcl/scene.hpp"

#include <cstdlib>

#include "dcl/common.hpp"

namespace dcl {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v = {"gray", "red",    "blue", "green",
                                               "brown", "purple", "cyan", "yellow"};
    return v;
}

const std::vector<std::string>& material_names() {
    static const std::vector<std::string> v = {"metal", "rubber"};
    return v;
}

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v = {"cube", "sphere", "cylinder"};
    return v;
}

std::array<double, 3> color_rgb(int color) {
    static const std::array<std::array<double, 3>, 8> rgb = {{
        {0.53, 0.53, 0.53},  // gray
        {0.68, 0.12, 0.13},  // red
        {0.16, 0.29, 0.84},  // blue
        {0.11, 0.66, 0.29},  // green
        {0.51, 0.33, 0.19},  // brown
        {0.51, 0.15, 0.75},  // purple
        {0.16, 0.76, 0.83},  // cyan
        {1.00, 0.93, 0.20},  // yellow
    }};
    return rgb[size_t(color) % 8];
}

std::vector<double> ObjectGT::appearance() const {
    std::vector<double> a(kAppearanceDim, 0.0);
    a[size_t(color)] = 1.0;
    a[size_t(kNumColors + material)] = 1.0;
    a[size_t(kNumColors + kNumMaterials + shape)] = 1.0;
    return a;
}

int ObjectGT::first_present() const {
    for (size_t t = 0; t < present.size(); ++t)
        if (present[t]) return int(t);
    return -1;
}

int ObjectGT::last_present() const {
    for (size_t t = present.size(); t > 0; --t)
        if (present[t - 1]) return int(t - 1);
    return -1;
}

std::string event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::In: return "in";
        case EventKind::Out: return "out";
        case EventKind::Collision: return "collision";
    }
    return "?";
}

static EventKind event_kind_from(const std::string& s) {
    if (s == "in") return EventKind::In;
    if (s == "out") return EventKind::Out;
    if (s == "collision") return EventKind::Collision;
    throw DataError("unknown event kind: " + s);
}

std::string world_kind_name(WorldKind k) {
    switch (k) {
        case WorldKind::Bounce: return "bounce";
        case WorldKind::Tower: return "tower";
        case WorldKind::Predicted: return "predicted";
    }
    return "?";
}

static WorldKind world_kind_from(const std::string& s) {
    if (s == "bounce") return WorldKind::Bounce;
    if (s == "tower") return WorldKind::Tower;
    if (s == "predicted") return WorldKind::Predicted;
    throw DataError("unknown world kind: " + s);
}

const EventGT* SceneRecord::find_event(int event_id) const {
    for (const auto& e : events)
        if (e.event_id == event_id) return &e;
    return nullptr;
}

std::vector<int> SceneRecord::ancestor_ids(int event_id) const {
    // reverse reachability over the stored direct edges
    std::vector<int> stack = {event_id};
    std::vector<int> out;
    std::vector<bool> seen;
    int max_id = 0;
    for (const auto& e : events) max_id = std::max(max_id, e.event_id);
    seen.assign(size_t(max_id + 1), false);
    while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        for (const auto& [cause, effect] : causal_edges) {
            if (effect != cur) continue;
            if (cause >= 0 && cause <= max_id && !seen[size_t(cause)]) {
                seen[size_t(cause)] = true;
                out.push_back(cause);
                stack.push_back(cause);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string qtype_name(QType t) {
    switch (t) {
        case QType::Query: return "query";
        case QType::Exist: return "exist";
        case QType::Count: return "count";
        case QType::Explanatory: return "explanatory";
        case QType::Predictive: return "predictive";
        case QType::Counterfactual: return "counterfactual";
    }
    return "?";
}

QType qtype_from_name(const std::string& s) {
    if (s == "query") return QType::Query;
    if (s == "exist") return QType::Exist;
    if (s == "count") return QType::Count;
    if (s == "explanatory") return QType::Explanatory;
    if (s == "predictive") return QType::Predictive;
    if (s == "counterfactual") return QType::Counterfactual;
    throw DataError("unknown question type: " + s);
}

ordered_json num(double v) {
    return ordered_json(std::strtod(format_g9(v).c_str(), nullptr));
}

static ordered_json box_json(const Box& b) {
    return ordered_json::array({num(b.cx), num(b.cy), num(b.w), num(b.h)});
}

static Box box_from(const json& j) {
    return Box{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
               j.at(3).get<double>()};
}

ordered_json scene_to_json(const SceneRecord& s) {
    ordered_json j;
    j["video_id"] = s.video_id;
    j["frame_count"] = s.T;
    j["world_kind"] = world_kind_name(s.world_kind);
    ordered_json objs = ordered_json::array();
    for (const auto& o : s.objects) {
        ordered_json jo;
        jo["obj_id"] = o.obj_id;
        jo["color"] = color_names()[size_t(o.color)];
        jo["material"] = material_names()[size_t(o.material)];
        jo["shape"] = shape_names()[size_t(o.shape)];
        jo["falling"] = o.falling;
        ordered_json present = ordered_json::array();
        ordered_json boxes = ordered_json::array();
        ordered_json vel = ordered_json::array();
        for (int t = 0; t < s.T; ++t) {
            bool p = t < int(o.present.size()) && o.present[size_t(t)];
            present.push_back(p ? 1 : 0);
            if (p) {
                boxes.push_back(box_json(o.boxes[size_t(t)]));
                vel.push_back(ordered_json::array({num(o.vx[size_t(t)]), num(o.vy[size_t(t)])}));
            }
        }
        jo["present"] = std::move(present);
        jo["boxes"] = std::move(boxes);
        jo["velocity"] = std::move(vel);
        objs.push_back(std::move(jo));
    }
    j["objects"] = std::move(objs);
    ordered_json evs = ordered_json::array();
    for (const auto& e : s.events) {
        ordered_json je;
        je["event_id"] = e.event_id;
        je["kind"] = event_kind_name(e.kind);
        je["participants"] = e.participants;
        je["frame"] = e.frame;
        evs.push_back(std::move(je));
    }
    j["events"] = std::move(evs);
    ordered_json edges = ordered_json::array();
    for (const auto& [c, e] : s.causal_edges) edges.push_back(ordered_json::array({c, e}));
    j["causal_edges"] = std::move(edges);
    return j;
}

static int index_of(const std::vector<std::string>& names, const std::string& s) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return int(i);
    throw DataError("unknown name: " + s);
}

SceneRecord scene_from_json(const json& j) {
    SceneRecord s;
    s.video_id = j.at("video_id").get<std::string>();
    s.T = j.at("frame_count").get<int>();
    s.world_kind = world_kind_from(j.at("world_kind").get<std::string>());
    for (const auto& jo : j.at("objects")) {
        ObjectGT o;
        o.obj_id = jo.at("obj_id").get<int>();
        o.color = index_of(color_names(), jo.at("color").get<std::string>());
        o.material = index_of(material_names(), jo.at("material").get<std::string>());
        o.shape = index_of(shape_names(), jo.at("shape").get<std::string>());
        o.falling = jo.at("falling").get<bool>();
        o.present.assign(size_t(s.T), false);
        o.boxes.assign(size_t(s.T), Box{});
        o.vx.assign(size_t(s.T), 0.0);
        o.vy.assign(size_t(s.T), 0.0);
        const auto& present = jo.at("present");
        const auto& boxes = jo.at("boxes");
        const auto& vel = jo.at("velocity");
        size_t bi = 0;
        for (int t = 0; t < s.T; ++t) {
            if (present.at(size_t(t)).get<int>() == 0) continue;
            o.present[size_t(t)] = true;
            o.boxes[size_t(t)] = box_from(boxes.at(bi));
            o.vx[size_t(t)] = vel.at(bi).at(0).get<double>();
            o.vy[size_t(t)] = vel.at(bi).at(1).get<double>();
            ++bi;
        }
        s.objects.push_back(std::move(o));
    }
    for (const auto& je : j.at("events")) {
        EventGT e;
        e.event_id = je.at("event_id").get<int>();
        e.kind = event_kind_from(je.at("kind").get<std::string>());
        e.participants = je.at("participants").get<std::vector<int>>();
        e.frame = je.at("frame").get<int>();
        s.events.push_back(std::move(e));
    }
    for (const auto& jp : j.at("causal_edges"))
        s.causal_edges.emplace_back(jp.at(0).get<int>(), jp.at(1).get<int>());
    return s;
}

ordered_json proposals_to_json(const std::vector<ProposalFrame>& frames) {
    ordered_json arr = ordered_json::array();
    for (const auto& f : frames) {
        ordered_json jf;
        jf["frame"] = f.frame;
        ordered_json props = ordered_json::array();
        for (const auto& p : f.proposals) {
            ordered_json jp;
            jp["box"] = box_json(p.box);
            jp["score"] = num(p.score);
            ordered_json app = ordered_json::array();
            for (double v : p.appearance) app.push_back(num(v));
            jp["appearance"] = std::move(app);
            props.push_back(std::move(jp));
        }
        jf["proposals"] = std::move(props);
        arr.push_back(std::move(jf));
    }
    return arr;
}

std::vector<ProposalFrame> proposals_from_json(const json& j) {
    std::vector<ProposalFrame> frames;
    for (const auto& jf : j) {
        ProposalFrame f;
        f.frame = jf.at("frame").get<int>();
        for (const auto& jp : jf.at("proposals")) {
            Proposal p;
            p.box = box_from(jp.at("box"));
            p.score = jp.at("score").get<double>();
            p.appearance = jp.at("appearance").get<std::vector<double>>();
            f.proposals.push_back(std::move(p));
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

ordered_json qa_to_json(const std::vector<QAPair>& qa) {
    ordered_json arr = ordered_json::array();
    for (const auto& q : qa) {
        ordered_json jq;
        jq["question"] = q.question;
        jq["program"] = q.program;
        jq["qtype"] = qtype_name(q.qtype);
        jq["answer"] = q.answer;
        if (!q.choices.empty()) {
            ordered_json ch = ordered_json::array();
            for (const auto& [prog, label] : q.choices)
                ch.push_back(ordered_json::array({prog, label}));
            jq["choices"] = std::move(ch);
        }
        arr.push_back(std::move(jq));
    }
    return arr;
}

std::vector<QAPair> qa_from_json(const json& j) {
    std::vector<QAPair> out;
    for (const auto& jq : j) {
        QAPair q;
        q.question = jq.at("question").get<std::string>();
        q.program = jq.at("program").get<std::string>();
        q.qtype = qtype_from_name(jq.at("qtype").get<std::string>());
        q.answer = jq.at("answer").get<std::string>();
        if (jq.contains("choices"))
            for (const auto& jc : jq.at("choices"))
                q.choices.emplace_back(jc.at(0).get<std::string>(), jc.at(1).get<bool>());
        out.push_back(std::move(q));
    }
    return out;
}

static std::string expr_kind_name(ExprKind k) {
    switch (k) {
        case ExprKind::GroundObject: return "ground_object";
        case ExprKind::GroundEvent: return "ground_event";
        case ExprKind::Retrieval: return "retrieval";
    }
    return "?";
}

static ExprKind expr_kind_from(const std::string& s) {
    if (s == "ground_object") return ExprKind::GroundObject;
    if (s == "ground_event") return ExprKind::GroundEvent;
    if (s == "retrieval") return ExprKind::Retrieval;
    throw DataError("unknown expression kind: " + s);
}

ordered_json expressions_to_json(const std::vector<Expression>& ex) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : ex) {
        ordered_json je;
        je["text"] = e.text;
        je["program"] = e.program;
        je["kind"] = expr_kind_name(e.kind);
        if (e.target_object >= 0) je["target_object"] = e.target_object;
        if (e.target_event >= 0) je["target_event"] = e.target_event;
        if (!e.query_type.empty()) je["query_type"] = e.query_type;
        arr.push_back(std::move(je));
    }
    return arr;
}

std::vector<Expression> expressions_from_json(const json& j) {
    std::vector<Expression> out;
    for (const auto& je : j) {
        Expression e;
        e.text = je.at("text").get<std::string>();
        e.program = je.at("program").get<std::string>();
        e.kind = expr_kind_from(je.at("kind").get<std::string>());
        if (je.contains("target_object")) e.target_object = je.at("target_object").get<int>();
        if (je.contains("target_event")) e.target_event = je.at("target_event").get<int>();
        if (je.contains("query_type")) e.query_type = je.at("query_type").get<std::string>();
        out.push_back(std::move(e));
    }
    return out;
}

std::string dump_json(const ordered_json& j) { return j.dump(1, '\t') + "\n"; }

}  // namespace dcl
