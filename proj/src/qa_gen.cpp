#include "dcl/qa_gen.hpp"

#include <algorithm>
#include <set>

namespace dcl::world {

namespace {

using prog::Descriptor;

std::string render(const std::string& pattern,
                   const std::vector<std::pair<std::string, std::string>>& texts) {
    std::string out;
    size_t i = 0;
    while (i < pattern.size()) {
        if (pattern[i] == '<') {
            size_t colon = pattern.find(':', i);
            size_t close = pattern.find('>', i);
            std::string name = pattern.substr(i + 1, colon - i - 1);
            bool found = false;
            for (const auto& [k, v] : texts)
                if (k == name) {
                    out += v;
                    found = true;
                    break;
                }
            if (!found) throw DataError("render: unbound slot " + name);
            i = close + 1;
        } else {
            out += pattern[i++];
        }
    }
    return out;
}

const prog::Template& find_template(const std::vector<prog::Template>& ts, const std::string& id) {
    for (const auto& t : ts)
        if (t.id == id) return t;
    throw DataError("missing template " + id);
}

struct Binder {
    const SceneRecord& scene;
    const std::vector<prog::Template>& templates;
    Rng& rng;
    const QaConfig& cfg;

    bool matches(const ObjectGT& o, const Descriptor& d) const {
        if (o.first_present() < 0) return false;
        if (d.color >= 0 && o.color != d.color) return false;
        if (d.material >= 0 && o.material != d.material) return false;
        if (d.shape >= 0 && o.shape != d.shape) return false;
        return true;
    }

    int match_count(const Descriptor& d) const {
        int c = 0;
        for (const auto& o : scene.objects) c += matches(o, d) ? 1 : 0;
        return c;
    }

    // color descriptors are unique by construction (distinct scene colors)
    Descriptor unique_descriptor(const ObjectGT& o) const {
        Descriptor d;
        d.color = o.color;
        return d;
    }

    std::vector<Descriptor> all_descriptors() const {
        std::vector<Descriptor> out;
        std::set<std::tuple<int, int, int>> seen;
        auto push = [&](Descriptor d) {
            auto key = std::make_tuple(d.color, d.material, d.shape);
            if (d.any() && !seen.count(key)) {
                seen.insert(key);
                out.push_back(d);
            }
        };
        for (int m = 0; m < kNumMaterials; ++m) {
            Descriptor d;
            d.material = m;
            push(d);
        }
        for (int s = 0; s < kNumShapes; ++s) {
            Descriptor d;
            d.shape = s;
            push(d);
            for (int m = 0; m < kNumMaterials; ++m) {
                Descriptor dm;
                dm.shape = s;
                dm.material = m;
                push(dm);
            }
        }
        for (const auto& o : scene.objects) {
            if (o.first_present() < 0) continue;
            Descriptor d;
            d.color = o.color;
            push(d);
            Descriptor ds = d;
            ds.shape = o.shape;
            push(ds);
        }
        return out;
    }

    std::vector<const EventGT*> collisions() const {
        std::vector<const EventGT*> out;
        for (const auto& e : scene.events)
            if (e.kind == EventKind::Collision) out.push_back(&e);
        return out;
    }

    bool guard_frame_gap(int anchor_frame, EventKind kind_filter,
                         bool include_inout = true) const {
        for (const auto& e : scene.events) {
            if (!include_inout && e.kind != kind_filter) continue;
            if (e.frame != anchor_frame && std::abs(e.frame - anchor_frame) < cfg.temporal_guard)
                return false;
        }
        return true;
    }

    bool collisions_pairwise_separated() const {
        auto cols = collisions();
        for (size_t i = 0; i < cols.size(); ++i)
            for (size_t j = i + 1; j < cols.size(); ++j)
                if (std::abs(cols[i]->frame - cols[j]->frame) < cfg.temporal_guard) return false;
        return true;
    }

    // exactly one collision between the two objects, none of it near the cut
    const EventGT* pair_collision(int a, int b) const {
        const EventGT* found = nullptr;
        for (const auto& e : scene.events) {
            if (e.kind != EventKind::Collision) continue;
            bool match = (e.participants[0] == a && e.participants[1] == b) ||
                         (e.participants[0] == b && e.participants[1] == a);
            if (!match) continue;
            if (found) return nullptr;  // more than one
            found = &e;
        }
        return found;
    }

    std::string oracle(const std::string& program_text,
                       const exec::OracleContext& ctx = {}) const {
        prog::Program p = prog::parse_typed(program_text);
        return exec::oracle_execute(p, scene, ctx);
    }

    QAPair make_open(const std::string& template_id,
                     const std::vector<std::pair<std::string, std::string>>& slot_text,
                     const std::vector<std::pair<std::string, std::string>>& slot_prog,
                     const exec::OracleContext& ctx = {}) const {
        const prog::Template& t = find_template(templates, template_id);
        QAPair qa;
        qa.qtype = t.qtype;
        qa.question = render(t.pattern, slot_text);
        qa.program = prog::instantiate(t.skeleton, slot_prog);
        qa.answer = oracle(qa.program, ctx);
        return qa;
    }
};

}  // namespace

std::vector<QAPair> gen_qa(const SceneRecord& scene, const std::vector<prog::Template>& templates,
                           uint64_t seed, const QaConfig& cfg) {
    Rng rng(seed);
    Binder B{scene, templates, rng, cfg};

    auto has_template = [&](const std::string& id) {
        for (const auto& t : templates)
            if (t.id == id) return true;
        return false;
    };

    std::vector<QAPair> query, exist, count, expl, pred, cf;

    // ---- count -------------------------------------------------------------
    if (has_template("count_all")) count.push_back(B.make_open("count_all", {}, {}));
    if (has_template("count_desc")) {
        for (const Descriptor& d : B.all_descriptors()) {
            if (B.match_count(d) < 1) continue;
            count.push_back(B.make_open("count_desc", {{"d", d.text(true)}},
                                        {{"d", d.selector()}}));
        }
    }
    if (has_template("count_falling"))
        count.push_back(B.make_open("count_falling", {}, {}));
    std::vector<QAPair> count_dyn_pool;
    if (has_template("count_dyn")) {
        for (const char* dyn : {"moving", "stationary"})
            for (const char* be : {"begins", "ends"})
                count_dyn_pool.push_back(B.make_open(
                    "count_dyn", {{"dyn", dyn}, {"be", be}},
                    {{"dyn", dyn}, {"be", std::string(be) == "begins" ? "Start()" : "End()"}}));
    }
    if (has_template("count_in")) count.push_back(B.make_open("count_in", {}, {}));
    if (has_template("count_out")) count.push_back(B.make_open("count_out", {}, {}));
    if (has_template("count_col") && B.collisions_pairwise_separated())
        count.push_back(B.make_open("count_col", {}, {}));
    std::vector<QAPair> count_pair;
    if (has_template("count_col_pair")) {
        std::vector<QAPair> hit, zero;
        for (size_t i = 0; i < scene.objects.size(); ++i)
            for (size_t j = i + 1; j < scene.objects.size(); ++j) {
                const auto& a = scene.objects[i];
                const auto& b = scene.objects[j];
                if (a.first_present() < 0 || b.first_present() < 0) continue;
                Descriptor da = B.unique_descriptor(a), db = B.unique_descriptor(b);
                QAPair qa = B.make_open("count_col_pair",
                                        {{"d1", da.text(false)}, {"d2", db.text(false)}},
                                        {{"d1", da.selector()}, {"d2", db.selector()}});
                (qa.answer != "0" ? hit : zero).push_back(qa);
            }
        rng.shuffle(hit);
        rng.shuffle(zero);
        for (size_t i = 0; i < hit.size() && i < 2; ++i) count_pair.push_back(hit[i]);
        for (size_t i = 0; i < zero.size() && i < 1; ++i) count_pair.push_back(zero[i]);
    }
    if (has_template("count_col_after_in")) {
        for (const auto& o : scene.objects) {
            if (o.first_present() <= 0) continue;  // needs an in event
            Descriptor d = B.unique_descriptor(o);
            if (B.match_count(d) != 1) continue;
            if (!B.guard_frame_gap(o.first_present(), EventKind::Collision)) continue;
            count.push_back(B.make_open("count_col_after_in", {{"d", d.text(false)}},
                                        {{"d", d.selector()}}));
        }
    }
    if (has_template("count_in_after_col")) {
        auto cols = B.collisions();
        if (!cols.empty() && B.collisions_pairwise_separated()) {
            std::vector<std::string> orders = {"first"};
            if (cols.size() >= 2) orders.push_back("last");
            for (const std::string& ord : orders) {
                int frame = ord == "first" ? cols.front()->frame : cols.back()->frame;
                if (!B.guard_frame_gap(frame, EventKind::In)) continue;
                count.push_back(
                    B.make_open("count_in_after_col", {{"ord", ord}}, {{"ord", ord}}));
            }
        }
    }

    // ---- exist ---------------------------------------------------------------
    std::vector<QAPair> exist_col, exist_inout;
    if (has_template("exist_desc")) {
        std::vector<QAPair> yes, no;
        for (const Descriptor& d : B.all_descriptors()) {
            QAPair qa = B.make_open("exist_desc", {{"d", d.text(true)}}, {{"d", d.selector()}});
            (qa.answer == "yes" ? yes : no).push_back(qa);
        }
        // absent colors give clean negatives
        for (int c = 0; c < kNumColors; ++c) {
            Descriptor d;
            d.color = c;
            if (B.match_count(d) > 0) continue;
            no.push_back(B.make_open("exist_desc", {{"d", d.text(true)}}, {{"d", d.selector()}}));
        }
        rng.shuffle(yes);
        rng.shuffle(no);
        for (size_t i = 0; i < yes.size() && i < 3; ++i) exist.push_back(yes[i]);
        for (size_t i = 0; i < no.size() && i < 3; ++i) exist.push_back(no[i]);
    }
    if (has_template("exist_falling")) exist.push_back(B.make_open("exist_falling", {}, {}));
    if (has_template("exist_falling_color")) {
        for (const auto& o : scene.objects) {
            std::string c = color_names()[size_t(o.color)];
            exist.push_back(
                B.make_open("exist_falling_color", {{"c", c}}, {{"c", c}}));
        }
    }
    if (has_template("exist_color")) {
        for (int c = 0; c < kNumColors && int(exist.size()) < 10; ++c) {
            std::string name = color_names()[size_t(c)];
            exist.push_back(B.make_open("exist_color", {{"c", name}}, {{"c", name}}));
        }
    }
    if (has_template("exist_dyn")) {
        for (const Descriptor& d : B.all_descriptors()) {
            if (B.match_count(d) < 1) continue;
            const char* dyn = rng.chance(0.5) ? "moving" : "stationary";
            const char* be = rng.chance(0.5) ? "begins" : "ends";
            exist.push_back(B.make_open(
                "exist_dyn", {{"d", d.text(true)}, {"dyn", dyn}, {"be", be}},
                {{"d", d.selector()},
                 {"dyn", dyn},
                 {"be", std::string(be) == "begins" ? "Start()" : "End()"}}));
        }
    }
    if (has_template("exist_col_pair")) {
        std::vector<QAPair> yes, no;
        for (size_t i = 0; i < scene.objects.size(); ++i)
            for (size_t j = 0; j < scene.objects.size(); ++j) {
                if (i == j) continue;
                const auto& a = scene.objects[i];
                const auto& b = scene.objects[j];
                if (a.first_present() < 0 || b.first_present() < 0) continue;
                Descriptor da = B.unique_descriptor(a), db = B.unique_descriptor(b);
                QAPair qa = B.make_open(
                    "exist_col_pair", {{"d1", da.text(false)}, {"d2", db.text(false)}},
                    {{"d1", da.selector()}, {"d2", db.selector()}});
                (qa.answer == "yes" ? yes : no).push_back(qa);
            }
        rng.shuffle(yes);
        rng.shuffle(no);
        for (size_t i = 0; i < yes.size() && i < 1; ++i) exist_col.push_back(yes[i]);
        for (size_t i = 0; i < no.size() && i < 1; ++i) exist_col.push_back(no[i]);
    }
    if (has_template("exist_in_obj")) {
        std::vector<QAPair> yes, no;
        for (const auto& o : scene.objects) {
            if (o.first_present() < 0) continue;
            Descriptor d = B.unique_descriptor(o);
            QAPair qa_in =
                B.make_open("exist_in_obj", {{"d", d.text(false)}}, {{"d", d.selector()}});
            (qa_in.answer == "yes" ? yes : no).push_back(qa_in);
            QAPair qa_out =
                B.make_open("exist_out_obj", {{"d", d.text(false)}}, {{"d", d.selector()}});
            (qa_out.answer == "yes" ? yes : no).push_back(qa_out);
        }
        rng.shuffle(yes);
        rng.shuffle(no);
        for (size_t i = 0; i < yes.size() && i < 2; ++i) exist_inout.push_back(yes[i]);
        for (size_t i = 0; i < no.size() && i < 2; ++i) exist_inout.push_back(no[i]);
    }
    if (has_template("exist_col_before_out")) {
        for (const auto& o : scene.objects) {
            int last = o.last_present();
            if (o.first_present() < 0 || last >= scene.T - 1) continue;
            int out_frame = last + 1;
            if (!B.guard_frame_gap(out_frame, EventKind::Collision)) continue;
            Descriptor d3 = B.unique_descriptor(o);
            for (int tries = 0; tries < 2; ++tries) {
                const auto& a =
                    scene.objects[size_t(rng.below(uint64_t(scene.objects.size())))];
                const auto& b =
                    scene.objects[size_t(rng.below(uint64_t(scene.objects.size())))];
                if (a.obj_id == b.obj_id || a.first_present() < 0 || b.first_present() < 0)
                    continue;
                Descriptor da = B.unique_descriptor(a), db = B.unique_descriptor(b);
                exist.push_back(B.make_open(
                    "exist_col_before_out",
                    {{"d1", da.text(false)}, {"d2", db.text(false)}, {"d3", d3.text(false)}},
                    {{"d1", da.selector()}, {"d2", db.selector()}, {"d3", d3.selector()}}));
            }
        }
    }

    // ---- query -----------------------------------------------------------------
    if (has_template("query_attr")) {
        for (const auto& o : scene.objects) {
            if (o.first_present() < 0) continue;
            Descriptor d = B.unique_descriptor(o);
            for (const char* attr : {"material", "shape"})
                query.push_back(B.make_open("query_attr", {{"attr", attr}, {"d", d.text(false)}},
                                            {{"attr", attr}, {"d", d.selector()}}));
            // shape- or material-qualified descriptors that are unique support
            // color queries
            Descriptor ds;
            ds.shape = o.shape;
            if (B.match_count(ds) == 1)
                query.push_back(B.make_open("query_attr",
                                            {{"attr", "color"}, {"d", ds.text(false)}},
                                            {{"attr", "color"}, {"d", ds.selector()}}));
        }
    }
    if (has_template("query_color_falling")) {
        int falling = 0;
        for (const auto& o : scene.objects) falling += o.falling ? 1 : 0;
        if (falling == 1) query.push_back(B.make_open("query_color_falling", {}, {}));
    }
    if (has_template("query_material")) {
        for (const auto& o : scene.objects) {
            std::string c = color_names()[size_t(o.color)];
            query.push_back(B.make_open("query_material", {{"c", c}}, {{"c", c}}));
        }
    }
    if (has_template("query_attr_dyn")) {
        for (const char* dyn : {"moving", "stationary"})
            for (const char* be : {"begins", "ends"}) {
                // bind when the dynamic filter leaves exactly one object
                int t_star = std::string(be) == "begins" ? 0 : scene.T - 1;
                std::vector<const ObjectGT*> hits;
                for (const auto& o : scene.objects) {
                    bool mv = gt_moving_at(o, t_star);
                    bool present =
                        t_star < int(o.present.size()) && o.present[size_t(t_star)];
                    bool hold = std::string(dyn) == "moving" ? (present && mv)
                                                             : (present && !mv);
                    if (hold) hits.push_back(&o);
                }
                if (hits.size() != 1) continue;
                Descriptor d;  // plain "object"
                const char* attr = rng.chance(0.5) ? "color" : "shape";
                query.push_back(B.make_open(
                    "query_attr_dyn",
                    {{"attr", attr}, {"d", d.text(false)}, {"dyn", dyn}, {"be", be}},
                    {{"attr", attr},
                     {"d", d.selector()},
                     {"dyn", dyn},
                     {"be", std::string(be) == "begins" ? "Start()" : "End()"}}));
            }
    }
    if (has_template("query_partner")) {
        for (const auto& o : scene.objects) {
            if (o.first_present() < 0) continue;
            int involved = 0;
            for (const auto* e : B.collisions())
                involved += (e->participants[0] == o.obj_id || e->participants[1] == o.obj_id)
                                ? 1
                                : 0;
            if (involved != 1) continue;
            Descriptor d = B.unique_descriptor(o);
            const char* attr = rng.chance(0.5) ? "color" : "shape";
            query.push_back(B.make_open("query_partner",
                                        {{"attr", attr}, {"d", d.text(false)}},
                                        {{"attr", attr}, {"d", d.selector()}}));
        }
    }

    // ---- explanatory -------------------------------------------------------------
    if (has_template("expl_responsible")) {
        auto cols = B.collisions();
        if (cols.size() >= 2) {
            for (const auto* target : cols) {
                int a = target->participants[0], b = target->participants[1];
                if (B.pair_collision(a, b) != target) continue;  // pair must be unique
                Descriptor da = B.unique_descriptor(scene.objects[size_t(a)]);
                Descriptor db = B.unique_descriptor(scene.objects[size_t(b)]);
                const prog::Template& t = find_template(templates, "expl_responsible");
                QAPair qa;
                qa.qtype = QType::Explanatory;
                qa.question =
                    render(t.pattern, {{"d1", da.text(false)}, {"d2", db.text(false)}});
                qa.program = prog::instantiate(
                    t.skeleton, {{"d1", da.selector()}, {"d2", db.selector()}});
                std::string target_sel = qa.program;
                for (const auto* cand : cols) {
                    if (cand == target) continue;
                    int c = cand->participants[0], dd = cand->participants[1];
                    if (B.pair_collision(c, dd) != cand) continue;
                    Descriptor dc = B.unique_descriptor(scene.objects[size_t(c)]);
                    Descriptor de = B.unique_descriptor(scene.objects[size_t(dd)]);
                    std::string cand_sel =
                        "Unique(Filter_collision(Filter_collision(Events(), " + dc.selector() +
                        "), " + de.selector() + "))";
                    std::string choice = "Belong_to(" + cand_sel + ", Filter_ancestor(" +
                                         target_sel + ", Events()))";
                    bool label = B.oracle(choice) == "yes";
                    qa.choices.emplace_back(choice, label);
                }
                // an in-event distractor; never a cause under the collision rule
                if (!qa.choices.empty() && rng.chance(0.35)) {
                    for (const auto& o : scene.objects) {
                        if (o.first_present() <= 0) continue;
                        Descriptor dx = B.unique_descriptor(o);
                        std::string choice =
                            "Belong_to(Unique(Filter_in(Events(), " + dx.selector() +
                            ")), Filter_ancestor(" + target_sel + ", Events()))";
                        qa.choices.emplace_back(choice, B.oracle(choice) == "yes");
                        break;
                    }
                }
                if (qa.choices.empty()) continue;
                std::string joined;
                for (const auto& [prog_text, label] : qa.choices)
                    joined += (joined.empty() ? "" : ",") + std::string(label ? "yes" : "no");
                qa.answer = joined;
                expl.push_back(qa);
            }
        }
    }

    // ---- predictive ------------------------------------------------------------
    int first_unseen = -1;
    for (int f : feat::sample_frames(scene.T, 16))
        if (f >= cfg.cut_frame && first_unseen < 0) first_unseen = f;
    auto pred_pair_ok = [&](int a, int b) {
        // unambiguous near the cut: no collision of the pair in the blind gap
        for (const auto& e : scene.events) {
            if (e.kind != EventKind::Collision) continue;
            bool match = (e.participants[0] == a && e.participants[1] == b) ||
                         (e.participants[0] == b && e.participants[1] == a);
            if (!match) continue;
            if (e.frame >= cfg.cut_frame && e.frame < first_unseen - 1) return false;
        }
        return true;
    };
    exec::OracleContext pred_ctx;
    pred_ctx.unseen = exec::UnseenMode::AfterFrame;
    pred_ctx.cut_frame = cfg.cut_frame;
    if (has_template("pred_will_collide")) {
        for (size_t i = 0; i < scene.objects.size(); ++i)
            for (size_t j = i + 1; j < scene.objects.size(); ++j) {
                const auto& a = scene.objects[i];
                const auto& b = scene.objects[j];
                if (a.first_present() < 0 || b.first_present() < 0) continue;
                if (a.first_present() >= cfg.cut_frame || b.first_present() >= cfg.cut_frame)
                    continue;
                if (!pred_pair_ok(a.obj_id, b.obj_id)) continue;
                Descriptor da = B.unique_descriptor(a), db = B.unique_descriptor(b);
                const prog::Template& t = find_template(templates, "pred_will_collide");
                QAPair qa;
                qa.qtype = QType::Predictive;
                qa.question =
                    render(t.pattern, {{"d1", da.text(false)}, {"d2", db.text(false)}});
                qa.program = "UnseenEvents()";
                std::string choice =
                    "Exist(Filter_collision(Filter_collision(UnseenEvents(), " + da.selector() +
                    "), " + db.selector() + "))";
                bool label = B.oracle(choice, pred_ctx) == "yes";
                qa.choices.emplace_back(choice, label);
                qa.answer = label ? "yes" : "no";
                pred.push_back(qa);
            }
    }

    // ---- counterfactual -----------------------------------------------------------
    if (has_template("cf_removed_exist") && scene.objects.size() >= 3) {
        for (const auto& r : scene.objects) {
            if (r.first_present() < 0) continue;
            SceneRecord cf_scene = resimulate_without(scene, r.obj_id, cfg.world);
            exec::OracleContext cf_ctx;
            cf_ctx.unseen = exec::UnseenMode::All;
            Descriptor dr = B.unique_descriptor(r);
            for (size_t i = 0; i < scene.objects.size(); ++i)
                for (size_t j = i + 1; j < scene.objects.size(); ++j) {
                    const auto& a = scene.objects[i];
                    const auto& b = scene.objects[j];
                    if (int(a.obj_id) == r.obj_id || int(b.obj_id) == r.obj_id) continue;
                    if (a.first_present() < 0 || b.first_present() < 0) continue;
                    const prog::Template& t = find_template(templates, "cf_removed_exist");
                    Descriptor da = B.unique_descriptor(a), db = B.unique_descriptor(b);
                    QAPair qa;
                    qa.qtype = QType::Counterfactual;
                    qa.question = render(t.pattern, {{"dr", dr.text(false)},
                                                     {"d1", da.text(false)},
                                                     {"d2", db.text(false)}});
                    qa.program = prog::instantiate(t.skeleton, {{"dr", dr.selector()}});
                    std::string choice =
                        "Exist(Filter_collision(Filter_collision(UnseenEvents(), " +
                        da.selector() + "), " + db.selector() + "))";
                    prog::Program cp = prog::parse_typed(choice);
                    bool label = exec::oracle_execute(cp, cf_scene, cf_ctx) == "yes";
                    qa.choices.emplace_back(choice, label);
                    qa.answer = label ? "yes" : "no";
                    cf.push_back(qa);
                }
        }
    }

    auto take = [&](std::vector<QAPair>& pool, int quota, std::vector<QAPair>& out) {
        rng.shuffle(pool);
        // prefer balanced yes/no pools where applicable
        for (int i = 0; i < int(pool.size()) && i < quota; ++i) out.push_back(pool[size_t(i)]);
    };
    std::vector<QAPair> out;
    take(query, cfg.quota.query, out);
    // collision and enter/exit existence items carry most of the event
    // supervision; keep them in the mix before the general pool
    take(exist_col, 2, out);
    take(exist_inout, 3, out);
    take(exist, cfg.quota.exist, out);
    take(count_pair, 3, out);
    take(count_dyn_pool, 2, out);
    take(count, cfg.quota.count, out);
    take(expl, cfg.quota.explanatory, out);
    take(pred, cfg.quota.predictive, out);
    take(cf, cfg.quota.counterfactual, out);
    return out;
}

std::vector<Expression> gen_expressions(const SceneRecord& scene, ExprKind kind, uint64_t seed,
                                        const ExprConfig& cfg) {
    Rng rng(seed);
    std::vector<Expression> pool;
    QaConfig qcfg;
    qcfg.temporal_guard = cfg.temporal_guard;
    Binder B{scene, prog::qa_templates(), rng, qcfg};

    auto add = [&](Expression e) { pool.push_back(std::move(e)); };

    if (kind == ExprKind::GroundObject || kind == ExprKind::Retrieval) {
        for (const auto& o : scene.objects) {
            if (o.first_present() < 0) continue;
            Descriptor full;
            full.color = o.color;
            full.material = o.material;
            full.shape = o.shape;
            Descriptor dc = B.unique_descriptor(o);
            for (const Descriptor& d : {dc, full}) {
                Expression e;
                if (kind == ExprKind::GroundObject) {
                    e.kind = ExprKind::GroundObject;
                    e.text = "the " + d.text(false);
                    e.program = "Unique(" + d.selector() + ")";
                    e.target_object = o.obj_id;
                } else {
                    e.kind = ExprKind::Retrieval;
                    e.text = "a video that contains a " + d.text(false);
                    e.program = "Exist(" + d.selector() + ")";
                    e.query_type = "obj";
                }
                add(e);
            }
            // dynamic variant at the end of the video
            bool moving_end = gt_moving_at(o, scene.T - 1);
            if (kind == ExprKind::GroundObject) {
                int hits = 0;
                for (const auto& m : scene.objects)
                    hits += gt_moving_at(m, scene.T - 1) ? 1 : 0;
                const char* dyn = moving_end ? "moving" : "stationary";
                int dyn_hits = moving_end ? hits : int(scene.objects.size()) - hits;
                if (dyn_hits == 1) {
                    Expression e;
                    e.kind = ExprKind::GroundObject;
                    e.text = std::string("the object that is ") + dyn +
                             " when the video ends";
                    e.program = "Unique(Filter_dynamic_concept(Objects(), " + std::string(dyn) +
                                ", End()))";
                    e.target_object = o.obj_id;
                    add(e);
                }
            }
        }
    }
    if (kind == ExprKind::GroundEvent || kind == ExprKind::Retrieval) {
        for (const auto& e : scene.events) {
            if (e.kind == EventKind::Collision) continue;
            const auto& o = scene.objects[size_t(e.participants[0])];
            Descriptor d = B.unique_descriptor(o);
            bool is_in = e.kind == EventKind::In;
            Expression ex;
            if (kind == ExprKind::GroundEvent) {
                ex.kind = ExprKind::GroundEvent;
                ex.text = "the moment when the " + d.text(false) +
                          (is_in ? " enters the scene" : " exits the scene");
                ex.program = std::string("Unique(Filter_") + (is_in ? "in" : "out") +
                             "(Events(), " + d.selector() + "))";
                ex.target_event = e.event_id;
            } else {
                ex.kind = ExprKind::Retrieval;
                ex.text = "a video that contains a " + d.text(false) +
                          (is_in ? " that enters the scene" : " that exits the scene");
                ex.program = std::string("Exist(Filter_") + (is_in ? "in" : "out") +
                             "(Events(), " + d.selector() + "))";
                ex.query_type = is_in ? "in" : "out";
            }
            add(ex);
        }
        for (const auto* c : B.collisions()) {
            int a = c->participants[0], b = c->participants[1];
            if (B.pair_collision(a, b) != c) continue;
            Descriptor da = B.unique_descriptor(scene.objects[size_t(a)]);
            Descriptor db = B.unique_descriptor(scene.objects[size_t(b)]);
            Expression ex;
            if (kind == ExprKind::GroundEvent) {
                ex.kind = ExprKind::GroundEvent;
                ex.text =
                    "the collision between the " + da.text(false) + " and the " + db.text(false);
                ex.program = "Unique(Filter_collision(Filter_collision(Events(), " +
                             da.selector() + "), " + db.selector() + "))";
                ex.target_event = c->event_id;
                add(ex);
            } else {
                ex.kind = ExprKind::Retrieval;
                ex.text = "a video that contains a collision involving the " + da.text(false);
                ex.program = "Exist(Filter_collision(Events(), " + da.selector() + "))";
                ex.query_type = "collision";
                add(ex);
            }
        }
        if (kind == ExprKind::GroundEvent) {
            // "the collision that happens after the <d> exits the scene"
            for (const auto& o : scene.objects) {
                int last = o.last_present();
                if (o.first_present() < 0 || last >= scene.T - 1) continue;
                int out_frame = last + 1;
                if (!B.guard_frame_gap(out_frame, EventKind::Collision)) continue;
                std::vector<const EventGT*> after;
                for (const auto* c : B.collisions())
                    if (c->frame > out_frame) after.push_back(c);
                if (after.size() != 1) continue;
                Descriptor d = B.unique_descriptor(o);
                Expression ex;
                ex.kind = ExprKind::GroundEvent;
                ex.text = "the collision that happens after the " + d.text(false) +
                          " exits the scene";
                ex.program =
                    "Unique(Filter_after(Filter_collision(Events(), Objects()), "
                    "Unique(Filter_out(Events(), " +
                    d.selector() + "))))";
                ex.target_event = after[0]->event_id;
                add(ex);
            }
            auto cols = B.collisions();
            if (!cols.empty() && B.collisions_pairwise_separated()) {
                Expression ex;
                ex.kind = ExprKind::GroundEvent;
                ex.text = "the first collision";
                ex.program = "Filter_order(Filter_collision(Events(), Objects()), first)";
                ex.target_event = cols.front()->event_id;
                add(ex);
                if (cols.size() >= 2) {
                    Expression ex2;
                    ex2.kind = ExprKind::GroundEvent;
                    ex2.text = "the last collision";
                    ex2.program = "Filter_order(Filter_collision(Events(), Objects()), last)";
                    ex2.target_event = cols.back()->event_id;
                    add(ex2);
                }
            }
        }
    }

    // validate targets against the oracle and trim
    std::vector<Expression> out;
    rng.shuffle(pool);
    for (const auto& e : pool) {
        if (int(out.size()) >= cfg.per_video) break;
        prog::Program p = prog::parse_typed(e.program);
        if (e.kind == ExprKind::Retrieval) {
            if (exec::oracle_execute(p, scene) != "yes") continue;  // must be a positive here
            out.push_back(e);
            continue;
        }
        exec::OracleGround g = exec::oracle_ground(p, scene);
        if (!g.valid) continue;
        if (e.kind == ExprKind::GroundObject && (!g.valid || g.object != e.target_object))
            continue;
        if (e.kind == ExprKind::GroundEvent && g.event_id != e.target_event) continue;
        out.push_back(e);
    }
    return out;
}

SceneRecord counterfactual_scene(const SceneRecord& scene, const QAPair& qa,
                                 const WorldConfig& world) {
    prog::Program stem = prog::parse_typed(qa.program);
    exec::OracleGround g = exec::oracle_ground(stem, scene);
    if (!g.valid || g.is_event) throw DataError("counterfactual stem does not name an object");
    return resimulate_without(scene, g.object, world);
}

}  // namespace dcl::world
