#include <algorithm>
#include <sstream>

#include "dcl/proglang.hpp"

namespace dcl::prog {

std::string Descriptor::text(bool plural) const {
    std::string s;
    if (color >= 0) s += color_names()[size_t(color)] + " ";
    if (material >= 0) s += material_names()[size_t(material)] + " ";
    if (shape >= 0)
        s += shape_names()[size_t(shape)];
    else
        s += "object";
    if (plural) s += "s";
    return s;
}

std::string Descriptor::selector() const {
    std::string s = "Objects()";
    auto wrap = [&](const std::string& concept_name) {
        s = "Filter_static_concept(" + s + ", " + concept_name + ")";
    };
    if (shape >= 0) wrap(shape_names()[size_t(shape)]);
    if (material >= 0) wrap(material_names()[size_t(material)]);
    if (color >= 0) wrap(color_names()[size_t(color)]);
    return s;
}

namespace {
int name_index(const std::vector<std::string>& names, const std::string& w) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == w) return int(i);
    return -1;
}

std::string depluralize(const std::string& w) {
    if (w.size() > 1 && w.back() == 's') return w.substr(0, w.size() - 1);
    return w;
}
}  // namespace

std::optional<Descriptor> parse_descriptor(const std::vector<std::string>& words) {
    Descriptor d;
    size_t i = 0;
    if (words.empty() || words.size() > 3) return std::nullopt;
    if (i < words.size()) {
        int c = name_index(color_names(), words[i]);
        if (c >= 0) {
            d.color = c;
            ++i;
        }
    }
    if (i < words.size()) {
        int m = name_index(material_names(), words[i]);
        if (m >= 0) {
            d.material = m;
            ++i;
        }
    }
    if (i + 1 != words.size()) return std::nullopt;  // exactly one noun must remain
    std::string noun = depluralize(words[i]);
    if (noun == "object") return d;
    int s = name_index(shape_names(), noun);
    if (s < 0) return std::nullopt;
    d.shape = s;
    return d;
}

const std::vector<Template>& qa_templates() {
    static const std::vector<Template> ts = {
        {"count_all", QType::Count, "How many objects are there?", "Count(Objects())"},
        {"count_desc", QType::Count, "How many <d:d> are there?", "Count($d)"},
        {"count_dyn", QType::Count, "How many objects are <dyn:dyn> when the video <be:be>?",
         "Count(Filter_dynamic_concept(Objects(), $dyn, $be))"},
        {"count_in", QType::Count, "How many objects enter the scene?",
         "Count(Filter_in(Events(), Objects()))"},
        {"count_out", QType::Count, "How many objects exit the scene?",
         "Count(Filter_out(Events(), Objects()))"},
        {"count_col", QType::Count, "How many collisions happen?",
         "Count(Filter_collision(Events(), Objects()))"},
        {"count_col_pair", QType::Count, "How many times do the <d1:d> and the <d2:d> collide?",
         "Count(Filter_collision(Filter_collision(Events(), $d1), $d2))"},
        {"count_col_after_in", QType::Count,
         "How many collisions happen after the <d:d> enters the scene?",
         "Count(Filter_after(Filter_collision(Events(), Objects()), "
         "Unique(Filter_in(Events(), $d))))"},
        {"count_in_after_col", QType::Count,
         "How many objects enter the scene after the <ord:order> collision?",
         "Count(Filter_after(Filter_in(Events(), Objects()), "
         "Filter_order(Filter_collision(Events(), Objects()), $ord)))"},
        {"exist_desc", QType::Exist, "Are there any <d:d>?", "Exist($d)"},
        {"exist_dyn", QType::Exist, "Are there any <d:d> that are <dyn:dyn> when the video <be:be>?",
         "Exist(Filter_dynamic_concept($d, $dyn, $be))"},
        {"exist_col_pair", QType::Exist, "Does the <d1:d> collide with the <d2:d>?",
         "Exist(Filter_collision(Filter_collision(Events(), $d1), $d2))"},
        {"exist_in_obj", QType::Exist, "Does the <d:d> enter the scene?",
         "Exist(Filter_in(Events(), $d))"},
        {"exist_out_obj", QType::Exist, "Does the <d:d> exit the scene?",
         "Exist(Filter_out(Events(), $d))"},
        {"exist_col_before_out", QType::Exist,
         "Does the <d1:d> collide with the <d2:d> before the <d3:d> exits the scene?",
         "Exist(Filter_before(Filter_collision(Filter_collision(Events(), $d1), $d2), "
         "Unique(Filter_out(Events(), $d3))))"},
        {"query_attr", QType::Query, "What is the <attr:attr> of the <d:d>?",
         "Query_Attribute(Unique($d), $attr)"},
        {"query_attr_dyn", QType::Query,
         "What is the <attr:attr> of the <d:d> that is <dyn:dyn> when the video <be:be>?",
         "Query_Attribute(Unique(Filter_dynamic_concept($d, $dyn, $be)), $attr)"},
        {"query_partner", QType::Query,
         "What is the <attr:attr> of the object that collides with the <d:d>?",
         "Query_Attribute(Get_col_partner(Unique(Filter_collision(Events(), $d)), Unique($d)), "
         "$attr)"},
        {"expl_responsible", QType::Explanatory,
         "Which of the following is responsible for the collision between the <d1:d> and the "
         "<d2:d>?",
         "Unique(Filter_collision(Filter_collision(Events(), $d1), $d2))"},
        {"pred_will_collide", QType::Predictive, "Will the <d1:d> and the <d2:d> collide?",
         "UnseenEvents()"},
        {"pred_what_next", QType::Predictive, "What will happen next?", "UnseenEvents()"},
        {"cf_removed_exist", QType::Counterfactual,
         "If the <dr:d> is removed, will the <d1:d> and the <d2:d> collide?", "Unique($dr)"},
        {"cf_removed_which", QType::Counterfactual,
         "If the <dr:d> is removed, which of the following will happen?", "Unique($dr)"},
    };
    return ts;
}

const std::vector<Template>& tower_templates() {
    static const std::vector<Template> ts = {
        {"count_all", QType::Count, "How many objects are there?", "Count(Objects())"},
        {"count_falling", QType::Count, "How many objects are falling?",
         "Count(Filter_dynamic_concept(Objects(), falling, End()))"},
        {"exist_falling", QType::Exist, "Are there any falling objects?",
         "Exist(Filter_dynamic_concept(Objects(), falling, End()))"},
        {"exist_falling_color", QType::Exist, "Are there any falling <c:color> objects?",
         "Exist(Filter_dynamic_concept(Filter_static_concept(Objects(), $c), falling, End()))"},
        {"exist_color", QType::Exist, "Are there any <c:color> objects?",
         "Exist(Filter_static_concept(Objects(), $c))"},
        {"query_color_falling", QType::Query, "What is the color of the falling object?",
         "Query_Attribute(Unique(Filter_dynamic_concept(Objects(), falling, End())), color)"},
        {"query_material", QType::Query, "What is the material of the <c:color> block?",
         "Query_Attribute(Unique(Filter_static_concept(Objects(), $c)), material)"},
    };
    return ts;
}

// ---- template matching -----------------------------------------------------

namespace {

struct Segment {
    bool is_slot = false;
    std::string text;  // literal text, or slot name
    std::string kind;  // slot kind
};

std::vector<Segment> split_pattern(const std::string& pattern) {
    std::vector<Segment> segs;
    size_t i = 0;
    std::string lit;
    while (i < pattern.size()) {
        if (pattern[i] == '<') {
            size_t close = pattern.find('>', i);
            size_t colon = pattern.find(':', i);
            if (close == std::string::npos || colon == std::string::npos || colon > close)
                throw DataError("bad template pattern: " + pattern);
            if (!lit.empty()) {
                segs.push_back({false, lit, ""});
                lit.clear();
            }
            segs.push_back({true, pattern.substr(i + 1, colon - i - 1),
                            pattern.substr(colon + 1, close - colon - 1)});
            i = close + 1;
        } else {
            lit += pattern[i++];
        }
    }
    if (!lit.empty()) segs.push_back({false, lit, ""});
    return segs;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

// validated slot value -> substitution text for the skeleton
std::optional<std::string> slot_value(const std::string& kind, const std::string& captured) {
    if (kind == "d") {
        auto d = parse_descriptor(split_words(captured));
        if (!d) return std::nullopt;
        return d->selector();
    }
    if (kind == "attr") {
        if (captured == "color" || captured == "material" || captured == "shape")
            return captured;
        return std::nullopt;
    }
    if (kind == "dyn") {
        if (captured == "moving" || captured == "stationary") return captured;
        return std::nullopt;
    }
    if (kind == "be") {
        if (captured == "begins") return std::string("Start()");
        if (captured == "ends") return std::string("End()");
        return std::nullopt;
    }
    if (kind == "order") {
        if (captured == "first" || captured == "second" || captured == "last") return captured;
        return std::nullopt;
    }
    if (kind == "color") {
        for (const auto& c : color_names())
            if (c == captured) return captured;
        return std::nullopt;
    }
    return std::nullopt;
}

// Recursive match of text against segments; slots capture 1..3 words.
bool match_segments(const std::string& text, size_t pos, const std::vector<Segment>& segs,
                    size_t seg_idx, std::vector<std::pair<std::string, std::string>>& subs) {
    if (seg_idx == segs.size()) return pos == text.size();
    const Segment& s = segs[seg_idx];
    if (!s.is_slot) {
        if (text.compare(pos, s.text.size(), s.text) != 0) return false;
        return match_segments(text, pos + s.text.size(), segs, seg_idx + 1, subs);
    }
    // try increasing word counts
    size_t end = pos;
    for (int words = 1; words <= 3; ++words) {
        while (end < text.size() && text[end] != ' ' && text[end] != '?' && text[end] != ',')
            ++end;
        std::string captured = text.substr(pos, end - pos);
        auto v = slot_value(s.kind, captured);
        if (v) {
            subs.emplace_back(s.text, *v);
            if (match_segments(text, end, segs, seg_idx + 1, subs)) return true;
            subs.pop_back();
        }
        if (end >= text.size() || text[end] != ' ') break;
        ++end;  // skip the space, extend capture by another word
    }
    return false;
}

}  // namespace

std::string instantiate(const std::string& skeleton,
                        const std::vector<std::pair<std::string, std::string>>& subs) {
    std::string out;
    size_t i = 0;
    while (i < skeleton.size()) {
        if (skeleton[i] == '$') {
            size_t j = i + 1;
            while (j < skeleton.size() &&
                   (std::isalnum(static_cast<unsigned char>(skeleton[j])) || skeleton[j] == '_'))
                ++j;
            std::string name = skeleton.substr(i + 1, j - i - 1);
            bool found = false;
            for (const auto& [k, v] : subs)
                if (k == name) {
                    out += v;
                    found = true;
                    break;
                }
            if (!found) throw DataError("unbound template slot $" + name);
            i = j;
        } else {
            out += skeleton[i++];
        }
    }
    return out;
}

ParsedQuestion parse_question(const std::string& text,
                              const std::vector<Template>& templates) {
    // longest literal content first
    std::vector<const Template*> order;
    for (const auto& t : templates) order.push_back(&t);
    std::stable_sort(order.begin(), order.end(), [](const Template* a, const Template* b) {
        return a->pattern.size() > b->pattern.size();
    });
    for (const Template* t : order) {
        auto segs = split_pattern(t->pattern);
        std::vector<std::pair<std::string, std::string>> subs;
        if (match_segments(text, 0, segs, 0, subs)) {
            ParsedQuestion q;
            q.template_id = t->id;
            q.qtype = t->qtype;
            q.program = parse_typed(instantiate(t->skeleton, subs));
            return q;
        }
    }
    std::string nearest;
    for (size_t i = 0; i < templates.size() && i < 3; ++i)
        nearest += (i ? ", " : "") + templates[i].pattern;
    throw ParseError("no template matches '" + text + "'; nearest: " + nearest, 1, 1);
}

nlohmann::ordered_json templates_to_json(const std::vector<Template>& ts) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : ts) {
        nlohmann::ordered_json jt;
        jt["id"] = t.id;
        jt["qtype"] = qtype_name(t.qtype);
        jt["pattern"] = t.pattern;
        nlohmann::ordered_json slots = nlohmann::ordered_json::object();
        for (const auto& seg : split_pattern(t.pattern))
            if (seg.is_slot) slots[seg.text] = seg.kind;
        jt["slots"] = std::move(slots);
        jt["program_skeleton"] = t.skeleton;
        arr.push_back(std::move(jt));
    }
    return arr;
}

}  // namespace dcl::prog
