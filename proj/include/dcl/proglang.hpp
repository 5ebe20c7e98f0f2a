#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dcl/common.hpp"
#include "dcl/scene.hpp"

namespace dcl::prog {

enum class OpCode {
    Objects, Events, UnseenEvents, Start, End,
    FilterStaticConcept, FilterDynamicConcept, FilterIn, FilterOut, FilterCollision,
    GetColPartner, FilterBefore, FilterAfter, FilterOrder, FilterAncestor, GetFrame,
    QueryAttribute, Count, Exist, BelongTo, Negate, Unique, Literal,
};

enum class Type {
    Object, Objects, Event, Events, Order, StaticConcept, DynamicConcept,
    Attribute, Frame, Int, Bool,
};

std::string op_name(OpCode op);
std::string type_name(Type t);

struct ParseError : std::runtime_error {
    int line, col;
    ParseError(const std::string& m, int l, int c)
        : std::runtime_error(m + " at line " + std::to_string(l) + ", column " +
                             std::to_string(c)),
          line(l), col(c) {}
};

struct TypeError : std::runtime_error {
    explicit TypeError(const std::string& m) : std::runtime_error(m) {}
};

struct Node {
    OpCode op = OpCode::Literal;
    std::string literal;       // concept / attribute / order token
    std::vector<int> args;     // child indices
    int line = 0, col = 0;
    std::optional<Type> type;  // set by typecheck
};

struct Program {
    std::vector<int> roots_unused;  // single-root trees only
    std::vector<Node> nodes;
    int root = -1;

    const Node& at(int i) const { return nodes[size_t(i)]; }
    bool operator==(const Program& other) const;
};

// Static/dynamic concept vocabulary. Dynamic concepts split into
// moment-specific ones (scored on a frame-local window) and video-level ones
// (scored on the whole sequence feature).
struct ConceptInfo {
    std::string name;
    bool is_static = true;
    int attribute = -1;          // 0 color, 1 material, 2 shape (static only)
    int index_in_attribute = -1;
    bool moment_specific = false;  // dynamic only
};

class Vocab {
public:
    static const Vocab& instance();
    const ConceptInfo* find(const std::string& name) const;
    const std::vector<ConceptInfo>& statics() const { return statics_; }
    const std::vector<ConceptInfo>& dynamics() const { return dynamics_; }
    std::vector<std::string> attribute_concepts(int attribute) const;

private:
    Vocab();
    std::vector<ConceptInfo> statics_, dynamics_;
};

// Concrete syntax: Op(arg, ...) with identifier literals; LL(1).
Program parse_program(const std::string& text);

// Annotates every node, checking Table-style operator signatures. An event
// in a frame position is accepted (the event's frame is taken implicitly).
void typecheck(Program& p);

Program parse_typed(const std::string& text);

std::string pretty_print(const Program& p);

// ---- question templates -------------------------------------------------

struct Descriptor {
    int color = -1, material = -1, shape = -1;  // -1 means unconstrained
    bool any() const { return color >= 0 || material >= 0 || shape >= 0; }
    std::string text(bool plural) const;      // "red metal cube(s)" / "object(s)"
    std::string selector() const;             // nested Filter_static_concept chain
};
std::optional<Descriptor> parse_descriptor(const std::vector<std::string>& words);

struct Template {
    std::string id;
    QType qtype = QType::Query;
    std::string pattern;   // literal text with <name:kind> slots
    std::string skeleton;  // program text with $name placeholders
};

// kinds: d (object descriptor), attr, dyn (moment dynamic concept),
// be (begins|ends), order, color
const std::vector<Template>& qa_templates();      // bounce worlds
const std::vector<Template>& tower_templates();   // tower worlds

struct ParsedQuestion {
    std::string template_id;
    QType qtype = QType::Query;
    Program program;
};

// Longest-match template parse of a generated question; throws ParseError
// listing the nearest templates when nothing matches.
ParsedQuestion parse_question(const std::string& text, const std::vector<Template>& templates);

// Instantiates a template skeleton with slot substitutions ($name -> text).
std::string instantiate(const std::string& skeleton,
                        const std::vector<std::pair<std::string, std::string>>& subs);

nlohmann::ordered_json templates_to_json(const std::vector<Template>& ts);

}  // namespace dcl::prog
