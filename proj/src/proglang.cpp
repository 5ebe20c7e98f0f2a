#include "dcl/proglang.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace dcl::prog {

namespace {

const std::vector<std::pair<std::string, OpCode>>& op_table() {
    static const std::vector<std::pair<std::string, OpCode>> t = {
        {"Objects", OpCode::Objects},
        {"Events", OpCode::Events},
        {"UnseenEvents", OpCode::UnseenEvents},
        {"Start", OpCode::Start},
        {"End", OpCode::End},
        {"Filter_static_concept", OpCode::FilterStaticConcept},
        {"Filter_dynamic_concept", OpCode::FilterDynamicConcept},
        {"Filter_in", OpCode::FilterIn},
        {"Filter_out", OpCode::FilterOut},
        {"Filter_collision", OpCode::FilterCollision},
        {"Get_col_partner", OpCode::GetColPartner},
        {"Filter_before", OpCode::FilterBefore},
        {"Filter_after", OpCode::FilterAfter},
        {"Filter_order", OpCode::FilterOrder},
        {"Filter_ancestor", OpCode::FilterAncestor},
        {"Get_frame", OpCode::GetFrame},
        {"Query_Attribute", OpCode::QueryAttribute},
        {"Count", OpCode::Count},
        {"Exist", OpCode::Exist},
        {"Belong_to", OpCode::BelongTo},
        {"Negate", OpCode::Negate},
        {"Unique", OpCode::Unique},
    };
    return t;
}

}  // namespace

std::string op_name(OpCode op) {
    for (const auto& [name, code] : op_table())
        if (code == op) return name;
    return "<literal>";
}

std::string type_name(Type t) {
    switch (t) {
        case Type::Object: return "object";
        case Type::Objects: return "objects";
        case Type::Event: return "event";
        case Type::Events: return "events";
        case Type::Order: return "order";
        case Type::StaticConcept: return "static concept";
        case Type::DynamicConcept: return "dynamic concept";
        case Type::Attribute: return "attribute";
        case Type::Frame: return "frame";
        case Type::Int: return "int";
        case Type::Bool: return "bool";
    }
    return "?";
}

bool Program::operator==(const Program& other) const {
    // structural equality from the roots down
    if ((root < 0) != (other.root < 0)) return false;
    if (root < 0) return true;
    struct Cmp {
        const Program& a;
        const Program& b;
        bool eq(int ia, int ib) const {
            const Node& na = a.at(ia);
            const Node& nb = b.at(ib);
            if (na.op != nb.op || na.literal != nb.literal) return false;
            if (na.args.size() != nb.args.size()) return false;
            for (size_t i = 0; i < na.args.size(); ++i)
                if (!eq(na.args[i], nb.args[i])) return false;
            return true;
        }
    };
    return Cmp{*this, other}.eq(root, other.root);
}

Vocab::Vocab() {
    for (int c = 0; c < kNumColors; ++c)
        statics_.push_back({color_names()[size_t(c)], true, 0, c, false});
    for (int m = 0; m < kNumMaterials; ++m)
        statics_.push_back({material_names()[size_t(m)], true, 1, m, false});
    for (int s = 0; s < kNumShapes; ++s)
        statics_.push_back({shape_names()[size_t(s)], true, 2, s, false});
    dynamics_.push_back({"moving", false, -1, -1, true});
    dynamics_.push_back({"stationary", false, -1, -1, true});
    dynamics_.push_back({"falling", false, -1, -1, false});
}

const Vocab& Vocab::instance() {
    static Vocab v;
    return v;
}

const ConceptInfo* Vocab::find(const std::string& name) const {
    for (const auto& c : statics_)
        if (c.name == name) return &c;
    for (const auto& c : dynamics_)
        if (c.name == name) return &c;
    return nullptr;
}

std::vector<std::string> Vocab::attribute_concepts(int attribute) const {
    std::vector<std::string> out;
    for (const auto& c : statics_)
        if (c.attribute == attribute) out.push_back(c.name);
    return out;
}

// ---- parser ---------------------------------------------------------------

namespace {

struct Lexer {
    const std::string& src;
    size_t pos = 0;
    int line = 1, col = 1;

    void advance() {
        if (pos < src.size() && src[pos] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        ++pos;
    }
    void skip_ws() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) advance();
    }
    char peek() {
        skip_ws();
        return pos < src.size() ? src[pos] : '\0';
    }
    bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
    bool ident_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    }
};

struct Parser {
    Lexer lex;
    Program prog;

    int parse_expr() {
        char c = lex.peek();
        int start_line = lex.line, start_col = lex.col;
        if (!lex.ident_start(c))
            throw ParseError(c == '\0' ? "unexpected end of input" : "expected identifier",
                             start_line, start_col);
        std::string name;
        while (lex.pos < lex.src.size() && lex.ident_char(lex.src[lex.pos])) {
            name += lex.src[lex.pos];
            lex.advance();
        }
        if (lex.peek() != '(') {
            // bare identifier: literal argument
            Node n;
            n.op = OpCode::Literal;
            n.literal = name;
            n.line = start_line;
            n.col = start_col;
            prog.nodes.push_back(n);
            return int(prog.nodes.size()) - 1;
        }
        OpCode op = OpCode::Literal;
        bool known = false;
        for (const auto& [nm, code] : op_table())
            if (nm == name) {
                op = code;
                known = true;
            }
        if (!known) throw ParseError("unknown operator '" + name + "'", start_line, start_col);
        lex.advance();  // consume '('
        std::vector<int> args;
        if (lex.peek() != ')') {
            while (true) {
                args.push_back(parse_expr());
                char nx = lex.peek();
                if (nx == ',') {
                    lex.advance();
                    continue;
                }
                if (nx == ')') break;
                throw ParseError("expected ',' or ')'", lex.line, lex.col);
            }
        }
        if (lex.peek() != ')') throw ParseError("expected ')'", lex.line, lex.col);
        lex.advance();
        Node n;
        n.op = op;
        n.args = std::move(args);
        n.line = start_line;
        n.col = start_col;
        prog.nodes.push_back(n);
        return int(prog.nodes.size()) - 1;
    }
};

}  // namespace

Program parse_program(const std::string& text) {
    Parser p{Lexer{text}, {}};
    p.prog.root = p.parse_expr();
    if (p.lex.peek() != '\0')
        throw ParseError("trailing input after program", p.lex.line, p.lex.col);
    return std::move(p.prog);
}

// ---- typechecker ------------------------------------------------------------

namespace {

struct Checker {
    Program& p;

    [[noreturn]] void fail(const Node& n, const std::string& msg) {
        throw TypeError(op_name(n.op) + " at line " + std::to_string(n.line) + ", column " +
                        std::to_string(n.col) + ": " + msg);
    }

    void expect_arity(const Node& n, size_t k) {
        if (n.args.size() != k)
            fail(n, "expected " + std::to_string(k) + " arguments, got " +
                        std::to_string(n.args.size()));
    }

    Type check_literal(Node& n, const char* wanted) {
        const std::string& s = n.literal;
        if (std::string(wanted) == "concept") {
            const ConceptInfo* ci = Vocab::instance().find(s);
            if (!ci) fail(n, "unknown concept '" + s + "'");
            n.type = ci->is_static ? Type::StaticConcept : Type::DynamicConcept;
            return *n.type;
        }
        if (std::string(wanted) == "attribute") {
            if (s != "color" && s != "material" && s != "shape")
                fail(n, "unknown attribute '" + s + "'");
            n.type = Type::Attribute;
            return Type::Attribute;
        }
        if (std::string(wanted) == "order") {
            if (s != "first" && s != "second" && s != "last")
                fail(n, "unknown order token '" + s + "'");
            n.type = Type::Order;
            return Type::Order;
        }
        fail(n, "unexpected literal '" + s + "'");
    }

    Type expect(Node& parent, int arg_idx, Type want) {
        Node& n = p.nodes[size_t(parent.args[size_t(arg_idx)])];
        Type got;
        if (n.op == OpCode::Literal) {
            const char* kind = want == Type::Attribute ? "attribute"
                               : want == Type::Order   ? "order"
                                                       : "concept";
            got = check_literal(n, kind);
        } else {
            got = check(parent.args[size_t(arg_idx)]);
        }
        bool ok = got == want;
        // events are accepted where a frame is wanted (implicit Get_frame)
        if (!ok && want == Type::Frame && got == Type::Event) ok = true;
        if (!ok && want == Type::StaticConcept && got == Type::StaticConcept) ok = true;
        if (!ok)
            fail(parent, "argument " + std::to_string(arg_idx + 1) + " has type " +
                             type_name(got) + ", expected " + type_name(want));
        return got;
    }

    Type check(int idx) {
        Node& n = p.nodes[size_t(idx)];
        switch (n.op) {
            case OpCode::Objects:
                expect_arity(n, 0);
                n.type = Type::Objects;
                break;
            case OpCode::Events:
            case OpCode::UnseenEvents:
                expect_arity(n, 0);
                n.type = Type::Events;
                break;
            case OpCode::Start:
            case OpCode::End:
                expect_arity(n, 0);
                n.type = Type::Event;
                break;
            case OpCode::FilterStaticConcept:
                expect_arity(n, 2);
                expect(n, 0, Type::Objects);
                expect(n, 1, Type::StaticConcept);
                n.type = Type::Objects;
                break;
            case OpCode::FilterDynamicConcept:
                expect_arity(n, 3);
                expect(n, 0, Type::Objects);
                expect(n, 1, Type::DynamicConcept);
                expect(n, 2, Type::Frame);
                n.type = Type::Objects;
                break;
            case OpCode::FilterIn:
            case OpCode::FilterOut:
            case OpCode::FilterCollision:
                expect_arity(n, 2);
                expect(n, 0, Type::Events);
                expect(n, 1, Type::Objects);
                n.type = Type::Events;
                break;
            case OpCode::GetColPartner:
                expect_arity(n, 2);
                expect(n, 0, Type::Event);
                expect(n, 1, Type::Object);
                n.type = Type::Object;
                break;
            case OpCode::FilterBefore:
            case OpCode::FilterAfter:
                expect_arity(n, 2);
                expect(n, 0, Type::Events);
                expect(n, 1, Type::Event);
                n.type = Type::Events;
                break;
            case OpCode::FilterOrder:
                expect_arity(n, 2);
                expect(n, 0, Type::Events);
                expect(n, 1, Type::Order);
                n.type = Type::Event;
                break;
            case OpCode::FilterAncestor:
                expect_arity(n, 2);
                expect(n, 0, Type::Event);
                expect(n, 1, Type::Events);
                n.type = Type::Events;
                break;
            case OpCode::GetFrame:
                expect_arity(n, 1);
                expect(n, 0, Type::Event);
                n.type = Type::Frame;
                break;
            case OpCode::QueryAttribute:
                expect_arity(n, 2);
                expect(n, 0, Type::Object);
                expect(n, 1, Type::Attribute);
                n.type = Type::StaticConcept;
                break;
            case OpCode::Count: {
                expect_arity(n, 1);
                Node& a = p.nodes[size_t(n.args[0])];
                Type got = a.op == OpCode::Literal ? check_literal(a, "concept") : check(n.args[0]);
                if (got != Type::Objects && got != Type::Events)
                    fail(n, "argument has type " + type_name(got) +
                                ", expected objects or events");
                n.type = Type::Int;
                break;
            }
            case OpCode::Exist: {
                expect_arity(n, 1);
                Type got = check(n.args[0]);
                if (got != Type::Objects && got != Type::Events)
                    fail(n, "argument has type " + type_name(got) +
                                ", expected objects or events");
                n.type = Type::Bool;
                break;
            }
            case OpCode::BelongTo:
                expect_arity(n, 2);
                expect(n, 0, Type::Event);
                expect(n, 1, Type::Events);
                n.type = Type::Bool;
                break;
            case OpCode::Negate:
                expect_arity(n, 1);
                expect(n, 0, Type::Bool);
                n.type = Type::Bool;
                break;
            case OpCode::Unique: {
                expect_arity(n, 1);
                Type got = check(n.args[0]);
                if (got == Type::Objects)
                    n.type = Type::Object;
                else if (got == Type::Events)
                    n.type = Type::Event;
                else
                    fail(n, "argument has type " + type_name(got) +
                                ", expected objects or events");
                break;
            }
            case OpCode::Literal:
                fail(n, "literal in operator position");
        }
        return *n.type;
    }
};

}  // namespace

void typecheck(Program& p) {
    if (p.root < 0) throw TypeError("empty program");
    Checker{p}.check(p.root);
}

Program parse_typed(const std::string& text) {
    Program p = parse_program(text);
    typecheck(p);
    return p;
}

namespace {
void print_node(const Program& p, int idx, std::string& out) {
    const Node& n = p.at(idx);
    if (n.op == OpCode::Literal) {
        out += n.literal;
        return;
    }
    out += op_name(n.op);
    out += '(';
    for (size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ", ";
        print_node(p, n.args[i], out);
    }
    out += ')';
}
}  // namespace

std::string pretty_print(const Program& p) {
    std::string out;
    if (p.root >= 0) print_node(p, p.root, out);
    return out;
}

}  // namespace dcl::prog
