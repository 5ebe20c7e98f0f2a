#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dcl/common.hpp"
#include "dcl/proglang.hpp"

using namespace dcl;
using namespace dcl::prog;

TEST_CASE("parse builds the expected tree") {
    Program p = parse_program("Count(Filter_dynamic_concept(Objects(), falling, End()))");
    CHECK(p.nodes.size() == 5);  // Objects, falling, End, Filter, Count
    CHECK(p.at(p.root).op == OpCode::Count);
    typecheck(p);
    CHECK(*p.at(p.root).type == Type::Int);
}

TEST_CASE("typecheck assigns table signatures") {
    Program p = parse_typed("Exist(Filter_static_concept(Objects(), red))");
    CHECK(*p.at(p.root).type == Type::Bool);

    Program q = parse_typed("Filter_in(Events(), Objects())");
    CHECK(*q.at(q.root).type == Type::Events);

    Program r = parse_typed("Negate(Exist(Objects()))");
    CHECK(*r.at(r.root).type == Type::Bool);
}

TEST_CASE("syntax errors carry positions") {
    try {
        parse_program("Count(");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.col == 7);
        CHECK(e.line == 1);
    }
    CHECK_THROWS_AS(parse_program("Nonsense(Objects())"), ParseError);
    CHECK_THROWS_AS(parse_program("Count(Objects()) extra"), ParseError);
}

TEST_CASE("type errors name the mismatch") {
    Program p = parse_program("Count(Negate(Exist(Objects())))");
    try {
        typecheck(p);
        FAIL("expected a type error");
    } catch (const TypeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("objects or events") != std::string::npos);
    }
    CHECK_THROWS_AS(typecheck(*new Program(parse_program("Unique(Start())"))), TypeError);
    Program arity = parse_program("Filter_static_concept(Objects())");
    CHECK_THROWS_AS(typecheck(arity), TypeError);
}

TEST_CASE("events coerce to frames in dynamic filters") {
    Program p = parse_typed("Count(Filter_dynamic_concept(Objects(), moving, Start()))");
    CHECK(*p.at(p.root).type == Type::Int);
    Program q = parse_typed(
        "Count(Filter_dynamic_concept(Objects(), moving, "
        "Get_frame(Filter_order(Filter_collision(Events(), Objects()), first))))");
    CHECK(*q.at(q.root).type == Type::Int);
}

TEST_CASE("pretty print round-trips canonical text") {
    std::string text =
        "Query_Attribute(Unique(Filter_static_concept(Objects(), sphere)), color)";
    Program p = parse_typed(text);
    CHECK(pretty_print(p) == text);
    Program q = parse_program("  Query_Attribute( Unique(Filter_static_concept(Objects( ) ,"
                              " sphere) ), color )  ");
    CHECK(pretty_print(q) == text);
    CHECK(q == p);
}

namespace {
// random well-typed program generator for the round-trip property
std::string random_selector(Rng& rng, int depth) {
    if (depth <= 0 || rng.chance(0.4)) return "Objects()";
    static const char* concepts[] = {"red", "blue", "metal", "rubber", "cube", "sphere"};
    return "Filter_static_concept(" + random_selector(rng, depth - 1) + ", " +
           concepts[rng.below(6)] + ")";
}

std::string random_program(Rng& rng) {
    switch (rng.below(6)) {
        case 0: return "Count(" + random_selector(rng, 3) + ")";
        case 1: return "Exist(" + random_selector(rng, 3) + ")";
        case 2:
            return "Query_Attribute(Unique(" + random_selector(rng, 2) + "), " +
                   std::vector<std::string>{"color", "material", "shape"}[rng.below(3)] + ")";
        case 3: return "Count(Filter_in(Events(), " + random_selector(rng, 2) + "))";
        case 4:
            return "Exist(Filter_collision(Events(), Filter_dynamic_concept(" +
                   random_selector(rng, 1) + ", moving, End())))";
        default:
            return "Negate(Exist(Filter_out(Events(), " + random_selector(rng, 2) + ")))";
    }
}
}  // namespace

TEST_CASE("parse/print round trip on random programs") {
    Rng rng(31);
    for (int i = 0; i < 1000; ++i) {
        std::string text = random_program(rng);
        Program p = parse_typed(text);
        std::string printed = pretty_print(p);
        Program q = parse_typed(printed);
        CHECK(q == p);
        CHECK(pretty_print(q) == printed);
    }
}

TEST_CASE("descriptors render and parse") {
    Descriptor d;
    d.color = 1;  // red
    d.material = 0;
    d.shape = 0;
    CHECK(d.text(false) == "red metal cube");
    CHECK(d.text(true) == "red metal cubes");
    CHECK(d.selector() ==
          "Filter_static_concept(Filter_static_concept(Filter_static_concept(Objects(), cube), "
          "metal), red)");
    auto parsed = parse_descriptor({"red", "metal", "cubes"});
    REQUIRE(parsed.has_value());
    CHECK(parsed->color == 1);
    CHECK(parsed->material == 0);
    CHECK(parsed->shape == 0);
    CHECK(parse_descriptor({"objects"}).has_value());
    CHECK_FALSE(parse_descriptor({"metal", "red", "cubes"}).has_value());
    CHECK_FALSE(parse_descriptor({"bogus"}).has_value());
}

TEST_CASE("question templates parse their own renderings") {
    auto qs = {
        std::make_pair(std::string("How many objects are falling?"),
                       std::string("Count(Filter_dynamic_concept(Objects(), falling, End()))")),
        std::make_pair(
            std::string("Are there any falling red objects?"),
            std::string("Exist(Filter_dynamic_concept(Filter_static_concept(Objects(), red), "
                        "falling, End()))")),
        std::make_pair(
            std::string("What is the color of the sphere?"),
            std::string(
                "Query_Attribute(Unique(Filter_static_concept(Objects(), sphere)), color)")),
        std::make_pair(std::string("How many objects are there?"),
                       std::string("Count(Objects())")),
    };
    for (const auto& [text, expected] : qs) {
        bool matched = false;
        for (const auto* templates : {&tower_templates(), &qa_templates()}) {
            try {
                ParsedQuestion q = parse_question(text, *templates);
                CHECK(pretty_print(q.program) == expected);
                matched = true;
                break;
            } catch (const ParseError&) {
            }
        }
        CHECK(matched);
    }
    CHECK_THROWS_AS(parse_question("What is love?", qa_templates()), ParseError);
}

TEST_CASE("template registry exports as JSON") {
    auto j = templates_to_json(qa_templates());
    CHECK(j.size() == qa_templates().size());
    CHECK(j[0].contains("pattern"));
    CHECK(j[0].contains("slots"));
    CHECK(j[0].contains("program_skeleton"));
}
