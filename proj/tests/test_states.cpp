#include <doctest.h>

#include <random>

#include "chf/states.hpp"
#include "support/oracles.hpp"

using namespace chf;

TEST_CASE("bracket notation round trip") {
    for (const char* text : {"a", "a(b,c)", "if(cond(x),block(assign(y,1)),\"_\")", "\"a b\"(\"x,y\",\"q\\\"\")"}) {
        const Tree t = parse_tree(text);
        CHECK(parse_tree(serialize_tree(t)) == t);
    }
    const Tree t = parse_tree("  f ( g , h(i) ) ");
    CHECK(serialize_tree(t) == "f(g,h(i))");
    CHECK(t.size() == 4);
}

TEST_CASE("malformed tree text reports the offset") {
    CHECK_THROWS_AS(parse_tree(""), ParseError);
    CHECK_THROWS_AS(parse_tree("a(b"), ParseError);
    CHECK_THROWS_AS(parse_tree("a(b,)"), ParseError);
    CHECK_THROWS_AS(parse_tree("a b"), ParseError);
    try {
        parse_tree("a(b)c");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 4);
    }
    std::string deep;
    for (int i = 0; i < 20000; ++i) deep += "a(";
    CHECK_THROWS_AS(parse_tree(deep), ParseError);
}

TEST_CASE("sequence text") {
    const auto s = parse_sequence(R"(["a","bc"])");
    CHECK(s.symbols == std::vector<Label>{"a", "bc"});
    CHECK(serialize_sequence(s) == R"(["a","bc"])");
    CHECK(sequence_of_chars("ab").symbols == std::vector<Label>{"a", "b"});
    CHECK_THROWS_AS(parse_sequence("[1]"), ParseError);
    CHECK_THROWS_AS(parse_sequence("{"), ParseError);
}

TEST_CASE("canonicalize renames variables and orders commutative children") {
    CanonConfig cfg;
    cfg.variable_label_prefixes = {"var_"};
    cfg.commutative_labels = {"plus"};
    cfg.dead_labels = {"comment"};
    const Tree a = parse_tree("f(plus(var_y,var_x),comment(z),var_y)");
    const Tree b = parse_tree("f(plus(var_q,var_p),var_q)");
    const Tree ca = canonicalize(a, cfg);
    CHECK(ca == canonicalize(b, cfg));
    CHECK(serialize_tree(ca) == "f(plus(v1,v2),v1)");
    CHECK(canonicalize(ca, cfg) == ca);
}

TEST_CASE("canonicalize is the identity without rules") {
    const Tree t = parse_tree("b(a,c)");
    CHECK(canonicalize(t, CanonConfig{}) == t);
    const State s = sequence_of_chars("ba");
    CanonConfig cfg;
    cfg.commutative_labels = {"x"};
    CHECK(canonicalize(s, cfg) == s);
}

TEST_CASE("canonicalize is idempotent on random trees") {
    CanonConfig cfg;
    cfg.variable_label_prefixes = {"x"};
    cfg.commutative_labels = {"c"};
    cfg.dead_labels = {"d"};
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        const Tree t = oracle::random_tree(rng, {"c", "d", "x1", "x2", "k"}, 1 + static_cast<int>(rng() % 9));
        const Tree once = canonicalize(t, cfg);
        CHECK(canonicalize(once, cfg) == once);
    }
}

TEST_CASE("conflicting canonicalization lists are rejected") {
    CanonConfig cfg;
    cfg.commutative_labels = {"a"};
    cfg.dead_labels = {"a"};
    CHECK_THROWS_AS(validate(cfg), DataError);
}
