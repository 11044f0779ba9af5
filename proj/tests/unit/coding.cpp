#include "doctest.h"
#include "sinai/errors.hpp"
#include "sinai/coding.hpp"
#include "sinai/tables.hpp"

using namespace sinai;

namespace {
const Table& ref() {
    static const Table t = Table::build(tables::reference());
    return t;
}
}  // namespace

TEST_CASE("encoding is centred on the starting label") {
    const CollisionCoord c{{0, 0, 1}, 0.4, 0.2};
    const Word w = encode_orbit(ref(), c, 4);
    CHECK(w.first_index() == -4);
    CHECK(w.last_index() == 4);
    CHECK(w.at(0) == c.label);
    CHECK(w.admissible);
    CHECK_FALSE(w.partial);
}

TEST_CASE("serialized words parse back") {
    const Word w = encode_orbit(ref(), {{0, 0, 0}, 1.1, -0.4}, 3);
    bool canon = false;
    const Word back = parse_word(serialize(w, true), &canon);
    CHECK(canon);
    CHECK(back.offset == w.offset);
    CHECK(back.symbols == w.symbols);
    CHECK_THROWS_AS(parse_word("no header"), ParseError);
}

TEST_CASE("quotient forgets the lattice translation") {
    const Word w = encode_orbit(ref(), {{0, 0, 0}, 1.1, -0.4}, 3);
    const Word moved = translate(w, 2, -5);
    CHECK(quotient(w) == quotient(moved));
    CHECK(quotient(w).representative.at(0) == LiftedLabel{0, 0, 0});
}

TEST_CASE("shift moves the index window") {
    const Word w = encode_orbit(ref(), {{0, 0, 0}, 0.5, 0.1}, 3);
    const Word s = shift_left(w);
    for (int i = s.first_index(); i <= s.last_index(); ++i) CHECK(s.at(i) == w.at(i + 1));
}

TEST_CASE("repeated labels and long jumps are inadmissible") {
    Word w;
    w.symbols = {{0, 0, 0}, {0, 0, 1}, {0, 0, 1}};
    CHECK_FALSE(check_admissible(w, 3));
    w.symbols = {{0, 0, 0}, {5, 0, 1}};
    CHECK_FALSE(check_admissible(w, 3));
    w.symbols = {{0, 0, 0}, {1, 0, 1}, {1, 1, 0}};
    CHECK(check_admissible(w, 3));
}

TEST_CASE("rho distance halves per agreeing layer") {
    Word a, b;
    a.offset = b.offset = -2;
    a.symbols = {{0, 0, 1}, {0, 0, 0}, {0, 0, 1}, {0, 0, 0}, {1, 0, 1}};
    b.symbols = {{1, 0, 1}, {0, 0, 0}, {0, 0, 1}, {0, 0, 0}, {1, 0, 1}};
    CHECK(rho_distance(a, a) == doctest::Approx(0.25));
    CHECK(rho_distance(a, b) == doctest::Approx(0.5));
}

TEST_CASE("expansion constant formula") {
    CHECK(expansion_constant(1.0, 2.0) == doctest::Approx(1.0 / 1.25));
    CHECK_THROWS_AS(expansion_constant(1.0, 0.0), InvalidTable);
    CHECK(expansion_constant(ref()) > 0.0);
}
