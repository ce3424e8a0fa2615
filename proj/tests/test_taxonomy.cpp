#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "scifield/taxonomy.hpp"

using namespace scifield;

namespace {

Taxonomy parse_text(const std::string& text) {
    std::istringstream in(text);
    return Taxonomy::parse(in, "inline");
}

const std::string kToy =
    "1\t0\t-\t1\t0\tAlpha\n"
    "2\t0\t-\t1\t1\tBeta\n"
    "10\t1\t1\t1\t0-0\tAlpha one\n"
    "11\t1\t1\t1\t0-1\tAlpha two\n"
    "12\t1\t2\t1\t1-0\tBeta one\n";

}  // namespace

TEST_CASE("toy file yields expected level sizes") {
    Taxonomy tax = parse_text(kToy);
    CHECK(tax.level_nodes(0).size() == 2);
    CHECK(tax.level_nodes(1).size() == 3);
    CHECK(tax.level_nodes(2).empty());
    CHECK(tax.children(1).size() == 2);
    CHECK(tax.children(2).size() == 1);
}

TEST_CASE("discipline coding table matches the shipped fixture") {
    Taxonomy tax = Taxonomy::load(std::string(SCIFIELD_DATA_DIR) + "/taxonomy_appendix_c.tsv");
    const auto& coding = tax.discipline_coding();
    CHECK(coding.size() == 44);
    CHECK(coding.at("infk") == 0);
    CHECK(coding.at("bio") == 43);
    CHECK(coding.at("econ") == 1);
    CHECK(coding.at("appliedm") == 42);
}

TEST_CASE("pruning keeps only classifiable disciplines") {
    Taxonomy tax = Taxonomy::load(std::string(SCIFIELD_DATA_DIR) + "/taxonomy_appendix_c.tsv");
    std::vector<int64_t> leaves = tax.leaf_disciplines();
    CHECK(leaves.size() == 44);
    for (int64_t id : leaves) {
        CHECK(tax.node(id).name != "The arts");
        CHECK(tax.node(id).classifiable);
    }
    // stable across calls
    CHECK(tax.leaf_disciplines() == leaves);

    SUBCASE("no grouping nodes means identity") {
        Taxonomy toy = parse_text(kToy);
        CHECK(toy.leaf_disciplines() == toy.level_nodes(0));
    }
    SUBCASE("single-node tree") {
        Taxonomy one = parse_text("7\t0\t-\t1\t0\tOnly\n");
        CHECK(one.leaf_disciplines() == std::vector<int64_t>{7});
    }
}

TEST_CASE("structural errors are rejected with the offending node named") {
    SUBCASE("duplicate discipline code") {
        CHECK_THROWS_WITH_AS(parse_text("1\t0\t-\t1\t0\tA\n2\t0\t-\t1\t0\tB\n"),
                             doctest::Contains("duplicate discipline code"), Error);
    }
    SUBCASE("dangling parent id") {
        CHECK_THROWS_WITH_AS(parse_text("1\t0\t-\t1\t0\tA\n10\t1\t9\t1\t0-0\tF\n"),
                             doctest::Contains("dangling parent"), Error);
    }
    SUBCASE("field coding referencing a missing discipline") {
        // field "5-2" but no discipline 5
        CHECK_THROWS_WITH_AS(parse_text("1\t0\t-\t1\t0\tA\n10\t1\t1\t1\t5-2\tF\n"),
                             doctest::Contains("dangling parent"), Error);
    }
    SUBCASE("level violation") {
        CHECK_THROWS_WITH_AS(parse_text("1\t0\t-\t1\t0\tA\n10\t2\t1\t1\t0-0-0\tS\n"),
                             doctest::Contains("level"), Error);
    }
    SUBCASE("codes must form a 0..n-1 bijection") {
        CHECK_THROWS_WITH_AS(parse_text("1\t0\t-\t1\t0\tA\n2\t0\t-\t1\t2\tB\n"),
                             doctest::Contains("codes must form"), Error);
    }
    SUBCASE("duplicate node id") {
        CHECK_THROWS_WITH_AS(parse_text("1\t0\t-\t1\t0\tA\n1\t0\t-\t1\t1\tB\n"),
                             doctest::Contains("duplicate node id"), Error);
    }
}

TEST_CASE("label encoding indexes the sibling set in file order") {
    Taxonomy tax = Taxonomy::load(std::string(SCIFIELD_DATA_DIR) + "/taxonomy_desk.tsv");
    int64_t bio = tax.require_coding("43");
    int64_t pathology = tax.require_coding("43-30");
    REQUIRE(tax.children(bio).size() == 31);

    LabelVector vec = encode_labels(tax, {pathology}, 1, bio);
    CHECK(vec.bits.size() == 31);
    CHECK(vec.bits[30] == 1);
    for (size_t i = 0; i < 30; ++i) CHECK(vec.bits[i] == 0);

    SUBCASE("empty set is rejected in multi-label mode") {
        CHECK_THROWS_AS(encode_labels(tax, {}, 1, bio, LabelMode::multi), Error);
    }
    SUBCASE("single-label mode wants exactly one") {
        int64_t endo = tax.require_coding("43-2");
        CHECK_THROWS_AS(encode_labels(tax, {pathology, endo}, 1, bio, LabelMode::single), Error);
    }
    SUBCASE("all siblings give the all-ones vector") {
        LabelVector all = encode_labels(tax, tax.children(bio), 1, bio);
        for (uint8_t b : all.bits) CHECK(b == 1);
    }
    SUBCASE("labels outside the scope are rejected") {
        int64_t physics_field = tax.require_coding("3-18");
        CHECK_THROWS_AS(encode_labels(tax, {physics_field}, 1, bio), Error);
        CHECK_THROWS_AS(encode_labels(tax, {424242}, 1, bio), Error);
    }
}

TEST_CASE("encode/decode round trip over random label subsets") {
    Taxonomy tax = Taxonomy::load(std::string(SCIFIELD_DATA_DIR) + "/taxonomy_desk.tsv");
    int64_t bio = tax.require_coding("43");
    const std::vector<int64_t>& fields = tax.children(bio);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int64_t> subset;
        for (int64_t f : fields) {
            if (rng() % 3 == 0) subset.push_back(f);
        }
        if (subset.empty()) subset.push_back(fields[rng() % fields.size()]);
        LabelVector vec = encode_labels(tax, subset, 1, bio);
        CHECK(vec.bits.size() == fields.size());  // length independent of subset
        std::vector<int64_t> back = decode_labels(tax, vec);
        std::sort(subset.begin(), subset.end());
        CHECK(back == subset);
    }
}

TEST_CASE("root-to-leaf paths") {
    Taxonomy tax = Taxonomy::load(std::string(SCIFIELD_DATA_DIR) + "/taxonomy_desk.tsv");
    int64_t sub = tax.require_coding("43-30-1");
    auto [d, f, s] = tax.path_of(sub);
    CHECK(tax.node(d).coding == "43");
    CHECK(tax.node(f).coding == "43-30");
    CHECK(s == sub);
}
