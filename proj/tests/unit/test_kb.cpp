#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "esgkb/error.hpp"
#include "esgkb/kb.hpp"
#include "esgkb/text.hpp"
#include "support.hpp"

using namespace esgkb;

TEST_CASE("text helpers") {
  CHECK(text::normalize_phrase("  Reduce   WATER\tconsumption ") == "reduce water consumption");
  CHECK(text::split("a\t\tb", '\t') == std::vector<std::string>{"a", "", "b"});
  CHECK(text::split_ws("  a  b ") == std::vector<std::string>{"a", "b"});
  CHECK(text::fold_key(" Worker & Consumer SAFETY ") == text::fold_key("worker & consumer safety"));
  CHECK(text::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(text::hex64(255) == "00000000000000ff");
  CHECK(text::format_double(0.1) == "0.1");
  CHECK(std::stod(text::format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("concepts hold two or three words") {
  CHECK(Concept("Halve  Carbon emission").text() == "halve carbon emission");
  CHECK(Concept("cut emission").arity() == 2);
  CHECK(Concept("cut emission").verb() == "cut");
  CHECK_THROWS_AS(Concept("emission"), ValidationError);
  CHECK_THROWS_AS(Concept("a b c d"), ValidationError);
  CHECK_FALSE(Concept::try_make("").has_value());
}

TEST_CASE("shipped taxonomy shape") {
  auto& tax = default_taxonomy();
  CHECK(tax.count(TopicType::pillar) == 3);
  CHECK(tax.count(TopicType::broad) == 7);
  CHECK(tax.count(TopicType::sub) == 22);
  CHECK(tax.count(TopicType::cross_broad) == 4);
  CHECK(tax.count(TopicType::cross_sub) == 7);
  CHECK(tax.find("emissions control") != nullptr);
  CHECK(tax.at("  EMISSIONS CONTROL ").name == "Emissions Control");
  CHECK(tax.pillar_topic(Pillar::social).name == "Social");
  for (auto* t : tax.of_type(TopicType::sub)) {
    REQUIRE(t->parent);
    CHECK(tax.at(*t->parent).type == TopicType::broad);
  }
  for (auto* t : tax.of_type(TopicType::cross_sub)) CHECK(tax.at(*t->parent).type == TopicType::cross_broad);
  CHECK(tax.children_of("Resource Optimisation").size() == 3);
  CHECK_THROWS_AS(tax.at("Nonexistent"), ValidationError);
}

TEST_CASE("taxonomy file round trip and structural checks") {
  std::ostringstream out;
  write_taxonomy(out, default_taxonomy());
  std::istringstream in(out.str());
  auto again = read_taxonomy(in);
  CHECK(again.size() == default_taxonomy().size());

  std::istringstream orphan("Child\tsub\tMissing\tE\n");
  CHECK_THROWS(read_taxonomy(orphan));
}

TEST_CASE("relation legality by topic type") {
  CHECK(relation_legal(Relation::aligns_with, TopicType::pillar));
  CHECK_FALSE(relation_legal(Relation::supports, TopicType::pillar));
  CHECK_FALSE(relation_legal(Relation::aligns_with, TopicType::broad));
  CHECK(relation_legal(Relation::undermines, TopicType::cross_sub));
  CHECK(parse_relation("aligns with") == Relation::aligns_with);
  CHECK(parse_pillar("E") == Pillar::environmental);
}

TEST_CASE("triple files: tsv round trip, csv with header, duplicates") {
  auto& tax = default_taxonomy();
  std::istringstream in(
      "concept\trelation\ttopic\n"
      "halve carbon emission\tsupports\temissions control\n"
      "halve carbon emission\tsupports\tEmissions Control\n"
      "halve carbon emission\taligns_with\tEnvironmental\tpropagated\t0.75\tpositive\n");
  std::size_t dups = 0;
  auto kb = read_triples(in, tax, &dups);
  CHECK(kb.size() == 2);
  CHECK(dups == 1);
  CHECK(kb.triples()[0].topic == "Emissions Control");
  CHECK(kb.triples()[1].provenance == Provenance::propagated);
  CHECK(kb.triples()[1].confidence == 0.75);

  std::ostringstream out;
  write_triples(out, kb.triples());
  std::istringstream back(out.str());
  auto kb2 = read_triples(back, tax);
  REQUIRE(kb2.size() == 2);
  CHECK(kb2.triples()[1].polarity == Polarity::positive);

  test::TempDir dir;
  auto csv = dir.path / "kb.csv";
  std::ofstream(csv) << "concept,relation,topic\norganise charity event,supports,Outreach\n";
  CHECK(load_triples(csv, tax).size() == 1);

  std::istringstream badcols("halve carbon emission\tsupports\n");
  CHECK_THROWS_AS(read_triples(badcols, tax), ParseError);
  std::istringstream badrel("halve carbon emission\thelps\tOutreach\n");
  CHECK_THROWS_AS(read_triples(badrel, tax), ParseError);
}

namespace {

ValidationReport check(const std::string& body, ValidationOptions opts = {}) {
  std::istringstream in(body);
  return validate_triples(read_triples(in, default_taxonomy()), opts);
}

}  // namespace

TEST_CASE("validation rules") {
  SUBCASE("unknown topic and illegal relation") {
    auto r = check("cut emission\tsupports\tSpace Travel\ncut emission\tsupports\tEnvironmental\n");
    REQUIRE(r.size() == 2);
    CHECK(r[0].rule == Rule::unknown_topic);
    CHECK(r[1].rule == Rule::illegal_relation);
  }
  SUBCASE("consistent hierarchy is clean") {
    CHECK(check("cut emission\taligns_with\tEnvironmental\n"
                "cut emission\tsupports\tEmissions Control\n"
                "cut emission\tsupports\tClimate Emissions\n"
                "cut emission\tsupports\tOperations\n"
                "cut emission\tsupports\tSustainable Production Processes\n")
              .empty());
  }
  SUBCASE("Communications spans every pillar") {
    CHECK(check("publish sustainability report\taligns_with\tGovernance\n"
                "publish sustainability report\tsupports\tCommunications\n")
              .empty());
  }
  SUBCASE("cross sub under the wrong cross broad") {
    auto r = check("cut emission\tsupports\tEmissions Control\ncut emission\tsupports\tWater Conservation\n");
    REQUIRE(r.size() == 1);
    CHECK(r[0].rule == Rule::parent_child);
  }
  SUBCASE("topics from two pillars without a pillar triple") {
    auto r = check("cut emission\tsupports\tWorkplace Wellness\ncut emission\tsupports\tOversight\n");
    CHECK(std::any_of(r.begin(), r.end(), [](const Violation& v) { return v.rule == Rule::pillar_assignment; }));
  }
  SUBCASE("require_pillar") {
    std::string body = "organise charity event\tsupports\tOutreach\n";
    CHECK(check(body).empty());
    auto r = check(body, {true});
    REQUIRE(r.size() == 1);
    CHECK(r[0].rule == Rule::pillar_assignment);
  }
}

TEST_CASE("stats count relations per topic and overall") {
  std::istringstream in(
      "cut emission\taligns_with\tEnvironmental\n"
      "cut emission\tsupports\tEmissions Control\tseed\t1\t-\n"
      "cut carbon emission\tsupports\tEmissions Control\tpropagated\t0.9\t-\n"
      "involve injury\tundermines\tCompliance\n");
  auto st = kb_stats(read_triples(in, default_taxonomy()));
  CHECK(st.grand.total == 4);
  CHECK(st.grand.supports == 2);
  CHECK(st.grand.undermines == 1);
  CHECK(st.grand.aligns_with == 1);
  CHECK(st.unique_concepts == 3);
  CHECK(st.seed_concepts == 2);
  CHECK(st.propagated_concepts == 1);
  auto idx = *default_taxonomy().index_of("Emissions Control");
  CHECK(st.rows[idx].supports == 2);
  std::ostringstream out;
  write_stats(out, st);
  CHECK(out.str().find("TOTAL\t-\t4\t2\t1\t1\n") != std::string::npos);
}
