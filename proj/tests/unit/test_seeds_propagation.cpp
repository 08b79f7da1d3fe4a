#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "esgkb/error.hpp"
#include "esgkb/propagation.hpp"
#include "esgkb/seeds.hpp"
#include "support.hpp"

using namespace esgkb;

TEST_CASE("clustering file io and checks") {
  std::istringstream in("0\t0\t0.9\n1\t-1\t0\n2\t0\t0.7\n");
  auto c = read_clustering(in, 3);
  CHECK(c.assignment == std::vector<int>{0, kNoise, 0});
  CHECK(c.members().at(0) == std::vector<std::size_t>{0, 2});
  std::istringstream missing("0\t0\t0.9\n");
  CHECK_THROWS(read_clustering(missing, 2));
  std::istringstream conf("0\t0\t1.5\n");
  CHECK_THROWS(read_clustering(conf, 1));
}

TEST_CASE("builtin clustering groups similar rows") {
  std::vector<Concept> names{Concept("a b"), Concept("c d"), Concept("e f")};
  EmbeddingTable t(names, {1, 0, 0.99, 0.05, 0, 1}, 2);
  auto c = cluster_builtin(t, {0.8});
  CHECK(c.assignment[0] == c.assignment[1]);
  CHECK(c.assignment[2] != c.assignment[0]);
  CHECK(c.confidence[0] > 0.9);
  CHECK(c.confidence[2] == 0.0);  // singleton
  CHECK(cqi(c, 0.6) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("cqi rejects an empty clustering") { CHECK_THROWS_AS(cqi(Clustering{}, 0.6), DomainError); }

TEST_CASE("consequential score counts uncovered neighbours") {
  // Star 0-{1,2,3} plus 3-4.
  SemanticGraph g(5);
  for (std::size_t k : {1, 2, 3}) g.add_edge(0, k, 0.9);
  g.add_edge(3, 4, 0.9);
  g.finalize();
  CHECK(consequential_score(0, g, {}) == 3);
  CHECK(consequential_score(3, g, {}) == 2);
  CHECK(consequential_score(3, g, {0}) == 2);  // neither 0 nor 4 is adjacent to the pick
  CHECK(consequential_score(4, g, {0}) == 0);  // its only neighbour 3 is adjacent to the pick
  CHECK(consequential_score(0, g, {4}) == 2);  // 3 is covered, 1 and 2 are not
}

TEST_CASE("seed selection basics") {
  SemanticGraph g(6);
  g.add_edge(0, 1, 0.9);
  g.add_edge(0, 2, 0.9);
  g.add_edge(3, 4, 0.9);
  g.finalize();
  Clustering c{{0, 0, 0, 1, 1, 2}, {1, 1, 1, 1, 1, 1}};
  auto s = select_seeds(g, c, {1, 0.01});
  CHECK(s.per_cluster.size() == 3);
  CHECK(s.per_cluster.at(0) == std::vector<std::size_t>{0});
  CHECK(s.per_cluster.at(1) == std::vector<std::size_t>{3});  // tie goes to the lower index
  CHECK(s.total == std::vector<std::size_t>{0, 3, 5});
  CHECK_THROWS_AS(select_seeds(g, c, {0, 0.01}), DomainError);
  CHECK_THROWS_AS(select_seeds(g, c, {1, 0.0}), DomainError);

  std::ostringstream out;
  write_seeds(out, s, {Concept("a b"), Concept("c d"), Concept("e f"), Concept("g h"), Concept("i j"), Concept("k l")});
  std::istringstream back(out.str());
  CHECK(read_seed_concepts(back).size() == 3);
}

TEST_CASE("property: seed count tracks the target and every cluster gets a seed") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 150;
    auto g = test::random_graph(rng, n, 0.05);
    Clustering c;
    std::uniform_int_distribution<int> cd(0, 9);
    for (std::size_t i = 0; i < n; ++i) {
      c.assignment.push_back(cd(rng));
      c.confidence.push_back(1.0);
    }
    for (std::size_t target : {1u, 15u, 40u, 150u}) {
      auto s = select_seeds(g, c, {target, 0.01});
      for (auto& [cid, m] : c.members()) CHECK(!s.per_cluster.at(cid).empty());
      CHECK(s.total.size() == s.estimated);
      CHECK(std::is_sorted(s.total.begin(), s.total.end()));
      if (target >= 15) CHECK(std::abs(static_cast<double>(s.total.size()) - static_cast<double>(target)) <= 10.0);
    }
  }
}

TEST_CASE("propagation rejects bad input") {
  SemanticGraph g(2);
  g.finalize();
  LabelMatrix none(2, {"x"});
  CHECK_THROWS_AS(propagate(g, none), ValidationError);
  LabelMatrix wrong(3, {"x"});
  wrong.seed(0, 0);
  CHECK_THROWS_AS(propagate(g, wrong), ValidationError);
}

TEST_CASE("isolated unlabelled nodes stay at zero") {
  SemanticGraph g(3);
  g.add_edge(0, 1, 1.0);
  g.finalize();
  LabelMatrix m(3, {"x", "y"});
  m.seed(0, 1);
  auto r = propagate(g, m);
  CHECK(r.converged);
  CHECK(r.labels.at(2, 0) == 0.0);
  CHECK(r.labels.at(2, 1) == 0.0);
  auto a = assign_labels(r.labels);
  REQUIRE(a.size() == 1);
  CHECK(a[0].node == 1);
  CHECK(a[0].cls == 1);
  CHECK(a[0].confidence == 1.0);
}

TEST_CASE("ties are skipped and tau filters weak rows") {
  // 1 sits between two seeds of different classes.
  SemanticGraph g(3);
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 2, 1.0);
  g.finalize();
  LabelMatrix m(3, {"x", "y"});
  m.seed(0, 0);
  m.seed(2, 1);
  auto r = propagate(g, m);
  std::size_t ambiguous = 0;
  CHECK(assign_labels(r.labels, 0.0, &ambiguous).empty());
  CHECK(ambiguous == 1);

  LabelMatrix one(3, {"x"});
  one.seed(0, 0);
  auto weak = propagate(g, one, {50, 0.5, 1e-12, 1});
  auto all = assign_labels(weak.labels, 0.0);
  CHECK(all.size() == 2);
  CHECK(assign_labels(weak.labels, weak.labels.at(2, 0)).size() == 1);  // strict threshold drops node 2
}

TEST_CASE("property: scores stay in [0,1] and propagation is thread independent") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = test::random_graph(rng, 80, 0.06);
    LabelMatrix m(80, {"a", "b", "c"});
    for (std::size_t i = 0; i < 80; i += 7) m.seed(i, i % 3);
    auto a = propagate(g, m, {50, 0.5, 1e-9, 1});
    auto b = propagate(g, m, {50, 0.5, 1e-9, 3});
    CHECK(a.labels == b.labels);
    for (std::size_t i = 0; i < 80; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(a.labels.at(i, c) >= 0.0);
        CHECK(a.labels.at(i, c) <= 1.0 + 1e-12);
      }
  }
}

TEST_CASE("knowledge-base propagation respects the taxonomy") {
  auto& tax = default_taxonomy();
  // Chain: seed 0 (Environmental, Emissions Control / Climate Emissions) - 1 - 2 ; seed 3 Social, isolated from them.
  std::vector<Concept> nodes{Concept("halve carbon emission"), Concept("cut carbon emission"),
                             Concept("cut greenhouse emission"), Concept("improve workplace safety"),
                             Concept("improve employee safety")};
  SemanticGraph g(5);
  g.add_edge(0, 1, 0.95);
  g.add_edge(1, 2, 0.9);
  g.add_edge(3, 4, 0.9);
  g.finalize();
  std::vector<Triple> seeds = {
      {nodes[0], Relation::aligns_with, "Environmental", Provenance::seed, 1.0, std::nullopt},
      {nodes[0], Relation::supports, "Emissions Control", Provenance::seed, 1.0, std::nullopt},
      {nodes[0], Relation::supports, "Climate Emissions", Provenance::seed, 1.0, std::nullopt},
      {nodes[3], Relation::aligns_with, "Social", Provenance::seed, 1.0, std::nullopt},
      {nodes[3], Relation::supports, "Workplace", Provenance::seed, 1.0, std::nullopt},
      {nodes[3], Relation::supports, "Workplace Wellness", Provenance::seed, 1.0, std::nullopt},
  };
  KbPropagationReport rep;
  auto out = propagate_kb(g, nodes, {nodes[0], nodes[3]}, seeds, tax, {}, &rep);
  KnowledgeBase kb(tax);
  for (auto& t : out) {
    CHECK(t.provenance == Provenance::propagated);
    CHECK(t.confidence > 0.0);
    CHECK(t.confidence <= 1.0);
    kb.add(t);
  }
  CHECK(rep.labelled_concepts == 3);
  CHECK(validate_triples(kb).empty());
  auto held = [&](const std::string& c, const std::string& topic) {
    return std::any_of(out.begin(), out.end(),
                       [&](const Triple& t) { return t.phrase.text() == c && t.topic == topic; });
  };
  CHECK(held("cut greenhouse emission", "Environmental"));
  CHECK(held("cut greenhouse emission", "Climate Emissions"));
  CHECK(held("improve employee safety", "Workplace Wellness"));
  CHECK_FALSE(held("improve employee safety", "Emissions Control"));
}

TEST_CASE("seed label reader") {
  std::istringstream in("halve carbon emission\tsupports\temissions control\textra\n");
  auto t = read_seed_labels(in, default_taxonomy());
  REQUIRE(t.size() == 1);
  CHECK(t[0].topic == "Emissions Control");
}
