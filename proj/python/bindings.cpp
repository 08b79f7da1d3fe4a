#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "esgkb/analytics.hpp"
#include "esgkb/error.hpp"
#include "esgkb/graph.hpp"
#include "esgkb/kb.hpp"
#include "esgkb/matcher.hpp"
#include "esgkb/metrics.hpp"
#include "esgkb/parser.hpp"
#include "esgkb/propagation.hpp"
#include "esgkb/seeds.hpp"

namespace py = pybind11;
using namespace esgkb;

namespace {

using EdgeTuple = std::tuple<std::size_t, std::size_t, double>;
using TripleTuple = std::tuple<std::string, std::string, std::string>;

std::vector<Concept> to_concepts(const std::vector<std::string>& xs) {
  std::vector<Concept> out;
  out.reserve(xs.size());
  for (auto& x : xs) out.emplace_back(x);
  return out;
}

EmbeddingTable to_table(const std::vector<std::string>& concepts, const std::vector<std::vector<double>>& vectors) {
  if (concepts.size() != vectors.size()) throw ValidationError("concepts and vectors differ in length");
  std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
  std::vector<double> flat;
  flat.reserve(dim * vectors.size());
  for (auto& v : vectors) {
    if (v.size() != dim) throw ValidationError("vectors differ in dimension");
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return EmbeddingTable(to_concepts(concepts), std::move(flat), dim);
}

SemanticGraph to_graph(std::size_t n, const std::vector<EdgeTuple>& edges) {
  SemanticGraph g(n);
  for (auto& [i, j, w] : edges) {
    if (i >= n || j >= n) throw ValidationError("edge endpoint out of range");
    g.add_edge(i, j, w);
  }
  g.finalize();
  return g;
}

std::vector<EdgeTuple> from_graph(const SemanticGraph& g) {
  std::vector<EdgeTuple> out;
  for (auto& e : g.edge_list()) out.emplace_back(e.i, e.j, e.weight);
  return out;
}

Clustering to_clustering(const std::vector<int>& assignment, std::optional<std::vector<double>> confidence) {
  Clustering c{assignment, confidence ? *confidence : std::vector<double>(assignment.size(), 1.0)};
  c.check();
  return c;
}

KnowledgeBase to_kb(const std::vector<TripleTuple>& triples) {
  KnowledgeBase kb(default_taxonomy());
  for (auto& [c, r, t] : triples) {
    auto rel = parse_relation(r);
    if (!rel) throw ValidationError("unknown relation: " + r);
    auto* topic = default_taxonomy().find(t);
    kb.add({Concept(c), *rel, topic ? topic->name : t, Provenance::seed, 1.0, std::nullopt});
  }
  return kb;
}

Corpus to_corpus(const std::vector<std::pair<std::string, std::string>>& docs, const std::vector<Concept>& concepts) {
  Lemmatizer lem(concept_vocabulary(concepts));
  Corpus corpus;
  for (auto& [id, text] : docs) corpus.push_back(tokenize_report(text, id, lem));
  return corpus;
}

py::dict match_dict(const MatchResult& m) {
  py::dict d;
  d["concept"] = m.phrase.text();
  d["mode"] = std::string(to_string(m.mode));
  d["doc_id"] = m.doc_id;
  d["sentence"] = m.sentence;
  d["span"] = m.span();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ESG knowledge-base construction and analysis.";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "taxonomy",
      [] {
        py::list out;
        for (auto& t : default_taxonomy().topics()) {
          py::dict d;
          d["name"] = t.name;
          d["type"] = std::string(to_string(t.type));
          d["parent"] = t.parent;
          std::vector<std::string> scope;
          for (auto p : t.pillar_scope) scope.emplace_back(to_string(p));
          d["pillars"] = scope;
          out.append(d);
        }
        return out;
      },
      "Topics of the shipped taxonomy in file order.");

  m.def(
      "parse_conllu",
      [](const std::string& text, const std::string& doc_id) {
        std::istringstream in(text);
        std::vector<std::tuple<std::string, std::string, std::string, std::string>> out;
        for (auto& s : read_conllu(in, doc_id))
          for (auto& c : parse_concepts(s))
            out.emplace_back(c.phrase.text(), std::string(to_string(c.pattern)), c.doc_id, c.sent_id);
        return out;
      },
      py::arg("text"), py::arg("doc_id") = "doc",
      "Candidate concepts per sentence as (concept, pattern, doc_id, sent_id).");

  m.def(
      "count_and_filter",
      [](const std::vector<std::string>& candidates, std::size_t k) {
        ConceptCounter counter;
        for (auto& c : candidates) counter.add(Concept(c));
        std::vector<std::pair<std::string, std::size_t>> out;
        for (auto& r : count_and_filter(counter, k)) out.emplace_back(r.phrase.text(), r.frequency);
        return out;
      },
      py::arg("candidates"), py::arg("k") = 110000, "Top-k concepts by frequency as (concept, count).");

  m.def(
      "build_graph",
      [](const std::vector<std::string>& concepts, const std::vector<std::vector<double>>& vectors, double threshold,
         unsigned threads) {
        auto table = to_table(concepts, vectors);
        py::gil_scoped_release release;
        return from_graph(build_graph(table, {threshold, threads}));
      },
      py::arg("concepts"), py::arg("vectors"), py::arg("threshold") = 0.80, py::arg("threads") = 1,
      "Edges (i, j, cosine) with i < j for pairs strictly above the threshold.");

  m.def(
      "cluster",
      [](const std::vector<std::string>& concepts, const std::vector<std::vector<double>>& vectors, double threshold) {
        auto c = cluster_builtin(to_table(concepts, vectors), {threshold});
        return std::make_pair(c.assignment, c.confidence);
      },
      py::arg("concepts"), py::arg("vectors"), py::arg("threshold") = 0.80,
      "Built-in clustering as (assignment, confidence); -1 marks noise.");

  m.def(
      "cqi",
      [](const std::vector<int>& assignment, const std::vector<double>& confidence, double tau) {
        return cqi(to_clustering(assignment, confidence), tau);
      },
      py::arg("assignment"), py::arg("confidence"), py::arg("tau") = 0.60);

  m.def(
      "select_seeds",
      [](std::size_t n, const std::vector<EdgeTuple>& edges, const std::vector<int>& assignment, std::size_t target,
         double beta) {
        if (assignment.size() != n) throw ValidationError("assignment length differs from node count");
        return select_seeds(to_graph(n, edges), to_clustering(assignment, std::nullopt), {target, beta}).total;
      },
      py::arg("n"), py::arg("edges"), py::arg("assignment"), py::arg("target"), py::arg("beta") = 0.01,
      "Seed node indices, ascending.");

  m.def(
      "propagate",
      [](std::size_t n, const std::vector<EdgeTuple>& edges, const std::map<std::size_t, std::size_t>& seeds,
         const std::vector<std::string>& classes, std::size_t n_layers, double alpha, unsigned threads) {
        LabelMatrix y(n, classes);
        for (auto [node, cls] : seeds) {
          if (node >= n || cls >= classes.size()) throw ValidationError("seed out of range");
          y.seed(node, cls);
        }
        auto g = to_graph(n, edges);
        py::gil_scoped_release release;
        auto r = propagate(g, y, {n_layers, alpha, 1e-9, threads});
        std::vector<std::vector<double>> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i].assign(r.labels.row(i).begin(), r.labels.row(i).end());
        return rows;
      },
      py::arg("n"), py::arg("edges"), py::arg("seeds"), py::arg("classes"), py::arg("n_layers") = 50,
      py::arg("alpha") = 0.5, py::arg("threads") = 1,
      "Label scores per node after propagation; seeds maps node index to class index.");

  m.def(
      "validate",
      [](const std::vector<TripleTuple>& triples, bool require_pillar) {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (auto& v : validate_triples(to_kb(triples), {require_pillar}))
          out.emplace_back(std::string(to_string(v.rule)), v.phrase, v.detail);
        return out;
      },
      py::arg("triples"), py::arg("require_pillar") = false,
      "Rule violations as (rule, concept, detail) for (concept, relation, topic) triples.");

  m.def(
      "stats",
      [](const std::vector<TripleTuple>& triples) {
        auto st = kb_stats(to_kb(triples));
        py::dict d;
        auto row = [](const StatsRow& r) {
          py::dict x;
          x["total"] = r.total;
          x["supports"] = r.supports;
          x["undermines"] = r.undermines;
          x["aligns_with"] = r.aligns_with;
          return x;
        };
        py::dict topics;
        for (auto& r : st.rows) topics[py::str(r.topic)] = row(r);
        d["topics"] = topics;
        d["total"] = row(st.grand);
        d["unique_concepts"] = st.unique_concepts;
        return d;
      },
      py::arg("triples"));

  m.def(
      "match",
      [](const std::vector<std::string>& concepts, const std::vector<std::pair<std::string, std::string>>& docs,
         const std::string& mode, bool surface_strict) {
        auto cs = to_concepts(concepts);
        auto corpus = to_corpus(docs, cs);
        MatchOptions opts;
        opts.surface_strict = surface_strict;
        ConceptMatcher matcher(cs, opts);
        std::vector<MatchResult> rs;
        if (mode == "exact") rs = matcher.match_exact(corpus);
        else if (mode == "flexible") rs = matcher.match_flexible(corpus);
        else throw ValidationError("mode must be exact or flexible");
        py::list out;
        for (auto& r : rs) out.append(match_dict(r));
        return out;
      },
      py::arg("concepts"), py::arg("docs"), py::arg("mode") = "exact", py::arg("surface_strict") = false,
      "Concept occurrences in (doc_id, text) documents; spans are 0-based inclusive token indices.");

  m.def(
      "topic_frequencies",
      [](const std::vector<TripleTuple>& triples, const std::vector<std::pair<std::string, std::string>>& docs,
         const std::string& mode) {
        auto kb = to_kb(triples);
        auto cs = kb.concepts();
        ConceptMatcher matcher(cs);
        auto corpus = to_corpus(docs, cs);
        auto f = topic_frequencies(mode == "flexible" ? matcher.match_flexible(corpus) : matcher.match_exact(corpus), kb);
        std::map<std::string, std::size_t> out;
        for (auto& t : f.topics) out[t.name] = t.count;
        return out;
      },
      py::arg("triples"), py::arg("docs"), py::arg("mode") = "exact",
      "Supporting-concept match counts per non-pillar topic.");

  m.def(
      "metrics",
      [](const std::vector<std::string>& terms, const std::vector<std::tuple<std::string, bool, bool>>& judgments) {
        std::vector<Judgment> js;
        for (auto& [t, rel, act] : judgments) js.push_back({t, rel, act, "python"});
        auto mt = aggregate_metrics(collect_topic_terms(terms), js);
        py::dict d;
        d["terms"] = mt.terms;
        d["esg_unique"] = mt.esg_unique;
        d["esg_rel"] = mt.esg_rel;
        d["esg_act"] = mt.esg_act;
        return d;
      },
      py::arg("terms"), py::arg("judgments"),
      "Topic-term quality from (term, esg_related, action_oriented) judgments.");

}
