// esgkb: build an ESG knowledge base from parsed text and use it for topic
// analysis. Every subcommand reads and writes plain files so any stage can
// be rerun on its own; `pipeline` chains them in a work directory.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "esgkb/analytics.hpp"
#include "esgkb/annotation.hpp"
#include "esgkb/error.hpp"
#include "esgkb/graph.hpp"
#include "esgkb/kb.hpp"
#include "esgkb/matcher.hpp"
#include "esgkb/metrics.hpp"
#include "esgkb/parser.hpp"
#include "esgkb/propagation.hpp"
#include "esgkb/seeds.hpp"
#include "esgkb/text.hpp"

namespace fs = std::filesystem;
using namespace esgkb;

namespace {

// ---- file helpers ----

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return in;
}

// Writes through a temporary file so a failing stage never leaves a
// truncated artifact behind.
void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs, const std::set<std::string>& exts) {
  std::vector<fs::path> out;
  for (auto& s : inputs) {
    fs::path p(s);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && exts.count(e.path().extension().string())) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw IoError("input not found: " + s);
      out.push_back(p);
    }
  }
  return out;
}

std::vector<Concept> read_concept_column(const fs::path& p) {
  auto in = open_in(p);
  std::vector<Concept> out;
  for (auto& r : read_ranked(in)) out.push_back(r.phrase);
  return out;
}

// ---- shared settings ----

struct Settings {
  std::string taxonomy;
  unsigned threads = 0;
  // annotator
  std::string backend = "mock";
  std::string mock_table;
  std::string base_url = RemoteConfig{}.base_url;
  std::string model = RemoteConfig{}.model;
  std::string api_key_env = RemoteConfig{}.api_key_env;
  int timeout = 60;
  std::size_t max_retries = 3;
  std::size_t batch_size = 20;
  std::size_t max_in_flight = 4;
  std::string cache;
  // hyperparameters
  std::size_t top_k = 110000;
  double similarity_threshold = 0.80;
  double cluster_threshold = 0.80;
  double cqi_tau = 0.60;
  std::size_t seed_target = 0;
  double beta = 0.01;
  std::size_t n_layers = 50;
  double alpha = 0.5;
  double tau_assign = 0.0;
  bool require_pillar = false;
  // matching / analysis
  std::string mode = "exact";
  bool surface_strict = false;
  bool unordered = false;
  std::size_t top_n = 10;
};

const Taxonomy& taxonomy(const Settings& s) {
  static std::optional<Taxonomy> loaded;
  if (s.taxonomy.empty()) return default_taxonomy();
  if (!loaded) loaded = load_taxonomy(s.taxonomy);
  return *loaded;
}

struct AnnotatorHandle {
  std::unique_ptr<AnnotatorBackend> backend;
  std::unique_ptr<ResponseCache> cache;
  std::unique_ptr<Annotator> annotator;
};

AnnotatorHandle make_annotator(const Settings& s) {
  AnnotatorHandle h;
  if (s.backend == "mock") {
    if (s.mock_table.empty()) throw ValidationError("the mock backend needs --mock_table");
    h.backend = std::make_unique<MockBackend>(MockBackend::from_file(s.mock_table));
  } else if (s.backend == "remote") {
    RemoteConfig rc;
    rc.base_url = s.base_url;
    rc.model = s.model;
    rc.api_key_env = s.api_key_env;
    rc.timeout = std::chrono::seconds(s.timeout);
    rc.max_retries = s.max_retries;
    h.backend = std::make_unique<RemoteBackend>(rc);
  } else {
    throw ValidationError("unknown backend '" + s.backend + "' (expected mock or remote)");
  }
  if (!s.cache.empty()) h.cache = std::make_unique<ResponseCache>(s.cache);
  AnnotatorOptions ao;
  ao.batch_size = s.batch_size;
  ao.max_in_flight = s.max_in_flight;
  h.annotator = std::make_unique<Annotator>(*h.backend, ao, h.cache.get());
  return h;
}

// ---- stages ----

void stage_parse(const std::vector<fs::path>& files, const fs::path& out) {
  std::vector<CandidateConcept> all;
  ParseDiagnostics diag;
  std::size_t sentences = 0;
  for (auto& f : files) {
    for (auto& s : load_conllu(f)) {
      ++sentences;
      auto found = parse_concepts(s, {}, &diag);
      all.insert(all.end(), found.begin(), found.end());
    }
  }
  spdlog::info("parse: {} sentences, {} candidate occurrences, {} malformed tokens skipped", sentences, all.size(),
               diag.skipped_tokens);
  write_file(out, [&](std::ostream& o) { write_candidates(o, all); });
}

void stage_filter(const fs::path& candidates, std::size_t top_k, const fs::path& out) {
  auto in = open_in(candidates);
  auto ranked = count_and_filter(read_candidates(in), top_k);
  spdlog::info("filter: kept {} concepts (top_k {})", ranked.size(), top_k);
  write_file(out, [&](std::ostream& o) { write_ranked(o, ranked); });
}

void stage_qc(const fs::path& concepts, Annotator& ann, const fs::path& out, const std::string& rejected_out) {
  auto in = open_in(concepts);
  auto ranked = read_ranked(in);
  std::vector<Concept> phrases;
  for (auto& r : ranked) phrases.push_back(r.phrase);
  auto reordered = ann.reorder(phrases);
  auto verdicts = ann.coherence(reordered);
  ConceptCounter kept;
  std::vector<RankedConcept> dropped;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (verdicts[i] && *verdicts[i]) kept.add(reordered[i], ranked[i].frequency);
    else dropped.push_back({reordered[i], ranked[i].frequency});
  }
  auto result = count_and_filter(kept, std::max<std::size_t>(ranked.size(), 1));
  spdlog::info("qc: {} of {} concepts kept", result.size(), ranked.size());
  write_file(out, [&](std::ostream& o) { write_ranked(o, result); });
  if (!rejected_out.empty()) write_file(rejected_out, [&](std::ostream& o) { write_ranked(o, dropped); });
}

EmbeddingTable node_embeddings(const std::vector<Concept>& wanted, const fs::path& embeddings) {
  std::vector<Concept> missing;
  auto table = load_embeddings(embeddings).subset(wanted, &missing);
  if (!missing.empty()) spdlog::warn("{} concepts have no embedding and are left out of the graph", missing.size());
  return table;
}

void stage_graph(const fs::path& concepts, const fs::path& embeddings, const Settings& s, const fs::path& nodes_out,
                 const fs::path& edges_out) {
  auto table = node_embeddings(read_concept_column(concepts), embeddings);
  auto g = build_graph(table, {s.similarity_threshold, s.threads});
  spdlog::info("graph: {} nodes, {} edges", g.size(), g.edge_count());
  write_file(nodes_out, [&](std::ostream& o) { write_nodes(o, table.concepts()); });
  write_file(edges_out, [&](std::ostream& o) { write_graph(o, g); });
}

std::vector<Concept> load_nodes(const fs::path& p) {
  auto in = open_in(p);
  return read_nodes(in);
}

SemanticGraph load_graph(const fs::path& p, std::size_t n) {
  auto in = open_in(p);
  return read_graph(in, n);
}

void stage_cluster(const fs::path& nodes_path, const fs::path& embeddings, const std::string& import,
                   const Settings& s, const fs::path& out) {
  auto nodes = load_nodes(nodes_path);
  Clustering c;
  if (!import.empty()) {
    c = load_clustering(import, nodes.size());
  } else {
    auto table = load_embeddings(embeddings).subset(nodes);
    if (table.size() != nodes.size()) throw ValidationError("cluster: some graph nodes have no embedding");
    c = cluster_builtin(table, {s.cluster_threshold});
  }
  spdlog::info("cluster: {} clusters over {} nodes", c.members().size(), c.size());
  write_file(out, [&](std::ostream& o) { write_clustering(o, c); });
}

double stage_cqi(const fs::path& nodes, const fs::path& clusters, double tau) {
  return cqi(load_clustering(clusters, load_nodes(nodes).size()), tau);
}

void stage_seeds(const fs::path& nodes_path, const fs::path& graph_path, const fs::path& clusters,
                 const Settings& s, const fs::path& out) {
  auto nodes = load_nodes(nodes_path);
  auto g = load_graph(graph_path, nodes.size());
  auto c = load_clustering(clusters, nodes.size());
  std::size_t target = s.seed_target ? s.seed_target : std::max<std::size_t>(1, (nodes.size() + 9) / 10);
  auto seeds = select_seeds(g, c, {target, s.beta});
  spdlog::info("seeds: {} seeds (target {}, P = {})", seeds.total.size(), target, seeds.proportion);
  write_file(out, [&](std::ostream& o) { write_seeds(o, seeds, nodes); });
}

void stage_annotate(const fs::path& seeds_path, Annotator& ann, const Taxonomy& tax, const fs::path& triples_out,
                    const std::string& annotations_out) {
  auto in = open_in(seeds_path);
  auto seeds = read_seed_concepts(in);
  auto anns = ann.annotate_seeds(seeds, tax);
  std::vector<Triple> triples;
  for (auto& a : anns) {
    auto t = a.triples(tax);
    triples.insert(triples.end(), t.begin(), t.end());
  }
  spdlog::info("annotate: {} seeds, {} seed triples", seeds.size(), triples.size());
  write_file(triples_out, [&](std::ostream& o) { write_triples(o, triples); });
  if (!annotations_out.empty()) write_file(annotations_out, [&](std::ostream& o) { write_annotations(o, anns); });
}

void stage_propagate(const fs::path& nodes_path, const fs::path& graph_path, const fs::path& seeds_path,
                     const fs::path& seed_triples, const Settings& s, const fs::path& out) {
  auto& tax = taxonomy(s);
  auto nodes = load_nodes(nodes_path);
  auto g = load_graph(graph_path, nodes.size());
  auto sin = open_in(seeds_path);
  auto seeds = read_seed_concepts(sin);
  auto labelled = load_triples(seed_triples, tax);
  KbPropagationOptions po;
  po.propagation = {s.n_layers, s.alpha, 1e-9, s.threads};
  po.tau_assign = s.tau_assign;
  KbPropagationReport rep;
  auto triples = propagate_kb(g, nodes, seeds, labelled.triples(), tax, po, &rep);
  spdlog::info("propagate: {} concepts labelled, {} labels dropped by taxonomy conditioning, {} ties",
               rep.labelled_concepts, rep.dropped_by_conditioning, rep.ambiguous);
  write_file(out, [&](std::ostream& o) { write_triples(o, triples); });
}

void stage_build_kb(const fs::path& seed_triples, const fs::path& propagated, const Taxonomy& tax,
                    const fs::path& out) {
  KnowledgeBase kb(tax);
  for (auto* p : {&seed_triples, &propagated}) {
    if (p->empty()) continue;
    auto part = load_triples(*p, tax);
    for (auto& t : part.triples()) kb.add(t);
  }
  auto violations = validate_triples(kb);
  if (!violations.empty()) spdlog::warn("build-kb: {} rule violations; see `validate`", violations.size());
  spdlog::info("build-kb: {} triples over {} concepts", kb.size(), kb.concepts().size());
  write_file(out, [&](std::ostream& o) { write_triples(o, kb.triples()); });
}

void write_violations(std::ostream& o, const ValidationReport& r) {
  for (auto& v : r) o << to_string(v.rule) << '\t' << v.phrase << '\t' << v.detail << '\n';
}

void stage_match(const fs::path& kb_path, const std::vector<fs::path>& corpus, const Settings& s, const fs::path& out) {
  auto kb = load_triples(kb_path, taxonomy(s));
  auto concepts = kb.concepts();
  Lemmatizer lem(concept_vocabulary(concepts));
  auto docs = load_corpus(corpus, lem);
  MatchOptions mo;
  mo.surface_strict = s.surface_strict;
  mo.verb_before_np = !s.unordered;
  mo.threads = s.threads;
  ConceptMatcher m(concepts, mo);
  std::vector<MatchResult> res;
  if (s.mode == "exact") res = m.match_exact(docs);
  else if (s.mode == "flexible") res = m.match_flexible(docs);
  else throw ValidationError("unknown match mode '" + s.mode + "' (expected exact or flexible)");
  spdlog::info("match: {} {} matches in {} documents", res.size(), s.mode, docs.size());
  write_file(out, [&](std::ostream& o) { write_matches(o, res); });
}

std::vector<MatchResult> load_matches(const fs::path& p) {
  auto in = open_in(p);
  return read_matches(in);
}

void stage_analyze(const fs::path& kb_path, const fs::path& matches, const Settings& s, const std::string& json_out,
                   const std::string& csv_out) {
  auto& tax = taxonomy(s);
  auto kb = load_triples(kb_path, tax);
  auto f = topic_frequencies(load_matches(matches), kb);
  if (!json_out.empty()) write_file(json_out, [&](std::ostream& o) { write_report_json(o, f, tax, s.top_n); });
  if (!csv_out.empty()) write_file(csv_out, [&](std::ostream& o) { write_report_csv(o, f); });
  if (json_out.empty() && csv_out.empty()) write_report_json(std::cout, f, tax, s.top_n);
}

// Returns false when there was nothing to evaluate.
bool stage_eval(const std::string& matches, const std::string& terms_file, const std::string& judgments_in,
                const Settings& s, const std::string& judgments_out, const std::string& metrics_out) {
  std::set<std::string> terms;
  if (!matches.empty()) terms = collect_topic_terms(load_matches(matches));
  if (!terms_file.empty()) {
    auto in = open_in(terms_file);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(text::split(line, '\t')[0]);
    auto more = collect_topic_terms(lines);
    terms.insert(more.begin(), more.end());
  }
  if (terms.empty()) {
    spdlog::warn("eval: no terms to evaluate");
    return false;
  }
  std::vector<Judgment> judgments;
  if (!judgments_in.empty()) {
    judgments = load_judgments(judgments_in);
  } else {
    auto h = make_annotator(s);
    judgments = h.annotator->judge({terms.begin(), terms.end()});
  }
  if (!judgments_out.empty()) write_file(judgments_out, [&](std::ostream& o) { write_judgments(o, judgments); });
  auto m = aggregate_metrics(terms, judgments);
  if (!metrics_out.empty()) write_file(metrics_out, [&](std::ostream& o) { write_metrics(o, m); });
  else write_metrics(std::cout, m);
  return true;
}

// ---- flat config file ----

// Appends `--key=value` for every config key that names an option of the
// selected subcommand and is not already given on the command line.
void apply_config(CLI::App& app, std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return;
  CLI::App* sub = nullptr;
  for (auto& a : args)
    if (!a.empty() && a[0] != '-' && (sub = app.get_subcommand_no_throw(a))) break;
  if (!sub) throw ValidationError("--config needs a subcommand");

  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  auto items = CLI::ConfigTOML().from_config(in);
  std::set<std::string> given;
  for (auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  for (auto& item : items) {
    if (item.name.empty() || item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty() && !(item.parents.size() == 1 && (item.parents[0] == "default" || item.parents[0] == sub->get_name())))
      continue;
    auto* opt = sub->get_option_no_throw("--" + item.name);
    if (!opt) {
      spdlog::debug("config key '{}' does not apply to '{}'", item.name, sub->get_name());
      continue;
    }
    if (given.count(item.name)) continue;
    if (item.inputs.size() == 1) {
      args.push_back("--" + item.name + "=" + item.inputs[0]);
    } else {
      args.push_back("--" + item.name);
      args.insert(args.end(), item.inputs.begin(), item.inputs.end());
    }
  }
}

void add_common(CLI::App* sc, Settings& s) {
  sc->add_option("--taxonomy", s.taxonomy, "Taxonomy TSV (default: built-in)");
  sc->add_option("--threads", s.threads, "Worker threads, 0 = all cores")->capture_default_str();
  sc->add_option("--config", "Flat key = value config file; keys mirror long option names");
}

void add_backend(CLI::App* sc, Settings& s) {
  sc->add_option("--backend", s.backend, "Annotator backend: mock or remote")->capture_default_str();
  sc->add_option("--mock_table", s.mock_table, "Fixture table for the mock backend");
  sc->add_option("--base_url", s.base_url, "Chat-completion API base URL")->capture_default_str();
  sc->add_option("--model", s.model, "Remote model name")->capture_default_str();
  sc->add_option("--api_key_env", s.api_key_env, "Environment variable holding the API key")->capture_default_str();
  sc->add_option("--timeout", s.timeout, "Request timeout in seconds")->capture_default_str();
  sc->add_option("--max_retries", s.max_retries, "Retries per request")->capture_default_str();
  sc->add_option("--batch_size", s.batch_size, "Phrases per request")->capture_default_str();
  sc->add_option("--max_in_flight", s.max_in_flight, "Concurrent requests")->capture_default_str();
  sc->add_option("--cache", s.cache, "JSON Lines response cache");
}

void add_propagation(CLI::App* sc, Settings& s) {
  sc->add_option("--n_layers", s.n_layers, "Maximum propagation iterations")->capture_default_str();
  sc->add_option("--alpha", s.alpha, "Propagation damping")->capture_default_str();
  sc->add_option("--tau_assign", s.tau_assign, "Minimum score for assigning a propagated label")->capture_default_str();
}

void add_matching(CLI::App* sc, Settings& s) {
  sc->add_option("--mode", s.mode, "exact or flexible")->capture_default_str();
  sc->add_flag("--surface_strict", s.surface_strict, "Match lowercased surface forms instead of lemmas");
  sc->add_flag("--unordered", s.unordered, "Flexible mode: allow the verb after the noun phrase");
}

const std::vector<std::string> kStages = {"parse", "filter", "qc",       "graph",    "cluster", "seeds", "annotate",
                                          "propagate", "build-kb", "validate", "stats", "match", "analyze", "eval"};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("esgkb"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Build an ESG knowledge base from dependency-parsed text and use it for topic analysis."};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors");

  Settings s;
  std::vector<std::string> inputs;
  std::string out, in1, in2, in3, in4, in5, extra1, extra2;

  auto* parse = app.add_subcommand("parse", "Extract candidate concepts from CoNLL-U files");
  parse->add_option("--input", inputs, "CoNLL-U files or directories")->required();
  parse->add_option("--out", out, "Candidate file")->required();
  add_common(parse, s);

  auto* filter = app.add_subcommand("filter", "Count candidates and keep the top_k most frequent");
  filter->add_option("--candidates", in1, "Candidate file")->required();
  filter->add_option("--top_k", s.top_k, "Concepts to keep")->capture_default_str();
  filter->add_option("--out", out, "Ranked concept file")->required();
  add_common(filter, s);

  auto* qc = app.add_subcommand("qc", "Reorder concepts and keep the coherent ones");
  qc->add_option("--concepts", in1, "Ranked concept file")->required();
  qc->add_option("--out", out, "Ranked file of kept concepts")->required();
  qc->add_option("--rejected", extra1, "Ranked file of dropped concepts");
  add_common(qc, s);
  add_backend(qc, s);

  auto* graph = app.add_subcommand("graph", "Build the similarity graph over concept embeddings");
  graph->add_option("--concepts", in1, "Ranked concept file")->required();
  graph->add_option("--embeddings", in2, "Embeddings (JSON Lines)")->required();
  graph->add_option("--similarity_threshold", s.similarity_threshold, "Edge threshold (strict)")->capture_default_str();
  graph->add_option("--nodes", extra1, "Node index output")->required();
  graph->add_option("--out", out, "Edge list output")->required();
  add_common(graph, s);

  auto* cluster = app.add_subcommand("cluster", "Cluster graph nodes (built-in provider or import)");
  cluster->add_option("--nodes", in1, "Node index file")->required();
  cluster->add_option("--embeddings", in2, "Embeddings (JSON Lines), for the built-in provider");
  cluster->add_option("--import", extra1, "Clustering file from an external pipeline");
  cluster->add_option("--cluster_threshold", s.cluster_threshold, "Built-in provider similarity threshold")
      ->capture_default_str();
  cluster->add_option("--out", out, "Clustering output")->required();
  add_common(cluster, s);

  auto* cqi_cmd = app.add_subcommand("cqi", "Confidence quality index of a clustering");
  cqi_cmd->add_option("--nodes", in1, "Node index file")->required();
  cqi_cmd->add_option("--clusters", in2, "Clustering file")->required();
  cqi_cmd->add_option("--cqi_tau", s.cqi_tau, "Confidence threshold (strict)")->capture_default_str();
  add_common(cqi_cmd, s);

  auto* seeds = app.add_subcommand("seeds", "Select diverse seeds per cluster");
  seeds->add_option("--nodes", in1, "Node index file")->required();
  seeds->add_option("--graph", in2, "Edge list")->required();
  seeds->add_option("--clusters", in3, "Clustering file")->required();
  seeds->add_option("--target,--seed_target", s.seed_target, "Target seed count, 0 = a tenth of the nodes")
      ->capture_default_str();
  seeds->add_option("--beta", s.beta, "Seed proportion step")->capture_default_str();
  seeds->add_option("--out", out, "Seed file")->required();
  add_common(seeds, s);

  auto* annotate = app.add_subcommand("annotate", "Label seeds with pillar and topic relations");
  annotate->add_option("--seeds", in1, "Seed file")->required();
  annotate->add_option("--out", out, "Seed triple file")->required();
  annotate->add_option("--annotations", extra1, "Per-level annotation log");
  add_common(annotate, s);
  add_backend(annotate, s);

  auto* propagate = app.add_subcommand("propagate", "Propagate seed labels over the graph");
  propagate->add_option("--nodes", in1, "Node index file")->required();
  propagate->add_option("--graph", in2, "Edge list")->required();
  propagate->add_option("--seeds", in3, "Seed file")->required();
  propagate->add_option("--seed_labels", in4, "Seed triples (concept, relation, topic)")->required();
  propagate->add_option("--out", out, "Propagated triple file")->required();
  add_propagation(propagate, s);
  add_common(propagate, s);

  auto* build = app.add_subcommand("build-kb", "Merge seed and propagated triples");
  build->add_option("--seed_labels", in1, "Seed triples")->required();
  build->add_option("--propagated", in2, "Propagated triples");
  build->add_option("--out", out, "Knowledge base triple file")->required();
  add_common(build, s);

  auto* validate = app.add_subcommand("validate", "Check the knowledge base against the taxonomy rules");
  validate->add_option("--kb", in1, "Triple file")->required();
  validate->add_flag("--require_pillar", s.require_pillar, "Flag concepts with topic relations but no pillar");
  validate->add_option("--out", out, "Write violations here instead of stdout");
  add_common(validate, s);

  auto* stats = app.add_subcommand("stats", "Per-topic triple counts");
  stats->add_option("--kb", in1, "Triple file (.tsv or .csv)")->required();
  stats->add_option("--out", out, "Write the table here instead of stdout");
  add_common(stats, s);

  auto* match = app.add_subcommand("match", "Find knowledge-base concepts in report text");
  match->add_option("--kb", in1, "Triple file")->required();
  match->add_option("--corpus", inputs, "Text files, JSON Lines files or directories")->required();
  match->add_option("--out", out, "Match file")->required();
  add_matching(match, s);
  add_common(match, s);

  auto* analyze = app.add_subcommand("analyze", "Topic frequencies and top concepts from matches");
  analyze->add_option("--kb", in1, "Triple file")->required();
  analyze->add_option("--matches", in2, "Match file")->required();
  analyze->add_option("--json", extra1, "JSON report");
  analyze->add_option("--csv", extra2, "CSV report");
  analyze->add_option("--top_n", s.top_n, "Top concepts per topic")->capture_default_str();
  add_common(analyze, s);

  auto* eval = app.add_subcommand("eval", "ESG relatedness, action orientation and unique ESG terms");
  eval->add_option("--matches", in1, "Match file (terms = matched concepts)");
  eval->add_option("--terms", in2, "Term list, one per line");
  eval->add_option("--judgments", in3, "Judgment file; judged with the backend when absent");
  eval->add_option("--judgments_out", extra1, "Where to write the judgments");
  eval->add_option("--agreement", inputs, "Two judgment files: print agreement and exit")->expected(2);
  eval->add_option("--out", out, "Metrics file");
  add_backend(eval, s);
  add_common(eval, s);

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage in a work directory");
  std::vector<std::string> conllu, corpus;
  std::string work = "esgkb-work", from = "parse", clusters_import, judgments_in;
  pipeline->add_option("--conllu", conllu, "CoNLL-U files or directories")->required();
  pipeline->add_option("--embeddings", in2, "Embeddings (JSON Lines)")->required();
  pipeline->add_option("--corpus", corpus, "Report text for matching");
  pipeline->add_option("--clusters_import", clusters_import, "Use this clustering instead of the built-in one");
  pipeline->add_option("--judgments", judgments_in, "Judgment file for eval; judged with the backend when absent");
  pipeline->add_option("--work_dir", work, "Output directory")->capture_default_str();
  pipeline->add_option("--from", from, "Resume from this stage")->check(CLI::IsMember(kStages))->capture_default_str();
  pipeline->add_option("--top_k", s.top_k)->capture_default_str();
  pipeline->add_option("--similarity_threshold", s.similarity_threshold)->capture_default_str();
  pipeline->add_option("--cluster_threshold", s.cluster_threshold)->capture_default_str();
  pipeline->add_option("--cqi_tau", s.cqi_tau)->capture_default_str();
  pipeline->add_option("--seed_target", s.seed_target)->capture_default_str();
  pipeline->add_option("--beta", s.beta)->capture_default_str();
  pipeline->add_option("--top_n", s.top_n)->capture_default_str();
  add_propagation(pipeline, s);
  add_matching(pipeline, s);
  add_backend(pipeline, s);
  add_common(pipeline, s);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    apply_config(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    auto& tax = taxonomy(s);
    if (parse->parsed()) {
      stage_parse(expand_inputs(inputs, {".conllu", ".conll"}), out);
    } else if (filter->parsed()) {
      stage_filter(in1, s.top_k, out);
    } else if (qc->parsed()) {
      auto h = make_annotator(s);
      stage_qc(in1, *h.annotator, out, extra1);
    } else if (graph->parsed()) {
      stage_graph(in1, in2, s, extra1, out);
    } else if (cluster->parsed()) {
      if (extra1.empty() && in2.empty()) throw ValidationError("cluster: give --embeddings or --import");
      stage_cluster(in1, in2, extra1, s, out);
    } else if (cqi_cmd->parsed()) {
      std::cout << text::format_double(stage_cqi(in1, in2, s.cqi_tau)) << '\n';
    } else if (seeds->parsed()) {
      stage_seeds(in1, in2, in3, s, out);
    } else if (annotate->parsed()) {
      auto h = make_annotator(s);
      stage_annotate(in1, *h.annotator, tax, out, extra1);
    } else if (propagate->parsed()) {
      stage_propagate(in1, in2, in3, in4, s, out);
    } else if (build->parsed()) {
      stage_build_kb(in1, in2, tax, out);
    } else if (validate->parsed()) {
      auto report = validate_triples(load_triples(in1, tax), {s.require_pillar});
      if (out.empty()) write_violations(std::cout, report);
      else write_file(out, [&](std::ostream& o) { write_violations(o, report); });
      if (!report.empty()) {
        std::cerr << report.size() << " rule violation(s)\n";
        return 2;
      }
    } else if (stats->parsed()) {
      auto st = kb_stats(load_triples(in1, tax));
      if (out.empty()) write_stats(std::cout, st);
      else write_file(out, [&](std::ostream& o) { write_stats(o, st); });
    } else if (match->parsed()) {
      stage_match(in1, expand_inputs(inputs, {".txt", ".jsonl"}), s, out);
    } else if (analyze->parsed()) {
      stage_analyze(in1, in2, s, extra1, extra2);
    } else if (eval->parsed()) {
      if (!inputs.empty()) {
        auto a = agreement(load_judgments(inputs[0]), load_judgments(inputs[1]));
        std::cout << "esg_related\t" << text::format_double(a.esg_related) << "\naction_oriented\t"
                  << text::format_double(a.action_oriented) << '\n';
      } else {
        if (in1.empty() && in2.empty()) throw ValidationError("eval: give --matches or --terms");
        stage_eval(in1, in2, in3, s, extra1, out);
      }
    } else if (pipeline->parsed()) {
      fs::path w(work);
      fs::create_directories(w);
      auto at = [&](const char* f) { return w / f; };
      auto start = std::find(kStages.begin(), kStages.end(), from) - kStages.begin();
      auto run = [&](const std::string& stage) {
        bool go = std::find(kStages.begin(), kStages.end(), stage) - kStages.begin() >= start;
        if (go) spdlog::info("== {}", stage);
        return go;
      };
      std::optional<AnnotatorHandle> h;
      auto annotator = [&]() -> Annotator& {
        if (!h) h = make_annotator(s);
        return *h->annotator;
      };
      if (run("parse")) stage_parse(expand_inputs(conllu, {".conllu", ".conll"}), at("candidates.tsv"));
      if (run("filter")) stage_filter(at("candidates.tsv"), s.top_k, at("concepts.tsv"));
      if (run("qc")) stage_qc(at("concepts.tsv"), annotator(), at("qc.tsv"), at("qc_rejected.tsv").string());
      if (run("graph")) stage_graph(at("qc.tsv"), in2, s, at("nodes.tsv"), at("graph.tsv"));
      if (run("cluster")) {
        stage_cluster(at("nodes.tsv"), in2, clusters_import, s, at("clusters.tsv"));
        double q = stage_cqi(at("nodes.tsv"), at("clusters.tsv"), s.cqi_tau);
        spdlog::info("cqi: {}", q);
        write_file(at("cqi.txt"), [&](std::ostream& o) { o << text::format_double(q) << '\n'; });
      }
      if (run("seeds")) stage_seeds(at("nodes.tsv"), at("graph.tsv"), at("clusters.tsv"), s, at("seeds.tsv"));
      if (run("annotate"))
        stage_annotate(at("seeds.tsv"), annotator(), tax, at("seed_triples.tsv"), at("annotations.tsv").string());
      if (run("propagate"))
        stage_propagate(at("nodes.tsv"), at("graph.tsv"), at("seeds.tsv"), at("seed_triples.tsv"), s,
                        at("propagated.tsv"));
      if (run("build-kb")) stage_build_kb(at("seed_triples.tsv"), at("propagated.tsv"), tax, at("kb.tsv"));
      if (run("validate")) {
        auto report = validate_triples(load_triples(at("kb.tsv"), tax), {s.require_pillar});
        write_file(at("violations.tsv"), [&](std::ostream& o) { write_violations(o, report); });
      }
      if (run("stats")) {
        auto st = kb_stats(load_triples(at("kb.tsv"), tax));
        write_file(at("stats.tsv"), [&](std::ostream& o) { write_stats(o, st); });
      }
      if (corpus.empty()) {
        spdlog::info("no --corpus given; skipping match, analyze and eval");
        return 0;
      }
      if (run("match")) stage_match(at("kb.tsv"), expand_inputs(corpus, {".txt", ".jsonl"}), s, at("matches.tsv"));
      if (run("analyze"))
        stage_analyze(at("kb.tsv"), at("matches.tsv"), s, at("report.json").string(), at("report.csv").string());
      if (run("eval"))
        stage_eval(at("matches.tsv").string(), "", judgments_in, s, at("judgments.tsv").string(),
                   at("metrics.tsv").string());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
