#include "esgkb/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

LabelMatrix::LabelMatrix(std::size_t nodes, std::vector<std::string> classes)
    : rows_(nodes), classes_(std::move(classes)), values_(rows_ * classes_.size(), 0.0), seed_(nodes, 0) {}

void LabelMatrix::seed(std::size_t r, std::size_t c) {
  auto rw = row(r);
  std::fill(rw.begin(), rw.end(), 0.0);
  rw[c] = 1.0;
  seed_[r] = 1;
}

std::size_t LabelMatrix::seed_count() const {
  return static_cast<std::size_t>(std::count(seed_.begin(), seed_.end(), 1));
}

PropagationResult propagate(const SemanticGraph& g, const LabelMatrix& seeds, const PropagationOptions& opts) {
  const std::size_t n = seeds.rows(), k = seeds.cols();
  if (g.size() != n) throw ValidationError("propagate: graph has " + std::to_string(g.size()) + " nodes, matrix " +
                                           std::to_string(n) + " rows");
  if (seeds.seed_count() == 0) throw ValidationError("propagate: no seed rows");

  // Normalized adjacency S = D^-1/2 A D^-1/2; isolated nodes contribute nothing.
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = g.weighted_degree(i);
    if (d > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(d);
  }

  PropagationResult res{seeds, 0, false};
  LabelMatrix next = seeds;
  const double keep = 1.0 - opts.alpha;

  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::vector<double> change(threads, 0.0);

  // Row i only reads the previous matrix, so row blocks run independently
  // and the summation order per row is fixed by the adjacency order.
  auto step_rows = [&](unsigned w) {
    double local = 0.0;
    std::vector<double> acc(k);
    for (std::size_t i = w; i < n; i += threads) {
      auto out = next.row(i);
      if (seeds.is_seed(i)) {
        auto s = seeds.row(i);
        std::copy(s.begin(), s.end(), out.begin());
        continue;
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      for (auto& e : g.neighbors(i)) {
        double s_ij = inv_sqrt[i] * e.weight * inv_sqrt[e.to];
        auto src = res.labels.row(e.to);
        for (std::size_t c = 0; c < k; ++c) acc[c] += s_ij * src[c];
      }
      auto init = seeds.row(i);
      auto prev = res.labels.row(i);
      for (std::size_t c = 0; c < k; ++c) {
        out[c] = opts.alpha * acc[c] + keep * init[c];
        local = std::max(local, std::fabs(out[c] - prev[c]));
      }
    }
    change[w] = local;
  };

  for (std::size_t it = 0; it < opts.n_layers; ++it) {
    if (threads == 1) {
      step_rows(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < threads; ++w) pool.emplace_back(step_rows, w);
      for (auto& t : pool) t.join();
    }
    std::swap(res.labels, next);
    res.iterations = it + 1;
    if (*std::max_element(change.begin(), change.end()) < opts.tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

std::vector<Assignment> assign_labels(const LabelMatrix& m, double tau_assign, std::size_t* ambiguous) {
  std::vector<Assignment> out;
  std::size_t ties = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (m.is_seed(r) || m.cols() == 0) continue;
    auto row = m.row(r);
    auto best = std::max_element(row.begin(), row.end());
    if (!(*best > tau_assign)) continue;
    if (std::count(row.begin(), row.end(), *best) > 1) {
      ++ties;
      spdlog::debug("propagation: node {} has a tied maximum; left unlabelled", r);
      continue;
    }
    double sum = 0.0;
    for (double v : row) sum += v;
    out.push_back({r, static_cast<std::size_t>(best - row.begin()), *best / sum});
  }
  if (ties) spdlog::info("propagation: {} rows left unlabelled because of a tied maximum", ties);
  if (ambiguous) *ambiguous += ties;
  return out;
}

namespace {

constexpr std::string_view kNone = "none";

struct LevelLabel {
  Relation relation;
  std::string topic;
};

std::string class_key(Relation r, const std::string& topic) { return std::string(to_string(r)) + "|" + topic; }

}  // namespace

std::vector<Triple> propagate_kb(const SemanticGraph& g, const std::vector<Concept>& nodes,
                                 const std::vector<Concept>& seed_concepts, const std::vector<Triple>& seed_triples,
                                 const Taxonomy& tax, const KbPropagationOptions& opts, KbPropagationReport* report) {
  if (nodes.size() != g.size()) throw ValidationError("propagate_kb: node list does not match the graph");
  std::unordered_map<std::string, std::size_t> node_index;
  for (std::size_t i = 0; i < nodes.size(); ++i) node_index.emplace(nodes[i].text(), i);

  std::vector<char> is_seed(nodes.size(), 0);
  for (auto& c : seed_concepts) {
    auto it = node_index.find(c.text());
    if (it == node_index.end()) {
      spdlog::warn("propagation: seed '{}' is not a graph node", c.text());
      continue;
    }
    is_seed[it->second] = 1;
  }

  // Seed labels per level; a seed without a label at a level acts as a "none" sink there.
  using Levels = std::array<std::optional<LevelLabel>, kTopicTypes.size()>;
  std::vector<Levels> seed_labels(nodes.size());
  for (auto& t : seed_triples) {
    auto it = node_index.find(t.phrase.text());
    if (it == node_index.end()) continue;
    auto* topic = tax.find(t.topic);
    if (!topic) continue;
    is_seed[it->second] = 1;
    seed_labels[it->second][static_cast<std::size_t>(topic->type)] = LevelLabel{t.relation, topic->name};
  }
  if (std::none_of(is_seed.begin(), is_seed.end(), [](char s) { return s != 0; })) return {};

  std::vector<Levels> assigned(nodes.size());
  std::vector<std::array<double, kTopicTypes.size()>> confidence(nodes.size());
  std::size_t ambiguous = 0;

  for (auto type : kTopicTypes) {
    auto lvl = static_cast<std::size_t>(type);
    std::vector<std::string> classes{std::string(kNone)};
    std::map<std::string, std::size_t> class_index{{std::string(kNone), 0}};
    std::vector<LevelLabel> class_label{{Relation::supports, ""}};
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto& l = seed_labels[i][lvl];
      if (!l) continue;
      auto key = class_key(l->relation, l->topic);
      if (class_index.emplace(key, classes.size()).second) {
        classes.push_back(key);
        class_label.push_back(*l);
      }
    }
    if (classes.size() == 1) continue;

    LabelMatrix m(nodes.size(), classes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!is_seed[i]) continue;
      auto& l = seed_labels[i][lvl];
      m.seed(i, l ? class_index.at(class_key(l->relation, l->topic)) : 0);
    }
    auto res = propagate(g, m, opts.propagation);
    for (auto& a : assign_labels(res.labels, opts.tau_assign, &ambiguous)) {
      if (a.cls == 0) continue;
      assigned[a.node][lvl] = class_label[a.cls];
      confidence[a.node][lvl] = a.confidence;
    }
  }

  // Taxonomy conditioning, top-down.
  std::vector<Triple> out;
  std::size_t dropped = 0, labelled = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (is_seed[i]) continue;
    auto& a = assigned[i];
    auto level = [&](TopicType t) -> std::optional<LevelLabel>& { return a[static_cast<std::size_t>(t)]; };
    auto drop = [&](TopicType t) {
      if (level(t)) {
        ++dropped;
        level(t).reset();
      }
    };
    std::optional<Pillar> pillar;
    if (auto& p = level(TopicType::pillar)) pillar = *tax.at(p->topic).pillar_scope.begin();
    if (!pillar) {
      for (auto t : {TopicType::broad, TopicType::sub, TopicType::cross_broad, TopicType::cross_sub}) drop(t);
    } else {
      if (auto& b = level(TopicType::broad); b && !tax.at(b->topic).pillar_scope.count(*pillar)) drop(TopicType::broad);
      if (auto& s = level(TopicType::sub)) {
        auto& b = level(TopicType::broad);
        if (!b || tax.at(s->topic).parent != b->topic) drop(TopicType::sub);
      }
      if (*pillar != Pillar::environmental) drop(TopicType::cross_broad);
      if (auto& s = level(TopicType::cross_sub)) {
        auto& b = level(TopicType::cross_broad);
        if (!b || tax.at(s->topic).parent != b->topic) drop(TopicType::cross_sub);
      }
    }
    bool any = false;
    for (auto t : kTopicTypes) {
      auto& l = level(t);
      if (!l) continue;
      any = true;
      out.push_back(Triple{nodes[i], l->relation, l->topic, Provenance::propagated,
                           confidence[i][static_cast<std::size_t>(t)], std::nullopt});
    }
    if (any) ++labelled;
  }
  if (report) {
    report->labelled_concepts = labelled;
    report->dropped_by_conditioning = dropped;
    report->ambiguous = ambiguous;
  }
  return out;
}

std::vector<Triple> read_seed_labels(std::istream& in, const Taxonomy& tax) {
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() < 3) throw ParseError("seed labels: expected at least 3 columns", lineno);
    auto c = Concept::try_make(cols[0]);
    if (!c) throw ParseError("seed labels: bad concept '" + cols[0] + "'", lineno);
    auto r = parse_relation(cols[1]);
    if (!r) throw ParseError("seed labels: unknown relation '" + cols[1] + "'", lineno);
    auto* topic = tax.find(cols[2]);
    if (!topic) throw ParseError("seed labels: unknown topic '" + cols[2] + "'", lineno);
    if (!relation_legal(*r, topic->type)) throw ParseError("seed labels: relation not legal for topic type", lineno);
    out.push_back(Triple{*c, *r, topic->name, Provenance::seed, 1.0, std::nullopt});
  }
  return out;
}

}  // namespace esgkb
