#include "esgkb/seeds.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>

#include <spdlog/spdlog.h>

#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

std::map<int, std::vector<std::size_t>> Clustering::members() const {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
  return out;
}

void Clustering::check() const {
  if (assignment.size() != confidence.size()) throw ValidationError("clustering: assignment/confidence size mismatch");
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] < kNoise) throw ValidationError("clustering: cluster id below -1 for node " + std::to_string(i));
    if (!(confidence[i] >= 0.0 && confidence[i] <= 1.0))
      throw ValidationError("clustering: confidence outside [0,1] for node " + std::to_string(i));
  }
}

Clustering read_clustering(std::istream& in, std::size_t node_count) {
  Clustering c;
  c.assignment.assign(node_count, kNoise);
  c.confidence.assign(node_count, 0.0);
  std::vector<bool> seen(node_count, false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() != 3) throw ParseError("clustering: expected 3 columns", lineno);
    std::size_t node = 0;
    int cid = 0;
    double conf = 0.0;
    auto num = [&](const std::string& s, auto& v) {
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("clustering: bad number '" + s + "'", lineno);
    };
    num(cols[0], node);
    num(cols[1], cid);
    num(cols[2], conf);
    if (node >= node_count) throw ParseError("clustering: unknown node " + cols[0], lineno);
    if (seen[node]) throw ParseError("clustering: node " + cols[0] + " listed twice", lineno);
    if (cid < kNoise) throw ParseError("clustering: cluster id below -1", lineno);
    if (!(conf >= 0.0 && conf <= 1.0)) throw ParseError("clustering: confidence outside [0,1]", lineno);
    seen[node] = true;
    c.assignment[node] = cid;
    c.confidence[node] = conf;
  }
  auto missing = std::find(seen.begin(), seen.end(), false);
  if (missing != seen.end())
    throw ParseError("clustering: node " + std::to_string(missing - seen.begin()) + " has no assignment");
  return c;
}

Clustering load_clustering(const std::filesystem::path& path, std::size_t node_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_clustering(in, node_count);
}

void write_clustering(std::ostream& out, const Clustering& c) {
  for (std::size_t i = 0; i < c.size(); ++i)
    out << i << '\t' << c.assignment[i] << '\t' << text::format_double(c.confidence[i]) << '\n';
}

Clustering cluster_builtin(const EmbeddingTable& table, const BuiltinClusterOptions& opts) {
  const std::size_t n = table.size();
  Clustering out;
  if (n == 0) return out;

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (cosine(table.row(i), table.row(j)) > opts.similarity_threshold) {
        auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  out.assignment.assign(n, kNoise);
  out.confidence.assign(n, 0.0);
  std::map<std::size_t, int> ids;  // root -> cluster id, in order of first member
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    auto root = find(i);
    auto [it, inserted] = ids.emplace(root, static_cast<int>(ids.size()));
    out.assignment[i] = it->second;
    groups[it->second].push_back(i);
  }

  const std::size_t d = table.dim();
  for (auto& [cid, members] : groups) {
    if (members.size() < 2) continue;
    std::vector<double> centroid(d, 0.0);
    for (auto m : members) {
      // Unit-normalize so the centroid is a mean direction.
      auto r = table.row(m);
      double norm = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
      for (std::size_t k = 0; k < d; ++k) centroid[k] += r[k] / norm;
    }
    if (std::all_of(centroid.begin(), centroid.end(), [](double x) { return x == 0.0; })) continue;
    for (auto m : members) out.confidence[m] = std::clamp(cosine(table.row(m), centroid), 0.0, 1.0);
  }
  return out;
}

double cqi(const Clustering& c, double tau) {
  if (c.empty()) throw DomainError("cqi: empty clustering");
  std::size_t above = 0;
  for (double a : c.confidence)
    if (a > tau) ++above;
  return static_cast<double>(above) / static_cast<double>(c.size());
}

std::size_t consequential_score(std::size_t node, const SemanticGraph& g, const std::set<std::size_t>& selected) {
  std::size_t q = 0;
  for (auto& e : g.neighbors(node)) {
    bool covered = std::any_of(selected.begin(), selected.end(), [&](std::size_t s) { return g.has_edge(s, e.to); });
    if (!covered) ++q;
  }
  return q;
}

bool SeedSet::contains(std::size_t node) const { return std::binary_search(total.begin(), total.end(), node); }

namespace {

std::size_t seeds_for(double p, std::size_t cluster_size) {
  double raw = std::floor(p * static_cast<double>(cluster_size));
  return raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
}

// Scratch buffers sized to the graph, reused across clusters and reset
// only where touched.
struct SelectionScratch {
  explicit SelectionScratch(std::size_t n) : in_cluster(n, 0), covered(n, 0), q(n, 0) {}
  std::vector<char> in_cluster;
  std::vector<char> covered;
  std::vector<std::size_t> q;
};

// Greedy max-Q selection inside one cluster. Q only decreases as seeds are
// added, so a lazily refreshed max-heap returns the true argmax.
std::vector<std::size_t> select_in_cluster(const SemanticGraph& g, const std::vector<std::size_t>& members,
                                           std::size_t count, SelectionScratch& s) {
  std::vector<std::size_t> chosen;
  if (count == 0) return chosen;
  std::vector<std::size_t> touched;

  using Entry = std::pair<std::size_t, std::size_t>;  // (score, node)
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (auto m : members) {
    s.in_cluster[m] = 1;
    s.q[m] = g.degree(m);
    heap.push({s.q[m], m});
  }

  while (chosen.size() < count && !heap.empty()) {
    auto [score, node] = heap.top();
    heap.pop();
    if (!s.in_cluster[node]) continue;  // already selected
    if (score != s.q[node]) {
      heap.push({s.q[node], node});
      continue;
    }
    chosen.push_back(node);
    s.in_cluster[node] = 0;
    // Neighbors of the new seed become covered; members adjacent to them lose a unique edge.
    for (auto& e : g.neighbors(node)) {
      if (s.covered[e.to]) continue;
      s.covered[e.to] = 1;
      touched.push_back(e.to);
      for (auto& back : g.neighbors(e.to))
        if (s.in_cluster[back.to]) --s.q[back.to];
    }
  }
  for (auto t : touched) s.covered[t] = 0;
  for (auto m : members) s.in_cluster[m] = 0;
  return chosen;
}

}  // namespace

SeedSet select_seeds(const SemanticGraph& g, const Clustering& c, const SeedOptions& opts) {
  SeedSet out;
  if (g.size() == 0 || c.empty()) return out;
  if (c.size() != g.size()) throw ValidationError("select_seeds: clustering and graph sizes differ");
  if (opts.target == 0) throw DomainError("select_seeds: target must be at least 1");
  if (!(opts.beta > 0.0)) throw DomainError("select_seeds: beta must be positive");

  auto clusters = c.members();
  const double target = static_cast<double>(opts.target);
  double p = target / static_cast<double>(g.size());
  double prev = std::numeric_limits<double>::infinity();
  double best_p = p;
  std::size_t estimate = 0;
  while (true) {
    std::size_t ns = 0;
    for (auto& [cid, members] : clusters) ns += seeds_for(p, members.size());
    double delta = std::fabs(static_cast<double>(ns) - target);
    if (delta >= prev) break;
    prev = delta;
    best_p = p;
    estimate = ns;
    if (static_cast<double>(ns) < target) p += opts.beta;
    else p -= opts.beta;
  }
  // The step that failed to improve is undone: seeds are drawn at the P
  // that brought N_s closest to T.
  p = best_p;
  out.proportion = p;
  out.estimated = estimate;

  SelectionScratch scratch(g.size());
  for (auto& [cid, members] : clusters) {
    std::size_t want = seeds_for(p, members.size());
    if (want > members.size()) {
      spdlog::info("seeds: cluster {} wants {} seeds but has {} members; capped", cid, want, members.size());
      want = members.size();
    }
    auto chosen = select_in_cluster(g, members, want, scratch);
    out.total.insert(out.total.end(), chosen.begin(), chosen.end());
    out.per_cluster.emplace(cid, std::move(chosen));
  }
  std::sort(out.total.begin(), out.total.end());
  return out;
}

void write_seeds(std::ostream& out, const SeedSet& seeds, const std::vector<Concept>& nodes) {
  for (auto& [cid, list] : seeds.per_cluster)
    for (std::size_t r = 0; r < list.size(); ++r) out << nodes.at(list[r]).text() << '\t' << cid << '\t' << r + 1 << '\n';
}

std::vector<Concept> read_seed_concepts(std::istream& in) {
  std::vector<Concept> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    auto c = Concept::try_make(cols[0]);
    if (!c) throw ParseError("seeds: bad concept '" + cols[0] + "'", lineno);
    out.push_back(*c);
  }
  return out;
}

}  // namespace esgkb
