#include "esgkb/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

namespace {

double squared_norm(std::span<const double> u) {
  double s = 0.0;
  for (double x : u) s += x * x;
  return s;
}

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
  return s;
}

// Shared by cosine() and build_graph() so both produce the same bits.
double cosine_with_norms(std::span<const double> u, std::span<const double> v, double nu, double nv) {
  return dot(u, v) / (nu * nv);
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<Concept> concepts, std::vector<double> values, std::size_t dim)
    : concepts_(std::move(concepts)), values_(std::move(values)), dim_(dim) {
  if (!concepts_.empty() && dim_ == 0) throw ValidationError("embeddings: dimension must be at least 1");
  if (values_.size() != concepts_.size() * dim_) throw ValidationError("embeddings: value count does not match rows");
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (!index_.emplace(concepts_[i].text(), i).second)
      throw ValidationError("embeddings: duplicate concept '" + concepts_[i].text() + "'");
    auto r = row(i);
    if (!std::all_of(r.begin(), r.end(), [](double x) { return std::isfinite(x); }))
      throw ValidationError("embeddings: non-finite value for '" + concepts_[i].text() + "'");
    if (squared_norm(r) == 0.0) throw ValidationError("embeddings: zero vector for '" + concepts_[i].text() + "'");
  }
}

std::optional<std::size_t> EmbeddingTable::index_of(const Concept& c) const {
  auto it = index_.find(c.text());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingTable EmbeddingTable::subset(const std::vector<Concept>& keep, std::vector<Concept>* missing) const {
  std::vector<Concept> cs;
  std::vector<double> vs;
  for (auto& c : keep) {
    auto idx = index_of(c);
    if (!idx) {
      if (missing) missing->push_back(c);
      continue;
    }
    cs.push_back(c);
    auto r = row(*idx);
    vs.insert(vs.end(), r.begin(), r.end());
  }
  return EmbeddingTable(std::move(cs), std::move(vs), dim_);
}

EmbeddingTable read_embeddings(std::istream& in) {
  std::vector<Concept> concepts;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("embeddings: invalid JSON: ") + e.what(), lineno);
    }
    if (!rec.is_object() || !rec.contains("concept") || !rec["concept"].is_string() || !rec.contains("vector") ||
        !rec["vector"].is_array())
      throw ParseError("embeddings: record needs a string 'concept' and an array 'vector'", lineno);
    auto c = Concept::try_make(rec["concept"].get<std::string>());
    if (!c) throw ParseError("embeddings: bad concept '" + rec["concept"].get<std::string>() + "'", lineno);
    auto& vec = rec["vector"];
    if (concepts.empty()) dim = vec.size();
    if (vec.size() != dim || dim == 0)
      throw ParseError("embeddings: vector has dimension " + std::to_string(vec.size()) + ", expected " +
                           std::to_string(dim),
                       lineno);
    for (auto& x : vec) {
      if (!x.is_number()) throw ParseError("embeddings: non-numeric vector entry", lineno);
      values.push_back(x.get<double>());
    }
    concepts.push_back(std::move(*c));
  }
  try {
    return EmbeddingTable(std::move(concepts), std::move(values), dim);
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_embeddings(in);
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto r = table.row(i);
    nlohmann::json rec = {{"concept", table.phrase(i).text()}, {"vector", std::vector<double>(r.begin(), r.end())}};
    out << rec.dump() << '\n';
  }
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DomainError("cosine: dimension mismatch");
  double nu = squared_norm(u), nv = squared_norm(v);
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine: zero vector");
  return cosine_with_norms(u, v, std::sqrt(nu), std::sqrt(nv));
}

void SemanticGraph::add_edge(std::size_t i, std::size_t j, double w) {
  if (i == j) throw ValidationError("graph: self-loop on node " + std::to_string(i));
  if (i >= adj_.size() || j >= adj_.size()) throw ValidationError("graph: node index out of range");
  adj_[i].push_back({j, w});
  adj_[j].push_back({i, w});
  ++edges_;
}

void SemanticGraph::finalize() {
  for (auto& nbrs : adj_) {
    std::sort(nbrs.begin(), nbrs.end(), [](const Edge& a, const Edge& b) { return a.to < b.to; });
    auto dup = std::adjacent_find(nbrs.begin(), nbrs.end(), [](const Edge& a, const Edge& b) { return a.to == b.to; });
    if (dup != nbrs.end()) throw ValidationError("graph: duplicate edge to node " + std::to_string(dup->to));
  }
}

bool SemanticGraph::has_edge(std::size_t i, std::size_t j) const {
  auto& nbrs = adj_[i];
  auto it = std::lower_bound(nbrs.begin(), nbrs.end(), j, [](const Edge& e, std::size_t v) { return e.to < v; });
  return it != nbrs.end() && it->to == j;
}

double SemanticGraph::weighted_degree(std::size_t i) const {
  double d = 0.0;
  for (auto& e : adj_[i]) d += e.weight;
  return d;
}

std::vector<SemanticGraph::UndirectedEdge> SemanticGraph::edge_list() const {
  std::vector<UndirectedEdge> out;
  out.reserve(edges_);
  for (std::size_t i = 0; i < adj_.size(); ++i)
    for (auto& e : adj_[i])
      if (i < e.to) out.push_back({i, e.to, e.weight});
  return out;
}

SemanticGraph build_graph(const EmbeddingTable& table, const GraphOptions& opts) {
  const std::size_t n = table.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = std::sqrt(squared_norm(table.row(i)));

  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));

  // Each worker owns rows i ≡ w (mod threads) and records edges (i, j>i).
  std::vector<std::vector<std::vector<Edge>>> upper(threads);
  auto work = [&](unsigned w) {
    auto& mine = upper[w];
    for (std::size_t i = w; i < n; i += threads) {
      std::vector<Edge> row;
      for (std::size_t j = i + 1; j < n; ++j) {
        double s = cosine_with_norms(table.row(i), table.row(j), norms[i], norms[j]);
        if (s > opts.threshold) row.push_back({j, s});
      }
      mine.push_back(std::move(row));
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  SemanticGraph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (auto& e : upper[i % threads][i / threads]) g.add_edge(i, e.to, e.weight);
  g.finalize();
  return g;
}

void write_graph(std::ostream& out, const SemanticGraph& g) {
  for (auto& e : g.edge_list()) out << e.i << '\t' << e.j << '\t' << text::format_double(e.weight) << '\n';
}

void write_nodes(std::ostream& out, const std::vector<Concept>& concepts) {
  for (std::size_t i = 0; i < concepts.size(); ++i) out << i << '\t' << concepts[i].text() << '\n';
}

SemanticGraph read_graph(std::istream& in, std::size_t node_count) {
  SemanticGraph g(node_count);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() != 3) throw ParseError("graph: expected 3 columns", lineno);
    std::size_t i = 0, j = 0;
    double w = 0.0;
    auto num = [&](const std::string& s, auto& v) {
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("graph: bad number '" + s + "'", lineno);
    };
    num(cols[0], i);
    num(cols[1], j);
    num(cols[2], w);
    if (i >= node_count || j >= node_count) throw ParseError("graph: node index out of range", lineno);
    try {
      g.add_edge(i, j, w);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  g.finalize();
  return g;
}

std::vector<Concept> read_nodes(std::istream& in) {
  std::vector<Concept> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() != 2) throw ParseError("nodes: expected 2 columns", lineno);
    if (cols[0] != std::to_string(out.size())) throw ParseError("nodes: indices must be 0..n-1 in order", lineno);
    auto c = Concept::try_make(cols[1]);
    if (!c) throw ParseError("nodes: bad concept '" + cols[1] + "'", lineno);
    out.push_back(*c);
  }
  return out;
}

}  // namespace esgkb
