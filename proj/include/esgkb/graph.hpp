#pragma once

// Cosine-similarity graph over concept embeddings.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "esgkb/kb.hpp"

namespace esgkb {

// Row-major matrix of embeddings, one row per concept.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  // Throws ValidationError on a dimension mismatch, a zero row, a
  // non-finite entry or a duplicate concept.
  EmbeddingTable(std::vector<Concept> concepts, std::vector<double> values, std::size_t dim);

  std::size_t size() const { return concepts_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return concepts_.empty(); }
  const std::vector<Concept>& concepts() const { return concepts_; }
  const Concept& phrase(std::size_t i) const { return concepts_[i]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::optional<std::size_t> index_of(const Concept& c) const;

  // Rows for `keep`, in that order; concepts without an embedding are
  // reported through `missing` and skipped.
  EmbeddingTable subset(const std::vector<Concept>& keep, std::vector<Concept>* missing = nullptr) const;

 private:
  std::vector<Concept> concepts_;
  std::vector<double> values_;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSON Lines: {"concept": "...", "vector": [...]} per line.
EmbeddingTable read_embeddings(std::istream& in);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void write_embeddings(std::ostream& out, const EmbeddingTable& table);

double cosine(std::span<const double> u, std::span<const double> v);

struct Edge {
  std::size_t to;
  double weight;
};

// Undirected weighted graph stored as sorted adjacency lists.
class SemanticGraph {
 public:
  SemanticGraph() = default;
  explicit SemanticGraph(std::size_t n) : adj_(n) {}

  // Adds both directions. Throws on a self-loop or an out-of-range node.
  void add_edge(std::size_t i, std::size_t j, double w);
  // Sorts adjacency by neighbor index; call after the last add_edge.
  void finalize();

  std::size_t size() const { return adj_.size(); }
  std::size_t edge_count() const { return edges_; }
  const std::vector<Edge>& neighbors(std::size_t i) const { return adj_[i]; }
  std::size_t degree(std::size_t i) const { return adj_[i].size(); }
  bool has_edge(std::size_t i, std::size_t j) const;
  double weighted_degree(std::size_t i) const;

  struct UndirectedEdge {
    std::size_t i, j;
    double weight;
    friend bool operator==(const UndirectedEdge&, const UndirectedEdge&) = default;
  };
  // Each edge once with i < j, ordered by (i, j).
  std::vector<UndirectedEdge> edge_list() const;

 private:
  std::vector<std::vector<Edge>> adj_;
  std::size_t edges_ = 0;
};

struct GraphOptions {
  double threshold = 0.80;
  // 0 = hardware concurrency. Results are identical for any value.
  unsigned threads = 1;
};

// Edge (i, j) exists iff cosine(row_i, row_j) > threshold; weight = that cosine.
SemanticGraph build_graph(const EmbeddingTable& table, const GraphOptions& opts = {});

// `i \t j \t weight` lines, plus a node file of `index \t concept`.
void write_graph(std::ostream& edges, const SemanticGraph& g);
void write_nodes(std::ostream& nodes, const std::vector<Concept>& concepts);
SemanticGraph read_graph(std::istream& edges, std::size_t node_count);
std::vector<Concept> read_nodes(std::istream& nodes);

}  // namespace esgkb
