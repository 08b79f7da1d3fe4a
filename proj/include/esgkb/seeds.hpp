#pragma once

// Clustering providers, the confidence quality index, consequential scores
// and diversity-aware seed selection.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <vector>

#include "esgkb/graph.hpp"

namespace esgkb {

inline constexpr int kNoise = -1;

struct Clustering {
  std::vector<int> assignment;    // cluster id per node, kNoise for noise
  std::vector<double> confidence; // per node, in [0, 1]

  std::size_t size() const { return assignment.size(); }
  bool empty() const { return assignment.empty(); }
  // Member lists keyed by cluster id, noise included as one group; members ascending.
  std::map<int, std::vector<std::size_t>> members() const;
  void check() const;
};

// `node_index \t cluster_id \t confidence`. Every node in [0, node_count)
// must appear exactly once.
Clustering read_clustering(std::istream& in, std::size_t node_count);
Clustering load_clustering(const std::filesystem::path& path, std::size_t node_count);
void write_clustering(std::ostream& out, const Clustering& c);

struct BuiltinClusterOptions {
  double similarity_threshold = 0.80;
};

// Deterministic baseline: connected components of the strict cosine
// threshold graph. Cluster ids follow the smallest member index.
// Confidence is the member's cosine to its cluster centroid clipped to
// [0, 1]; singleton clusters get 0.
Clustering cluster_builtin(const EmbeddingTable& table, const BuiltinClusterOptions& opts = {});

// Fraction of nodes whose confidence is strictly above tau.
double cqi(const Clustering& c, double tau = 0.60);

// Number of neighbors j of `node` such that no node in `selected` has an
// edge to j.
std::size_t consequential_score(std::size_t node, const SemanticGraph& g, const std::set<std::size_t>& selected);

struct SeedSet {
  std::map<int, std::vector<std::size_t>> per_cluster;  // selection order
  std::vector<std::size_t> total;                        // sorted ascending
  double proportion = 0.0;                               // final P
  std::size_t estimated = 0;                             // N_s at the final P

  bool contains(std::size_t node) const;
};

struct SeedOptions {
  std::size_t target = 1;
  double beta = 0.01;
};

// Adjusts the seed proportion P in steps of beta until |N_s - T| stops
// improving, then picks max(1, floor(P*|c|)) seeds per cluster (capped at
// |c|) greedily by maximum consequential score, ties to the lowest index.
SeedSet select_seeds(const SemanticGraph& g, const Clustering& c, const SeedOptions& opts);

// `concept \t cluster_id \t selection_rank` (rank is 1-based within the cluster).
void write_seeds(std::ostream& out, const SeedSet& seeds, const std::vector<Concept>& nodes);
std::vector<Concept> read_seed_concepts(std::istream& in);

}  // namespace esgkb
