#pragma once

// Semi-supervised label propagation over the semantic graph and the
// per-topic-type labelling of non-seed concepts.

#include <array>
#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esgkb/graph.hpp"
#include "esgkb/kb.hpp"

namespace esgkb {

// Dense node × class score matrix with a seed mask.
class LabelMatrix {
 public:
  LabelMatrix(std::size_t nodes, std::vector<std::string> classes);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return classes_.size(); }
  const std::vector<std::string>& classes() const { return classes_; }

  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }

  // Marks r as a seed with a one-hot row on class c.
  void seed(std::size_t r, std::size_t c);
  bool is_seed(std::size_t r) const { return seed_[r] != 0; }
  std::size_t seed_count() const;

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::size_t rows_;
  std::vector<std::string> classes_;
  std::vector<double> values_;
  std::vector<char> seed_;
};

struct PropagationOptions {
  std::size_t n_layers = 50;
  double alpha = 0.5;
  double tolerance = 1e-9;  // stop once the largest entry change is below this
  unsigned threads = 1;     // 0 = hardware concurrency; output does not depend on it
};

struct PropagationResult {
  LabelMatrix labels;
  std::size_t iterations = 0;
  bool converged = false;
};

// Iterates L <- alpha * S * L + (1 - alpha) * L0 with S = D^-1/2 A D^-1/2,
// restoring seed rows after every iteration.
PropagationResult propagate(const SemanticGraph& g, const LabelMatrix& seeds, const PropagationOptions& opts = {});

struct Assignment {
  std::size_t node;
  std::size_t cls;
  double confidence;  // max entry / row sum
};

// Non-seed rows whose maximum exceeds tau get their argmax class; rows with
// a tied maximum are skipped. `ambiguous`, when given, counts those.
std::vector<Assignment> assign_labels(const LabelMatrix& result, double tau_assign = 0.0,
                                      std::size_t* ambiguous = nullptr);

// Labels produced for non-seed concepts by one propagation run per topic type.
struct KbPropagationOptions {
  PropagationOptions propagation;
  double tau_assign = 0.0;
};

struct KbPropagationReport {
  std::size_t labelled_concepts = 0;
  std::size_t dropped_by_conditioning = 0;
  std::size_t ambiguous = 0;
};

// `nodes` are the graph's concepts; `seed_concepts` lists every seed
// (including ones that received no label); `seed_triples` holds their
// annotated triples. Returns propagated triples that respect the taxonomy
// conditioning: a pillar first, broad topics within it, sub topics under the
// chosen broad topic, cross topics only for the Environmental pillar.
std::vector<Triple> propagate_kb(const SemanticGraph& g, const std::vector<Concept>& nodes,
                                 const std::vector<Concept>& seed_concepts, const std::vector<Triple>& seed_triples,
                                 const Taxonomy& tax, const KbPropagationOptions& opts = {},
                                 KbPropagationReport* report = nullptr);

// Seed labels: `concept \t relation \t topic` (extra columns ignored).
std::vector<Triple> read_seed_labels(std::istream& in, const Taxonomy& tax);

}  // namespace esgkb
