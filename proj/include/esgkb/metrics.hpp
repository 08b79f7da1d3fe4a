#pragma once

// Topic-term evaluation: ESG relatedness, action orientation and unique ESG
// term counts from judge labels, plus agreement between two judges.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "esgkb/matcher.hpp"

namespace esgkb {

struct Judgment {
  std::string term;
  bool esg_related = false;
  bool action_oriented = false;
  std::string judge;

  friend bool operator==(const Judgment&, const Judgment&) = default;
};

// Normalized (lowercase, single-spaced), deduplicated terms.
std::set<std::string> collect_topic_terms(const std::vector<MatchResult>& matches);
std::set<std::string> collect_topic_terms(const std::vector<std::string>& terms);

struct TopicMetrics {
  std::size_t terms = 0;
  std::size_t esg_unique = 0;  // ESG-related terms
  double esg_rel = 0.0;
  double esg_act = 0.0;
};

// Every term must carry exactly one judgment (for a single judge); throws
// ValidationError listing the unjudged terms, DomainError on an empty set.
TopicMetrics aggregate_metrics(const std::set<std::string>& terms, const std::vector<Judgment>& judgments);

struct Agreement {
  double esg_related = 0.0;      // percentage in [0, 100]
  double action_oriented = 0.0;
};

// Both judgment lists must cover the same term set.
Agreement agreement(const std::vector<Judgment>& a, const std::vector<Judgment>& b);

// `term \t esg_related \t action_oriented \t judge`, booleans as true/false.
std::vector<Judgment> read_judgments(std::istream& in);
std::vector<Judgment> load_judgments(const std::filesystem::path& path);
void write_judgments(std::ostream& out, const std::vector<Judgment>& judgments);

// Tab-separated `key \t value` report of the metrics.
void write_metrics(std::ostream& out, const TopicMetrics& m);

}  // namespace esgkb
