#pragma once

// Topic frequencies over matched concepts and the JSON/CSV report.

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "esgkb/kb.hpp"
#include "esgkb/matcher.hpp"

namespace esgkb {

struct TopicCount {
  std::string name;
  TopicType type;
  std::optional<std::string> parent;
  std::size_t count = 0;
};

struct TopicFrequencies {
  std::vector<TopicCount> topics;  // non-pillar topics, taxonomy order
  std::map<std::string, std::map<std::string, std::size_t>> concept_counts;  // topic -> concept -> matches
  std::size_t unattributed = 0;  // matches whose concept supports no topic

  const TopicCount* find(std::string_view topic) const;
};

// Each match adds one to every topic its concept supports (supports
// triples only, so a concept under a broad topic and one of its sub topics
// raises both rows).
TopicFrequencies topic_frequencies(const std::vector<MatchResult>& matches, const KnowledgeBase& kb);

// Concepts supporting `topic` by match count, ties lexicographic; at most n.
// Throws ValidationError for a topic outside the taxonomy.
std::vector<std::pair<Concept, std::size_t>> top_concepts(const TopicFrequencies& f, const Taxonomy& tax,
                                                          std::string_view topic, std::size_t n);

// {topics: [{name, type, parent, count}], top_concepts: {topic: [{concept, count}]}, unattributed}
// with top_n concepts for every topic that has matches.
void write_report_json(std::ostream& out, const TopicFrequencies& f, const Taxonomy& tax, std::size_t top_n = 10);
// Header `topic,parent,count`.
void write_report_csv(std::ostream& out, const TopicFrequencies& f);

}  // namespace esgkb
