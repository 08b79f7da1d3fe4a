#pragma once

// Domain model of the ESG knowledge base: concepts, the topic taxonomy,
// relations, triples, rule validation, and per-topic statistics.

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace esgkb {

// A normalized 2–3 word verb-led phrase. The first word is the verb slot,
// the remaining words form the noun phrase.
class Concept {
 public:
  // Normalizes (lowercase, single spaces) and validates arity.
  // Throws ValidationError on a phrase that is not 2 or 3 words.
  explicit Concept(std::string_view phrase);
  static std::optional<Concept> try_make(std::string_view phrase);

  const std::string& text() const { return text_; }
  const std::vector<std::string>& words() const { return words_; }
  std::size_t arity() const { return words_.size(); }
  const std::string& verb() const { return words_.front(); }

  friend bool operator==(const Concept& a, const Concept& b) { return a.text_ == b.text_; }
  friend auto operator<=>(const Concept& a, const Concept& b) { return a.text_ <=> b.text_; }

 private:
  Concept() = default;
  std::string text_;
  std::vector<std::string> words_;
};

enum class TopicType { pillar, broad, sub, cross_broad, cross_sub };
inline constexpr std::array<TopicType, 5> kTopicTypes = {TopicType::pillar, TopicType::broad, TopicType::sub,
                                                         TopicType::cross_broad, TopicType::cross_sub};

std::string_view to_string(TopicType t);
std::optional<TopicType> parse_topic_type(std::string_view s);

enum class Pillar { environmental, social, governance };
inline constexpr std::array<Pillar, 3> kPillars = {Pillar::environmental, Pillar::social, Pillar::governance};

std::string_view to_string(Pillar p);
std::optional<Pillar> parse_pillar(std::string_view s);  // accepts "E", "Environmental", ...

enum class Relation { aligns_with, supports, undermines };

std::string_view to_string(Relation r);
std::optional<Relation> parse_relation(std::string_view s);  // accepts "aligns with" too

enum class Provenance { seed, propagated };
std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view s);

enum class Polarity { positive, negative };
std::string_view to_string(Polarity p);
std::optional<Polarity> parse_polarity(std::string_view s);

struct Topic {
  std::string name;
  TopicType type = TopicType::pillar;
  std::optional<std::string> parent;
  std::set<Pillar> pillar_scope;
  std::string description;

  bool is_cross() const { return type == TopicType::cross_broad || type == TopicType::cross_sub; }
};

// aligns_with is legal only toward pillars; supports/undermines only toward non-pillars.
bool relation_legal(Relation r, TopicType t);

class Taxonomy {
 public:
  Taxonomy() = default;

  // Validates uniqueness, parent existence and the parent-type structure.
  static Taxonomy from_topics(std::vector<Topic> topics);

  const std::vector<Topic>& topics() const { return topics_; }
  std::size_t size() const { return topics_.size(); }

  // Case-insensitive, whitespace-trimmed lookup.
  const Topic* find(std::string_view name) const;
  const Topic& at(std::string_view name) const;  // throws ValidationError
  std::optional<std::size_t> index_of(std::string_view name) const;

  std::vector<const Topic*> of_type(TopicType t) const;
  std::vector<const Topic*> children_of(std::string_view parent) const;
  const Topic& pillar_topic(Pillar p) const;
  std::size_t count(TopicType t) const;

 private:
  std::vector<Topic> topics_;
  std::unordered_map<std::string, std::size_t> index_;
};

Taxonomy read_taxonomy(std::istream& in);
Taxonomy load_taxonomy(const std::filesystem::path& path);
// The taxonomy shipped with the library.
const Taxonomy& default_taxonomy();
std::string_view default_taxonomy_tsv();
void write_taxonomy(std::ostream& out, const Taxonomy& tax);

struct Triple {
  Concept phrase;
  Relation relation = Relation::supports;
  std::string topic;  // canonical taxonomy name once attached to a KB
  Provenance provenance = Provenance::seed;
  double confidence = 1.0;
  std::optional<Polarity> polarity;

  friend bool operator==(const Triple&, const Triple&) = default;
};

class KnowledgeBase {
 public:
  explicit KnowledgeBase(const Taxonomy& taxonomy) : taxonomy_(&taxonomy) {}

  // Canonicalizes the topic name when known. Returns false and drops the
  // triple when an identical (concept, relation, topic) entry already exists.
  bool add(Triple t);

  const Taxonomy& taxonomy() const { return *taxonomy_; }
  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }

  std::vector<Concept> concepts() const;  // sorted, unique
  std::vector<const Triple*> triples_of(const Concept& c) const;

 private:
  const Taxonomy* taxonomy_;
  std::vector<Triple> triples_;
  std::set<std::tuple<std::string, Relation, std::string>> keys_;
};

// Triple file: concept, relation, topic, provenance, confidence, polarity.
// Files with only the first three columns are read as seed triples with
// confidence 1. `duplicates`, when given, receives the count of dropped
// duplicate lines.
KnowledgeBase read_triples(std::istream& in, const Taxonomy& tax, std::size_t* duplicates = nullptr);
KnowledgeBase load_triples(const std::filesystem::path& path, const Taxonomy& tax,
                           std::size_t* duplicates = nullptr);
void write_triples(std::ostream& out, const std::vector<Triple>& triples);
void save_triples(const std::filesystem::path& path, const std::vector<Triple>& triples);

enum class Rule {
  pillar_assignment,
  single_label,
  parent_child,
  cross_label,
  unknown_topic,
  illegal_relation,
};
std::string_view to_string(Rule r);
std::string_view rule_title(Rule r);

struct Violation {
  Rule rule;
  std::string phrase;
  std::vector<Triple> triples;
  std::string detail;
};

struct ValidationOptions {
  // Also flag concepts that hold topic relations but no aligns_with triple.
  bool require_pillar = false;
};

using ValidationReport = std::vector<Violation>;
ValidationReport validate_triples(const KnowledgeBase& kb, const ValidationOptions& opts = {});

struct StatsRow {
  std::string topic;
  TopicType type = TopicType::pillar;
  std::size_t total = 0;
  std::size_t supports = 0;
  std::size_t undermines = 0;
  std::size_t aligns_with = 0;
};

struct StatsTable {
  std::vector<StatsRow> rows;  // taxonomy order
  StatsRow grand;              // topic = "TOTAL"
  std::size_t unique_concepts = 0;
  std::size_t seed_concepts = 0;
  std::size_t propagated_concepts = 0;
};

StatsTable kb_stats(const KnowledgeBase& kb);
void write_stats(std::ostream& out, const StatsTable& stats);

}  // namespace esgkb
