#include "esgkb/kb.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include <spdlog/spdlog.h>

#include "esgkb/assets.hpp"
#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

Concept::Concept(std::string_view phrase) {
  auto c = try_make(phrase);
  if (!c) throw ValidationError("concept must have 2 or 3 words: '" + std::string(phrase) + "'");
  *this = std::move(*c);
}

std::optional<Concept> Concept::try_make(std::string_view phrase) {
  Concept c;
  c.words_ = text::split_ws(text::to_lower(phrase));
  if (c.words_.size() < 2 || c.words_.size() > 3) return std::nullopt;
  c.text_ = text::join(c.words_, " ");
  return c;
}

std::string_view to_string(TopicType t) {
  switch (t) {
    case TopicType::pillar: return "pillar";
    case TopicType::broad: return "broad";
    case TopicType::sub: return "sub";
    case TopicType::cross_broad: return "cross-broad";
    case TopicType::cross_sub: return "cross-sub";
  }
  return "?";
}

std::optional<TopicType> parse_topic_type(std::string_view s) {
  auto k = text::to_lower(text::trim(s));
  std::replace(k.begin(), k.end(), '_', '-');
  for (auto t : kTopicTypes)
    if (k == to_string(t)) return t;
  return std::nullopt;
}

std::string_view to_string(Pillar p) {
  switch (p) {
    case Pillar::environmental: return "Environmental";
    case Pillar::social: return "Social";
    case Pillar::governance: return "Governance";
  }
  return "?";
}

std::optional<Pillar> parse_pillar(std::string_view s) {
  auto k = text::to_lower(text::trim(s));
  if (k == "e" || k == "environmental") return Pillar::environmental;
  if (k == "s" || k == "social") return Pillar::social;
  if (k == "g" || k == "governance") return Pillar::governance;
  return std::nullopt;
}

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::aligns_with: return "aligns_with";
    case Relation::supports: return "supports";
    case Relation::undermines: return "undermines";
  }
  return "?";
}

std::optional<Relation> parse_relation(std::string_view s) {
  auto k = text::normalize_phrase(s);
  if (k == "aligns_with" || k == "aligns with") return Relation::aligns_with;
  if (k == "supports") return Relation::supports;
  if (k == "undermines") return Relation::undermines;
  return std::nullopt;
}

std::string_view to_string(Provenance p) { return p == Provenance::seed ? "seed" : "propagated"; }

std::optional<Provenance> parse_provenance(std::string_view s) {
  auto k = text::to_lower(text::trim(s));
  if (k == "seed") return Provenance::seed;
  if (k == "propagated") return Provenance::propagated;
  return std::nullopt;
}

std::string_view to_string(Polarity p) { return p == Polarity::positive ? "positive" : "negative"; }

std::optional<Polarity> parse_polarity(std::string_view s) {
  auto k = text::to_lower(text::trim(s));
  if (k == "positive") return Polarity::positive;
  if (k == "negative") return Polarity::negative;
  return std::nullopt;
}

bool relation_legal(Relation r, TopicType t) {
  return (r == Relation::aligns_with) == (t == TopicType::pillar);
}

// ---------------------------------------------------------------------------
// Taxonomy

Taxonomy Taxonomy::from_topics(std::vector<Topic> topics) {
  Taxonomy tax;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    auto key = text::fold_key(topics[i].name);
    if (key.empty()) throw ValidationError("taxonomy: empty topic name");
    if (!tax.index_.emplace(key, i).second)
      throw ValidationError("taxonomy: duplicate topic name '" + topics[i].name + "'");
  }
  tax.topics_ = std::move(topics);

  for (auto& t : tax.topics_) {
    if (t.pillar_scope.empty()) throw ValidationError("taxonomy: topic '" + t.name + "' has an empty pillar scope");
    if (!t.parent) {
      if (t.type == TopicType::sub || t.type == TopicType::cross_sub)
        throw ValidationError("taxonomy: " + std::string(to_string(t.type)) + " topic '" + t.name +
                              "' needs a parent");
      continue;
    }
    auto* p = tax.find(*t.parent);
    if (!p) throw ValidationError("taxonomy: dangling parent '" + *t.parent + "' of '" + t.name + "'");
    t.parent = p->name;
    bool ok = false;
    switch (t.type) {
      case TopicType::pillar: ok = false; break;
      case TopicType::broad:
      case TopicType::cross_broad: ok = p->type == TopicType::pillar; break;
      case TopicType::sub: ok = p->type == TopicType::broad; break;
      case TopicType::cross_sub: ok = p->type == TopicType::cross_broad; break;
    }
    if (!ok)
      throw ValidationError("taxonomy: '" + t.name + "' (" + std::string(to_string(t.type)) +
                            ") cannot have parent '" + p->name + "' (" + std::string(to_string(p->type)) + ")");
  }
  return tax;
}

const Topic* Taxonomy::find(std::string_view name) const {
  auto it = index_.find(text::fold_key(name));
  return it == index_.end() ? nullptr : &topics_[it->second];
}

const Topic& Taxonomy::at(std::string_view name) const {
  if (auto* t = find(name)) return *t;
  throw ValidationError("unknown topic '" + std::string(name) + "'");
}

std::optional<std::size_t> Taxonomy::index_of(std::string_view name) const {
  auto it = index_.find(text::fold_key(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<const Topic*> Taxonomy::of_type(TopicType t) const {
  std::vector<const Topic*> out;
  for (auto& topic : topics_)
    if (topic.type == t) out.push_back(&topic);
  return out;
}

std::vector<const Topic*> Taxonomy::children_of(std::string_view parent) const {
  std::vector<const Topic*> out;
  auto key = text::fold_key(parent);
  for (auto& topic : topics_)
    if (topic.parent && text::fold_key(*topic.parent) == key) out.push_back(&topic);
  return out;
}

const Topic& Taxonomy::pillar_topic(Pillar p) const {
  for (auto& topic : topics_)
    if (topic.type == TopicType::pillar && topic.pillar_scope.count(p)) return topic;
  throw ValidationError("taxonomy has no pillar topic for " + std::string(to_string(p)));
}

std::size_t Taxonomy::count(TopicType t) const {
  return static_cast<std::size_t>(
      std::count_if(topics_.begin(), topics_.end(), [t](const Topic& x) { return x.type == t; }));
}

Taxonomy read_taxonomy(std::istream& in) {
  std::vector<Topic> topics;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() < 4 || cols.size() > 5) throw ParseError("taxonomy: expected 4 or 5 tab-separated columns", lineno);
    Topic t;
    t.name = std::string(text::trim(cols[0]));
    if (t.name.empty()) throw ParseError("taxonomy: empty topic name", lineno);
    auto type = parse_topic_type(cols[1]);
    if (!type) throw ParseError("taxonomy: unknown topic type '" + cols[1] + "'", lineno);
    t.type = *type;
    auto parent = text::trim(cols[2]);
    if (!parent.empty() && parent != "-") t.parent = std::string(parent);
    for (auto& p : text::split(cols[3], ',')) {
      auto pillar = parse_pillar(p);
      if (!pillar) throw ParseError("taxonomy: unknown pillar '" + p + "'", lineno);
      t.pillar_scope.insert(*pillar);
    }
    if (cols.size() == 5) t.description = std::string(text::trim(cols[4]));
    topics.push_back(std::move(t));
  }
  if (topics.empty()) throw ParseError("taxonomy: no topics found");
  return Taxonomy::from_topics(std::move(topics));
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open taxonomy file " + path.string());
  return read_taxonomy(in);
}

std::string_view default_taxonomy_tsv() { return assets::taxonomy_tsv(); }

const Taxonomy& default_taxonomy() {
  static const Taxonomy tax = [] {
    std::istringstream in{std::string(assets::taxonomy_tsv())};
    return read_taxonomy(in);
  }();
  return tax;
}

void write_taxonomy(std::ostream& out, const Taxonomy& tax) {
  for (auto& t : tax.topics()) {
    std::vector<std::string> scope;
    for (auto p : t.pillar_scope) scope.emplace_back(to_string(p).substr(0, 1));
    out << t.name << '\t' << to_string(t.type) << '\t' << (t.parent ? *t.parent : "-") << '\t'
        << text::join(scope, ",");
    if (!t.description.empty()) out << '\t' << t.description;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Knowledge base

bool KnowledgeBase::add(Triple t) {
  if (auto* topic = taxonomy_->find(t.topic)) t.topic = topic->name;
  else t.topic = std::string(text::trim(t.topic));
  auto key = std::make_tuple(t.phrase.text(), t.relation, text::fold_key(t.topic));
  if (!keys_.insert(key).second) return false;
  triples_.push_back(std::move(t));
  return true;
}

std::vector<Concept> KnowledgeBase::concepts() const {
  std::vector<Concept> out;
  out.reserve(triples_.size());
  for (auto& t : triples_) out.push_back(t.phrase);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<const Triple*> KnowledgeBase::triples_of(const Concept& c) const {
  std::vector<const Triple*> out;
  for (auto& t : triples_)
    if (t.phrase == c) out.push_back(&t);
  return out;
}

KnowledgeBase read_triples_sep(std::istream& in, const Taxonomy& tax, char sep, std::size_t* duplicates) {
  KnowledgeBase kb(tax);
  std::size_t dups = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    auto cols = text::split(line, sep);
    if (lineno == 1 && text::to_lower(text::trim(cols[0])) == "concept") continue;  // header
    if (cols.size() != 3 && cols.size() != 6)
      throw ParseError("triples: expected 3 or 6 columns, got " + std::to_string(cols.size()), lineno);
    auto phrase = Concept::try_make(cols[0]);
    if (!phrase) throw ParseError("triples: concept must have 2 or 3 words: '" + cols[0] + "'", lineno);
    auto rel = parse_relation(cols[1]);
    if (!rel) throw ParseError("triples: unknown relation '" + cols[1] + "'", lineno);
    Triple t{*phrase, *rel, std::string(text::trim(cols[2])), Provenance::seed, 1.0, std::nullopt};
    if (cols.size() == 6) {
      auto prov = parse_provenance(cols[3]);
      if (!prov) throw ParseError("triples: unknown provenance '" + cols[3] + "'", lineno);
      t.provenance = *prov;
      try {
        std::size_t used = 0;
        t.confidence = std::stod(cols[4], &used);
        if (used != cols[4].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("triples: bad confidence '" + cols[4] + "'", lineno);
      }
      if (!(t.confidence >= 0.0 && t.confidence <= 1.0)) throw ParseError("triples: confidence outside [0,1]", lineno);
      if (t.provenance == Provenance::seed && t.confidence != 1.0)
        throw ParseError("triples: seed triples must have confidence 1", lineno);
      auto pol = text::trim(cols[5]);
      if (!pol.empty() && pol != "-") {
        t.polarity = parse_polarity(pol);
        if (!t.polarity) throw ParseError("triples: unknown polarity '" + cols[5] + "'", lineno);
      }
    }
    if (!kb.add(std::move(t))) {
      ++dups;
      spdlog::warn("triples: duplicate triple dropped at line {}", lineno);
    }
  }
  if (duplicates) *duplicates = dups;
  return kb;
}

KnowledgeBase read_triples(std::istream& in, const Taxonomy& tax, std::size_t* duplicates) {
  return read_triples_sep(in, tax, '\t', duplicates);
}

KnowledgeBase load_triples(const std::filesystem::path& path, const Taxonomy& tax, std::size_t* duplicates) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triple file " + path.string());
  char sep = text::to_lower(path.extension().string()) == ".csv" ? ',' : '\t';
  return read_triples_sep(in, tax, sep, duplicates);
}

void write_triples(std::ostream& out, const std::vector<Triple>& triples) {
  for (auto& t : triples) {
    out << t.phrase.text() << '\t' << to_string(t.relation) << '\t' << t.topic << '\t' << to_string(t.provenance)
        << '\t' << text::format_double(t.confidence) << '\t' << (t.polarity ? to_string(*t.polarity) : "-") << '\n';
  }
}

void save_triples(const std::filesystem::path& path, const std::vector<Triple>& triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_triples(out, triples);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::pillar_assignment: return "pillar_assignment";
    case Rule::single_label: return "single_label";
    case Rule::parent_child: return "parent_child";
    case Rule::cross_label: return "cross_label";
    case Rule::unknown_topic: return "unknown_topic";
    case Rule::illegal_relation: return "illegal_relation";
  }
  return "?";
}

std::string_view rule_title(Rule r) {
  switch (r) {
    case Rule::pillar_assignment: return "Pillar Assignment";
    case Rule::single_label: return "Single Label within Topic Types";
    case Rule::parent_child: return "Cross-Labels between Parent & Children";
    case Rule::cross_label: return "Cross-Labels between Cross & Non-Cross";
    case Rule::unknown_topic: return "Unknown Topic";
    case Rule::illegal_relation: return "Illegal Relation";
  }
  return "?";
}

namespace {

struct Held {
  const Triple* triple;
  const Topic* topic;
};

std::string pillar_set_string(const std::set<Pillar>& s) {
  std::vector<std::string> v;
  for (auto p : s) v.emplace_back(to_string(p));
  return "{" + text::join(v, ",") + "}";
}

void validate_concept(const std::string& phrase, const std::vector<const Triple*>& triples, const Taxonomy& tax,
                      const ValidationOptions& opts, ValidationReport& out) {
  std::array<std::vector<Held>, kTopicTypes.size()> by_type;
  for (auto* t : triples) {
    auto* topic = tax.find(t->topic);
    if (!topic) {
      out.push_back({Rule::unknown_topic, phrase, {*t}, "topic '" + t->topic + "' is not in the taxonomy"});
      continue;
    }
    if (!relation_legal(t->relation, topic->type)) {
      out.push_back({Rule::illegal_relation, phrase, {*t},
                     std::string(to_string(t->relation)) + " toward a " + std::string(to_string(topic->type)) +
                         " topic"});
      continue;
    }
    by_type[static_cast<std::size_t>(topic->type)].push_back({t, topic});
  }

  for (auto type : kTopicTypes) {
    auto& held = by_type[static_cast<std::size_t>(type)];
    if (held.size() > 1) {
      Violation v{Rule::single_label, phrase, {}, std::to_string(held.size()) + " relations at topic type " +
                                                       std::string(to_string(type))};
      for (auto& h : held) v.triples.push_back(*h.triple);
      out.push_back(std::move(v));
    }
  }

  auto& pillars = by_type[static_cast<std::size_t>(TopicType::pillar)];
  auto& broads = by_type[static_cast<std::size_t>(TopicType::broad)];
  auto& subs = by_type[static_cast<std::size_t>(TopicType::sub)];
  auto& cross_broads = by_type[static_cast<std::size_t>(TopicType::cross_broad)];
  auto& cross_subs = by_type[static_cast<std::size_t>(TopicType::cross_sub)];

  // Pillars implied by the non-cross topics the concept holds.
  std::optional<std::set<Pillar>> implied;
  std::vector<Triple> scoped;
  for (auto* group : {&broads, &subs}) {
    for (auto& h : *group) {
      scoped.push_back(*h.triple);
      if (!implied) {
        implied = h.topic->pillar_scope;
      } else {
        std::set<Pillar> both;
        std::set_intersection(implied->begin(), implied->end(), h.topic->pillar_scope.begin(),
                              h.topic->pillar_scope.end(), std::inserter(both, both.begin()));
        implied = std::move(both);
      }
    }
  }

  std::optional<Pillar> explicit_pillar;
  if (pillars.size() == 1) explicit_pillar = *pillars.front().topic->pillar_scope.begin();

  if (explicit_pillar && implied && !implied->count(*explicit_pillar)) {
    Violation v{Rule::pillar_assignment, phrase, {*pillars.front().triple},
                "aligns with " + std::string(to_string(*explicit_pillar)) + " but holds topics scoped to " +
                    pillar_set_string(*implied)};
    v.triples.insert(v.triples.end(), scoped.begin(), scoped.end());
    out.push_back(std::move(v));
  } else if (pillars.empty() && implied && implied->empty()) {
    out.push_back({Rule::pillar_assignment, phrase, scoped, "topics imply no single pillar"});
  } else if (pillars.empty() && opts.require_pillar && !triples.empty()) {
    out.push_back({Rule::pillar_assignment, phrase, {}, "no aligns_with pillar triple"});
  }

  if (!cross_broads.empty() || !cross_subs.empty()) {
    bool bad = false;
    std::string why;
    if (pillars.size() == 1) {
      bad = explicit_pillar != Pillar::environmental;
      why = "aligns with " + std::string(to_string(*explicit_pillar));
    } else if (pillars.empty() && implied && !implied->empty() && !implied->count(Pillar::environmental)) {
      bad = true;
      why = "holds topics scoped to " + pillar_set_string(*implied);
    }
    if (bad) {
      Violation v{Rule::cross_label, phrase, {}, "cross topics require the Environmental pillar; concept " + why};
      if (pillars.size() == 1) v.triples.push_back(*pillars.front().triple);
      for (auto* group : {&cross_broads, &cross_subs})
        for (auto& h : *group) v.triples.push_back(*h.triple);
      out.push_back(std::move(v));
    }
  }

  auto check_parent = [&](std::vector<Held>& parents, std::vector<Held>& children) {
    if (parents.size() != 1) return;
    auto& parent = parents.front();
    for (auto& child : children) {
      if (!child.topic->parent || text::fold_key(*child.topic->parent) != text::fold_key(parent.topic->name)) {
        out.push_back({Rule::parent_child, phrase, {*parent.triple, *child.triple},
                       "'" + child.topic->name + "' is not a child of '" + parent.topic->name + "'"});
      }
    }
  };
  check_parent(broads, subs);
  check_parent(cross_broads, cross_subs);
}

}  // namespace

ValidationReport validate_triples(const KnowledgeBase& kb, const ValidationOptions& opts) {
  std::map<std::string, std::vector<const Triple*>> by_concept;
  for (auto& t : kb.triples()) by_concept[t.phrase.text()].push_back(&t);
  ValidationReport report;
  for (auto& [phrase, triples] : by_concept) validate_concept(phrase, triples, kb.taxonomy(), opts, report);
  return report;
}

// ---------------------------------------------------------------------------
// Statistics

StatsTable kb_stats(const KnowledgeBase& kb) {
  auto& tax = kb.taxonomy();
  StatsTable s;
  s.rows.resize(tax.size());
  for (std::size_t i = 0; i < tax.size(); ++i) {
    s.rows[i].topic = tax.topics()[i].name;
    s.rows[i].type = tax.topics()[i].type;
  }
  s.grand.topic = "TOTAL";
  std::set<std::string> all, seeds;
  for (auto& t : kb.triples()) {
    all.insert(t.phrase.text());
    if (t.provenance == Provenance::seed) seeds.insert(t.phrase.text());
    auto bump = [&](StatsRow& r) {
      ++r.total;
      switch (t.relation) {
        case Relation::supports: ++r.supports; break;
        case Relation::undermines: ++r.undermines; break;
        case Relation::aligns_with: ++r.aligns_with; break;
      }
    };
    bump(s.grand);
    if (auto idx = tax.index_of(t.topic)) bump(s.rows[*idx]);
  }
  s.unique_concepts = all.size();
  s.seed_concepts = seeds.size();
  s.propagated_concepts = all.size() - seeds.size();
  return s;
}

void write_stats(std::ostream& out, const StatsTable& s) {
  out << "topic\ttype\ttotal\tsupports\tundermines\taligns_with\n";
  for (auto& r : s.rows)
    out << r.topic << '\t' << to_string(r.type) << '\t' << r.total << '\t' << r.supports << '\t' << r.undermines
        << '\t' << r.aligns_with << '\n';
  auto& g = s.grand;
  out << g.topic << "\t-\t" << g.total << '\t' << g.supports << '\t' << g.undermines << '\t' << g.aligns_with << '\n';
  out << "# unique_concepts\t" << s.unique_concepts << "\n# seed_concepts\t" << s.seed_concepts
      << "\n# propagated_concepts\t" << s.propagated_concepts << '\n';
}

}  // namespace esgkb
