#include "esgkb/analytics.hpp"

#include <algorithm>
#include <unordered_map>

#include <json.hpp>

#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

const TopicCount* TopicFrequencies::find(std::string_view topic) const {
  auto key = text::fold_key(topic);
  for (auto& t : topics)
    if (text::fold_key(t.name) == key) return &t;
  return nullptr;
}

TopicFrequencies topic_frequencies(const std::vector<MatchResult>& matches, const KnowledgeBase& kb) {
  const auto& tax = kb.taxonomy();
  TopicFrequencies f;
  std::unordered_map<std::string, std::size_t> row;
  for (auto& t : tax.topics()) {
    if (t.type == TopicType::pillar) continue;
    row.emplace(t.name, f.topics.size());
    f.topics.push_back({t.name, t.type, t.parent, 0});
  }

  std::unordered_map<std::string, std::vector<std::size_t>> supported;
  for (auto& t : kb.triples()) {
    if (t.relation != Relation::supports) continue;
    auto it = row.find(t.topic);
    if (it == row.end()) continue;
    auto& list = supported[t.phrase.text()];
    if (std::find(list.begin(), list.end(), it->second) == list.end()) list.push_back(it->second);
  }

  for (auto& m : matches) {
    auto it = supported.find(m.phrase.text());
    if (it == supported.end()) {
      ++f.unattributed;
      continue;
    }
    for (auto r : it->second) {
      ++f.topics[r].count;
      ++f.concept_counts[f.topics[r].name][m.phrase.text()];
    }
  }
  return f;
}

std::vector<std::pair<Concept, std::size_t>> top_concepts(const TopicFrequencies& f, const Taxonomy& tax,
                                                          std::string_view topic, std::size_t n) {
  auto* t = tax.find(topic);
  if (!t) throw ValidationError("top_concepts: unknown topic '" + std::string(topic) + "'");
  std::vector<std::pair<Concept, std::size_t>> out;
  auto it = f.concept_counts.find(t->name);
  if (it == f.concept_counts.end()) return out;
  for (auto& [c, k] : it->second) out.emplace_back(Concept(c), k);
  std::sort(out.begin(), out.end(), [](auto& a, auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (out.size() > n) out.erase(out.begin() + static_cast<std::ptrdiff_t>(n), out.end());
  return out;
}

void write_report_json(std::ostream& out, const TopicFrequencies& f, const Taxonomy& tax, std::size_t top_n) {
  nlohmann::ordered_json j;
  j["topics"] = nlohmann::ordered_json::array();
  for (auto& t : f.topics) {
    nlohmann::ordered_json row;
    row["name"] = t.name;
    row["type"] = to_string(t.type);
    row["parent"] = t.parent ? nlohmann::ordered_json(*t.parent) : nlohmann::ordered_json(nullptr);
    row["count"] = t.count;
    j["topics"].push_back(std::move(row));
  }
  j["top_concepts"] = nlohmann::ordered_json::object();
  for (auto& t : f.topics) {
    if (t.count == 0) continue;
    auto list = nlohmann::ordered_json::array();
    for (auto& [c, k] : top_concepts(f, tax, t.name, top_n)) {
      nlohmann::ordered_json e;
      e["concept"] = c.text();
      e["count"] = k;
      list.push_back(std::move(e));
    }
    j["top_concepts"][t.name] = std::move(list);
  }
  j["unattributed"] = f.unattributed;
  out << j.dump(2) << '\n';
}

void write_report_csv(std::ostream& out, const TopicFrequencies& f) {
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  out << "topic,parent,count\n";
  for (auto& t : f.topics) out << field(t.name) << ',' << field(t.parent.value_or("")) << ',' << t.count << '\n';
}

}  // namespace esgkb
