#include "esgkb/metrics.hpp"

#include <fstream>
#include <map>

#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

std::set<std::string> collect_topic_terms(const std::vector<MatchResult>& matches) {
  std::set<std::string> out;
  for (auto& m : matches) out.insert(m.phrase.text());
  return out;
}

std::set<std::string> collect_topic_terms(const std::vector<std::string>& terms) {
  std::set<std::string> out;
  for (auto& t : terms) {
    auto n = text::normalize_phrase(t);
    if (!n.empty()) out.insert(std::move(n));
  }
  return out;
}

namespace {

std::map<std::string, const Judgment*> index_judgments(const std::vector<Judgment>& js) {
  std::map<std::string, const Judgment*> idx;
  for (auto& j : js) {
    auto key = text::normalize_phrase(j.term);
    if (!idx.emplace(key, &j).second)
      throw ValidationError("judgments: term '" + key + "' judged more than once");
  }
  return idx;
}

double percent(std::size_t part, std::size_t whole) {
  return 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

}  // namespace

TopicMetrics aggregate_metrics(const std::set<std::string>& terms, const std::vector<Judgment>& judgments) {
  if (terms.empty()) throw DomainError("aggregate_metrics: no terms; proportions are undefined");
  auto idx = index_judgments(judgments);
  TopicMetrics m;
  m.terms = terms.size();
  std::vector<std::string> missing;
  std::size_t act = 0;
  for (auto& t : terms) {
    auto it = idx.find(text::normalize_phrase(t));
    if (it == idx.end()) {
      missing.push_back(t);
      continue;
    }
    if (it->second->esg_related) ++m.esg_unique;
    if (it->second->action_oriented) ++act;
  }
  if (!missing.empty()) throw ValidationError("aggregate_metrics: unjudged terms: " + text::join(missing, ", "));
  m.esg_rel = static_cast<double>(m.esg_unique) / static_cast<double>(m.terms);
  m.esg_act = static_cast<double>(act) / static_cast<double>(m.terms);
  return m;
}

Agreement agreement(const std::vector<Judgment>& a, const std::vector<Judgment>& b) {
  auto ia = index_judgments(a), ib = index_judgments(b);
  if (ia.size() != ib.size()) throw ValidationError("agreement: judgment sets cover different terms");
  if (ia.empty()) throw DomainError("agreement: no judgments");
  std::size_t rel = 0, act = 0;
  for (auto& [term, ja] : ia) {
    auto it = ib.find(term);
    if (it == ib.end()) throw ValidationError("agreement: term '" + term + "' judged by only one side");
    if (ja->esg_related == it->second->esg_related) ++rel;
    if (ja->action_oriented == it->second->action_oriented) ++act;
  }
  return {percent(rel, ia.size()), percent(act, ia.size())};
}

std::vector<Judgment> read_judgments(std::istream& in) {
  std::vector<Judgment> out;
  std::string line;
  std::size_t lineno = 0;
  auto flag = [&](const std::string& s) {
    auto v = text::to_lower(text::trim(s));
    if (v == "true" || v == "1" || v == "esg") return true;
    if (v == "false" || v == "0" || v == "non-esg") return false;
    throw ParseError("judgments: expected true/false, got '" + s + "'", lineno);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() != 4) throw ParseError("judgments: expected 4 columns", lineno);
    if (lineno == 1 && cols[0] == "term") continue;  // header
    out.push_back({text::normalize_phrase(cols[0]), flag(cols[1]), flag(cols[2]), cols[3]});
  }
  return out;
}

std::vector<Judgment> load_judgments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_judgments(in);
}

void write_judgments(std::ostream& out, const std::vector<Judgment>& judgments) {
  for (auto& j : judgments)
    out << j.term << '\t' << (j.esg_related ? "true" : "false") << '\t' << (j.action_oriented ? "true" : "false")
        << '\t' << j.judge << '\n';
}

void write_metrics(std::ostream& out, const TopicMetrics& m) {
  out << "terms\t" << m.terms << '\n'
      << "esg_unique\t" << m.esg_unique << '\n'
      << "esg_rel\t" << text::format_double(m.esg_rel) << '\n'
      << "esg_act\t" << text::format_double(m.esg_act) << '\n';
}

}  // namespace esgkb
