#include "esgkb/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include <spdlog/spdlog.h>

#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

void ParsedSentence::check() const {
  std::size_t roots = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].head > tokens.size())
      throw ValidationError("sentence " + sent_id + ": head of token " + std::to_string(i + 1) + " out of range");
    if (tokens[i].head == i + 1)
      throw ValidationError("sentence " + sent_id + ": token " + std::to_string(i + 1) + " is its own head");
    if (tokens[i].head == 0) ++roots;
  }
  if (!tokens.empty() && roots != 1)
    throw ValidationError("sentence " + sent_id + ": expected exactly one root, found " + std::to_string(roots));
}

namespace {

bool parse_index(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::vector<ParsedSentence> read_conllu(std::istream& in, std::string_view default_doc_id) {
  std::vector<ParsedSentence> out;
  std::string doc_id(default_doc_id);
  std::size_t sentence_in_doc = 0;
  ParsedSentence cur;
  std::size_t cur_start = 0;
  std::string line;
  std::size_t lineno = 0;

  auto flush = [&] {
    if (cur.tokens.empty()) {
      cur = {};
      return;
    }
    ++sentence_in_doc;
    cur.doc_id = doc_id;
    if (cur.sent_id.empty()) cur.sent_id = std::to_string(sentence_in_doc);
    try {
      cur.check();
    } catch (const ValidationError& e) {
      throw ParseError(std::string("conllu: ") + e.what(), cur_start);
    }
    out.push_back(std::move(cur));
    cur = {};
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') {
      auto body = text::trim(std::string_view(line).substr(1));
      auto value_of = [&](std::string_view key) -> std::optional<std::string> {
        if (body.substr(0, key.size()) != key) return std::nullopt;
        auto rest = text::trim(body.substr(key.size()));
        if (rest.empty() || rest.front() != '=') return std::nullopt;
        return std::string(text::trim(rest.substr(1)));
      };
      if (auto v = value_of("newdoc id")) {
        flush();
        doc_id = *v;
        sentence_in_doc = 0;
      } else if (auto s = value_of("sent_id")) {
        cur.sent_id = *s;
      }
      continue;
    }
    auto cols = text::split(line, '\t');
    if (cols.size() != 10) throw ParseError("conllu: expected 10 tab-separated columns", lineno);
    // Multiword token ranges (1-2) and empty nodes (1.1) carry no syntax here.
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    std::size_t id = 0;
    if (!parse_index(cols[0], id) || id != cur.tokens.size() + 1)
      throw ParseError("conllu: token id '" + cols[0] + "' out of sequence", lineno);
    if (cur.tokens.empty()) cur_start = lineno;
    Token t;
    t.form = cols[1];
    t.lemma = cols[2];
    t.upos = cols[3];
    t.xpos = cols[4];
    if (!parse_index(cols[6], t.head)) throw ParseError("conllu: bad head '" + cols[6] + "'", lineno);
    t.deprel = cols[7];
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return out;
}

std::vector<ParsedSentence> load_conllu(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_conllu(in, path.stem().string());
}

namespace {

bool has_prefix(const std::string& tag, const std::vector<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return tag.size() >= p.size() && tag.compare(0, p.size(), p) == 0; });
}

}  // namespace

WordClass TagScheme::classify(const Token& t) const {
  const bool has_upos = !t.upos.empty() && t.upos != "_";
  if (has_upos) {
    if (verb_tags.count(t.upos)) return WordClass::verb;
    if (noun_tags.count(t.upos)) return WordClass::noun;
    if (adj_tags.count(t.upos)) return WordClass::adjective;
    return WordClass::other;
  }
  if (has_prefix(t.xpos, verb_prefixes)) return WordClass::verb;
  if (has_prefix(t.xpos, noun_prefixes)) return WordClass::noun;
  if (has_prefix(t.xpos, adj_prefixes)) return WordClass::adjective;
  return WordClass::other;
}

std::string TagScheme::base_dep(std::string_view deprel) const {
  auto label = text::to_lower(deprel);
  if (auto colon = label.find(':'); colon != std::string::npos) label.resize(colon);
  if (auto it = dep_aliases.find(label); it != dep_aliases.end()) return it->second;
  return label;
}

std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::verb_noun: return "verb+noun";
    case Pattern::verb_noun_noun: return "verb+noun+noun";
    case Pattern::verb_adj_noun: return "verb+adj+noun";
  }
  return "?";
}

namespace {

bool well_formed_label(std::string_view s) {
  if (s.empty() || s == "_") return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == ':' || c == '_'; });
}

bool well_formed_tag(const Token& t) {
  auto ok = [](std::string_view s) {
    return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  };
  bool upos = ok(t.upos) && t.upos != "_";
  bool xpos = ok(t.xpos) && t.xpos != "_";
  return upos || xpos;
}

// Lowercased lemma, falling back to the surface form when the lemma is unset.
std::string word_of(const Token& t) {
  auto& src = (t.lemma.empty() || t.lemma == "_") ? t.form : t.lemma;
  return text::to_lower(text::trim(src));
}

bool usable_word(const std::string& w) {
  return !w.empty() && std::none_of(w.begin(), w.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

std::set<CandidateConcept> parse_concepts(const ParsedSentence& s, const TagScheme& scheme, ParseDiagnostics* diag) {
  const std::size_t n = s.tokens.size();
  std::vector<bool> usable(n, true);
  std::vector<WordClass> cls(n, WordClass::other);
  std::vector<std::string> words(n), deps(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& t = s.tokens[i];
    words[i] = word_of(t);
    if (!well_formed_label(t.deprel) || !well_formed_tag(t) || !usable_word(words[i]) || t.head > n) {
      usable[i] = false;
      if (diag) ++diag->skipped_tokens;
      spdlog::warn("parser: {}/{} token {} ('{}') skipped: malformed tag, label or lemma", s.doc_id, s.sent_id, i + 1,
                   t.form);
      continue;
    }
    cls[i] = scheme.classify(t);
    deps[i] = scheme.base_dep(t.deprel);
  }

  std::set<CandidateConcept> out;
  auto emit = [&](std::vector<std::string> ws, Pattern p) {
    out.insert(CandidateConcept{Concept(text::join(ws, " ")), p, s.doc_id, s.sent_id});
  };

  // Stage 1: verb–noun pairs over argument relations, either orientation.
  std::set<std::pair<std::size_t, std::size_t>> pairs;  // (verb, noun) indices
  for (std::size_t d = 0; d < n; ++d) {
    if (!usable[d] || s.tokens[d].head == 0) continue;
    std::size_t h = s.tokens[d].head - 1;
    if (!usable[h] || !scheme.argument_deps.count(deps[d])) continue;
    if (cls[h] == WordClass::verb && cls[d] == WordClass::noun) pairs.emplace(h, d);
    else if (cls[h] == WordClass::noun && cls[d] == WordClass::verb) pairs.emplace(d, h);
  }

  // Stage 2: expand each pair with noun/adjective modifiers of its noun.
  for (auto [v, noun] : pairs) {
    emit({words[v], words[noun]}, Pattern::verb_noun);
    for (std::size_t d = 0; d < n; ++d) {
      if (!usable[d] || d == v || s.tokens[d].head != noun + 1 || !scheme.modifier_deps.count(deps[d])) continue;
      if (cls[d] == WordClass::noun) emit({words[v], words[d], words[noun]}, Pattern::verb_noun_noun);
      else if (cls[d] == WordClass::adjective) emit({words[v], words[d], words[noun]}, Pattern::verb_adj_noun);
    }
  }
  return out;
}

void ConceptCounter::add(const Concept& c, std::size_t n) { counts_[c.text()] += n; }

void ConceptCounter::add_sentence(const std::set<CandidateConcept>& candidates) {
  std::set<std::string> seen;
  for (auto& c : candidates)
    if (seen.insert(c.phrase.text()).second) ++counts_[c.phrase.text()];
}

void ConceptCounter::merge(const ConceptCounter& other) {
  for (auto& [k, v] : other.counts_) counts_[k] += v;
}

std::vector<RankedConcept> count_and_filter(const ConceptCounter& counter, std::size_t k) {
  if (k == 0) throw DomainError("count_and_filter: k must be at least 1");
  std::vector<std::pair<std::string, std::size_t>> items(counter.counts().begin(), counter.counts().end());
  auto cmp = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  if (items.size() > k) {
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(), cmp);
    items.resize(k);
  } else {
    std::sort(items.begin(), items.end(), cmp);
  }
  std::vector<RankedConcept> out;
  out.reserve(items.size());
  for (auto& [text, n] : items) out.push_back({Concept(text), n});
  return out;
}

std::vector<RankedConcept> count_and_filter(const std::vector<CandidateConcept>& candidates, std::size_t k) {
  // Stream records are (concept, source) pairs; one sentence counts once.
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  ConceptCounter counter;
  for (auto& c : candidates)
    if (seen.emplace(c.phrase.text(), c.doc_id, c.sent_id).second) counter.add(c.phrase);
  return count_and_filter(counter, k);
}

void write_candidates(std::ostream& out, const std::vector<CandidateConcept>& candidates) {
  for (auto& c : candidates)
    out << c.phrase.text() << '\t' << to_string(c.pattern) << '\t' << c.doc_id << '\t' << c.sent_id << '\n';
}

std::vector<CandidateConcept> read_candidates(std::istream& in) {
  std::vector<CandidateConcept> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() != 4) throw ParseError("candidates: expected 4 columns", lineno);
    auto c = Concept::try_make(cols[0]);
    if (!c) throw ParseError("candidates: bad concept '" + cols[0] + "'", lineno);
    Pattern p;
    if (cols[1] == "verb+noun") p = Pattern::verb_noun;
    else if (cols[1] == "verb+noun+noun") p = Pattern::verb_noun_noun;
    else if (cols[1] == "verb+adj+noun") p = Pattern::verb_adj_noun;
    else throw ParseError("candidates: bad pattern '" + cols[1] + "'", lineno);
    if ((p == Pattern::verb_noun) != (c->arity() == 2)) throw ParseError("candidates: pattern/arity mismatch", lineno);
    out.push_back({*c, p, cols[2], cols[3]});
  }
  return out;
}

void write_ranked(std::ostream& out, const std::vector<RankedConcept>& ranked) {
  for (auto& r : ranked) out << r.phrase.text() << '\t' << r.frequency << '\n';
}

std::vector<RankedConcept> read_ranked(std::istream& in) {
  std::vector<RankedConcept> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    auto c = Concept::try_make(cols[0]);
    if (!c) throw ParseError("concept list: bad concept '" + cols[0] + "'", lineno);
    std::size_t f = 0;
    if (cols.size() >= 2) {
      auto v = text::trim(cols[1]);
      auto res = std::from_chars(v.data(), v.data() + v.size(), f);
      if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ParseError("concept list: bad frequency '" + cols[1] + "'", lineno);
    }
    out.push_back({*c, f});
  }
  return out;
}

}  // namespace esgkb
