#include "esgkb/matcher.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <queue>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

namespace {

const std::unordered_map<std::string_view, std::string_view>& irregular() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"am", "be"},          {"is", "be"},           {"are", "be"},        {"was", "be"},
      {"were", "be"},        {"been", "be"},         {"being", "be"},      {"has", "have"},
      {"had", "have"},       {"having", "have"},     {"does", "do"},       {"did", "do"},
      {"done", "do"},        {"made", "make"},       {"built", "build"},   {"grew", "grow"},
      {"grown", "grow"},     {"took", "take"},       {"taken", "take"},    {"gave", "give"},
      {"given", "give"},     {"went", "go"},         {"gone", "go"},       {"brought", "bring"},
      {"bought", "buy"},     {"held", "hold"},       {"led", "lead"},      {"met", "meet"},
      {"paid", "pay"},       {"sold", "sell"},       {"spent", "spend"},   {"saw", "see"},
      {"seen", "see"},       {"kept", "keep"},       {"left", "leave"},    {"began", "begin"},
      {"begun", "begin"},    {"chose", "choose"},    {"chosen", "choose"}, {"drove", "drive"},
      {"driven", "drive"},   {"fell", "fall"},       {"fallen", "fall"},   {"found", "find"},
      {"got", "get"},        {"gotten", "get"},      {"knew", "know"},     {"known", "know"},
      {"lost", "lose"},      {"rose", "rise"},       {"risen", "rise"},    {"sought", "seek"},
      {"taught", "teach"},   {"thought", "think"},   {"won", "win"},       {"wrote", "write"},
      {"written", "write"},  {"children", "child"},  {"men", "man"},       {"women", "woman"},
      {"feet", "foot"},      {"teeth", "tooth"},     {"mice", "mouse"},    {"geese", "goose"},
      {"analyses", "analysis"}, {"crises", "crisis"}, {"criteria", "criterion"},
      {"phenomena", "phenomenon"},
  };
  return table;
}

bool ends_with(std::string_view s, std::string_view suf) {
  return s.size() >= suf.size() && s.substr(s.size() - suf.size()) == suf;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// Plural stripping only; used when no vocabulary guides the choice.
std::string default_lemma(const std::string& w) {
  if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  for (std::string_view suf : {"xes", "ches", "shes", "zes"})
    if (w.size() > suf.size() + 1 && ends_with(w, suf)) return w.substr(0, w.size() - 2);
  if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is"))
    return w.substr(0, w.size() - 1);
  return w;
}

std::vector<std::string> candidates(const std::string& w) {
  std::vector<std::string> out;
  auto stem = [&](std::size_t n) { return w.substr(0, w.size() - n); };
  auto undouble = [&](const std::string& s) {
    if (s.size() >= 3 && s[s.size() - 1] == s[s.size() - 2] && !is_vowel(s.back())) out.push_back(s.substr(0, s.size() - 1));
  };
  if (ends_with(w, "ies") || ends_with(w, "ied")) out.push_back(stem(3) + "y");
  if (ends_with(w, "es")) out.push_back(stem(2));
  if (ends_with(w, "s")) out.push_back(stem(1));
  if (ends_with(w, "ed")) {
    out.push_back(stem(2));
    out.push_back(stem(1));
    undouble(stem(2));
  }
  if (ends_with(w, "ing") && w.size() > 4) {
    out.push_back(stem(3));
    out.push_back(stem(3) + "e");
    undouble(stem(3));
  }
  return out;
}

bool word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::string Lemmatizer::lemma(std::string_view word) const {
  std::string w = text::to_lower(word);
  if (auto it = irregular().find(w); it != irregular().end()) return std::string(it->second);
  if (!vocab_.empty()) {
    if (vocab_.count(w)) return w;
    for (auto& c : candidates(w))
      if (!c.empty() && vocab_.count(c)) return c;
  }
  return default_lemma(w);
}

Document tokenize_report(std::string_view text, const std::string& doc_id, const Lemmatizer& lem) {
  Document doc{doc_id, {}};
  Sentence cur;
  auto flush = [&] {
    if (!cur.tokens.empty()) doc.sentences.push_back(std::move(cur));
    cur = Sentence{};
  };
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    auto c = static_cast<unsigned char>(text[i]);
    if (word_char(c)) {
      std::size_t start = i;
      while (i < n) {
        auto d = static_cast<unsigned char>(text[i]);
        if (word_char(d)) {
          ++i;
        } else if ((d == '-' || d == '\'') && i + 1 < n && word_char(static_cast<unsigned char>(text[i + 1]))) {
          ++i;
        } else if (d == '.' && i > start && std::isdigit(static_cast<unsigned char>(text[i - 1])) && i + 1 < n &&
                   std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
          ++i;  // decimal point
        } else {
          break;
        }
      }
      std::string surface = text::to_lower(text.substr(start, i - start));
      if (ends_with(surface, "'s")) surface.resize(surface.size() - 2);
      if (!surface.empty()) cur.tokens.push_back({surface, lem.lemma(surface), start});
      continue;
    }
    if (c == '.' || c == '!' || c == '?') flush();
    ++i;
  }
  flush();
  return doc;
}

Corpus read_corpus_jsonl(std::istream& in, const Lemmatizer& lem) {
  Corpus out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("corpus: invalid JSON: ") + e.what(), lineno);
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string())
      throw ParseError("corpus: record needs a string 'text'", lineno);
    std::string id = "doc" + std::to_string(out.size());
    if (rec.contains("doc_id")) {
      auto& d = rec["doc_id"];
      id = d.is_string() ? d.get<std::string>() : d.dump();
    }
    out.push_back(tokenize_report(rec["text"].get<std::string>(), id, lem));
  }
  return out;
}

Corpus load_corpus(const std::vector<std::filesystem::path>& paths, const Lemmatizer& lem) {
  Corpus out;
  for (auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    if (p.extension() == ".jsonl") {
      auto part = read_corpus_jsonl(in, lem);
      std::move(part.begin(), part.end(), std::back_inserter(out));
    } else {
      std::ostringstream ss;
      ss << in.rdbuf();
      out.push_back(tokenize_report(ss.str(), p.stem().string(), lem));
    }
  }
  return out;
}

std::unordered_set<std::string> concept_vocabulary(const std::vector<Concept>& concepts) {
  std::unordered_set<std::string> v;
  for (auto& c : concepts) v.insert(c.words().begin(), c.words().end());
  return v;
}

std::string_view to_string(MatchMode m) { return m == MatchMode::exact ? "exact" : "flexible"; }

std::string MatchResult::span() const {
  std::string s = std::to_string(first) + "-" + std::to_string(last);
  return mode == MatchMode::flexible ? std::to_string(verb) + "+" + s : s;
}

ConceptMatcher::ConceptMatcher(std::vector<Concept> concepts, MatchOptions opts)
    : concepts_(std::move(concepts)), opts_(opts) {
  // Sorted and unique so results never depend on KB order.
  std::sort(concepts_.begin(), concepts_.end());
  concepts_.erase(std::unique(concepts_.begin(), concepts_.end()), concepts_.end());

  trie_.emplace_back();
  for (std::size_t ci = 0; ci < concepts_.size(); ++ci) {
    std::size_t node = 0;
    std::vector<int> ids;
    for (auto& w : concepts_[ci].words()) {
      auto [it, _] = words_.emplace(w, static_cast<int>(words_.size()));
      ids.push_back(it->second);
      auto nx = trie_[node].next.find(it->second);
      if (nx == trie_[node].next.end()) {
        trie_.emplace_back();
        nx = trie_[node].next.emplace(it->second, trie_.size() - 1).first;
      }
      node = nx->second;
    }
    trie_[node].out.push_back(ci);
    if (ids.size() == 3)
      bigrams_[(static_cast<std::uint64_t>(ids[1]) << 32) | static_cast<std::uint32_t>(ids[2])].push_back(ci);
  }

  // Failure and dictionary links, breadth-first.
  std::queue<std::size_t> q;
  for (auto& [w, child] : trie_[0].next) q.push(child);
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto& [w, v] : trie_[u].next) {
      std::size_t f = trie_[u].fail;
      while (f && !trie_[f].next.count(w)) f = trie_[f].fail;
      auto it = trie_[f].next.find(w);
      trie_[v].fail = (it != trie_[f].next.end() && it->second != v) ? it->second : 0;
      auto fl = trie_[v].fail;
      trie_[v].dict = trie_[fl].out.empty() ? trie_[fl].dict : fl;
      q.push(v);
    }
  }
}

int ConceptMatcher::word_id(const std::string& w) const {
  auto it = words_.find(w);
  return it == words_.end() ? -1 : it->second;
}

std::vector<int> ConceptMatcher::sentence_ids(const Sentence& s) const {
  std::vector<int> ids;
  ids.reserve(s.tokens.size());
  for (auto& t : s.tokens) ids.push_back(word_id(opts_.surface_strict ? t.surface : t.lemma));
  return ids;
}

void ConceptMatcher::exact_in(const Document& d, std::vector<MatchResult>& out, bool only_two_word) const {
  for (std::size_t si = 0; si < d.sentences.size(); ++si) {
    auto ids = sentence_ids(d.sentences[si]);
    std::vector<MatchResult> found;
    std::size_t state = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      int w = ids[p];
      if (w < 0) {
        state = 0;
        continue;
      }
      while (state && !trie_[state].next.count(w)) state = trie_[state].fail;
      auto it = trie_[state].next.find(w);
      state = it == trie_[state].next.end() ? 0 : it->second;
      for (auto node = state; node; node = trie_[node].dict)
        for (auto ci : trie_[node].out) {
          auto& c = concepts_[ci];
          if (only_two_word && c.arity() != 2) continue;
          found.push_back({c, MatchMode::exact, d.id, si, p + 1 - c.arity(), p, 0});
        }
    }
    std::sort(found.begin(), found.end(), [](const MatchResult& a, const MatchResult& b) {
      return std::tie(a.first, a.last, a.phrase) < std::tie(b.first, b.last, b.phrase);
    });
    std::move(found.begin(), found.end(), std::back_inserter(out));
  }
}

void ConceptMatcher::flexible_in(const Document& d, std::vector<MatchResult>& out) const {
  for (std::size_t si = 0; si < d.sentences.size(); ++si) {
    auto ids = sentence_ids(d.sentences[si]);
    std::unordered_map<int, std::vector<std::size_t>> positions;
    for (std::size_t p = 0; p < ids.size(); ++p)
      if (ids[p] >= 0) positions[ids[p]].push_back(p);

    std::vector<MatchResult> found;
    std::unordered_set<std::size_t> done;
    for (std::size_t p = 0; p + 1 < ids.size(); ++p) {
      if (ids[p] < 0 || ids[p + 1] < 0) continue;
      auto it = bigrams_.find((static_cast<std::uint64_t>(ids[p]) << 32) | static_cast<std::uint32_t>(ids[p + 1]));
      if (it == bigrams_.end()) continue;
      for (auto ci : it->second) {
        if (done.count(ci)) continue;
        auto& c = concepts_[ci];
        auto vp = positions.find(word_id(c.verb()));
        if (vp == positions.end()) continue;
        // Nearest verb before the noun phrase; in unordered mode the nearest
        // one after it when none precedes.
        std::optional<std::size_t> verb;
        for (auto v : vp->second) {
          if (v < p) verb = v;
          else if (v > p + 1 && !opts_.verb_before_np && !verb) {
            verb = v;
            break;
          }
        }
        if (!verb) continue;
        done.insert(ci);
        found.push_back({c, MatchMode::flexible, d.id, si, p, p + 1, *verb});
      }
    }
    std::sort(found.begin(), found.end(), [](const MatchResult& a, const MatchResult& b) {
      return std::tie(a.first, a.verb, a.phrase) < std::tie(b.first, b.verb, b.phrase);
    });
    std::move(found.begin(), found.end(), std::back_inserter(out));
  }
}

template <class F>
std::vector<MatchResult> ConceptMatcher::per_document(const Corpus& corpus, F&& fn) const {
  std::vector<std::vector<MatchResult>> parts(corpus.size());
  unsigned threads = opts_.threads ? opts_.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(corpus.size(), 1)));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < corpus.size(); i += threads) fn(corpus[i], parts[i]);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  std::vector<MatchResult> out;
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

std::vector<MatchResult> ConceptMatcher::match_exact(const Corpus& corpus) const {
  return per_document(corpus, [&](const Document& d, std::vector<MatchResult>& out) { exact_in(d, out, false); });
}

std::vector<MatchResult> ConceptMatcher::match_flexible(const Corpus& corpus) const {
  return per_document(corpus, [&](const Document& d, std::vector<MatchResult>& out) {
    std::vector<MatchResult> flex, two;
    flexible_in(d, flex);
    exact_in(d, two, true);
    // Interleave by sentence so the output stays grouped per sentence.
    std::size_t a = 0, b = 0;
    while (a < flex.size() || b < two.size()) {
      bool take_flex = b == two.size() || (a < flex.size() && flex[a].sentence <= two[b].sentence);
      out.push_back(take_flex ? std::move(flex[a++]) : std::move(two[b++]));
    }
  });
}

void write_matches(std::ostream& out, const std::vector<MatchResult>& matches) {
  for (auto& m : matches)
    out << m.doc_id << '\t' << m.sentence << '\t' << m.phrase.text() << '\t' << to_string(m.mode) << '\t' << m.span()
        << '\n';
}

std::vector<MatchResult> read_matches(std::istream& in) {
  std::vector<MatchResult> out;
  std::string line;
  std::size_t lineno = 0;
  auto number = [&](std::string_view s) {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ParseError("matches: bad number '" + std::string(s) + "'", lineno);
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    if (cols.size() != 5) throw ParseError("matches: expected 5 columns", lineno);
    auto c = Concept::try_make(cols[2]);
    if (!c) throw ParseError("matches: bad concept '" + cols[2] + "'", lineno);
    MatchMode mode;
    if (cols[3] == "exact") mode = MatchMode::exact;
    else if (cols[3] == "flexible") mode = MatchMode::flexible;
    else throw ParseError("matches: unknown mode '" + cols[3] + "'", lineno);
    std::string_view span = cols[4];
    std::size_t verb = 0;
    if (mode == MatchMode::flexible) {
      auto plus = span.find('+');
      if (plus == std::string_view::npos) throw ParseError("matches: flexible span needs a verb position", lineno);
      verb = number(span.substr(0, plus));
      span = span.substr(plus + 1);
    }
    auto dash = span.find('-');
    if (dash == std::string_view::npos) throw ParseError("matches: bad span '" + cols[4] + "'", lineno);
    out.push_back({*c, mode, cols[0], number(cols[1]), number(span.substr(0, dash)), number(span.substr(dash + 1)), verb});
  }
  return out;
}

}  // namespace esgkb
