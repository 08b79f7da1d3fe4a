#pragma once

// Concept detection in report text: tokenization, exact multi-pattern
// matching and verb + noun-phrase flexible matching.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "esgkb/kb.hpp"

namespace esgkb {

// Rule-based English lemmatizer. An irregular-form table is consulted
// first; suffix rules then generate candidates and, when a vocabulary is
// set, the first candidate found in it wins.
class Lemmatizer {
 public:
  Lemmatizer() = default;
  explicit Lemmatizer(std::unordered_set<std::string> vocabulary) : vocab_(std::move(vocabulary)) {}

  std::string lemma(std::string_view word) const;
  const std::unordered_set<std::string>& vocabulary() const { return vocab_; }

 private:
  std::unordered_set<std::string> vocab_;
};

struct WordToken {
  std::string surface;  // lowercased
  std::string lemma;
  std::size_t offset;   // byte offset in the document text
};

struct Sentence {
  std::vector<WordToken> tokens;
};

struct Document {
  std::string id;
  std::vector<Sentence> sentences;
};

using Corpus = std::vector<Document>;

// Splits on terminal punctuation (. ! ?), drops punctuation, lowercases and
// lemmatizes. A period between two digits does not end a sentence.
Document tokenize_report(std::string_view text, const std::string& doc_id = "doc", const Lemmatizer& lem = {});

// Plain-text files (doc id = file stem) or JSON Lines with {doc_id, text}.
Corpus read_corpus_jsonl(std::istream& in, const Lemmatizer& lem = {});
Corpus load_corpus(const std::vector<std::filesystem::path>& paths, const Lemmatizer& lem = {});

// Vocabulary for the lemmatizer: every word of every concept.
std::unordered_set<std::string> concept_vocabulary(const std::vector<Concept>& concepts);

enum class MatchMode { exact, flexible };
std::string_view to_string(MatchMode m);

struct MatchResult {
  Concept phrase;
  MatchMode mode;
  std::string doc_id;
  std::size_t sentence;
  // Exact: [first, last] token positions. Flexible: verb position plus the
  // noun-phrase [first, last].
  std::size_t first;
  std::size_t last;
  std::size_t verb = 0;

  std::string span() const;
  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

struct MatchOptions {
  bool surface_strict = false;  // compare lowercased surface forms instead of lemmas
  bool verb_before_np = true;   // flexible: verb must precede the noun phrase
  unsigned threads = 1;         // documents are matched in parallel; output order is fixed
};

// Token-level Aho-Corasick automaton over concept word sequences.
class ConceptMatcher {
 public:
  explicit ConceptMatcher(std::vector<Concept> concepts, MatchOptions opts = {});

  // Every contiguous occurrence, all concepts.
  std::vector<MatchResult> match_exact(const Corpus& corpus) const;
  // 3-word concepts: verb and noun-phrase bigram in one sentence, one result
  // per (concept, sentence). 2-word concepts: exact occurrences.
  std::vector<MatchResult> match_flexible(const Corpus& corpus) const;

  const std::vector<Concept>& concepts() const { return concepts_; }

 private:
  struct Node {
    std::unordered_map<int, std::size_t> next;
    std::size_t fail = 0;
    std::size_t dict = 0;           // nearest proper suffix node with an output, 0 = none
    std::vector<std::size_t> out;   // concepts ending exactly here
  };

  int word_id(const std::string& w) const;
  std::vector<int> sentence_ids(const Sentence& s) const;
  void exact_in(const Document& d, std::vector<MatchResult>& out, bool only_two_word) const;
  void flexible_in(const Document& d, std::vector<MatchResult>& out) const;
  template <class F>
  std::vector<MatchResult> per_document(const Corpus& corpus, F&& fn) const;

  std::vector<Concept> concepts_;
  MatchOptions opts_;
  std::unordered_map<std::string, int> words_;
  std::vector<Node> trie_;
  // Noun-phrase bigram -> 3-word concepts using it.
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> bigrams_;
};

// `doc_id \t sentence_id \t concept \t mode \t span`
void write_matches(std::ostream& out, const std::vector<MatchResult>& matches);
std::vector<MatchResult> read_matches(std::istream& in);

}  // namespace esgkb
