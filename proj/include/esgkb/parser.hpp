#pragma once

// Dependency-pattern concept extraction over CoNLL-U parses.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "esgkb/kb.hpp"

namespace esgkb {

struct Token {
  std::string form;
  std::string lemma;
  std::string upos;
  std::string xpos;
  std::size_t head = 0;  // 1-based; 0 = root
  std::string deprel;
};

struct ParsedSentence {
  std::string doc_id;
  std::string sent_id;
  std::vector<Token> tokens;  // tokens[i] has CoNLL-U id i + 1

  // Throws ValidationError unless heads are in range and there is exactly one root.
  void check() const;
};

// Reads 10-column CoNLL-U. Multiword-token ranges and empty nodes are
// skipped. `# sent_id = ` and `# newdoc id = ` comments set the ids; when
// absent, sentence ids count from 1 within the document.
std::vector<ParsedSentence> read_conllu(std::istream& in, std::string_view default_doc_id);
std::vector<ParsedSentence> load_conllu(const std::filesystem::path& path);

enum class WordClass { other, verb, noun, adjective };

// Maps POS tags and dependency labels onto the classes the extraction rules
// use. The defaults accept both universal and Penn-style tags.
struct TagScheme {
  std::set<std::string> verb_tags{"VERB"};
  std::set<std::string> noun_tags{"NOUN", "PROPN"};
  std::set<std::string> adj_tags{"ADJ"};
  std::vector<std::string> verb_prefixes{"VB"};
  std::vector<std::string> noun_prefixes{"NN"};
  std::vector<std::string> adj_prefixes{"JJ"};

  std::set<std::string> argument_deps{"nsubj", "obj", "obl"};
  std::set<std::string> modifier_deps{"compound", "amod", "nn", "appos", "flat", "nmod"};
  // Older label names folded onto the ones above.
  std::map<std::string, std::string> dep_aliases{{"dobj", "obj"}, {"nsubjpass", "nsubj"}};

  WordClass classify(const Token& t) const;
  // Base label: lowercase, subtype after ':' removed, aliases applied.
  std::string base_dep(std::string_view deprel) const;
};

enum class Pattern { verb_noun, verb_noun_noun, verb_adj_noun };
std::string_view to_string(Pattern p);

struct CandidateConcept {
  Concept phrase;
  Pattern pattern = Pattern::verb_noun;
  std::string doc_id;
  std::string sent_id;

  friend bool operator==(const CandidateConcept&, const CandidateConcept&) = default;
  friend auto operator<=>(const CandidateConcept& a, const CandidateConcept& b) {
    if (auto c = a.phrase <=> b.phrase; c != 0) return c;
    return a.pattern <=> b.pattern;
  }
};

struct ParseDiagnostics {
  std::size_t skipped_tokens = 0;
};

// Applies the two-stage extraction: verb–noun pairs over argument relations
// (either head orientation, verb emitted first), then noun/adjective
// modifiers of each emitted noun inserted between verb and noun.
std::set<CandidateConcept> parse_concepts(const ParsedSentence& sentence, const TagScheme& scheme = {},
                                          ParseDiagnostics* diag = nullptr);

// Frequency table over concepts, mergeable across shards.
class ConceptCounter {
 public:
  void add(const Concept& c, std::size_t n = 1);
  // Counts each distinct concept once per sentence.
  void add_sentence(const std::set<CandidateConcept>& candidates);
  void merge(const ConceptCounter& other);
  const std::unordered_map<std::string, std::size_t>& counts() const { return counts_; }

 private:
  std::unordered_map<std::string, std::size_t> counts_;
};

struct RankedConcept {
  Concept phrase;
  std::size_t frequency = 0;
  friend bool operator==(const RankedConcept&, const RankedConcept&) = default;
};

// Frequency descending, ties lexicographic ascending; at most k entries.
std::vector<RankedConcept> count_and_filter(const ConceptCounter& counter, std::size_t k);
std::vector<RankedConcept> count_and_filter(const std::vector<CandidateConcept>& candidates, std::size_t k);

void write_candidates(std::ostream& out, const std::vector<CandidateConcept>& candidates);
std::vector<CandidateConcept> read_candidates(std::istream& in);

void write_ranked(std::ostream& out, const std::vector<RankedConcept>& ranked);
std::vector<RankedConcept> read_ranked(std::istream& in);

}  // namespace esgkb
