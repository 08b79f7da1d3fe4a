#pragma once

// Annotator backends (remote chat-completion API and a table-driven mock),
// quality-control tasks, seed labelling along the taxonomy hierarchy, and
// the term judge used for evaluation.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "esgkb/kb.hpp"
#include "esgkb/metrics.hpp"

namespace esgkb {

// Task names double as prompt template stems (with a ".v1" suffix).
namespace task {
inline constexpr std::string_view reorder = "reorder";
inline constexpr std::string_view coherence = "coherence";
inline constexpr std::string_view pillar = "pillar";
inline constexpr std::string_view relation = "relation";
inline constexpr std::string_view esg_related = "esg_relatedness";
inline constexpr std::string_view esg_action = "esg_action";
}  // namespace task

struct TaskRequest {
  std::string task;
  std::string level;   // topic type for relation tasks, empty otherwise
  std::string prompt;  // rendered system prompt
  std::vector<std::string> inputs;
};

// Returns the raw model text for a batch. Implementations must be safe to
// call from several threads at once.
class AnnotatorBackend {
 public:
  virtual ~AnnotatorBackend() = default;
  virtual std::string complete(const TaskRequest& req) = 0;
  virtual std::string name() const = 0;
};

// Renders the user message listing the batch inputs.
std::string render_inputs(const std::vector<std::string>& inputs);

// Deterministic backend driven by a tab-separated table:
//   reorder     <in> <out>
//   vocab       <word> [<word> ...]       coherence = all words in vocab
//   pillar      <phrase> <label>          default Others
//   relation    <phrase> <topic_type> <response>  default not applicable
//   esg_related <term> <ESG|non-ESG>      default non-ESG
//   esg_action  <term> <True|False>       default False
class MockBackend : public AnnotatorBackend {
 public:
  explicit MockBackend(std::istream& table);
  static MockBackend from_file(const std::filesystem::path& path);

  std::string complete(const TaskRequest& req) override;
  std::string name() const override { return "mock"; }

 private:
  std::string answer(const TaskRequest& req, const std::string& input) const;

  std::map<std::string, std::string> reorder_, pillar_, related_, action_;
  std::map<std::pair<std::string, std::string>, std::string> relation_;
  std::set<std::string> vocab_;
};

struct RemoteConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{60};
  std::size_t max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};  // doubled after each failed attempt
};

// POSTs {base_url}/chat/completions with temperature 0 and returns
// choices[0].message.content. Throws IoError after the retries run out.
class RemoteBackend : public AnnotatorBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);
  std::string complete(const TaskRequest& req) override;
  std::string name() const override { return "remote:" + cfg_.model; }

 private:
  RemoteConfig cfg_;
  std::string key_;
};

// Append-only JSON Lines store of per-item responses keyed by
// (concept, task#template-hash).
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path path);

  std::optional<std::string> get(const std::string& phrase, const std::string& task) const;
  void put(const std::string& phrase, const std::string& task, const std::string& response);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  std::map<std::pair<std::string, std::string>, std::string> entries_;
  mutable std::mutex mu_;
};

// Input/value pairs from a fenced "Input: ... / Output|Response: ..." reply.
std::vector<std::pair<std::string, std::string>> parse_response(const std::string& raw);

struct AnnotatorOptions {
  std::size_t batch_size = 20;
  std::size_t max_in_flight = 4;
  std::map<std::string, std::string> examples;  // task -> few-shot block
};

struct RelationTopic {
  Relation relation;
  std::string topic;
  friend bool operator==(const RelationTopic&, const RelationTopic&) = default;
};

struct SeedAnnotation {
  Concept phrase;
  std::optional<Pillar> pillar;  // nullopt = Others
  std::map<TopicType, std::optional<RelationTopic>> levels;  // nullopt = not applicable

  std::vector<Triple> triples(const Taxonomy& tax) const;
};

class Annotator {
 public:
  Annotator(AnnotatorBackend& backend, AnnotatorOptions opts = {}, ResponseCache* cache = nullptr);

  // Word-multiset preserving; a rejected reordering keeps the original.
  std::vector<Concept> reorder(const std::vector<Concept>& phrases);
  // nullopt = undecided (backend error or unparseable), to be excluded.
  std::vector<std::optional<bool>> coherence(const std::vector<Concept>& phrases);
  // Pillar definitions come from `tax`.
  std::vector<std::optional<Pillar>> classify_pillar(const std::vector<Concept>& phrases,
                                                     const Taxonomy& tax = default_taxonomy());
  // Candidates must share one topic type.
  std::vector<std::optional<RelationTopic>> classify_relation_topic(const std::vector<Concept>& phrases,
                                                                    const std::vector<const Topic*>& candidates);

  std::vector<SeedAnnotation> annotate_seeds(const std::vector<Concept>& seeds, const Taxonomy& tax);
  SeedAnnotation annotate_seed(const Concept& c, const Taxonomy& tax);

  // Judgments for both evaluation tasks; terms left undecided by either task are omitted.
  std::vector<Judgment> judge(const std::vector<std::string>& terms);

  std::size_t backend_calls() const { return calls_.load(); }

 private:
  std::vector<std::optional<std::string>> run(std::string_view task, const std::string& level,
                                              const std::string& prompt, const std::vector<std::string>& items);

  AnnotatorBackend& backend_;
  AnnotatorOptions opts_;
  ResponseCache* cache_;
  std::atomic<std::size_t> calls_{0};
};

struct QualityControlResult {
  std::vector<Concept> kept;       // reordered, coherent, deduplicated
  std::vector<Concept> rejected;   // judged incoherent
  std::vector<Concept> undecided;  // no usable coherence verdict
};

// Reorders, then keeps the phrases judged coherent.
QualityControlResult quality_control(Annotator& annotator, const std::vector<Concept>& phrases);

// Prompt text for a task; `definitions` fills the topic definition slot.
std::string render_prompt(std::string_view task, const std::string& definitions, const std::string& examples = "");
std::string topic_definitions(const std::vector<const Topic*>& topics);

// `concept \t topic_type \t relation \t topic` per attempted level. An
// Others pillar is written as `- \t Others`, a not-applicable level as
// `- \t not_applicable`.
void write_annotations(std::ostream& out, const std::vector<SeedAnnotation>& anns);

}  // namespace esgkb
