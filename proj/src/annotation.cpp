#include "esgkb/annotation.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <future>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "esgkb/assets.hpp"
#include "esgkb/error.hpp"
#include "esgkb/text.hpp"

namespace esgkb {

namespace {

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && text::to_lower(s.substr(0, prefix.size())) == prefix;
}

// Strips surrounding whitespace, angle brackets, quotes and backticks.
std::string clean_value(std::string_view v) {
  v = text::trim(v);
  auto strip = [&](char open, char close) {
    if (v.size() >= 2 && v.front() == open && v.back() == close) {
      v = text::trim(v.substr(1, v.size() - 2));
      return true;
    }
    return false;
  };
  while (strip('<', '>') || strip('\'', '\'') || strip('"', '"') || strip('`', '`')) {
  }
  return std::string(v);
}

std::string_view value_label(std::string_view task) {
  return task == task::reorder || task == task::coherence ? "Output" : "Response";
}

std::optional<bool> parse_bool(const std::string& v) {
  auto s = text::to_lower(v);
  if (s == "true") return true;
  if (s == "false") return false;
  return std::nullopt;
}

std::string now_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> texts(const std::vector<Concept>& cs) {
  std::vector<std::string> out;
  out.reserve(cs.size());
  for (auto& c : cs) out.push_back(c.text());
  return out;
}

}  // namespace

std::string render_inputs(const std::vector<std::string>& inputs) {
  std::string out = "```\n";
  for (auto& in : inputs) out += "Input: " + in + "\n";
  out += "```\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_response(const std::string& raw) {
  std::vector<std::pair<std::string, std::string>> out;
  std::optional<std::string> pending;
  for (auto& line : text::split(raw, '\n')) {
    auto l = text::trim(line);
    if (l.empty() || l.substr(0, 3) == "```") continue;
    if (starts_with_ci(l, "input:")) {
      pending = clean_value(l.substr(6));
    } else if (pending && (starts_with_ci(l, "output:") || starts_with_ci(l, "response:"))) {
      auto colon = l.find(':');
      out.emplace_back(*pending, clean_value(l.substr(colon + 1)));
      pending.reset();
    }
  }
  return out;
}

// ---- mock backend ----

MockBackend::MockBackend(std::istream& table) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(table, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto cols = text::split(line, '\t');
    const auto& kind = cols[0];
    auto need = [&](std::size_t n) {
      if (cols.size() != n) throw ParseError("mock table: '" + kind + "' needs " + std::to_string(n) + " columns", lineno);
    };
    if (kind == "reorder") {
      need(3);
      reorder_[text::normalize_phrase(cols[1])] = text::trim(cols[2]);
    } else if (kind == "vocab") {
      for (std::size_t i = 1; i < cols.size(); ++i)
        for (auto& w : text::split_ws(text::to_lower(cols[i]))) vocab_.insert(w);
    } else if (kind == "pillar") {
      need(3);
      pillar_[text::normalize_phrase(cols[1])] = text::trim(cols[2]);
    } else if (kind == "relation") {
      need(4);
      auto type = parse_topic_type(cols[2]);
      if (!type) throw ParseError("mock table: unknown topic type '" + cols[2] + "'", lineno);
      relation_[{text::normalize_phrase(cols[1]), std::string(to_string(*type))}] = text::trim(cols[3]);
    } else if (kind == "esg_related") {
      need(3);
      related_[text::normalize_phrase(cols[1])] = text::trim(cols[2]);
    } else if (kind == "esg_action") {
      need(3);
      action_[text::normalize_phrase(cols[1])] = text::trim(cols[2]);
    } else {
      throw ParseError("mock table: unknown row kind '" + kind + "'", lineno);
    }
  }
}

MockBackend MockBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return MockBackend(in);
}

std::string MockBackend::answer(const TaskRequest& req, const std::string& input) const {
  auto key = text::normalize_phrase(input);
  auto lookup = [&](const std::map<std::string, std::string>& m, std::string fallback) {
    auto it = m.find(key);
    return it == m.end() ? fallback : it->second;
  };
  if (req.task == task::reorder) return lookup(reorder_, input);
  if (req.task == task::coherence) {
    auto words = text::split_ws(key);
    bool ok = !words.empty() && std::all_of(words.begin(), words.end(), [&](auto& w) { return vocab_.count(w) > 0; });
    return ok ? "True" : "False";
  }
  if (req.task == task::pillar) return lookup(pillar_, "Others");
  if (req.task == task::relation) {
    auto it = relation_.find({key, req.level});
    return it == relation_.end() ? "not applicable" : it->second;
  }
  if (req.task == task::esg_related) return lookup(related_, "non-ESG");
  if (req.task == task::esg_action) return lookup(action_, "False");
  throw ValidationError("mock backend: unknown task '" + req.task + "'");
}

std::string MockBackend::complete(const TaskRequest& req) {
  std::string out = "```\n";
  auto label = value_label(req.task);
  for (auto& in : req.inputs) out += "Input: " + in + "\n" + std::string(label) + ": " + answer(req, in) + "\n\n";
  out += "```\n";
  return out;
}

// ---- remote backend ----

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (!key || !*key) throw ValidationError("remote backend: environment variable " + cfg_.api_key_env + " is not set");
  key_ = key;
}

std::string RemoteBackend::complete(const TaskRequest& req) {
  auto scheme = cfg_.base_url.find("://");
  if (scheme == std::string::npos) throw ValidationError("remote backend: base URL needs a scheme: " + cfg_.base_url);
  auto slash = cfg_.base_url.find('/', scheme + 3);
  std::string host = cfg_.base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : cfg_.base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client cli(host);
  cli.set_connection_timeout(cfg_.timeout);
  cli.set_read_timeout(cfg_.timeout);
  httplib::Headers headers{{"Authorization", "Bearer " + key_}};
  nlohmann::json body = {{"model", cfg_.model},
                         {"temperature", 0},
                         {"messages",
                          {{{"role", "system"}, {"content", req.prompt}},
                           {{"role", "user"}, {"content", render_inputs(req.inputs)}}}}};
  auto payload = body.dump();

  std::string last_error;
  for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt) std::this_thread::sleep_for(cfg_.retry_backoff * (1 << std::min<std::size_t>(attempt - 1, 6)));
    auto res = cli.Post(prefix + "/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw IoError("remote backend: HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("remote backend: unexpected response body: ") + e.what());
    }
  }
  throw IoError("remote backend: giving up after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

// ---- cache ----

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;  // created on first put
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries_[{j.at("concept").get<std::string>(), j.at("task").get<std::string>()}] =
          j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      spdlog::warn("cache {}: skipping malformed line {}: {}", path_->string(), lineno, e.what());
    }
  }
}

std::optional<std::string> ResponseCache::get(const std::string& phrase, const std::string& task) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find({phrase, task});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& phrase, const std::string& task, const std::string& response) {
  std::lock_guard lock(mu_);
  entries_[{phrase, task}] = response;
  if (!path_) return;
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw IoError("cannot append to cache " + path_->string());
  nlohmann::ordered_json rec = {{"concept", phrase}, {"task", task}, {"response", response}, {"timestamp", now_utc()}};
  out << rec.dump() << '\n';
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---- prompts ----

std::string render_prompt(std::string_view task, const std::string& definitions, const std::string& examples) {
  auto tmpl = assets::prompt(std::string(task) + ".v1");
  if (tmpl.empty()) throw ValidationError("no prompt template for task '" + std::string(task) + "'");
  std::string out(tmpl);
  auto replace = [&](std::string_view slot, const std::string& with) {
    for (auto pos = out.find(slot); pos != std::string::npos; pos = out.find(slot, pos + with.size()))
      out.replace(pos, slot.size(), with);
  };
  replace("{{definitions}}", definitions);
  replace("{{examples}}", examples.empty() ? "" : "\n[Examples]\n" + examples + "\n");
  return out;
}

std::string topic_definitions(const std::vector<const Topic*>& topics) {
  std::string out;
  for (auto* t : topics) {
    out += t->name;
    if (!t->description.empty()) out += ": " + t->description;
    out += '\n';
  }
  if (!out.empty()) out.pop_back();
  return out;
}

// ---- annotator ----

Annotator::Annotator(AnnotatorBackend& backend, AnnotatorOptions opts, ResponseCache* cache)
    : backend_(backend), opts_(std::move(opts)), cache_(cache) {
  if (opts_.batch_size == 0) throw DomainError("annotator: batch size must be at least 1");
  if (opts_.max_in_flight == 0) throw DomainError("annotator: max in-flight requests must be at least 1");
}

std::vector<std::optional<std::string>> Annotator::run(std::string_view task, const std::string& level,
                                                       const std::string& prompt,
                                                       const std::vector<std::string>& items) {
  const std::string key = std::string(task) + "#" + text::hex64(text::fnv1a(prompt));
  std::vector<std::optional<std::string>> out(items.size());

  // Unique uncached inputs, in first-seen order.
  std::map<std::string, std::vector<std::size_t>> where;
  std::vector<std::string> pending;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (cache_) {
      if (auto hit = cache_->get(items[i], key)) {
        out[i] = *hit;
        continue;
      }
    }
    auto norm = text::normalize_phrase(items[i]);
    auto [it, fresh] = where.try_emplace(norm);
    if (fresh) pending.push_back(items[i]);
    it->second.push_back(i);
  }
  if (pending.empty()) return out;

  auto ask = [&](const std::vector<std::string>& inputs) {
    ++calls_;
    TaskRequest req{std::string(task), level, prompt, inputs};
    std::map<std::string, std::string> got;
    for (auto& [in, val] : parse_response(backend_.complete(req))) got.emplace(text::normalize_phrase(in), val);
    return got;
  };
  // One batch: a request plus one repair request for items missing from the reply.
  auto batch_job = [&](std::vector<std::string> inputs) {
    std::vector<std::optional<std::string>> res(inputs.size());
    try {
      auto got = ask(inputs);
      std::vector<std::string> missing;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto it = got.find(text::normalize_phrase(inputs[i]));
        if (it != got.end()) res[i] = it->second;
        else missing.push_back(inputs[i]);
      }
      if (!missing.empty()) {
        spdlog::warn("annotator: {} of {} {} responses missing or malformed; retrying once", missing.size(),
                     inputs.size(), task);
        auto again = ask(missing);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (res[i]) continue;
          auto it = again.find(text::normalize_phrase(inputs[i]));
          if (it != again.end()) res[i] = it->second;
        }
      }
    } catch (const std::exception& e) {
      spdlog::warn("annotator: {} batch of {} failed: {}", task, inputs.size(), e.what());
    }
    return res;
  };

  std::vector<std::vector<std::string>> batches;
  for (std::size_t i = 0; i < pending.size(); i += opts_.batch_size)
    batches.emplace_back(pending.begin() + static_cast<std::ptrdiff_t>(i),
                         pending.begin() + static_cast<std::ptrdiff_t>(std::min(pending.size(), i + opts_.batch_size)));

  // Waves of at most max_in_flight concurrent requests; results are placed by index.
  std::vector<std::vector<std::optional<std::string>>> results(batches.size());
  for (std::size_t w = 0; w < batches.size(); w += opts_.max_in_flight) {
    std::size_t end = std::min(batches.size(), w + opts_.max_in_flight);
    if (end - w == 1) {
      results[w] = batch_job(batches[w]);
      continue;
    }
    std::vector<std::future<std::vector<std::optional<std::string>>>> futs;
    for (std::size_t b = w; b < end; ++b) futs.push_back(std::async(std::launch::async, batch_job, batches[b]));
    for (std::size_t b = w; b < end; ++b) results[b] = futs[b - w].get();
  }

  for (std::size_t b = 0; b < batches.size(); ++b)
    for (std::size_t i = 0; i < batches[b].size(); ++i) {
      auto& val = results[b][i];
      if (!val) continue;
      const auto& input = batches[b][i];
      if (cache_) cache_->put(input, key, *val);
      for (auto idx : where.at(text::normalize_phrase(input))) out[idx] = val;
    }
  return out;
}

std::vector<Concept> Annotator::reorder(const std::vector<Concept>& phrases) {
  auto prompt = render_prompt(task::reorder, "", opts_.examples[std::string(task::reorder)]);
  auto res = run(task::reorder, "", prompt, texts(phrases));
  std::vector<Concept> out;
  out.reserve(phrases.size());
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    const auto& orig = phrases[i];
    if (!res[i]) {
      out.push_back(orig);
      continue;
    }
    auto cand = Concept::try_make(*res[i]);
    auto sorted = [](std::vector<std::string> w) {
      std::sort(w.begin(), w.end());
      return w;
    };
    if (!cand || sorted(cand->words()) != sorted(orig.words())) {
      spdlog::warn("reorder: rejected '{}' for '{}' (word multiset changed); original kept", *res[i], orig.text());
      out.push_back(orig);
      continue;
    }
    out.push_back(*cand);
  }
  return out;
}

std::vector<std::optional<bool>> Annotator::coherence(const std::vector<Concept>& phrases) {
  auto prompt = render_prompt(task::coherence, "", opts_.examples[std::string(task::coherence)]);
  auto res = run(task::coherence, "", prompt, texts(phrases));
  std::vector<std::optional<bool>> out(phrases.size());
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (res[i]) out[i] = parse_bool(*res[i]);
    if (!out[i]) spdlog::warn("coherence: no usable verdict for '{}'; excluded", phrases[i].text());
  }
  return out;
}

std::vector<std::optional<Pillar>> Annotator::classify_pillar(const std::vector<Concept>& phrases,
                                                              const Taxonomy& tax) {
  std::vector<const Topic*> pillars;
  for (auto p : kPillars) pillars.push_back(&tax.pillar_topic(p));
  auto prompt = render_prompt(task::pillar, topic_definitions(pillars), opts_.examples[std::string(task::pillar)]);
  auto res = run(task::pillar, "", prompt, texts(phrases));
  std::vector<std::optional<Pillar>> out(phrases.size());
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (!res[i]) {
      spdlog::warn("pillar: no response for '{}'; using Others", phrases[i].text());
      continue;
    }
    if (text::to_lower(*res[i]) == "others") continue;
    out[i] = parse_pillar(*res[i]);
    if (!out[i]) spdlog::warn("pillar: unparseable label '{}' for '{}'; using Others", *res[i], phrases[i].text());
  }
  return out;
}

std::vector<std::optional<RelationTopic>> Annotator::classify_relation_topic(
    const std::vector<Concept>& phrases, const std::vector<const Topic*>& candidates) {
  if (candidates.empty()) throw ValidationError("classify_relation_topic: empty candidate set");
  auto type = candidates.front()->type;
  for (auto* t : candidates)
    if (t->type != type) throw ValidationError("classify_relation_topic: candidates span several topic types");

  auto prompt =
      render_prompt(task::relation, topic_definitions(candidates), opts_.examples[std::string(task::relation)]);
  auto res = run(task::relation, std::string(to_string(type)), prompt, texts(phrases));
  std::vector<std::optional<RelationTopic>> out(phrases.size());
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (!res[i]) continue;
    std::string v = *res[i];
    auto lower = text::to_lower(v);
    if (lower == "not applicable" || lower == "not_applicable") continue;
    std::string_view body = text::trim(v);
    if (body.size() >= 2 && body.front() == '(' && body.back() == ')') body = body.substr(1, body.size() - 2);
    auto comma = body.find(',');
    std::optional<Relation> rel;
    std::string topic;
    if (comma != std::string_view::npos) {
      rel = parse_relation(clean_value(body.substr(0, comma)));
      topic = clean_value(body.substr(comma + 1));
    }
    const Topic* match = nullptr;
    for (auto* t : candidates)
      if (text::fold_key(t->name) == text::fold_key(topic)) match = t;
    if (!rel || *rel == Relation::aligns_with || !match) {
      spdlog::warn("relation: response '{}' for '{}' is not a supports/undermines pair over the candidates; "
                   "treated as not applicable",
                   v, phrases[i].text());
      continue;
    }
    out[i] = RelationTopic{*rel, match->name};
  }
  return out;
}

std::vector<SeedAnnotation> Annotator::annotate_seeds(const std::vector<Concept>& seeds, const Taxonomy& tax) {
  std::vector<SeedAnnotation> out;
  out.reserve(seeds.size());
  auto pillars = classify_pillar(seeds, tax);
  for (std::size_t i = 0; i < seeds.size(); ++i) out.push_back({seeds[i], pillars[i], {}});

  // Runs one relation task per distinct candidate set and records the level.
  auto level = [&](TopicType type, const std::map<std::string, std::vector<std::size_t>>& groups,
                   auto&& candidates_for) {
    for (auto& [group, idx] : groups) {
      auto cands = candidates_for(group);
      if (cands.empty()) continue;
      std::vector<Concept> batch;
      for (auto i : idx) batch.push_back(seeds[i]);
      auto res = classify_relation_topic(batch, cands);
      for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]].levels[type] = res[k];
    }
  };
  auto group_by = [&](auto&& key) {
    std::map<std::string, std::vector<std::size_t>> g;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (auto k = key(out[i])) g[*k].push_back(i);
    return g;
  };
  auto chosen = [](const SeedAnnotation& a, TopicType t) -> std::optional<std::string> {
    auto it = a.levels.find(t);
    if (it == a.levels.end() || !it->second) return std::nullopt;
    return it->second->topic;
  };

  level(TopicType::broad,
        group_by([](const SeedAnnotation& a) -> std::optional<std::string> {
          if (!a.pillar) return std::nullopt;
          return std::string(to_string(*a.pillar));
        }),
        [&](const std::string& pillar) {
          std::vector<const Topic*> c;
          auto p = *parse_pillar(pillar);
          for (auto* t : tax.of_type(TopicType::broad))
            if (t->pillar_scope.count(p)) c.push_back(t);
          return c;
        });
  level(TopicType::cross_broad,
        group_by([](const SeedAnnotation& a) -> std::optional<std::string> {
          if (a.pillar != Pillar::environmental) return std::nullopt;
          return std::string("all");
        }),
        [&](const std::string&) { return tax.of_type(TopicType::cross_broad); });
  level(TopicType::sub, group_by([&](const SeedAnnotation& a) { return chosen(a, TopicType::broad); }),
        [&](const std::string& broad) { return tax.children_of(broad); });
  level(TopicType::cross_sub, group_by([&](const SeedAnnotation& a) { return chosen(a, TopicType::cross_broad); }),
        [&](const std::string& cross) { return tax.children_of(cross); });
  return out;
}

SeedAnnotation Annotator::annotate_seed(const Concept& c, const Taxonomy& tax) { return annotate_seeds({c}, tax)[0]; }

std::vector<Judgment> Annotator::judge(const std::vector<std::string>& terms) {
  std::vector<std::string> items;
  for (auto& t : terms) items.push_back(text::normalize_phrase(t));
  auto rel = run(task::esg_related, "", render_prompt(task::esg_related, "", opts_.examples[std::string(task::esg_related)]),
                 items);
  auto act = run(task::esg_action, "", render_prompt(task::esg_action, "", opts_.examples[std::string(task::esg_action)]),
                 items);
  std::vector<Judgment> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::optional<bool> r, a;
    if (rel[i]) {
      auto v = text::to_lower(*rel[i]);
      if (v == "esg") r = true;
      else if (v == "non-esg") r = false;
    }
    if (act[i]) a = parse_bool(*act[i]);
    if (!r || !a) {
      spdlog::warn("judge: no usable verdict for '{}'; left unjudged", items[i]);
      continue;
    }
    out.push_back({items[i], *r, *a, backend_.name()});
  }
  return out;
}

std::vector<Triple> SeedAnnotation::triples(const Taxonomy& tax) const {
  std::vector<Triple> out;
  if (!pillar) return out;
  out.push_back({phrase, Relation::aligns_with, tax.pillar_topic(*pillar).name, Provenance::seed, 1.0, std::nullopt});
  for (auto type : kTopicTypes) {
    auto it = levels.find(type);
    if (it == levels.end() || !it->second) continue;
    out.push_back({phrase, it->second->relation, it->second->topic, Provenance::seed, 1.0, std::nullopt});
  }
  return out;
}

QualityControlResult quality_control(Annotator& annotator, const std::vector<Concept>& phrases) {
  QualityControlResult out;
  auto reordered = annotator.reorder(phrases);
  auto verdicts = annotator.coherence(reordered);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < reordered.size(); ++i) {
    if (!verdicts[i]) out.undecided.push_back(reordered[i]);
    else if (!*verdicts[i]) out.rejected.push_back(reordered[i]);
    else if (seen.insert(reordered[i].text()).second) out.kept.push_back(reordered[i]);
  }
  return out;
}

void write_annotations(std::ostream& out, const std::vector<SeedAnnotation>& anns) {
  for (auto& a : anns) {
    out << a.phrase.text() << "\tpillar\t" << (a.pillar ? "aligns_with" : "-") << '\t'
        << (a.pillar ? to_string(*a.pillar) : std::string_view("Others")) << '\n';
    for (auto type : kTopicTypes) {
      auto it = a.levels.find(type);
      if (it == a.levels.end()) continue;
      out << a.phrase.text() << '\t' << to_string(type) << '\t';
      if (it->second) out << to_string(it->second->relation) << '\t' << it->second->topic << '\n';
      else out << "-\tnot_applicable\n";
    }
  }
}

}  // namespace esgkb
