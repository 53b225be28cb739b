#pragma once

// Reasoning-distillation corpus construction:
//   1. sample queries from the search log by frequency stratum,
//   2. mine negatives: generated documents every judge calls irrelevant,
//   3. pair them with sampled annotated positives,
//   4. ask the reasoning model why each pair is (ir)relevant,
//   5. append the rationales to the base corpus.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grs/catalog.hpp"
#include "grs/detail/io.hpp"
#include "grs/detail/parallel.hpp"
#include "grs/detail/rng.hpp"
#include "grs/error.hpp"
#include "grs/gr.hpp"
#include "grs/llm/endpoint.hpp"
#include "grs/llm/prompt.hpp"
#include "grs/llm/roles.hpp"

namespace grs {

enum class Provenance { kAnnotatedPositive, kMinedNegative };

inline std::string_view to_string(Provenance p) {
  return p == Provenance::kAnnotatedPositive ? "annotated_positive" : "mined_negative";
}

struct LabeledPair {
  std::string query;
  std::string doc_id;
  Label label = Label::kPositive;
  Provenance provenance = Provenance::kAnnotatedPositive;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

struct ReasoningRecord {
  LabeledPair pair;
  std::string prompt;  // rendered reasoning prompt sent to the generator
  std::string reasoning;
  std::string generator;
};

enum class RecordKind { kQdPair, kDocKnowledge, kReasoning };

inline std::string_view to_string(RecordKind k) {
  switch (k) {
    case RecordKind::kQdPair: return "qd_pair";
    case RecordKind::kDocKnowledge: return "doc_knowledge";
    case RecordKind::kReasoning: return "reasoning";
  }
  return "";
}

struct TrainingRecord {
  RecordKind kind = RecordKind::kQdPair;
  std::string input;
  std::string output;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)}, {"input", input}, {"output", output}, {"meta", meta}};
  }
};

struct Failure {
  std::string stage;
  std::string query;
  std::string doc_id;
  std::string reason;

  nlohmann::json to_json() const {
    return {{"stage", stage}, {"query", query}, {"doc_id", doc_id}, {"reason", reason}};
  }
};

struct PipelineStats {
  std::size_t queries_processed = 0;
  std::size_t queries_skipped = 0;
  std::size_t generations = 0;         // generated DocID strings
  std::size_t invalid_docids = 0;
  std::size_t judged_pairs = 0;
  std::map<std::string, std::size_t> judge_calls;
  std::size_t unanimity_negatives = 0;
  std::size_t negatives_capped = 0;
  std::size_t unparseable_verdicts = 0;
  std::size_t negatives_conflicting = 0;  // mined negatives that are annotated positives
  std::size_t reasoning_requested = 0;
  std::size_t skipped_pairs = 0;
  std::map<std::string, std::size_t> records_emitted;

  std::size_t total_judge_calls() const {
    std::size_t n = 0;
    for (const auto& [_, c] : judge_calls) n += c;
    return n;
  }

  nlohmann::json to_json() const {
    return {{"queries_processed", queries_processed},
            {"queries_skipped", queries_skipped},
            {"generations", generations},
            {"invalid_docids", invalid_docids},
            {"judged_pairs", judged_pairs},
            {"judge_calls", judge_calls},
            {"unanimity_negatives", unanimity_negatives},
            {"negatives_capped", negatives_capped},
            {"unparseable_verdicts", unparseable_verdicts},
            {"negatives_conflicting", negatives_conflicting},
            {"reasoning_requested", reasoning_requested},
            {"skipped_pairs", skipped_pairs},
            {"records_emitted", records_emitted}};
  }
};

/// Frequency-stratified query sample. Entries are ranked by frequency
/// (descending, ties by query text) and split into top/middle/bottom
/// tertiles; each stratum contributes up to `n_per_stratum` queries drawn
/// uniformly without replacement. Output is deduplicated keep-first.
inline std::vector<std::string> sample_queries(const std::vector<QueryLogEntry>& log,
                                               std::size_t n_per_stratum, std::uint64_t seed) {
  if (log.empty()) throw Error(ErrorCode::kInvalidArgument, "sample_queries: empty query log");
  std::vector<QueryLogEntry> ranked = log;
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.query < b.query;
  });
  const std::size_t n = ranked.size();
  const std::size_t bounds[] = {0, (n + 2) / 3, (2 * n + 2) / 3, n};

  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::string> stratum;
    for (std::size_t i = bounds[s]; i < bounds[s + 1]; ++i) stratum.push_back(ranked[i].query);
    detail::Rng rng(detail::derive_seed(seed, "stratum", s));
    for (auto& q : rng.sample(std::move(stratum), n_per_stratum)) {
      if (seen.insert(q).second) out.push_back(std::move(q));
    }
  }
  return out;
}

/// Unanimity rule: a pair is negative only if every verdict is Irrelevant.
inline bool unanimous_irrelevant(std::span<const llm::JudgeVerdict> verdicts) {
  return !verdicts.empty() && std::all_of(verdicts.begin(), verdicts.end(), [](auto v) {
    return v == llm::JudgeVerdict::kIrrelevant;
  });
}

struct JudgeEnsemble {
  llm::ChatClient* client = nullptr;
  std::vector<llm::ModelEndpoint> judges;
  llm::PromptTemplate prompt = llm::default_template(llm::PromptId::kRelevanceJudgement);
  std::string task_instruction = std::string(llm::kDefaultTaskInstruction);
};

struct MiningOptions {
  std::size_t k = 5;
  std::size_t negatives_per_query = 3;  // 0 disables the cap
  std::size_t workers = 4;
};

struct MiningResult {
  std::vector<LabeledPair> negatives;
  PipelineStats stats;
  std::vector<Failure> failures;
};

/// Generates k documents per query, has every judge label each resolved
/// document, and keeps the unanimously irrelevant ones as negatives.
inline MiningResult mine_negatives(const std::vector<std::string>& queries,
                                   const GenerativeRetriever& backend, const Catalog& catalog,
                                   const JudgeEnsemble& ensemble, const MiningOptions& opts = {}) {
  if (ensemble.judges.empty()) throw Error(ErrorCode::kConfig, "mine_negatives: no judges configured");
  MiningResult out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& j : ensemble.judges) out.stats.judge_calls[j.name] = 0;

  for (const auto& query : queries) {
    GenerationResult gen;
    try {
      gen = backend.generate(query, opts.k);
    } catch (const Error& e) {
      if (!e.is_gateway_failure()) throw;
      ++out.stats.queries_skipped;
      out.failures.push_back({"generate", query, "", e.what()});
      continue;
    }
    ++out.stats.queries_processed;
    out.stats.generations += gen.raw_outputs.size();
    out.stats.invalid_docids += gen.invalid.size();

    const std::size_t n_docs = gen.resolved.size();
    const std::size_t n_judges = ensemble.judges.size();
    std::vector<llm::JudgeVerdict> verdicts(n_docs * n_judges, llm::JudgeVerdict::kUnparseable);
    std::vector<std::string> errors(n_docs * n_judges);
    detail::parallel_for(n_docs * n_judges, opts.workers, [&](std::size_t cell) {
      const Document& doc = catalog[gen.resolved[cell / n_judges]];
      verdicts[cell] = llm::judge_relevance(*ensemble.client, ensemble.judges[cell % n_judges], ensemble.prompt,
                                            query, doc, ensemble.task_instruction, &errors[cell]);
    });

    std::size_t kept_for_query = 0;
    for (std::size_t d = 0; d < n_docs; ++d) {
      const Document& doc = catalog[gen.resolved[d]];
      ++out.stats.judged_pairs;
      for (std::size_t j = 0; j < n_judges; ++j) {
        const std::size_t cell = d * n_judges + j;
        ++out.stats.judge_calls[ensemble.judges[j].name];
        if (verdicts[cell] == llm::JudgeVerdict::kUnparseable) {
          ++out.stats.unparseable_verdicts;
          if (!errors[cell].empty()) out.failures.push_back({"judge", query, doc.doc_id, errors[cell]});
        }
      }
      std::span<const llm::JudgeVerdict> row(verdicts.data() + d * n_judges, n_judges);
      if (!unanimous_irrelevant(row)) continue;
      ++out.stats.unanimity_negatives;
      if (!seen.insert({query, doc.doc_id}).second) continue;
      if (opts.negatives_per_query > 0 && kept_for_query >= opts.negatives_per_query) {
        ++out.stats.negatives_capped;
        continue;
      }
      ++kept_for_query;
      out.negatives.push_back({query, doc.doc_id, Label::kNegative, Provenance::kMinedNegative});
    }
  }
  return out;
}

/// Annotated positives file: JSON Lines of {query, doc_id}. Every doc_id
/// must name a catalog document.
inline std::vector<LabeledPair> load_positives(const std::string& path, const Catalog& catalog) {
  std::ifstream in = detail::open_input(path);
  std::vector<LabeledPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      LabeledPair p;
      p.query = text::trim_unicode(rec.at("query").get<std::string>());
      p.doc_id = text::normalize_docid(rec.at("doc_id").get<std::string>());
      if (p.query.empty()) throw detail::line_error(path, line_no, "empty query");
      if (!catalog.find(p.doc_id)) throw detail::line_error(path, line_no, "unknown doc_id '" + p.doc_id + "'");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw detail::line_error(path, line_no, e.what());
    }
  }
  return out;
}

struct ReasoningSourceOptions {
  std::optional<std::size_t> n_pos;         // default: number of negatives
  std::optional<std::size_t> negative_cap;  // default: all negatives
  std::uint64_t seed = 0;
};

/// Sampled positives followed by the mined negatives, deduplicated. Mined
/// negatives that coincide with an annotated positive are dropped.
inline std::vector<LabeledPair> build_reasoning_source(const std::vector<LabeledPair>& positives,
                                                       const std::vector<LabeledPair>& negatives,
                                                       const ReasoningSourceOptions& opts = {},
                                                       PipelineStats* stats = nullptr) {
  std::set<std::pair<std::string, std::string>> positive_keys;
  for (const auto& p : positives) positive_keys.insert({p.query, p.doc_id});

  std::vector<LabeledPair> negs;
  for (const auto& n : negatives) {
    if (positive_keys.contains({n.query, n.doc_id})) {
      if (stats) ++stats->negatives_conflicting;
      continue;
    }
    negs.push_back(n);
  }
  if (opts.negative_cap && negs.size() > *opts.negative_cap) negs.resize(*opts.negative_cap);

  detail::Rng rng(detail::derive_seed(opts.seed, "positives"));
  const std::size_t n_pos = opts.n_pos.value_or(negs.size());
  std::vector<LabeledPair> out;
  std::set<std::tuple<std::string, std::string, Label>> seen;
  const auto add = [&](const LabeledPair& p) {
    if (seen.insert({p.query, p.doc_id, p.label}).second) out.push_back(p);
  };
  for (const auto& p : rng.sample(positives, n_pos)) add(p);
  for (const auto& n : negs) add(n);
  return out;
}

struct ReasoningModel {
  llm::ChatClient* client = nullptr;
  llm::ModelEndpoint endpoint;
  llm::PromptTemplate prompt = llm::default_template(llm::PromptId::kReasoningGeneration);
};

/// One record per pair that yields non-empty reasoning, in input order.
inline std::vector<ReasoningRecord> generate_reasoning_batch(const ReasoningModel& model,
                                                             const std::vector<LabeledPair>& pairs,
                                                             const Catalog& catalog,
                                                             PipelineStats* stats = nullptr,
                                                             std::vector<Failure>* failures = nullptr,
                                                             std::size_t workers = 4) {
  std::vector<std::optional<ReasoningRecord>> slots(pairs.size());
  std::vector<std::string> errors(pairs.size());
  detail::parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto& pair = pairs[i];
    auto idx = catalog.find(pair.doc_id);
    if (!idx) {
      errors[i] = "unknown doc_id";
      return;
    }
    const std::string& title = catalog[*idx].title;
    try {
      ReasoningRecord rec;
      rec.pair = pair;
      rec.prompt = llm::render_reasoning_prompt(model.prompt, pair.query, title, pair.label);
      rec.reasoning =
          llm::generate_reasoning(*model.client, model.endpoint, model.prompt, pair.query, title, pair.label);
      rec.generator = model.endpoint.name;
      slots[i] = std::move(rec);
    } catch (const Error& e) {
      if (!e.is_gateway_failure()) throw;
      errors[i] = e.what();
    }
  });
  std::vector<ReasoningRecord> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (stats) ++stats->reasoning_requested;
    if (slots[i]) {
      out.push_back(std::move(*slots[i]));
    } else {
      if (stats) ++stats->skipped_pairs;
      if (failures) failures->push_back({"reasoning", pairs[i].query, pairs[i].doc_id, errors[i]});
    }
  }
  return out;
}

inline constexpr std::string_view kQueryInstruction =
    "Search query: <{{q}}>. Generate the title of a relevant document.";
inline constexpr std::string_view kKnowledgeInstruction =
    "Document: <{{d_i}}>. Describe its structured knowledge.";

/// Base corpus: one qd_pair record per annotated positive, then one
/// doc_knowledge record per catalog document with at least one known
/// attribute.
inline std::vector<TrainingRecord> build_base_corpus(const std::vector<LabeledPair>& positives,
                                                     const Catalog& catalog) {
  const llm::PromptTemplate qt{llm::PromptId::kGeneration, std::string(kQueryInstruction)};
  const llm::PromptTemplate kt{llm::PromptId::kGeneration, std::string(kKnowledgeInstruction)};
  std::vector<TrainingRecord> out;
  for (const auto& p : positives) {
    const auto idx = catalog.find(p.doc_id);
    if (!idx) throw Error(ErrorCode::kInvalidArgument, "positive names unknown doc_id", p.doc_id);
    out.push_back({RecordKind::kQdPair, llm::render_prompt(qt, {{"q", p.query}}), catalog[*idx].title,
                   {{"query", p.query}, {"doc_id", p.doc_id}}});
  }
  for (const auto& doc : catalog.documents()) {
    std::string knowledge;
    for (const auto& persp : catalog.perspectives()) {
      const auto& value = doc.attribute(persp);
      if (value == kUnknownValue) continue;
      if (!knowledge.empty()) knowledge += "; ";
      knowledge += persp + ": " + value;
    }
    if (knowledge.empty()) continue;
    out.push_back({RecordKind::kDocKnowledge, llm::render_prompt(kt, {{"d_i", doc.title}}), knowledge,
                   {{"doc_id", doc.doc_id}}});
  }
  return out;
}

/// Reasoning record as a training instance: the input states the pair and
/// its label, the target is the rationale.
inline TrainingRecord to_training_record(const ReasoningRecord& r) {
  return {RecordKind::kReasoning, r.prompt, r.reasoning,
          {{"query", r.pair.query},
           {"doc_id", r.pair.doc_id},
           {"label", to_symbol(r.pair.label)},
           {"provenance", to_string(r.pair.provenance)},
           {"generator", r.generator}}};
}

/// Canonical JSON Lines for base corpus followed by reasoning records.
inline std::string serialize_corpus(const std::vector<TrainingRecord>& base,
                                    const std::vector<ReasoningRecord>& reasoning) {
  std::string out;
  for (const auto& rec : base) out += rec.to_json().dump() + '\n';
  for (const auto& r : reasoning) out += to_training_record(r).to_json().dump() + '\n';
  return out;
}

/// Writes the augmented corpus atomically and records per-kind counts.
inline PipelineStats emit_corpus(const std::vector<TrainingRecord>& base,
                                 const std::vector<ReasoningRecord>& reasoning,
                                 const std::filesystem::path& path, PipelineStats stats = {}) {
  for (const auto& rec : base) {
    if (rec.input.empty() || rec.output.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "training record with empty input or output");
    }
  }
  detail::write_file_atomic(path, serialize_corpus(base, reasoning));
  for (const auto& rec : base) ++stats.records_emitted[std::string(to_string(rec.kind))];
  stats.records_emitted[std::string(to_string(RecordKind::kReasoning))] += reasoning.size();
  return stats;
}

}  // namespace grs
