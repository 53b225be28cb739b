#pragma once

// Wiring of catalog, index, model clients and backends into runnable
// end-to-end systems.

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "grs/agent.hpp"
#include "grs/bm25.hpp"
#include "grs/catalog.hpp"
#include "grs/config.hpp"
#include "grs/detail/io.hpp"
#include "grs/detail/parallel.hpp"
#include "grs/distill.hpp"
#include "grs/eval.hpp"
#include "grs/gr.hpp"
#include "grs/llm/http_client.hpp"
#include "grs/llm/mock.hpp"

namespace grs {

/// Sends endpoints that have a mock script (or every endpoint, when a
/// fallback script is set) to an in-process scripted client, and the rest
/// over HTTP.
class RoutingChatClient final : public llm::ChatClient {
 public:
  explicit RoutingChatClient(std::optional<llm::MockScript> fallback = std::nullopt)
      : has_fallback_(fallback.has_value()) {
    if (fallback) scripted_.set_fallback(std::move(*fallback));
  }

  void add_script(const std::string& endpoint_name, llm::MockScript script) {
    scripted_.set_script(endpoint_name, std::move(script));
    scripted_names_.insert(endpoint_name);
  }

  std::string complete(const llm::ModelEndpoint& endpoint, const std::string& prompt) override {
    if (has_fallback_ || scripted_names_.contains(endpoint.name)) return scripted_.complete(endpoint, prompt);
    return http_.complete(endpoint, prompt);
  }

 private:
  llm::ScriptedChatClient scripted_;
  llm::HttpChatClient http_;
  std::set<std::string> scripted_names_;
  bool has_fallback_ = false;
};

/// Everything one end-to-end run needs. Pointers are non-owning.
struct SystemSetup {
  const Catalog* catalog = nullptr;
  const Bm25Retriever* rm = nullptr;
  const GenerativeRetriever* backend = nullptr;
  DecisionModel decision;
  AgentConfig agent;
  std::size_t gr_k = 5;
  std::size_t workers = 1;
};

struct QueryOutcome {
  GenerationResult generation;
  eval::QueryResult result;
  std::optional<AgentTrace> trace;
};

/// Generation followed by the decision agent (capped at `top_k`) or, with
/// `use_agent` false, the generator's resolved output truncated to `top_k`.
inline QueryOutcome run_query(const SystemSetup& s, const std::string& query, std::size_t top_k, bool use_agent) {
  QueryOutcome out;
  out.generation = s.backend->generate(query, s.gr_k);
  const GenerationResult& gen = out.generation;
  if (use_agent) {
    AgentConfig cfg = s.agent;
    cfg.top_k_cap = top_k;
    AgentTrace trace;
    for (DocIndex d : run_agent(gen, *s.catalog, *s.rm, cfg, s.decision, &trace)) {
      out.result.doc_ids.push_back((*s.catalog)[d].doc_id);
    }
    out.trace = std::move(trace);
  } else {
    for (std::size_t i = 0; i < gen.resolved.size() && i < top_k; ++i) {
      out.result.doc_ids.push_back((*s.catalog)[gen.resolved[i]].doc_id);
    }
    std::set<std::string> invalid(gen.invalid.begin(), gen.invalid.end());
    for (std::size_t i = 0; i < gen.raw_outputs.size() && i < top_k; ++i) {
      out.result.hallucinated += invalid.contains(gen.raw_outputs[i]);
    }
  }
  return out;
}

/// Runs every query (concurrently up to `s.workers`) and aggregates by
/// query text, so the output does not depend on completion order.
inline eval::RunOutput run_queries(const SystemSetup& s, const std::vector<std::string>& queries,
                                   std::size_t top_k, bool use_agent,
                                   std::vector<QueryOutcome>* outcomes = nullptr) {
  std::vector<QueryOutcome> all(queries.size());
  detail::parallel_for(queries.size(), s.workers,
                       [&](std::size_t i) { all[i] = run_query(s, queries[i], top_k, use_agent); });
  eval::RunOutput out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out.results[queries[i]] = all[i].result;
    out.gr_invalid += all[i].generation.invalid.size();
  }
  if (outcomes) *outcomes = std::move(all);
  return out;
}

/// Catalog, index and clients built from a validated config.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::optional<llm::MockScript> fallback_script = std::nullopt)
      : cfg_(std::move(cfg)), client_(std::make_unique<RoutingChatClient>(std::move(fallback_script))) {
    catalog_ = load_catalog(cfg_.catalog->string(), cfg_.perspectives);
    index_ = build_index(catalog_, cfg_.index_fields);
    rm_ = std::make_unique<Bm25Retriever>(index_, cfg_.bm25);
    for (const auto& [name, ec] : cfg_.endpoints) {
      if (ec.mock_script) client_->add_script(name, llm::load_mock_script(ec.mock_script->string()));
    }
  }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const PipelineConfig& config() const noexcept { return cfg_; }
  const Catalog& catalog() const noexcept { return catalog_; }
  const InvertedIndex& index() const noexcept { return index_; }
  const Bm25Retriever& rm() const noexcept { return *rm_; }
  llm::ChatClient& client() const noexcept { return *client_; }

  std::unique_ptr<GenerativeRetriever> make_backend(const GrConfig& g) const {
    if (g.backend == GrBackendKind::kRemote) {
      llm::PromptTemplate prompt = g.prompt ? llm::load_template(llm::PromptId::kGeneration, g.prompt->string())
                                            : cfg_.prompt(llm::PromptId::kGeneration);
      return std::make_unique<RemoteRetriever>(*client_, cfg_.endpoint(g.endpoint), catalog_, std::move(prompt));
    }
    StubConfig sc;
    sc.hallucination_rate = g.hallucination_rate.value_or(0.0);
    sc.seed = g.stub_seed.value_or(cfg_.effective_seed());
    sc.k = g.k;
    return std::make_unique<StubRetriever>(catalog_, index_, cfg_.bm25, sc);
  }

  SystemSetup setup(const GenerativeRetriever& backend, const GrConfig& g) const {
    SystemSetup s;
    s.catalog = &catalog_;
    s.rm = rm_.get();
    s.backend = &backend;
    s.decision = {client_.get(), cfg_.endpoint(cfg_.decision_model), cfg_.prompt(llm::PromptId::kDecision)};
    s.agent = cfg_.agent;
    s.gr_k = g.k;
    s.workers = cfg_.workers;
    return s;
  }

 private:
  PipelineConfig cfg_;
  std::unique_ptr<RoutingChatClient> client_;
  Catalog catalog_;
  InvertedIndex index_;
  std::unique_ptr<Bm25Retriever> rm_;
};

struct DistillOutput {
  PipelineStats stats;
  std::filesystem::path corpus_path;
  std::filesystem::path stats_path;
  std::filesystem::path failures_path;
};

/// Query sampling, negative mining, reasoning generation and corpus
/// emission into the configured output directory.
inline DistillOutput run_distillation(const Pipeline& p) {
  const PipelineConfig& cfg = p.config();
  const std::uint64_t seed = cfg.effective_seed();
  const auto log = load_query_log(cfg.query_log->string());
  const auto queries = sample_queries(log, cfg.distill.n_per_stratum, seed);
  const auto positives = load_positives(cfg.positives->string(), p.catalog());
  const auto backend = p.make_backend(cfg.gr);

  JudgeEnsemble ensemble;
  ensemble.client = &p.client();
  for (const auto& name : cfg.judges) ensemble.judges.push_back(cfg.endpoint(name));
  ensemble.prompt = cfg.prompt(llm::PromptId::kRelevanceJudgement);
  ensemble.task_instruction = cfg.distill.task_instruction;

  MiningOptions mopts;
  mopts.k = cfg.gr.k;
  mopts.negatives_per_query = cfg.distill.negatives_per_query;
  mopts.workers = cfg.workers;
  MiningResult mined = mine_negatives(queries, *backend, p.catalog(), ensemble, mopts);

  ReasoningSourceOptions ropts;
  ropts.n_pos = cfg.distill.n_pos;
  ropts.negative_cap = cfg.distill.negative_cap;
  ropts.seed = seed;
  const auto source = build_reasoning_source(positives, mined.negatives, ropts, &mined.stats);

  ReasoningModel rmodel{&p.client(), cfg.endpoint(cfg.reasoning_model),
                        cfg.prompt(llm::PromptId::kReasoningGeneration)};
  const auto reasoning =
      generate_reasoning_batch(rmodel, source, p.catalog(), &mined.stats, &mined.failures, cfg.workers);
  const auto base = build_base_corpus(positives, p.catalog());

  DistillOutput out;
  out.corpus_path = cfg.output_dir / "corpus.jsonl";
  out.stats_path = cfg.output_dir / "stats.json";
  out.failures_path = cfg.output_dir / "failures.jsonl";
  out.stats = emit_corpus(base, reasoning, out.corpus_path, mined.stats);
  detail::write_file_atomic(out.stats_path, out.stats.to_json().dump(2) + "\n");
  std::string failures;
  for (const auto& f : mined.failures) failures += f.to_json().dump() + "\n";
  detail::write_file_atomic(out.failures_path, failures);
  return out;
}

}  // namespace grs
