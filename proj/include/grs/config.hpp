#pragma once

// Pipeline configuration file (JSON). Relative paths resolve against the
// directory holding the config file. See README.md for the full schema.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grs/agent.hpp"
#include "grs/bm25.hpp"
#include "grs/catalog.hpp"
#include "grs/error.hpp"
#include "grs/eval.hpp"
#include "grs/gr.hpp"
#include "grs/llm/endpoint.hpp"
#include "grs/llm/prompt.hpp"

namespace grs {

struct EndpointConfig {
  llm::ModelEndpoint endpoint;
  std::optional<std::filesystem::path> mock_script;
};

enum class GrBackendKind { kStub, kRemote };

struct GrConfig {
  GrBackendKind backend = GrBackendKind::kStub;
  std::string endpoint;  // remote only
  std::size_t k = 5;
  std::optional<double> hallucination_rate;  // stub only
  std::optional<std::uint64_t> stub_seed;    // defaults to the global seed
  std::optional<std::filesystem::path> prompt;
};

struct DistillConfig {
  std::size_t n_per_stratum = 10;
  std::optional<std::size_t> n_pos;
  std::size_t negatives_per_query = 3;
  std::optional<std::size_t> negative_cap;
  std::string task_instruction = std::string(llm::kDefaultTaskInstruction);
};

enum class Command { kIndex, kDistill, kAgent, kEval, kAll };

struct PipelineConfig {
  std::filesystem::path base_dir;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 4;

  std::optional<std::filesystem::path> catalog;
  std::optional<std::filesystem::path> query_log;
  std::optional<std::filesystem::path> positives;
  std::optional<std::filesystem::path> eval_set;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> index_dump;

  std::vector<std::string> perspectives = default_perspectives();
  std::map<std::string, EndpointConfig> endpoints;
  std::vector<std::string> judges;
  std::string reasoning_model;
  std::string decision_model;

  GrConfig gr;
  std::optional<GrConfig> gr_preliminary;
  Bm25Params bm25;
  FieldSpec index_fields = FieldSpec::kTitle;
  AgentConfig agent;
  DistillConfig distill;
  std::vector<std::size_t> sweep_ks = eval::default_sweep_ks();
  eval::Averaging averaging = eval::Averaging::kMicro;
  std::map<llm::PromptId, std::filesystem::path> prompt_files;

  std::uint64_t effective_seed() const { return seed.value_or(0); }

  const llm::ModelEndpoint& endpoint(const std::string& name) const {
    auto it = endpoints.find(name);
    if (it == endpoints.end()) throw Error(ErrorCode::kConfig, "undefined endpoint '" + name + "'", name);
    return it->second.endpoint;
  }

  llm::PromptTemplate prompt(llm::PromptId id) const {
    auto it = prompt_files.find(id);
    if (it == prompt_files.end()) return llm::default_template(id);
    return llm::load_template(id, it->second.string());
  }

  /// Fail-fast checks for everything `cmd` will touch.
  void validate(Command cmd) const {
    if (!seed) throw Error(ErrorCode::kConfig, "config has no seed");
    if (workers == 0) throw Error(ErrorCode::kConfig, "workers must be >= 1");
    bm25.validate();
    const auto need_file = [](const std::optional<std::filesystem::path>& p, const char* what) {
      if (!p) throw Error(ErrorCode::kConfig, std::string("paths.") + what + " is not set", what);
      if (!std::filesystem::exists(*p)) {
        throw Error(ErrorCode::kFileNotFound, "file not found: " + p->string(), p->string());
      }
    };
    const auto need_endpoint = [&](const std::string& name, const char* role) {
      if (name.empty()) throw Error(ErrorCode::kConfig, std::string("no endpoint for role '") + role + "'", role);
      auto it = endpoints.find(name);
      if (it == endpoints.end()) {
        throw Error(ErrorCode::kConfig, std::string("role '") + role + "' names undefined endpoint '" + name + "'",
                    name);
      }
      it->second.endpoint.validate();
      if (it->second.mock_script && !std::filesystem::exists(*it->second.mock_script)) {
        throw Error(ErrorCode::kFileNotFound, "file not found: " + it->second.mock_script->string(),
                    it->second.mock_script->string());
      }
    };
    const auto check_gr = [&](const GrConfig& g) {
      if (g.k == 0) throw Error(ErrorCode::kConfig, "gr.k must be >= 1");
      if (g.backend == GrBackendKind::kRemote) need_endpoint(g.endpoint, "gr");
      if (g.hallucination_rate && !(*g.hallucination_rate >= 0.0 && *g.hallucination_rate <= 1.0)) {
        throw Error(ErrorCode::kConfig, "gr.stub.hallucination_rate must be in [0, 1]");
      }
      if (g.prompt && !std::filesystem::exists(*g.prompt)) {
        throw Error(ErrorCode::kFileNotFound, "file not found: " + g.prompt->string(), g.prompt->string());
      }
    };
    for (const auto& [id, path] : prompt_files) {
      if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::kFileNotFound, "file not found: " + path.string(), path.string());
      }
    }

    need_file(catalog, "catalog");
    const bool all = cmd == Command::kAll;
    if (cmd == Command::kDistill || all) {
      need_file(query_log, "query_log");
      need_file(positives, "positives");
      if (judges.empty()) throw Error(ErrorCode::kConfig, "roles.judges is empty");
      for (const auto& j : judges) need_endpoint(j, "judge");
      need_endpoint(reasoning_model, "reasoning");
      check_gr(gr);
    }
    if (cmd == Command::kAgent || cmd == Command::kEval || all) {
      agent.validate();
      need_endpoint(decision_model, "decision");
      check_gr(gr);
      if (gr_preliminary) check_gr(*gr_preliminary);
    }
    if (cmd == Command::kEval || all) {
      need_file(eval_set, "eval_set");
      for (auto k : sweep_ks) {
        if (k == 0) throw Error(ErrorCode::kConfig, "eval.ks entries must be >= 1");
      }
    }
  }
};

namespace detail {

inline llm::ModelEndpoint parse_endpoint(const std::string& name, const nlohmann::json& j) {
  llm::ModelEndpoint e;
  e.name = name;
  e.base_url = j.value("base_url", std::string("http://127.0.0.1:8080"));
  e.model_id = j.value("model_id", name);
  e.temperature = j.value("temperature", 0.0);
  e.max_output_tokens = j.value("max_output_tokens", 512);
  e.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30'000));
  e.max_retries = j.value("max_retries", 3);
  e.max_in_flight = j.value("max_in_flight", 8);
  return e;
}

inline GrConfig parse_gr(const nlohmann::json& j, const std::filesystem::path& base) {
  GrConfig g;
  const std::string backend = j.value("backend", std::string("stub"));
  if (backend == "stub") {
    g.backend = GrBackendKind::kStub;
  } else if (backend == "remote") {
    g.backend = GrBackendKind::kRemote;
  } else {
    throw Error(ErrorCode::kConfig, "gr.backend must be stub or remote", backend);
  }
  g.endpoint = j.value("endpoint", std::string());
  g.k = j.value("k", std::size_t{5});
  if (auto s = j.find("stub"); s != j.end()) {
    if (s->contains("hallucination_rate")) g.hallucination_rate = s->at("hallucination_rate").get<double>();
    if (s->contains("seed")) g.stub_seed = s->at("seed").get<std::uint64_t>();
  }
  if (j.contains("prompt")) g.prompt = base / j.at("prompt").get<std::string>();
  return g;
}

}  // namespace detail

inline PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  const auto path_of = [&](const nlohmann::json& v) { return base_dir / v.get<std::string>(); };
  try {
    if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.workers = j.value("workers", c.workers);
    if (auto p = j.find("paths"); p != j.end()) {
      if (p->contains("catalog")) c.catalog = path_of(p->at("catalog"));
      if (p->contains("query_log")) c.query_log = path_of(p->at("query_log"));
      if (p->contains("positives")) c.positives = path_of(p->at("positives"));
      if (p->contains("eval_set")) c.eval_set = path_of(p->at("eval_set"));
      if (p->contains("output_dir")) c.output_dir = path_of(p->at("output_dir"));
      if (p->contains("index_dump")) c.index_dump = path_of(p->at("index_dump"));
    } else {
      c.output_dir = base_dir / c.output_dir;
    }
    if (j.contains("perspectives")) c.perspectives = j.at("perspectives").get<std::vector<std::string>>();
    c.agent.perspectives = c.perspectives;
    if (auto e = j.find("endpoints"); e != j.end()) {
      for (const auto& [name, spec] : e->items()) {
        EndpointConfig ec{detail::parse_endpoint(name, spec), std::nullopt};
        if (spec.contains("mock_script")) ec.mock_script = path_of(spec.at("mock_script"));
        c.endpoints.emplace(name, std::move(ec));
      }
    }
    if (auto r = j.find("roles"); r != j.end()) {
      c.judges = r->value("judges", std::vector<std::string>{});
      c.reasoning_model = r->value("reasoning", std::string());
      c.decision_model = r->value("decision", std::string());
    }
    if (j.contains("gr")) c.gr = detail::parse_gr(j.at("gr"), base_dir);
    if (j.contains("gr_preliminary")) c.gr_preliminary = detail::parse_gr(j.at("gr_preliminary"), base_dir);
    if (auto b = j.find("bm25"); b != j.end()) {
      c.bm25.k1 = b->value("k1", c.bm25.k1);
      c.bm25.b = b->value("b", c.bm25.b);
      const std::string fields = b->value("fields", std::string("title"));
      if (fields == "title") {
        c.index_fields = FieldSpec::kTitle;
      } else if (fields == "title_and_attributes") {
        c.index_fields = FieldSpec::kTitleAndAttributes;
      } else {
        throw Error(ErrorCode::kConfig, "bm25.fields must be title or title_and_attributes", fields);
      }
    }
    if (auto a = j.find("agent"); a != j.end()) {
      c.agent.m = a->value("m", c.agent.m);
      c.agent.top_k_cap = a->value("top_k_cap", c.agent.top_k_cap);
      c.agent.include_seed = a->value("include_seed", c.agent.include_seed);
      if (a->contains("perspectives")) c.agent.perspectives = a->at("perspectives").get<std::vector<std::string>>();
      const std::string policy = a->value("missing_field_policy", std::string("pass_through"));
      if (policy == "pass_through") {
        c.agent.missing_field_policy = MissingFieldPolicy::kPassThrough;
      } else if (policy == "exclude") {
        c.agent.missing_field_policy = MissingFieldPolicy::kExclude;
      } else {
        throw Error(ErrorCode::kConfig, "agent.missing_field_policy must be pass_through or exclude", policy);
      }
    }
    if (auto d = j.find("distill"); d != j.end()) {
      c.distill.n_per_stratum = d->value("n_per_stratum", c.distill.n_per_stratum);
      if (d->contains("n_pos") && !d->at("n_pos").is_null()) c.distill.n_pos = d->at("n_pos").get<std::size_t>();
      c.distill.negatives_per_query = d->value("negatives_per_query", c.distill.negatives_per_query);
      if (d->contains("negative_cap") && !d->at("negative_cap").is_null()) {
        c.distill.negative_cap = d->at("negative_cap").get<std::size_t>();
      }
      c.distill.task_instruction = d->value("task_instruction", c.distill.task_instruction);
    }
    if (auto ev = j.find("eval"); ev != j.end()) {
      if (ev->contains("ks")) c.sweep_ks = ev->at("ks").get<std::vector<std::size_t>>();
      const std::string avg = ev->value("averaging", std::string("micro"));
      if (avg == "micro") {
        c.averaging = eval::Averaging::kMicro;
      } else if (avg == "macro") {
        c.averaging = eval::Averaging::kMacro;
      } else {
        throw Error(ErrorCode::kConfig, "eval.averaging must be micro or macro", avg);
      }
    }
    if (auto p = j.find("prompts"); p != j.end()) {
      static const std::pair<const char*, llm::PromptId> kIds[] = {
          {"relevance_judgement", llm::PromptId::kRelevanceJudgement},
          {"reasoning_generation", llm::PromptId::kReasoningGeneration},
          {"decision", llm::PromptId::kDecision},
          {"generation", llm::PromptId::kGeneration}};
      for (const auto& [key, id] : kIds) {
        if (p->contains(key)) c.prompt_files[id] = path_of(p->at(key));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, "file not found: " + path.string(), path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what(), path.string());
  }
  return parse_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace grs
