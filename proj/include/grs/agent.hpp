#pragma once

// Post-processing decision agent. Each generated document is expanded with
// its nearest neighbours under a retrieval model; the pooled candidates are
// then vetted once per structured perspective, and only candidates every
// perspective retains survive.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "grs/bm25.hpp"
#include "grs/catalog.hpp"
#include "grs/detail/parallel.hpp"
#include "grs/error.hpp"
#include "grs/gr.hpp"
#include "grs/llm/endpoint.hpp"
#include "grs/llm/prompt.hpp"
#include "grs/llm/roles.hpp"

namespace grs {

enum class MissingFieldPolicy { kPassThrough, kExclude };

inline std::string_view to_string(MissingFieldPolicy p) {
  return p == MissingFieldPolicy::kPassThrough ? "pass_through" : "exclude";
}

struct AgentConfig {
  std::size_t m = 3;
  std::size_t top_k_cap = 5;
  std::vector<std::string> perspectives = default_perspectives();
  MissingFieldPolicy missing_field_policy = MissingFieldPolicy::kPassThrough;
  bool include_seed = true;

  void validate() const {
    if (top_k_cap < 1) throw Error(ErrorCode::kConfig, "agent top_k_cap must be >= 1");
    if (perspectives.empty()) throw Error(ErrorCode::kConfig, "agent perspectives must be non-empty");
  }
};

/// [seed if include_seed] followed by the RM's top-m neighbours of the seed
/// title, excluding the seed itself.
template <RetrievalModel RM>
std::vector<DocIndex> expand(DocIndex seed, const Catalog& catalog, const RM& rm, std::size_t m,
                             bool include_seed = true) {
  std::vector<DocIndex> out;
  if (include_seed) out.push_back(seed);
  if (m == 0) return out;
  for (const auto& hit : rm.retrieve(catalog[seed].title, m + 1)) {
    if (hit.doc == seed) continue;
    if (out.size() - (include_seed ? 1 : 0) == m) break;
    out.push_back(hit.doc);
  }
  return out;
}

struct SeedExpansion {
  DocIndex seed = 0;
  std::vector<DocIndex> expansion;
};

/// Expansions of each resolved document in generation order, deduplicated
/// keep-first and truncated to `top_k_cap`.
template <RetrievalModel RM>
std::vector<DocIndex> assemble_candidates(const GenerationResult& gen, const Catalog& catalog,
                                          const RM& rm, const AgentConfig& cfg,
                                          std::vector<SeedExpansion>* expansions = nullptr) {
  std::vector<DocIndex> out;
  std::set<DocIndex> seen;
  for (DocIndex seed : gen.resolved) {
    auto ex = expand(seed, catalog, rm, cfg.m, cfg.include_seed);
    for (DocIndex d : ex) {
      if (out.size() < cfg.top_k_cap && seen.insert(d).second) out.push_back(d);
    }
    if (expansions) expansions->push_back({seed, std::move(ex)});
  }
  return out;
}

struct PerspectiveTrace {
  std::string perspective;
  std::vector<DocIndex> asked;          // candidates sent to the decision model
  std::vector<DocIndex> auto_retained;  // unknown value, pass_through
  std::vector<DocIndex> auto_dropped;   // unknown value, exclude
  std::vector<DocIndex> retained;       // in candidate order
  std::size_t hallucinated = 0;
  bool unparseable = false;
  bool degraded = false;
  std::string error;
};

struct AgentTrace {
  std::string query;
  std::vector<SeedExpansion> expansions;
  std::vector<DocIndex> candidates;
  std::vector<PerspectiveTrace> perspectives;
  std::vector<DocIndex> final;
  std::map<DocIndex, std::vector<std::string>> drop_reasons;

  nlohmann::json to_json(const Catalog& catalog) const {
    const auto ids = [&](const std::vector<DocIndex>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (DocIndex d : v) a.push_back(catalog[d].doc_id);
      return a;
    };
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : expansions) ex.push_back({{"seed", catalog[e.seed].doc_id}, {"expansion", ids(e.expansion)}});
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : perspectives) {
      nlohmann::json j = {{"perspective", p.perspective},     {"asked", ids(p.asked)},
                          {"auto_retained", ids(p.auto_retained)}, {"auto_dropped", ids(p.auto_dropped)},
                          {"retained", ids(p.retained)},      {"hallucinated", p.hallucinated},
                          {"unparseable", p.unparseable},     {"degraded", p.degraded}};
      if (!p.error.empty()) j["error"] = p.error;
      ps.push_back(std::move(j));
    }
    nlohmann::json drops = nlohmann::json::object();
    for (const auto& [d, reasons] : drop_reasons) drops[catalog[d].doc_id] = reasons;
    return {{"query", query},       {"expansions", ex}, {"candidates", ids(candidates)},
            {"perspectives", ps},   {"final", ids(final)}, {"drop_reasons", drops}};
  }
};

struct DecisionModel {
  llm::ChatClient* client = nullptr;
  llm::ModelEndpoint endpoint;
  llm::PromptTemplate prompt = llm::default_template(llm::PromptId::kDecision);
};

/// Vets `candidates` under each perspective and keeps those retained by all.
/// A perspective whose call fails retains nothing and is marked degraded.
inline std::vector<DocIndex> filter_by_perspectives(const std::string& query,
                                                    const std::vector<DocIndex>& candidates,
                                                    const Catalog& catalog, const AgentConfig& cfg,
                                                    const DecisionModel& model, AgentTrace* trace = nullptr,
                                                    std::size_t workers = 1) {
  std::vector<PerspectiveTrace> per(cfg.perspectives.size());
  for (std::size_t pi = 0; pi < per.size(); ++pi) per[pi].perspective = cfg.perspectives[pi];
  const auto run_one = [&](std::size_t pi) {
    PerspectiveTrace& pt = per[pi];
    std::vector<llm::DecisionCandidate> batch;
    for (DocIndex d : candidates) {
      const std::string& value = catalog[d].attribute(pt.perspective);
      if (value == kUnknownValue) {
        (cfg.missing_field_policy == MissingFieldPolicy::kPassThrough ? pt.auto_retained : pt.auto_dropped)
            .push_back(d);
      } else {
        pt.asked.push_back(d);
        batch.push_back({catalog[d].title, value});
      }
    }
    std::set<DocIndex> keep(pt.auto_retained.begin(), pt.auto_retained.end());
    if (!batch.empty()) {
      try {
        const auto outcome = llm::decide(*model.client, model.endpoint, model.prompt, query, batch, pt.perspective);
        pt.hallucinated = outcome.hallucinated;
        pt.unparseable = outcome.unparseable;
        for (const auto& title : outcome.retained) {
          if (auto idx = catalog.find(text::normalize_docid(title))) keep.insert(*idx);
        }
      } catch (const Error& e) {
        if (!e.is_gateway_failure()) throw;
        pt.degraded = true;
        pt.error = e.what();
        keep.clear();
      }
    }
    for (DocIndex d : candidates) {
      if (keep.contains(d)) pt.retained.push_back(d);
    }
  };
  if (!candidates.empty()) detail::parallel_for(per.size(), workers, run_one);

  std::vector<DocIndex> final;
  std::map<DocIndex, std::vector<std::string>> reasons;
  for (DocIndex d : candidates) {
    bool all = true;
    for (const auto& pt : per) {
      if (std::find(pt.retained.begin(), pt.retained.end(), d) != pt.retained.end()) continue;
      all = false;
      std::string why;
      if (pt.degraded) {
        why = "degraded";
      } else if (std::find(pt.auto_dropped.begin(), pt.auto_dropped.end(), d) != pt.auto_dropped.end()) {
        why = "unknown value excluded";
      } else {
        why = "rejected";
      }
      reasons[d].push_back(pt.perspective + ": " + why);
    }
    if (all) final.push_back(d);
  }
  if (trace) {
    trace->query = query;
    trace->candidates = candidates;
    trace->perspectives = std::move(per);
    trace->final = final;
    trace->drop_reasons = std::move(reasons);
  }
  return final;
}

/// Full agent pass over one generation result.
template <RetrievalModel RM>
std::vector<DocIndex> run_agent(const GenerationResult& gen, const Catalog& catalog, const RM& rm,
                                const AgentConfig& cfg, const DecisionModel& model,
                                AgentTrace* trace = nullptr, std::size_t workers = 1) {
  std::vector<SeedExpansion> expansions;
  const auto candidates = assemble_candidates(gen, catalog, rm, cfg, &expansions);
  auto final = filter_by_perspectives(gen.query, candidates, catalog, cfg, model, trace, workers);
  if (trace) {
    trace->query = gen.query;
    trace->expansions = std::move(expansions);
  }
  return final;
}

}  // namespace grs
