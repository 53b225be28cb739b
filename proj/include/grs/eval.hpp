#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grs/catalog.hpp"
#include "grs/error.hpp"
#include "grs/text.hpp"

namespace grs::eval {

struct EvalEntry {
  std::string query;
  std::map<std::string, bool> gold;  // doc_id -> relevant?
};

struct EvalSet {
  std::vector<EvalEntry> entries;
  Scenario scenario = Scenario::kOther;

  const EvalEntry* find(const std::string& query) const {
    for (const auto& e : entries) {
      if (e.query == query) return &e;
    }
    return nullptr;
  }

  std::vector<std::string> queries() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.query);
    return out;
  }
};

/// JSON Lines of {query, labels: {doc_id: "relevant"|"irrelevant"}}. Every
/// labeled doc_id must resolve against the catalog.
inline EvalSet load_eval_set(const std::string& path, const Catalog& catalog) {
  std::ifstream in = detail::open_input(path);
  EvalSet set;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const std::string query = text::trim_unicode(rec.at("query").get<std::string>());
      if (query.empty()) throw detail::line_error(path, line_no, "empty query");
      auto [it, inserted] = index.emplace(query, set.entries.size());
      if (inserted) set.entries.push_back({query, {}});
      auto& gold = set.entries[it->second].gold;
      for (const auto& [raw_id, label] : rec.at("labels").items()) {
        const std::string id = text::normalize_docid(raw_id);
        if (!catalog.find(id)) throw detail::line_error(path, line_no, "unknown doc_id '" + id + "'");
        const std::string l = label.get<std::string>();
        if (l != "relevant" && l != "irrelevant") {
          throw detail::line_error(path, line_no, "label must be relevant or irrelevant");
        }
        gold[id] = l == "relevant";
      }
    } catch (const nlohmann::json::exception& e) {
      throw detail::line_error(path, line_no, e.what());
    }
  }
  return set;
}

/// Final output of a system for one query: catalog DocIDs shown to the user
/// plus the number of hallucinated strings shown alongside them.
struct QueryResult {
  std::vector<std::string> doc_ids;
  std::size_t hallucinated = 0;

  friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

using Results = std::map<std::string, QueryResult>;

enum class Averaging { kMicro, kMacro };

struct AccuracyCounts {
  std::size_t relevant = 0;
  std::size_t irrelevant = 0;  // includes hallucinated
  std::size_t hallucinated = 0;
  std::size_t unjudged = 0;

  std::size_t labeled() const { return relevant + irrelevant; }
};

struct Accuracy {
  double acc = 0.0;
  AccuracyCounts counts;
};

/// ACC over retrieved pairs with a gold label. Unlabeled pairs are counted
/// as unjudged and excluded; hallucinated strings count as irrelevant.
/// Micro averages over pairs, macro over queries with at least one label.
inline Accuracy accuracy(const Results& results, const EvalSet& gold,
                         Averaging averaging = Averaging::kMicro) {
  Accuracy out;
  double macro_sum = 0.0;
  std::size_t macro_n = 0;
  for (const auto& [query, res] : results) {
    const EvalEntry* entry = gold.find(query);
    AccuracyCounts q;
    q.hallucinated = res.hallucinated;
    q.irrelevant = res.hallucinated;
    for (const auto& id : res.doc_ids) {
      if (!entry) {
        ++q.unjudged;
        continue;
      }
      const auto it = entry->gold.find(id);
      if (it == entry->gold.end()) {
        ++q.unjudged;
      } else if (it->second) {
        ++q.relevant;
      } else {
        ++q.irrelevant;
      }
    }
    out.counts.relevant += q.relevant;
    out.counts.irrelevant += q.irrelevant;
    out.counts.hallucinated += q.hallucinated;
    out.counts.unjudged += q.unjudged;
    if (q.labeled() > 0) {
      macro_sum += static_cast<double>(q.relevant) / static_cast<double>(q.labeled());
      ++macro_n;
    }
  }
  if (out.counts.labeled() == 0) {
    throw Error(ErrorCode::kUndefinedMetric, "no retrieved pair has a gold label");
  }
  out.acc = averaging == Averaging::kMicro
                ? static_cast<double>(out.counts.relevant) / static_cast<double>(out.counts.labeled())
                : macro_sum / static_cast<double>(macro_n);
  return out;
}

struct CurvePoint {
  std::size_t k = 0;
  std::optional<double> acc;  // empty when the run failed
  std::size_t relevant = 0;
  std::string error;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct EvalReport {
  std::string system;
  double acc = 0.0;
  std::size_t judged = 0;
  std::size_t unjudged = 0;
  std::size_t relevant = 0;
  std::size_t hallucinated_shown = 0;  // invalid DocIDs in final results
  std::size_t gr_invalid = 0;          // invalid DocIDs produced by the generator
  std::vector<CurvePoint> curve;
  bool reasoning_corpus_used = true;
  bool decision_agent_used = true;
  std::string averaging = "micro";

  friend bool operator==(const EvalReport&, const EvalReport&) = default;

  nlohmann::json to_json() const {
    nlohmann::json curve_json = nlohmann::json::array();
    for (const auto& p : curve) {
      nlohmann::json j = {{"k", p.k}, {"relevant", p.relevant}};
      j["acc"] = p.acc ? nlohmann::json(*p.acc) : nlohmann::json(nullptr);
      if (!p.error.empty()) j["error"] = p.error;
      curve_json.push_back(std::move(j));
    }
    return {{"system", system},
            {"acc", acc},
            {"judged", judged},
            {"unjudged", unjudged},
            {"relevant", relevant},
            {"hallucinated_shown", hallucinated_shown},
            {"gr_invalid", gr_invalid},
            {"curve", curve_json},
            {"ablation", {{"reasoning_corpus_used", reasoning_corpus_used},
                          {"decision_agent_used", decision_agent_used}}},
            {"averaging", averaging}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.system = j.at("system").get<std::string>();
    r.acc = j.at("acc").get<double>();
    r.judged = j.at("judged").get<std::size_t>();
    r.unjudged = j.at("unjudged").get<std::size_t>();
    r.relevant = j.at("relevant").get<std::size_t>();
    r.hallucinated_shown = j.at("hallucinated_shown").get<std::size_t>();
    r.gr_invalid = j.at("gr_invalid").get<std::size_t>();
    for (const auto& p : j.at("curve")) {
      CurvePoint c;
      c.k = p.at("k").get<std::size_t>();
      c.relevant = p.at("relevant").get<std::size_t>();
      if (!p.at("acc").is_null()) c.acc = p.at("acc").get<double>();
      c.error = p.value("error", std::string());
      r.curve.push_back(std::move(c));
    }
    r.reasoning_corpus_used = j.at("ablation").at("reasoning_corpus_used").get<bool>();
    r.decision_agent_used = j.at("ablation").at("decision_agent_used").get<bool>();
    r.averaging = j.at("averaging").get<std::string>();
    return r;
  }
};

/// Output of one end-to-end system run over the evaluation queries.
struct RunOutput {
  Results results;
  std::size_t gr_invalid = 0;
};

inline EvalReport make_report(std::string system, const RunOutput& run, const EvalSet& gold,
                              Averaging averaging = Averaging::kMicro) {
  const Accuracy a = accuracy(run.results, gold, averaging);
  EvalReport r;
  r.system = std::move(system);
  r.acc = a.acc;
  r.judged = a.counts.labeled();
  r.unjudged = a.counts.unjudged;
  r.relevant = a.counts.relevant;
  r.hallucinated_shown = a.counts.hallucinated;
  r.gr_invalid = run.gr_invalid;
  r.averaging = averaging == Averaging::kMicro ? "micro" : "macro";
  return r;
}

inline const std::vector<std::size_t>& default_sweep_ks() {
  static const std::vector<std::size_t> ks = {1, 3, 5, 10, 20};
  return ks;
}

/// Runs the pipeline once per K (only the candidate cap varies). A failing
/// K is reported as a missing point instead of aborting the sweep.
inline std::vector<CurvePoint> topk_sweep(const std::function<RunOutput(std::size_t)>& run_at,
                                          const std::vector<std::size_t>& ks, const EvalSet& gold,
                                          Averaging averaging = Averaging::kMicro) {
  if (ks.empty()) throw Error(ErrorCode::kInvalidArgument, "topk_sweep: no K values");
  std::vector<CurvePoint> curve;
  for (std::size_t k : ks) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "topk_sweep: K must be >= 1");
    CurvePoint p;
    p.k = k;
    try {
      const Accuracy a = accuracy(run_at(k).results, gold, averaging);
      p.acc = a.acc;
      p.relevant = a.counts.relevant;
    } catch (const Error& e) {
      p.error = e.what();
    }
    curve.push_back(std::move(p));
  }
  return curve;
}

struct SystemVariant {
  std::string name;
  bool reasoning_corpus_used = true;
  bool decision_agent_used = true;
  std::function<RunOutput()> run;
};

inline std::vector<EvalReport> run_ablation(const std::vector<SystemVariant>& variants, const EvalSet& gold,
                                            Averaging averaging = Averaging::kMicro) {
  std::vector<EvalReport> reports;
  for (const auto& v : variants) {
    EvalReport r = make_report(v.name, v.run(), gold, averaging);
    r.reasoning_corpus_used = v.reasoning_corpus_used;
    r.decision_agent_used = v.decision_agent_used;
    reports.push_back(std::move(r));
  }
  return reports;
}

inline std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
  return buf;
}

/// Plain-text table, one row per report, plus any sweep curves.
inline std::string format_reports(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %9s %7s %9s %8s %10s\n", "system", "ACC", "judged", "unjudged",
                "halluc.", "gr_invalid");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-28s %9s %7zu %9zu %8zu %10zu\n", r.system.c_str(),
                  format_percent(r.acc).c_str(), r.judged, r.unjudged, r.hallucinated_shown, r.gr_invalid);
    out << line;
  }
  for (const auto& r : reports) {
    if (r.curve.empty()) continue;
    out << "\nTop-K sweep (" << r.system << ")\n";
    for (const auto& p : r.curve) {
      std::snprintf(line, sizeof line, "  K=%-4zu %s\n", p.k,
                    p.acc ? format_percent(*p.acc).c_str() : ("missing: " + p.error).c_str());
      out << line;
    }
  }
  return out.str();
}

}  // namespace grs::eval
