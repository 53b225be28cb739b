// grs: command-line front end for indexing, corpus distillation, the
// decision agent, evaluation and the mock chat server.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grs/config.hpp"
#include "grs/detail/io.hpp"
#include "grs/error.hpp"
#include "grs/eval.hpp"
#include "grs/llm/mock.hpp"
#include "grs/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::atomic<bool> g_stop{false};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string output;
  std::string mock_script;
};

int exit_code_for(const grs::Error& e) {
  switch (e.code()) {
    case grs::ErrorCode::kConfig:
    case grs::ErrorCode::kFileNotFound:
    case grs::ErrorCode::kParse:
    case grs::ErrorCode::kDuplicateDocId:
    case grs::ErrorCode::kEmptyCatalog:
    case grs::ErrorCode::kScript:
    case grs::ErrorCode::kMissingPlaceholder:
    case grs::ErrorCode::kInvalidArgument:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

grs::PipelineConfig load_effective_config(const CommonOptions& opts, grs::Command cmd) {
  grs::PipelineConfig cfg = grs::load_config(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.workers) cfg.workers = *opts.workers;
  if (!opts.output.empty()) cfg.output_dir = opts.output;
  cfg.validate(cmd);
  return cfg;
}

std::optional<grs::llm::MockScript> fallback_script(const CommonOptions& opts) {
  if (opts.mock_script.empty()) return std::nullopt;
  return grs::llm::load_mock_script(opts.mock_script);
}

int cmd_index(const CommonOptions& opts, const std::string& dump) {
  const auto cfg = load_effective_config(opts, grs::Command::kIndex);
  const auto catalog = grs::load_catalog(cfg.catalog->string(), cfg.perspectives);
  const auto index = grs::build_index(catalog, cfg.index_fields);
  std::cout << "num_docs=" << index.num_docs() << "\n"
            << "num_terms=" << index.postings().size() << "\n"
            << "avgdl=" << index.avgdl() << "\n";
  std::optional<fs::path> target;
  if (!dump.empty()) {
    target = dump;
  } else if (cfg.index_dump) {
    target = *cfg.index_dump;
  }
  if (target) {
    std::ostringstream buf;
    index.dump(buf);
    grs::detail::write_file_atomic(*target, buf.str());
    std::cout << "index written to " << target->string() << "\n";
  }
  return kExitOk;
}

int cmd_distill(const CommonOptions& opts) {
  const auto cfg = load_effective_config(opts, grs::Command::kDistill);
  grs::Pipeline pipeline(cfg, fallback_script(opts));
  const auto out = grs::run_distillation(pipeline);
  const auto& s = out.stats;
  std::cout << "queries=" << s.queries_processed << " skipped=" << s.queries_skipped
            << " judge_calls=" << s.total_judge_calls() << " negatives=" << s.unanimity_negatives
            << " reasoning=" << s.records_emitted.at("reasoning") << " skipped_pairs=" << s.skipped_pairs << "\n"
            << "corpus: " << out.corpus_path.string() << "\n"
            << "stats: " << out.stats_path.string() << "\n";
  return kExitOk;
}

std::vector<std::string> read_queries(const std::vector<std::string>& inline_queries, const std::string& file) {
  std::vector<std::string> out = inline_queries;
  if (file.empty()) return out;
  std::ifstream in(file);
  if (!in) throw grs::Error(grs::ErrorCode::kFileNotFound, "file not found: " + file, file);
  std::string line;
  while (std::getline(in, line)) {
    std::string q = grs::text::trim_unicode(line);
    if (!q.empty()) out.push_back(std::move(q));
  }
  return out;
}

int cmd_agent(const CommonOptions& opts, const std::vector<std::string>& queries_in, const std::string& query_file,
              bool trace, bool no_agent) {
  const auto cfg = load_effective_config(opts, grs::Command::kAgent);
  const auto queries = read_queries(queries_in, query_file);
  if (queries.empty()) throw grs::Error(grs::ErrorCode::kConfig, "no queries given (use --query or --query-file)");
  grs::Pipeline pipeline(cfg, fallback_script(opts));
  const auto backend = pipeline.make_backend(cfg.gr);
  const auto setup = pipeline.setup(*backend, cfg.gr);

  std::vector<grs::QueryOutcome> outcomes;
  grs::run_queries(setup, queries, cfg.agent.top_k_cap, !no_agent, &outcomes);
  std::string trace_lines;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& o = outcomes[i];
    std::cout << queries[i] << "\t";
    for (std::size_t j = 0; j < o.result.doc_ids.size(); ++j) {
      const auto idx = pipeline.catalog().find(o.result.doc_ids[j]);
      std::cout << (j ? "; " : "") << pipeline.catalog()[*idx].title;
    }
    std::cout << "\n";
    if (trace && o.trace) trace_lines += o.trace->to_json(pipeline.catalog()).dump() + "\n";
  }
  if (trace) {
    const fs::path path = cfg.output_dir / "agent_trace.jsonl";
    grs::detail::write_file_atomic(path, trace_lines);
    std::cerr << "trace: " << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_eval(const CommonOptions& opts, const std::string& eval_set_path, bool sweep, bool ablate, bool macro,
             bool no_agent) {
  auto cfg = grs::load_config(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.workers) cfg.workers = *opts.workers;
  if (!opts.output.empty()) cfg.output_dir = opts.output;
  if (!eval_set_path.empty()) cfg.eval_set = eval_set_path;
  if (macro) cfg.averaging = grs::eval::Averaging::kMacro;
  cfg.validate(grs::Command::kEval);

  grs::Pipeline pipeline(cfg, fallback_script(opts));
  const auto gold = grs::eval::load_eval_set(cfg.eval_set->string(), pipeline.catalog());
  const auto queries = gold.queries();
  const auto backend = pipeline.make_backend(cfg.gr);
  const auto setup = pipeline.setup(*backend, cfg.gr);
  const std::size_t top_k = cfg.agent.top_k_cap;

  std::vector<grs::eval::EvalReport> reports;
  if (ablate) {
    const grs::GrConfig prelim_cfg = cfg.gr_preliminary.value_or(cfg.gr);
    const auto prelim = pipeline.make_backend(prelim_cfg);
    const auto prelim_setup = pipeline.setup(*prelim, prelim_cfg);
    std::vector<grs::eval::SystemVariant> variants = {
        {"full", true, true, [&] { return grs::run_queries(setup, queries, top_k, true); }},
        {"w/o reasoning", false, true, [&] { return grs::run_queries(prelim_setup, queries, top_k, true); }},
        {"w/o decision agent", true, false, [&] { return grs::run_queries(setup, queries, top_k, false); }},
    };
    reports = grs::eval::run_ablation(variants, gold, cfg.averaging);
  } else {
    const std::string name = no_agent ? "w/o decision agent" : "full";
    auto report = grs::eval::make_report(name, grs::run_queries(setup, queries, top_k, !no_agent), gold,
                                         cfg.averaging);
    report.decision_agent_used = !no_agent;
    reports.push_back(std::move(report));
  }
  if (sweep) {
    reports.front().curve = grs::eval::topk_sweep(
        [&](std::size_t k) { return grs::run_queries(setup, queries, k, reports.front().decision_agent_used); },
        cfg.sweep_ks, gold, cfg.averaging);
  }

  std::cout << grs::eval::format_reports(reports);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) out.push_back(r.to_json());
  const fs::path path = cfg.output_dir / "eval_report.json";
  grs::detail::write_file_atomic(path, out.dump(2) + "\n");
  std::cout << "\nreport: " << path.string() << "\n";
  return kExitOk;
}

int cmd_config_validate(const CommonOptions& opts, const std::string& command) {
  grs::Command cmd = grs::Command::kAll;
  if (command == "index") cmd = grs::Command::kIndex;
  else if (command == "distill") cmd = grs::Command::kDistill;
  else if (command == "agent") cmd = grs::Command::kAgent;
  else if (command == "eval") cmd = grs::Command::kEval;
  else if (command != "all") throw grs::Error(grs::ErrorCode::kConfig, "unknown command '" + command + "'");
  load_effective_config(opts, cmd);
  std::cout << "config ok\n";
  return kExitOk;
}

int cmd_mock_serve(const std::string& script_path, const std::string& host, int port) {
  auto script = grs::llm::load_mock_script(script_path);
  grs::llm::MockServer server(std::move(script), {host, port, std::chrono::milliseconds(0)});
  std::cout << "listening on " << server.base_url() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative retrieval hallucination-mitigation toolkit"};
  app.require_subcommand(1);

  CommonOptions common;
  const auto add_common = [&](CLI::App* sub, bool with_mock) {
    sub->add_option("--config", common.config, "Pipeline config file (JSON)")->required();
    sub->add_option("--seed", common.seed, "Override the config seed");
    sub->add_option("--workers", common.workers, "Override the worker count");
    sub->add_option("--output", common.output, "Override the output directory");
    if (with_mock) sub->add_option("--mock-script", common.mock_script, "Answer every endpoint from this script");
  };

  std::string dump;
  auto* index = app.add_subcommand("index", "Build the BM25 index and print corpus statistics");
  add_common(index, false);
  index->add_option("--dump", dump, "Write the index as JSON Lines");

  auto* distill = app.add_subcommand("distill", "Mine negatives and write the reasoning-augmented corpus");
  add_common(distill, true);

  std::vector<std::string> queries;
  std::string query_file;
  bool trace = false;
  bool no_agent = false;
  auto* agent = app.add_subcommand("agent", "Run generation and the decision agent for queries");
  add_common(agent, true);
  agent->add_option("--query", queries, "Query text (repeatable)");
  agent->add_option("--query-file", query_file, "File with one query per line");
  agent->add_flag("--trace", trace, "Write agent traces to <output>/agent_trace.jsonl");
  agent->add_flag("--no-agent", no_agent, "Print resolved generator output directly");

  std::string eval_set;
  bool sweep = false;
  bool ablate = false;
  bool macro = false;
  auto* evalc = app.add_subcommand("eval", "Compute ACC, top-K sweeps and ablations");
  add_common(evalc, true);
  evalc->add_option("--eval-set", eval_set, "Override paths.eval_set");
  evalc->add_flag("--sweep", sweep, "Sweep the candidate cap over eval.ks");
  evalc->add_flag("--ablate", ablate, "Report full, w/o reasoning and w/o decision agent systems");
  evalc->add_flag("--macro", macro, "Macro-average ACC over queries");
  evalc->add_flag("--no-agent", no_agent, "Evaluate the generator output without the agent");

  std::string script;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* mock = app.add_subcommand("mock-serve", "Serve scripted chat completions until interrupted");
  mock->add_option("--mock-script,--script", script, "Mock script (JSON)")->required();
  mock->add_option("--port", port, "Port (0 picks a free one)");
  mock->add_option("--host", host, "Bind address");

  std::string validate_for = "all";
  auto* config = app.add_subcommand("config", "Configuration utilities");
  config->require_subcommand(1);
  auto* validate = config->add_subcommand("validate", "Validate a config file without side effects");
  add_common(validate, false);
  validate->add_option("--command", validate_for, "Validate only what this command needs")
      ->check(CLI::IsMember({"all", "index", "distill", "agent", "eval"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*index) return cmd_index(common, dump);
    if (*distill) return cmd_distill(common);
    if (*agent) return cmd_agent(common, queries, query_file, trace, no_agent);
    if (*evalc) return cmd_eval(common, eval_set, sweep, ablate, macro, no_agent);
    if (*mock) return cmd_mock_serve(script, host, port);
    if (*validate) return cmd_config_validate(common, validate_for);
  } catch (const grs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
