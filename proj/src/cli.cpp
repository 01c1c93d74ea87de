#include "step/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "step/llm.hpp"
#include "step/recipes.hpp"
#include "step/world_io.hpp"

namespace step {

namespace fs = std::filesystem;

RunConfig run_config_overlay(const RunConfig& base, const nlohmann::json& j,
                             const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": config must be a JSON object");
  RunConfig cfg = base;
  auto str = [&](const nlohmann::json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError(where + ": " + key + ": expected string");
    return v.get<std::string>();
  };
  auto num = [&](const nlohmann::json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError(where + ": " + key + ": expected integer");
    return v.get<std::int64_t>();
  };
  for (const auto& [key, val] : j.items()) {
    if (key == "suite")
      cfg.suite_path = str(val, key);
    else if (key == "backend")
      cfg.backend = str(val, key);
    else if (key == "mode")
      cfg.mode = str(val, key);
    else if (key == "transport")
      cfg.transport = str(val, key);
    else if (key == "out")
      cfg.out_path = str(val, key);
    else if (key == "recipes")
      cfg.recipes_path = str(val, key);
    else if (key == "cassette")
      cfg.cassette_path = str(val, key);
    else if (key == "label")
      cfg.label = str(val, key);
    else if (key == "seed") {
      auto v = num(val, key);
      if (v < 0) throw ConfigError(where + ": seed: must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "max_depth")
      cfg.max_depth = static_cast<int>(num(val, key));
    else if (key == "max_replans")
      cfg.max_replans = static_cast<int>(num(val, key));
    else if (key == "max_steps")
      cfg.max_steps = static_cast<int>(num(val, key));
    else if (key == "parallelism")
      cfg.parallelism = static_cast<int>(num(val, key));
    else
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig load_run_config(const RunConfig& base, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": invalid JSON");
  return run_config_overlay(base, j, path);
}

void validate_config(const RunConfig& cfg) {
  if (cfg.suite_path.empty()) throw ConfigError("suite path required (--suite or config file)");
  if (cfg.backend != "scripted" && cfg.backend != "llm")
    throw ConfigError("backend must be scripted or llm, got '" + cfg.backend + "'");
  if (!context_mode_from_string(cfg.mode))
    throw ConfigError("mode must be full, no-tree, no-subgoal-tree or flat, got '" + cfg.mode +
                      "'");
  if (cfg.max_depth < 1 || cfg.max_replans < 1 || cfg.max_steps < 1)
    throw ConfigError("budgets must be >= 1");
  if (cfg.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (cfg.backend == "scripted") {
    if (cfg.recipes_path.empty()) throw ConfigError("scripted backend requires --recipes");
    return;  // transport is ignored for scripted runs
  }
  if (!transport_mode_from_string(cfg.transport))
    throw ConfigError("transport must be live, record or replay, got '" + cfg.transport + "'");
  if (cfg.transport != "live" && cfg.cassette_path.empty())
    throw ConfigError("llm " + cfg.transport + " transport requires --cassette");
  if (cfg.transport != "replay") {
    const char* url = std::getenv("STEP_LLM_BASE_URL");
    if (!url || !*url)
      throw ConfigError("llm " + cfg.transport + " transport requires STEP_LLM_BASE_URL");
  }
}

std::string default_label(const std::string& mode) {
  if (mode == "no-tree") return "STEP w/o tree structure";
  if (mode == "no-subgoal-tree") return "STEP w/o subgoal tree";
  if (mode == "flat") return "Flat";
  return "STEP";
}

namespace {

ActionKind action_kind_from(const std::string& s, const std::string& where) {
  if (s == "walk") return ActionKind::Walk;
  if (s == "grasp") return ActionKind::Grasp;
  if (s == "put_on") return ActionKind::PutOn;
  if (s == "put_in") return ActionKind::PutIn;
  if (s == "open") return ActionKind::Open;
  if (s == "close") return ActionKind::Close;
  throw SchemaMismatch(where + ": unknown action kind '" + s + "'");
}

FailureKind failure_kind_from(const std::string& s, const std::string& where) {
  if (s == "BudgetExhausted") return FailureKind::BudgetExhausted;
  if (s == "ReplanAtRoot") return FailureKind::ReplanAtRoot;
  if (s == "PolicyGrammarError") return FailureKind::PolicyGrammarError;
  if (s == "ActionRejected") return FailureKind::ActionRejected;
  if (s == "GoalsUnmet") return FailureKind::GoalsUnmet;
  throw SchemaMismatch(where + ": unknown failure kind '" + s + "'");
}

}  // namespace

PrimitiveAction action_from_render(const std::string& s, const std::string& where) {
  const auto open = s.find('(');
  if (open == std::string::npos || s.empty() || s.back() != ')')
    throw SchemaMismatch(where + ": malformed action '" + s + "'");
  PrimitiveAction a;
  a.kind = action_kind_from(s.substr(0, open), where);
  const std::string args = s.substr(open + 1, s.size() - open - 2);
  const auto comma = args.find(',');
  const bool wants_two = a.kind == ActionKind::PutOn || a.kind == ActionKind::PutIn;
  if (wants_two != (comma != std::string::npos))
    throw SchemaMismatch(where + ": malformed action '" + s + "'");
  if (comma == std::string::npos) {
    a.a = args;
  } else {
    a.a = args.substr(0, comma);
    a.b = args.substr(comma + 1);
  }
  if (a.a.empty() || (wants_two && a.b.empty()))
    throw SchemaMismatch(where + ": malformed action '" + s + "'");
  return a;
}

EpisodeTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace: " + path);
  EpisodeTrace t;
  std::string line;
  int lineno = 0;
  bool finished = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(lineno);
    nlohmann::ordered_json e = nlohmann::ordered_json::parse(line, nullptr, false);
    if (e.is_discarded() || !e.is_object()) throw SchemaMismatch(where + ": not a trace event");
    if (!e.contains("v") || !e["v"].is_number_integer() || e["v"].get<int>() != 1)
      throw SchemaMismatch(where + ": schema v" +
                           (e.contains("v") ? e["v"].dump() : std::string("?")) +
                           " unsupported (want v1)");
    if (!e.contains("ev") || !e["ev"].is_string())
      throw SchemaMismatch(where + ": missing event kind");
    const std::string ev = e["ev"].get<std::string>();
    if (ev == "Executed" && e.value("result", "") == "ok")
      t.executed_actions.push_back(action_from_render(e.at("action").get<std::string>(), where));
    if (ev == "Finished") {
      finished = true;
      t.outcome.success = e.at("outcome") == "Success";
      t.outcome.failure.reset();
      if (e.contains("failure"))
        t.outcome.failure = failure_kind_from(e["failure"].get<std::string>(), where);
      t.outcome.predicate_results.clear();
      for (const auto& g : e.at("goals")) t.outcome.predicate_results.push_back(g.get<bool>());
      t.steps = e.at("steps").get<int>();
      try {
        t.final_state = world_from_json(e.at("final_state"));
      } catch (const WorldFormatError& werr) {
        throw SchemaMismatch(where + ": final_state: " + werr.what());
      }
    }
    t.events.push_back(std::move(e));
  }
  if (!finished) throw SchemaMismatch(path + ": no Finished event");
  return t;
}

namespace {

// Single-writer progress lines keep per-task output in task order even when
// episodes ran out of order.
void print_task_line(std::ostream& out, const TaskResult& tr) {
  if (tr.success) {
    out << "[ok] " << tr.task_id << " executed=" << tr.executed << "\n";
    return;
  }
  out << "[FAIL] " << tr.task_id;
  if (tr.failure) out << " failure=" << to_string(*tr.failure);
  if (tr.error) out << " error=" << to_string(*tr.error);
  out << "\n";
}

}  // namespace

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  validate_config(cfg);
  std::vector<TaskSpec> tasks;
  try {
    tasks = load_suite(cfg.suite_path);
  } catch (const TaskFormatError& e) {
    throw ConfigError(e.what());
  }
  const ContextMode mode = *context_mode_from_string(cfg.mode);

  // shared backend state; per-episode policy/judge instances
  std::optional<RecipeTable> table;
  std::optional<LlmClient> client;
  if (cfg.backend == "scripted") {
    table = load_recipes(cfg.recipes_path);
  } else {
    LlmConfig lc = LlmConfig::from_env();
    lc.cassette_path = cfg.cassette_path;
    client.emplace(std::move(lc), *transport_mode_from_string(cfg.transport));
  }

  PlannerConfig pc;
  pc.max_depth = cfg.max_depth;
  pc.max_replans_per_node = cfg.max_replans;
  pc.max_total_steps = cfg.max_steps;
  pc.mode = mode;
  pc.seed = cfg.seed;

  auto run_one = [&](const TaskSpec& task) {
    if (cfg.backend == "scripted") {
      ScriptedPolicy policy(*table);
      if (mode == ContextMode::FlatBaseline) return run_flat_baseline(task, policy, pc);
      ScriptedCongruenceJudge judge(*table);
      return run_episode(task, policy, judge, pc);
    }
    LlmDecompositionPolicy policy(*client);
    if (mode == ContextMode::FlatBaseline) return run_flat_baseline(task, policy, pc);
    LlmCongruenceJudge judge(*client);
    return run_episode(task, policy, judge, pc);
  };

  std::vector<EpisodeTrace> traces(tasks.size());
  std::vector<std::exception_ptr> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        traces[i] = run_one(tasks[i]);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const std::size_t fanout =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.parallelism), tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i + 1 < fanout; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const TransportError& e) {
      err << "error: episode " << tasks[i].id << ": transport (" << to_string(e.kind)
          << "): " << e.what() << "\n";
    } catch (const std::exception& e) {
      err << "error: episode " << tasks[i].id << ": " << e.what() << "\n";
    }
    return 1;  // infrastructure fault: no outputs, loud exit
  }

  SuiteResult r = compute_metrics(traces, tasks);
  r.label = cfg.label.empty() ? default_label(cfg.mode) : cfg.label;

  std::vector<int> lens(tasks.size(), -1);
  bool all_lens = true;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto plan = oracle_search(tasks[i]);
    if (plan) {
      lens[i] = static_cast<int>(plan->size());
      r.tasks[i].oracle_length = lens[i];
    } else {
      all_lens = false;
      err << "warning: no oracle plan for " << tasks[i].id << " (depth 8)\n";
    }
    if (!traces[i].outcome.success)
      r.tasks[i].error =
          classify_error(traces[i], tasks[i], plan.value_or(std::vector<PrimitiveAction>{}));
  }
  if (all_lens && tasks.size() >= 10) r.buckets = bucket_by_length(r.tasks, lens);

  const fs::path out_dir(cfg.out_path);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    std::ofstream f(out_dir / (tasks[i].id + ".trace.jsonl"));
    if (!f) throw ConfigError("cannot write trace for " + tasks[i].id + " in " + cfg.out_path);
    f << trace_to_jsonl(traces[i]);
  }
  const std::pair<const char*, ReportFormat> reports[] = {
      {"report.json", ReportFormat::Json},
      {"report.csv", ReportFormat::Csv},
      {"report.md", ReportFormat::Markdown},
  };
  for (const auto& [name, format] : reports) {
    std::ofstream f(out_dir / name);
    if (!f) throw ConfigError("cannot write " + std::string(name) + " in " + cfg.out_path);
    f << emit_report(r, format);
  }

  for (const auto& tr : r.tasks) print_task_line(out, tr);
  out << "suite: " << r.sr_den << " episodes, SR " << format_percent(r.sr_num, r.sr_den)
      << ", SSR " << format_percent(r.ssr_num, r.ssr_den) << "\n";
  out << "wrote " << (out_dir / "report.json").string() << ", "
      << (out_dir / "report.csv").string() << ", " << (out_dir / "report.md").string() << "\n";
  return 0;
}

int cmd_oracle(const std::string& task_path, int depth_limit, std::ostream& out,
               std::ostream& err) {
  const TaskSpec task = load_task(task_path);
  const auto plan = oracle_search(task, depth_limit);
  if (!plan) {
    err << "no plan within depth " << depth_limit << ": " << task.id << "\n";
    return 2;
  }
  for (const auto& a : *plan) out << render_action(a) << "\n";
  out << "length: " << plan->size() << "\n";
  return 0;
}

int cmd_classify(const std::string& trace_path, const std::string& task_path, std::ostream& out,
                 std::ostream&) {
  const TaskSpec task = load_task(task_path);
  const EpisodeTrace trace = load_trace(trace_path);
  if (trace.outcome.success) {
    out << "success\n";
    return 0;
  }
  const auto plan = oracle_search(task);
  out << to_string(classify_error(trace, task, plan.value_or(std::vector<PrimitiveAction>{})))
      << "\n";
  return 0;
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"STEP: closed-loop hierarchical planner over a household world"};
  app.require_subcommand(1);

  RunConfig flags;
  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run a task suite; write traces and reports");
  run->add_option("--config", config_path, "JSON config file; explicit flags override it");
  run->add_option("--suite", flags.suite_path, "directory of task files");
  run->add_option("--backend", flags.backend, "scripted | llm");
  run->add_option("--mode", flags.mode, "full | no-tree | no-subgoal-tree | flat");
  run->add_option("--transport", flags.transport, "llm backend: live | record | replay");
  run->add_option("--out", flags.out_path, "output directory");
  run->add_option("--recipes", flags.recipes_path, "recipe table for the scripted backend");
  run->add_option("--cassette", flags.cassette_path, "cassette file for llm record/replay");
  run->add_option("--label", flags.label, "report row label (default derived from mode)");
  run->add_option("--seed", flags.seed, "planner seed");
  run->add_option("--max-depth", flags.max_depth, "tree depth budget");
  run->add_option("--max-replans", flags.max_replans, "replans tolerated per node");
  run->add_option("--max-steps", flags.max_steps, "planner loop iteration budget");
  run->add_option("--parallelism", flags.parallelism, "episode fan-out");

  std::string oracle_task;
  int depth_limit = 8;
  CLI::App* oracle = app.add_subcommand("oracle", "print a minimal plan for one task");
  oracle->add_option("task", oracle_task, "task file")->required();
  oracle->add_option("--depth", depth_limit, "search depth limit");

  std::string classify_trace, classify_task;
  CLI::App* classify = app.add_subcommand("classify", "print a failed trace's error class");
  classify->add_option("trace", classify_trace, "trace file (JSON lines)")->required();
  classify->add_option("task", classify_task, "task file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      RunConfig cfg;
      if (run->count("--config")) cfg = load_run_config(cfg, config_path);
      if (run->count("--suite")) cfg.suite_path = flags.suite_path;
      if (run->count("--backend")) cfg.backend = flags.backend;
      if (run->count("--mode")) cfg.mode = flags.mode;
      if (run->count("--transport")) cfg.transport = flags.transport;
      if (run->count("--out")) cfg.out_path = flags.out_path;
      if (run->count("--recipes")) cfg.recipes_path = flags.recipes_path;
      if (run->count("--cassette")) cfg.cassette_path = flags.cassette_path;
      if (run->count("--label")) cfg.label = flags.label;
      if (run->count("--seed")) cfg.seed = flags.seed;
      if (run->count("--max-depth")) cfg.max_depth = flags.max_depth;
      if (run->count("--max-replans")) cfg.max_replans = flags.max_replans;
      if (run->count("--max-steps")) cfg.max_steps = flags.max_steps;
      if (run->count("--parallelism")) cfg.parallelism = flags.parallelism;
      return cmd_run(cfg, std::cout, std::cerr);
    }
    if (*oracle) return cmd_oracle(oracle_task, depth_limit, std::cout, std::cerr);
    return cmd_classify(classify_trace, classify_task, std::cout, std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const SchemaMismatch& e) {
    std::cerr << "schema mismatch: " << e.what() << "\n";
  } catch (const TransportError& e) {
    std::cerr << "transport error (" << to_string(e.kind) << "): " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace step
