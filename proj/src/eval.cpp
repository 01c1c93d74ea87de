#include "step/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "step/world_io.hpp"

namespace step {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw TaskFormatError(where + ": " + msg);
}

std::string need_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
    fail(where, std::string("missing or empty string field '") + key + "'");
  return j[key].get<std::string>();
}

const std::set<std::string> kCategories = {"short-simple", "short-complex", "long-simple",
                                           "long-complex"};

bool goals_met(const WorldState& s, const TaskSpec& t) {
  return std::all_of(t.goals.begin(), t.goals.end(),
                     [&](const GoalPredicate& g) { return goal_satisfied(s, g); });
}

std::string state_key(const WorldState& s) { return world_to_json(s).dump(); }

bool oracle_dfs(const WorldState& s, const TaskSpec& task, const Embodiment& emb, int remaining,
                std::map<std::string, int>& seen, std::vector<PrimitiveAction>& plan) {
  if (goals_met(s, task)) return true;
  if (remaining == 0) return false;
  auto [it, fresh] = seen.try_emplace(state_key(s), remaining);
  if (!fresh) {
    if (it->second >= remaining) return false;  // been here with as much rope
    it->second = remaining;
  }
  for (const auto& a : legal_actions(s, emb)) {
    auto r = apply_action(s, emb, a);
    if (!apply_ok(r)) continue;
    plan.push_back(a);
    if (oracle_dfs(std::get<WorldState>(r), task, emb, remaining - 1, seen, plan)) return true;
    plan.pop_back();
  }
  return false;
}

// The action that first flips this goal true along the oracle plan; falls
// back to the direct goal action when the plan never does.
PrimitiveAction goal_action(const TaskSpec& task, const std::vector<PrimitiveAction>& oracle,
                            const GoalPredicate& g) {
  WorldState s = task.world;
  bool was = goal_satisfied(s, g);
  for (const auto& a : oracle) {
    auto r = apply_action(s, {}, a);
    if (!apply_ok(r)) break;
    s = std::get<WorldState>(r);
    bool now = goal_satisfied(s, g);
    if (now && !was) return a;
    was = now;
  }
  if (g.kind == GoalPredicate::Kind::OpenState)
    return g.open ? PrimitiveAction::open(g.obj) : PrimitiveAction::close(g.obj);
  return g.rel == Rel::In ? PrimitiveAction::put_in(g.obj, g.parent)
                          : PrimitiveAction::put_on(g.obj, g.parent);
}

}  // namespace

TaskSpec task_from_json(const nlohmann::json& j, const std::string& base_dir,
                        const std::string& where) {
  if (!j.is_object()) fail(where, "task must be an object");
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (key != "id" && key != "instruction" && key != "world" && key != "goals" &&
        key != "category")
      fail(where, "unknown field '" + key + "'");
  }
  TaskSpec t;
  t.id = need_string(j, "id", where);
  t.instruction = need_string(j, "instruction", where);
  t.category = need_string(j, "category", where);
  if (!kCategories.count(t.category))
    fail(where, "unknown category '" + t.category + "'");

  if (!j.contains("world")) fail(where, "missing field 'world'");
  try {
    if (j["world"].is_string()) {
      std::filesystem::path ref = j["world"].get<std::string>();
      t.world = load_world((std::filesystem::path(base_dir) / ref).string());
    } else if (j["world"].is_object()) {
      t.world = world_from_json(j["world"]);
    } else {
      fail(where, "'world' must be a file path or an inline object");
    }
  } catch (const WorldFormatError& e) {
    fail(where, e.what());
  }

  if (!j.contains("goals") || !j["goals"].is_array() || j["goals"].empty())
    fail(where, "'goals' must be a non-empty array");
  for (std::size_t i = 0; i < j["goals"].size(); ++i) {
    try {
      t.goals.push_back(goal_from_json(j["goals"][i], where + ".goals[" + std::to_string(i) + "]"));
    } catch (const WorldFormatError& e) {
      fail(where, e.what());
    }
  }
  for (const auto& g : t.goals) {
    if (!t.world.find(g.obj)) fail(where, "goal references unknown object '" + g.obj + "'");
    if (g.kind == GoalPredicate::Kind::Placed && !t.world.find(g.parent))
      fail(where, "goal references unknown object '" + g.parent + "'");
  }
  return t;
}

TaskSpec load_task(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(path, "invalid JSON");
  return task_from_json(j, std::filesystem::path(path).parent_path().string(), path);
}

std::vector<TaskSpec> load_suite(const std::string& dir) {
  std::error_code ec;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  if (ec) fail(dir, "cannot read directory");
  if (files.empty()) fail(dir, "no task files");
  std::sort(files.begin(), files.end());

  std::vector<TaskSpec> out;
  std::set<std::string> ids;
  for (const auto& f : files) {
    out.push_back(load_task(f.string()));
    if (!ids.insert(out.back().id).second) fail(f.string(), "duplicate task id '" + out.back().id + "'");
  }
  return out;
}

std::optional<std::string> lint_category(const TaskSpec& task,
                                         const std::vector<PrimitiveAction>& oracle_plan) {
  const int len = static_cast<int>(oracle_plan.size());
  Observation obs = observe(task.world);
  bool hidden = false;
  for (const auto& g : task.goals)
    if (!obs.visible.count(g.obj)) hidden = true;

  std::string expected = std::string(len < 5 ? "short" : "long") + (hidden ? "-complex" : "-simple");
  if (len > 8) return "oracle plan length " + std::to_string(len) + " exceeds the long bound";
  if (task.category != expected)
    return "category '" + task.category + "' but oracle length " + std::to_string(len) +
           (hidden ? " with" : " without") + " concealed goal objects implies '" + expected + "'";
  return std::nullopt;
}

std::optional<std::vector<PrimitiveAction>> oracle_search(const TaskSpec& task, int depth_limit) {
  Embodiment emb;
  for (int depth = 0; depth <= depth_limit; ++depth) {
    std::map<std::string, int> seen;
    std::vector<PrimitiveAction> plan;
    if (oracle_dfs(task.world, task, emb, depth, seen, plan)) return plan;
  }
  return std::nullopt;
}

const char* to_string(ErrorClass e) {
  switch (e) {
    case ErrorClass::GrammarError: return "GrammarError";
    case ErrorClass::MissingState: return "MissingState";
    case ErrorClass::MissingRelation: return "MissingRelation";
    case ErrorClass::MissingGoalAction: return "MissingGoalAction";
    case ErrorClass::WrongOrder: return "WrongOrder";
    case ErrorClass::AdditionalOrMissingStep: return "AdditionalOrMissingStep";
    case ErrorClass::AffordanceError: return "AffordanceError";
  }
  return "?";
}

ErrorClass classify_error(const EpisodeTrace& trace, const TaskSpec& task,
                          const std::vector<PrimitiveAction>& oracle_plan) {
  if (trace.outcome.success)
    throw std::invalid_argument("classify_error: trace is a success");

  // grammar first: the policy's output never made it into the loop
  if (trace.outcome.failure == FailureKind::PolicyGrammarError) return ErrorClass::GrammarError;
  bool grammar_replan = false, affordance = false, order = false;
  for (const auto& e : trace.events) {
    const std::string ev = e.at("ev").get<std::string>();
    if (ev == "Replanned" && e.at("reason") == "GrammarError") grammar_replan = true;
    if (ev == "Verdict") {
      const auto& rep = e.at("report");
      if (rep.at("affordance_ok") == false) affordance = true;
      if (rep.contains("violated") && (rep.at("violated") == "ContainerClosed" ||
                                       rep.at("violated") == "NotReachable"))
        order = true;
    }
    if (ev == "Executed" && e.at("result") != "ok") {
      const std::string res = e.at("result").get<std::string>();
      if (res == "GripperOccupied" || res == "GripperEmpty" || res == "WrongFlag")
        affordance = true;
      if (res == "ContainerClosed" || res == "NotReachable") order = true;
    }
  }
  if (grammar_replan && trace.outcome.failure == FailureKind::ReplanAtRoot)
    return ErrorClass::GrammarError;
  if (affordance) return ErrorClass::AffordanceError;
  if (order) return ErrorClass::WrongOrder;

  // which unmet goals were never true at any prefix of the executed history?
  std::vector<bool> ever(task.goals.size(), false);
  {
    WorldState s = task.world;
    auto mark = [&] {
      for (std::size_t i = 0; i < task.goals.size(); ++i)
        if (!ever[i] && goal_satisfied(s, task.goals[i])) ever[i] = true;
    };
    mark();
    for (const auto& a : trace.executed_actions) {
      auto r = apply_action(s, {}, a);
      if (!apply_ok(r)) break;
      s = std::get<WorldState>(r);
      mark();
    }
  }
  std::vector<std::size_t> never;
  for (std::size_t i = 0; i < task.goals.size(); ++i)
    if (i < trace.outcome.predicate_results.size() && !trace.outcome.predicate_results[i] &&
        !ever[i])
      never.push_back(i);

  if (!never.empty()) {
    std::set<std::string> proposed;
    for (const auto& e : trace.events) {
      if (e.at("ev") == "Verdict" && e.at("report").contains("action"))
        proposed.insert(e.at("report").at("action").get<std::string>());
      if (e.at("ev") == "Executed") proposed.insert(e.at("action").get<std::string>());
    }
    int state_kind = 0, relation_kind = 0;
    for (std::size_t i : never) {
      const GoalPredicate& g = task.goals[i];
      if (!proposed.count(render_action(goal_action(task, oracle_plan, g))))
        return ErrorClass::MissingGoalAction;  // never even aimed at it
      if (g.kind == GoalPredicate::Kind::OpenState)
        ++state_kind;
      else
        ++relation_kind;
    }
    return state_kind >= relation_kind ? ErrorClass::MissingState : ErrorClass::MissingRelation;
  }
  // every unmet goal was reached at some point: the step sequence itself is
  // off (undone work, extra or dropped steps)
  return ErrorClass::AdditionalOrMissingStep;
}

double SuiteResult::macro_ssr() const {
  if (tasks.empty()) return 0.0;
  double sum = 0;
  for (const auto& t : tasks)
    sum += t.predicates_total ? double(t.predicates_met) / t.predicates_total
                              : (t.success ? 1.0 : 0.0);
  return sum / double(tasks.size());
}

std::string format_percent(int num, int den) {
  if (den == 0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", 100.0 * num / den);
  return std::string(buf) + "%";
}

SuiteResult compute_metrics(const std::vector<EpisodeTrace>& traces,
                            const std::vector<TaskSpec>& tasks) {
  if (tasks.empty()) throw MismatchedSuite("empty suite");
  if (traces.size() != tasks.size())
    throw MismatchedSuite("suite mismatch: " + std::to_string(traces.size()) + " traces for " +
                          std::to_string(tasks.size()) + " tasks");
  SuiteResult r;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    TaskResult tr;
    tr.task_id = tasks[i].id;
    tr.category = tasks[i].category;
    tr.success = traces[i].outcome.success;
    tr.failure = traces[i].outcome.failure;
    tr.predicates_total = static_cast<int>(traces[i].outcome.predicate_results.size());
    for (bool b : traces[i].outcome.predicate_results) tr.predicates_met += b;
    tr.steps = traces[i].steps;
    tr.executed = static_cast<int>(traces[i].executed_actions.size());
    r.sr_den += 1;
    r.sr_num += tr.success ? 1 : 0;
    r.ssr_den += tr.predicates_total;
    r.ssr_num += tr.predicates_met;
    r.tasks.push_back(std::move(tr));
  }
  return r;
}

std::vector<LengthBucket> bucket_by_length(const std::vector<TaskResult>& results,
                                           const std::vector<int>& oracle_lengths) {
  if (results.size() != oracle_lengths.size())
    throw std::invalid_argument("bucket_by_length: results/lengths size mismatch");
  if (results.size() < 10)
    throw TooFewTasks("length bucketing needs at least 10 tasks, got " +
                      std::to_string(results.size()));
  for (int len : oracle_lengths)
    if (len < 0) throw std::invalid_argument("bucket_by_length: missing oracle length");

  std::vector<std::size_t> idx(results.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return oracle_lengths[a] < oracle_lengths[b]; });

  const int n = static_cast<int>(results.size());
  const int base = n / 10, rem = n % 10;
  std::vector<LengthBucket> out;
  std::size_t pos = 0;
  for (int b = 0; b < 10; ++b) {
    LengthBucket lb;
    lb.index = b;
    lb.tasks = base + (b < rem ? 1 : 0);  // remainder spread from the front
    for (int k = 0; k < lb.tasks; ++k, ++pos) {
      lb.ssr_num += results[idx[pos]].predicates_met;
      lb.ssr_den += results[idx[pos]].predicates_total;
    }
    out.push_back(lb);
  }
  return out;
}

std::optional<ReportFormat> report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  return std::nullopt;
}

namespace {

std::map<ErrorClass, int> error_counts(const SuiteResult& r) {
  std::map<ErrorClass, int> counts;
  for (int e = 0; e <= static_cast<int>(ErrorClass::AffordanceError); ++e)
    counts[static_cast<ErrorClass>(e)] = 0;
  for (const auto& t : r.tasks)
    if (t.error) ++counts[*t.error];
  return counts;
}

std::string emit_json(const SuiteResult& r) {
  nlohmann::ordered_json doc;
  doc["label"] = r.label;
  doc["sr"] = {{"num", r.sr_num}, {"den", r.sr_den}, {"percent", format_percent(r.sr_num, r.sr_den)}};
  doc["ssr"] = {{"num", r.ssr_num},
                {"den", r.ssr_den},
                {"percent", format_percent(r.ssr_num, r.ssr_den)}};
  doc["macro_ssr"] = r.macro_ssr();
  nlohmann::ordered_json errs;
  for (const auto& [cls, n] : error_counts(r)) errs[to_string(cls)] = n;
  doc["error_counts"] = errs;
  doc["tasks"] = nlohmann::ordered_json::array();
  for (const auto& t : r.tasks) {
    nlohmann::ordered_json row;
    row["id"] = t.task_id;
    row["category"] = t.category;
    row["success"] = t.success;
    row["failure"] = t.failure ? nlohmann::ordered_json(to_string(*t.failure))
                               : nlohmann::ordered_json(nullptr);
    row["error"] =
        t.error ? nlohmann::ordered_json(to_string(*t.error)) : nlohmann::ordered_json(nullptr);
    row["predicates_met"] = t.predicates_met;
    row["predicates_total"] = t.predicates_total;
    row["oracle_length"] = t.oracle_length;
    row["steps"] = t.steps;
    row["executed"] = t.executed;
    doc["tasks"].push_back(row);
  }
  doc["buckets"] = nlohmann::ordered_json::array();
  for (const auto& b : r.buckets)
    doc["buckets"].push_back({{"index", b.index},
                              {"tasks", b.tasks},
                              {"ssr_num", b.ssr_num},
                              {"ssr_den", b.ssr_den},
                              {"percent", format_percent(b.ssr_num, b.ssr_den)}});
  return doc.dump(2) + "\n";
}

std::string emit_csv(const SuiteResult& r) {
  std::string out =
      "task_id,category,success,failure,error_class,predicates_met,predicates_total,"
      "oracle_length,steps,executed\n";
  for (const auto& t : r.tasks) {
    out += t.task_id + ',' + t.category + ',' + (t.success ? "true" : "false") + ',' +
           (t.failure ? to_string(*t.failure) : "") + ',' + (t.error ? to_string(*t.error) : "") +
           ',' + std::to_string(t.predicates_met) + ',' + std::to_string(t.predicates_total) +
           ',' + std::to_string(t.oracle_length) + ',' + std::to_string(t.steps) + ',' +
           std::to_string(t.executed) + '\n';
  }
  return out;
}

std::string emit_markdown(const SuiteResult& r) {
  auto counts = error_counts(r);
  std::string out;
  out += "| Method | SR | SSR |\n| --- | --- | --- |\n";
  out += "| " + r.label + " | " + format_percent(r.sr_num, r.sr_den) + " | " +
         format_percent(r.ssr_num, r.ssr_den) + " |\n\n";

  out +=
      "| Method | Missing State | Missing Relation | Missing Goal Action | Wrong Order | "
      "Additional/Missing Step | Affordance Error |\n| --- | --- | --- | --- | --- | --- | --- "
      "|\n";
  out += "| " + r.label + " | " + std::to_string(counts[ErrorClass::MissingState]) + " | " +
         std::to_string(counts[ErrorClass::MissingRelation]) + " | " +
         std::to_string(counts[ErrorClass::MissingGoalAction]) + " | " +
         std::to_string(counts[ErrorClass::WrongOrder]) + " | " +
         std::to_string(counts[ErrorClass::AdditionalOrMissingStep]) + " | " +
         std::to_string(counts[ErrorClass::AffordanceError]) + " |\n\n";

  int failed = r.sr_den - r.sr_num;
  out += "Grammar errors: " + std::to_string(counts[ErrorClass::GrammarError]) + " of " +
         std::to_string(failed) + " failed episodes.\n";

  if (!r.buckets.empty()) {
    out += "\n| Length bucket | Tasks | SSR |\n| --- | --- | --- |\n";
    for (const auto& b : r.buckets)
      out += "| " + std::to_string(b.index + 1) + " | " + std::to_string(b.tasks) + " | " +
             format_percent(b.ssr_num, b.ssr_den) + " |\n";
  }
  return out;
}

}  // namespace

std::string emit_report(const SuiteResult& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return emit_json(r);
    case ReportFormat::Csv: return emit_csv(r);
    case ReportFormat::Markdown: return emit_markdown(r);
  }
  return {};
}

}  // namespace step
