#pragma once

// Suite loading, SR/SSR metrics, failure-taxonomy classification, length
// bucketing, the brute-force reachability oracle, and report emission.
// Metric arithmetic stays in exact integers until formatting.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "step/planner.hpp"
#include "step/trace.hpp"

namespace step {

struct TaskFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MismatchedSuite : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooFewTasks : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Task schema:
//   {"id","instruction","world":<path relative to the task file, or inline
//    object>,"goals":[...],"category"}
// category must be one of short-simple / short-complex / long-simple /
// long-complex.
TaskSpec task_from_json(const nlohmann::json& j, const std::string& base_dir,
                        const std::string& where);
TaskSpec load_task(const std::string& path);
// Every *.json directly inside the directory, in lexicographic filename order.
std::vector<TaskSpec> load_suite(const std::string& dir);

// Category lint: short <=> oracle length < 5, long <=> 5..8; complex <=> some
// goal object starts out concealed (not visible). Returns a diagnostic on
// mismatch, nullopt when the label fits.
std::optional<std::string> lint_category(const TaskSpec& task,
                                         const std::vector<PrimitiveAction>& oracle_plan);

// Iterative-deepening search over legal_actions with full-state memoization;
// first plan found is minimal, ties broken by canonical action order.
std::optional<std::vector<PrimitiveAction>> oracle_search(const TaskSpec& task,
                                                          int depth_limit = 8);

enum class ErrorClass : std::uint8_t {
  GrammarError,
  MissingState,
  MissingRelation,
  MissingGoalAction,
  WrongOrder,
  AdditionalOrMissingStep,
  AffordanceError,
};

const char* to_string(ErrorClass e);

// Primary error class of a failed episode. Precedence: grammar > affordance >
// wrong order > missing-goal kinds (for goals never reached at any prefix of
// the executed history) > step-count mismatch. Throws std::invalid_argument
// on a successful trace.
ErrorClass classify_error(const EpisodeTrace& trace, const TaskSpec& task,
                          const std::vector<PrimitiveAction>& oracle_plan);

struct TaskResult {
  std::string task_id;
  std::string category;
  bool success = false;
  std::optional<FailureKind> failure;
  std::optional<ErrorClass> error;  // failed episodes, filled by the caller
  int predicates_met = 0;
  int predicates_total = 0;
  int oracle_length = -1;  // -1 until attached
  int steps = 0;
  int executed = 0;
};

struct LengthBucket {
  int index = 0;  // 0..9
  int tasks = 0;
  int ssr_num = 0;
  int ssr_den = 0;
};

struct SuiteResult {
  std::string label = "STEP";
  std::vector<TaskResult> tasks;
  int sr_num = 0, sr_den = 0;    // successes / episodes
  int ssr_num = 0, ssr_den = 0;  // satisfied predicates / all predicates (micro)
  std::vector<LengthBucket> buckets;

  double sr() const { return sr_den ? double(sr_num) / sr_den : 0.0; }
  double ssr() const { return ssr_den ? double(ssr_num) / ssr_den : 0.0; }
  // Mean of per-task predicate ratios; zero-predicate tasks count by success.
  // Secondary reading of the subgoal success rate; micro is primary.
  double macro_ssr() const;
};

// "40%", "62.5%", "100%" — exact ratio formatted with %g.
std::string format_percent(int num, int den);

// Outcomes and predicate tallies; buckets and error classes are attached by
// the caller. Throws MismatchedSuite on size mismatch or an empty suite.
SuiteResult compute_metrics(const std::vector<EpisodeTrace>& traces,
                            const std::vector<TaskSpec>& tasks);

// Sort by oracle length (stable), split into 10 equal-count buckets with the
// remainder spread from the front. Throws TooFewTasks below 10 tasks and
// std::invalid_argument on missing lengths.
std::vector<LengthBucket> bucket_by_length(const std::vector<TaskResult>& results,
                                           const std::vector<int>& oracle_lengths);

enum class ReportFormat : std::uint8_t { Json, Csv, Markdown };

std::optional<ReportFormat> report_format_from_string(const std::string& s);

// json: lossless, stable field order. csv: fixed header, one row per task.
// markdown: summary table plus a six-column error-class table.
std::string emit_report(const SuiteResult& r, ReportFormat format);

}  // namespace step
