#pragma once

// Command-line front end: suite runs (scripted or LLM backend, all four
// context modes), single-task oracle queries, and trace classification.
// Exit-code policy: 0 means the tool did its job (even when the planner
// failed tasks — that's data, reported in the files); 1 means configuration
// or infrastructure trouble; 2 means cmd_oracle found no plan.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "step/eval.hpp"

namespace step {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Trace file doesn't parse as schema-v1 events.
struct SchemaMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string suite_path;
  std::string backend = "scripted";  // scripted | llm
  std::string mode = "full";         // full | no-tree | no-subgoal-tree | flat
  std::string transport = "replay";  // llm only: live | record | replay
  std::string out_path = "out";
  std::string recipes_path = "data/recipes/default.json";
  std::string cassette_path;  // llm record/replay
  std::string label;          // report row label; empty -> derived from mode
  std::uint64_t seed = 0;
  int max_depth = 6;
  int max_replans = 3;
  int max_steps = 200;
  int parallelism = 1;
};

// Overlays file values onto `base`; same keys as the long flags. Unknown or
// mistyped keys are ConfigError — a typo must not silently fall back.
RunConfig run_config_overlay(const RunConfig& base, const nlohmann::json& j,
                             const std::string& where);
RunConfig load_run_config(const RunConfig& base, const std::string& path);

// Throws ConfigError on any invalid field combination (enums, budgets,
// llm+record/replay without a cassette, llm+live/record without a base URL).
void validate_config(const RunConfig& cfg);

// "STEP" for full, "STEP-<mode>" for ablations, "Flat" for the baseline.
std::string default_label(const std::string& mode);

// Rebuilds the pieces classify_error needs from a JSON-lines trace file.
// Any line that isn't a v1 event, or a missing Finished event, is a
// SchemaMismatch; an unreadable file is a ConfigError.
EpisodeTrace load_trace(const std::string& path);

// Inverse of render_action ("put_on(tape_1,bench_1)").
PrimitiveAction action_from_render(const std::string& s, const std::string& where);

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_oracle(const std::string& task_path, int depth_limit, std::ostream& out,
               std::ostream& err);
int cmd_classify(const std::string& trace_path, const std::string& task_path, std::ostream& out,
                 std::ostream& err);

// Full argument surface; what main() calls.
int cli_main(int argc, const char* const* argv);

}  // namespace step
