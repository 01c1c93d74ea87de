#pragma once

// The closed-loop controller: grow the subgoal tree depth-first, judge every
// fresh node, execute mappable-and-consistent leaves, refine consistent
// unmappables, replan on any consistency violation. All failures end in the
// trace; only transport faults from a live backend escape as exceptions.

#include <string>
#include <vector>

#include "step/decompose.hpp"
#include "step/terminate.hpp"
#include "step/trace.hpp"
#include "step/world.hpp"

namespace step {

struct TaskSpec {
  std::string id;
  std::string instruction;  // root goal text
  std::string category;     // reporting bucket (free-form)
  WorldState world;         // initial state
  std::vector<GoalPredicate> goals;
};

struct PlannerConfig {
  int max_depth = 6;
  int max_replans_per_node = 3;
  int max_total_steps = 200;  // planner loop iterations
  ContextMode mode = ContextMode::FullStep;
  std::uint64_t seed = 0;
};

// Success is a property of the final state alone; the kind records why the
// loop stopped when the goals don't hold.
EpisodeOutcome check_outcome(const WorldState& final_state, const TaskSpec& task,
                             std::optional<FailureKind> terminating_failure = std::nullopt);

// Throws std::invalid_argument on budgets < 1 or mode == FlatBaseline.
EpisodeTrace run_episode(const TaskSpec& task, DecompositionPolicy& policy, CongruenceJudge& judge,
                         const PlannerConfig& config);

// One virtual expansion slot under the root: proposals that fail the checks
// count against max_replans_per_node; mode is forced to FlatBaseline.
EpisodeTrace run_flat_baseline(const TaskSpec& task, DecompositionPolicy& policy,
                               const PlannerConfig& config);

}  // namespace step
