#pragma once

// Episode traces: JSON-lines, one event per line, schema v1. Events are
// appended in decision order and the single Finished event is always last,
// carrying the outcome, final state, tree snapshot and per-goal booleans.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "step/decompose.hpp"
#include "step/terminate.hpp"
#include "step/tree.hpp"
#include "step/world.hpp"

namespace step {

enum class FailureKind : std::uint8_t {
  BudgetExhausted,
  ReplanAtRoot,
  PolicyGrammarError,
  ActionRejected,
  GoalsUnmet,
};

const char* to_string(FailureKind k);

struct EpisodeOutcome {
  bool success = false;
  std::optional<FailureKind> failure;   // set iff !success
  std::vector<bool> predicate_results;  // per task goal, in task order
};

struct EpisodeTrace {
  std::vector<nlohmann::ordered_json> events;  // one record per line
  std::vector<PrimitiveAction> executed_actions;
  WorldState final_state;
  SubgoalTree tree;
  EpisodeOutcome outcome;
  int steps = 0;        // planner loop iterations consumed
  int llm_retries = 0;  // format re-asks across all backend calls
};

nlohmann::ordered_json ev_decomposed(const SubgoalNode& node, const DecompositionContext& ctx,
                                     int retries);
nlohmann::ordered_json ev_verdict(NodeId node, const TerminationVerdict& verdict,
                                  const CriterionReport& report);
nlohmann::ordered_json ev_executed(const PrimitiveAction& a, const std::string& result);
nlohmann::ordered_json ev_replanned(NodeId node, const std::string& reason);
nlohmann::ordered_json ev_siblings_exhausted(NodeId node);
nlohmann::ordered_json ev_finished(const EpisodeOutcome& outcome, const WorldState& final_state,
                                   const SubgoalTree& tree, int steps, int total_replans);

// Entire trace as JSON-lines (each event on its own line, trailing newline).
std::string trace_to_jsonl(const EpisodeTrace& t);

}  // namespace step
