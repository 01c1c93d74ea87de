#include "step/trace.hpp"

#include "step/world_io.hpp"

namespace step {

const char* to_string(FailureKind k) {
  switch (k) {
    case FailureKind::BudgetExhausted: return "BudgetExhausted";
    case FailureKind::ReplanAtRoot: return "ReplanAtRoot";
    case FailureKind::PolicyGrammarError: return "PolicyGrammarError";
    case FailureKind::ActionRejected: return "ActionRejected";
    case FailureKind::GoalsUnmet: return "GoalsUnmet";
  }
  return "?";
}

namespace {

nlohmann::ordered_json base(const char* ev) {
  nlohmann::ordered_json j;
  j["v"] = 1;
  j["ev"] = ev;
  return j;
}

}  // namespace

nlohmann::ordered_json ev_decomposed(const SubgoalNode& node, const DecompositionContext& ctx,
                                     int retries) {
  auto j = base("Decomposed");
  j["node"] = node.id;
  j["text"] = node.text;
  j["parent"] = node.parent ? nlohmann::ordered_json(*node.parent) : nlohmann::ordered_json();
  j["depth"] = node.depth;
  j["ctx"] = context_to_json(ctx);
  if (retries > 0) j["retries"] = retries;
  return j;
}

nlohmann::ordered_json ev_verdict(NodeId node, const TerminationVerdict& verdict,
                                  const CriterionReport& report) {
  auto j = base("Verdict");
  j["node"] = node;
  j["verdict"] = to_string(verdict.kind);
  nlohmann::ordered_json r;
  r["mappable"] = report.mappable;
  if (report.mapped_action) r["action"] = render_action(*report.mapped_action);
  r["affordance_ok"] = report.affordance_ok;
  r["environment_ok"] = report.environment_ok;
  r["congruence_ok"] = report.congruence_ok;
  if (report.violated) r["violated"] = *report.violated;
  j["report"] = r;
  if (!verdict.reason.empty()) j["reason"] = verdict.reason;
  return j;
}

nlohmann::ordered_json ev_executed(const PrimitiveAction& a, const std::string& result) {
  auto j = base("Executed");
  j["action"] = render_action(a);
  j["result"] = result;
  return j;
}

nlohmann::ordered_json ev_replanned(NodeId node, const std::string& reason) {
  auto j = base("Replanned");
  j["node"] = node;
  j["reason"] = reason;
  return j;
}

nlohmann::ordered_json ev_siblings_exhausted(NodeId node) {
  auto j = base("SiblingsExhausted");
  j["node"] = node;
  return j;
}

nlohmann::ordered_json ev_finished(const EpisodeOutcome& outcome, const WorldState& final_state,
                                   const SubgoalTree& tree, int steps, int total_replans) {
  auto j = base("Finished");
  j["outcome"] = outcome.success ? "Success" : "Failure";
  if (outcome.failure) j["failure"] = to_string(*outcome.failure);
  j["goals"] = outcome.predicate_results;
  j["steps"] = steps;
  j["replans"] = total_replans;
  j["final_state"] = world_to_json(final_state);
  j["tree"] = tree.snapshot();
  return j;
}

std::string trace_to_jsonl(const EpisodeTrace& t) {
  std::string out;
  for (const auto& e : t.events) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

}  // namespace step
