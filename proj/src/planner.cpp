#include "step/planner.hpp"

#include <stdexcept>

namespace step {

namespace {

void check_config(const PlannerConfig& c, bool flat) {
  if (c.max_depth < 1 || c.max_replans_per_node < 1 || c.max_total_steps < 1)
    throw std::invalid_argument("planner budgets must be >= 1");
  if (!flat && c.mode == ContextMode::FlatBaseline)
    throw std::invalid_argument("FlatBaseline runs through run_flat_baseline");
}

}  // namespace

EpisodeOutcome check_outcome(const WorldState& final_state, const TaskSpec& task,
                             std::optional<FailureKind> terminating_failure) {
  EpisodeOutcome out;
  out.success = true;
  for (const auto& g : task.goals) {
    bool ok = goal_satisfied(final_state, g);
    out.predicate_results.push_back(ok);
    if (!ok) out.success = false;
  }
  if (!out.success)
    out.failure = terminating_failure ? *terminating_failure : FailureKind::GoalsUnmet;
  return out;
}

EpisodeTrace run_episode(const TaskSpec& task, DecompositionPolicy& policy, CongruenceJudge& judge,
                         const PlannerConfig& config) {
  check_config(config, false);

  EpisodeTrace t;
  t.tree = SubgoalTree::init(task.instruction);
  WorldState state = task.world;
  Embodiment emb;

  std::optional<FailureKind> stop;  // why the loop ended, when not by completion
  bool done = false;

  // Fail `node`, charge its parent, escalate while a parent exceeds its
  // replan budget. False means the failure reached the root.
  auto replan_chain = [&](NodeId node, std::string reason, FailureKind at_root) {
    NodeId cur = node;
    for (;;) {
      if (cur == t.tree.root()) {
        stop = at_root;
        return false;
      }
      t.events.push_back(ev_replanned(cur, reason));
      NodeId parent = t.tree.replan_reset(cur);
      if (t.tree.node(parent).replan_count <= config.max_replans_per_node) return true;
      cur = parent;
      reason = "ReplanBudgetExhausted";
      at_root = FailureKind::ReplanAtRoot;
    }
  };

  while (!done) {
    if (t.steps >= config.max_total_steps) {
      stop = FailureKind::BudgetExhausted;
      break;
    }
    ++t.steps;

    NodeId parent = t.tree.cursor();
    Observation obs = observe(state);
    DecompositionContext ctx = build_context(t.tree, parent, obs, emb, config.mode);
    PolicyResponse resp = policy.next_subgoal(ctx);
    t.llm_retries += resp.retries;

    if (const auto* err = std::get_if<PolicyError>(&resp.result)) {
      FailureKind at_root = err->kind == PolicyError::Kind::GrammarError
                                ? FailureKind::PolicyGrammarError
                                : FailureKind::ReplanAtRoot;
      if (!replan_chain(parent, to_string(err->kind), at_root)) break;
      continue;
    }

    if (std::holds_alternative<EndOfSiblings>(resp.result)) {
      t.events.push_back(ev_siblings_exhausted(parent));
      t.tree.mark_exhausted(parent);
      t.tree.mark_done(parent);
      t.tree.set_cursor(parent);
      CursorMove move = t.tree.advance_cursor();
      if (move.kind == CursorMove::Kind::RootComplete) done = true;
      continue;
    }

    const auto& sub = std::get<Subgoal>(resp.result);
    NodeId child = t.tree.add_child(parent, sub.text);
    t.events.push_back(ev_decomposed(t.tree.node(child), ctx, resp.retries));

    std::optional<std::string> left;
    if (auto sib = t.tree.left_sibling(child)) left = t.tree.node(*sib).text;
    auto ev = evaluate(t.tree.node(child), t.tree.node(parent), left, state, obs, emb, judge);
    if (const auto* jerr = std::get_if<PolicyError>(&ev)) {
      FailureKind at_root = jerr->kind == PolicyError::Kind::GrammarError
                                ? FailureKind::PolicyGrammarError
                                : FailureKind::ReplanAtRoot;
      if (!replan_chain(child, to_string(jerr->kind), at_root)) break;
      continue;
    }

    const auto& out = std::get<EvalOutcome>(ev);
    t.events.push_back(ev_verdict(child, out.verdict, out.report));

    switch (out.verdict.kind) {
      case VerdictKind::Execute: {
        const PrimitiveAction& a = *out.verdict.action;
        t.tree.set_leaf_action(child, a);
        ApplyResult r = apply_action(state, emb, a);
        if (!apply_ok(r)) {  // evaluate already proved legality; defensive only
          t.events.push_back(ev_executed(a, to_string(std::get<ActionError>(r))));
          stop = FailureKind::ActionRejected;
          done = true;
          break;
        }
        state = std::get<WorldState>(r);
        t.events.push_back(ev_executed(a, "ok"));
        t.executed_actions.push_back(a);
        t.tree.mark_done(child);
        break;
      }
      case VerdictKind::Refine: {
        if (t.tree.node(child).depth >= config.max_depth) {
          stop = FailureKind::BudgetExhausted;
          done = true;
          break;
        }
        t.tree.set_cursor(child);
        break;
      }
      case VerdictKind::Replan: {
        if (!replan_chain(child, out.verdict.reason, FailureKind::ReplanAtRoot)) done = true;
        break;
      }
    }
  }

  t.final_state = state;
  t.outcome = check_outcome(state, task, stop);
  t.events.push_back(
      ev_finished(t.outcome, t.final_state, t.tree, t.steps, t.tree.total_replans()));
  return t;
}

EpisodeTrace run_flat_baseline(const TaskSpec& task, DecompositionPolicy& policy,
                               const PlannerConfig& config) {
  check_config(config, true);

  EpisodeTrace t;
  t.tree = SubgoalTree::init(task.instruction);
  WorldState state = task.world;
  Embodiment emb;

  std::optional<FailureKind> stop;
  int rejections = 0;

  for (;;) {
    if (t.steps >= config.max_total_steps) {
      stop = FailureKind::BudgetExhausted;
      break;
    }
    ++t.steps;

    Observation obs = observe(state);
    DecompositionContext ctx =
        build_context(t.tree, t.tree.root(), obs, emb, ContextMode::FlatBaseline);
    PolicyResponse resp = policy.next_subgoal(ctx);
    t.llm_retries += resp.retries;

    if (const auto* err = std::get_if<PolicyError>(&resp.result)) {
      t.events.push_back(ev_replanned(t.tree.root(), to_string(err->kind)));
      if (++rejections > config.max_replans_per_node) {
        stop = FailureKind::BudgetExhausted;
        break;
      }
      continue;
    }

    if (std::holds_alternative<EndOfSiblings>(resp.result)) break;  // policy says done

    const auto& sub = std::get<Subgoal>(resp.result);
    NodeId child = t.tree.add_child(t.tree.root(), sub.text);
    t.events.push_back(ev_decomposed(t.tree.node(child), ctx, resp.retries));

    // same gate as the tree path, minus congruence (there is no parent goal)
    CriterionReport report;
    report.mapped_action = check_mappability(sub.text, obs);
    report.mappable = report.mapped_action.has_value();
    if (report.mappable) {
      auto aff = affordance_allows(state, emb, *report.mapped_action);
      report.affordance_ok = aff.ok;
      if (!aff.ok) report.violated = to_string(*aff.violated);
      auto env = legal_in_environment(state, *report.mapped_action);
      report.environment_ok = env.ok;
      if (env.ok == false && !report.violated) report.violated = to_string(*env.violated);
    }

    TerminationVerdict verdict;
    bool executable = report.mappable && report.affordance_ok && report.environment_ok;
    verdict.kind = executable ? VerdictKind::Execute : VerdictKind::Replan;
    if (executable) verdict.action = report.mapped_action;
    if (!executable && report.violated) verdict.reason = *report.violated;
    t.events.push_back(ev_verdict(child, verdict, report));

    if (!executable) {
      if (report.mapped_action)
        t.events.push_back(ev_executed(*report.mapped_action, report.violated.value_or("?")));
      t.tree.replan_reset(child);
      if (++rejections > config.max_replans_per_node) {
        stop = FailureKind::BudgetExhausted;
        break;
      }
      continue;
    }

    const PrimitiveAction& a = *report.mapped_action;
    t.tree.set_leaf_action(child, a);
    ApplyResult r = apply_action(state, emb, a);
    if (!apply_ok(r)) {
      t.events.push_back(ev_executed(a, to_string(std::get<ActionError>(r))));
      stop = FailureKind::ActionRejected;
      break;
    }
    state = std::get<WorldState>(r);
    t.events.push_back(ev_executed(a, "ok"));
    t.executed_actions.push_back(a);
    t.tree.mark_done(child);
  }

  if (!stop) {  // clean finish: close the root so the tree validates as done
    t.tree.mark_exhausted(t.tree.root());
    t.tree.mark_done(t.tree.root());
  }
  t.final_state = state;
  t.outcome = check_outcome(state, task, stop);
  t.events.push_back(
      ev_finished(t.outcome, t.final_state, t.tree, t.steps, t.tree.total_replans()));
  return t;
}

}  // namespace step
