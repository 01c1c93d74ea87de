#include "step/decompose.hpp"

namespace step {

const char* to_string(ContextMode m) {
  switch (m) {
    case ContextMode::FullStep: return "full";
    case ContextMode::NoTreeStructure: return "no-tree";
    case ContextMode::NoSubgoalTree: return "no-subgoal-tree";
    case ContextMode::FlatBaseline: return "flat";
  }
  return "?";
}

std::optional<ContextMode> context_mode_from_string(const std::string& s) {
  if (s == "full") return ContextMode::FullStep;
  if (s == "no-tree") return ContextMode::NoTreeStructure;
  if (s == "no-subgoal-tree") return ContextMode::NoSubgoalTree;
  if (s == "flat") return ContextMode::FlatBaseline;
  return std::nullopt;
}

const char* to_string(PolicyError::Kind k) {
  switch (k) {
    case PolicyError::Kind::GrammarError: return "GrammarError";
    case PolicyError::Kind::BackendUnavailable: return "BackendUnavailable";
    case PolicyError::Kind::NoRecipeMatch: return "NoRecipeMatch";
  }
  return "?";
}

std::string observation_digest(const Observation& o) {
  std::string out = "at " + o.agent_at + "; holding " + (o.held ? *o.held : "nothing");
  out += "; visible:";
  bool first = true;
  for (const auto& [id, obj] : o.visible) {
    out += first ? " " : ", ";
    first = false;
    out += id + "(" + obj.cls;
    if (obj.flags.graspable) out += " graspable";
    if (obj.flags.openable) out += " openable";
    if (obj.flags.surface) out += " surface";
    if (obj.flags.container) out += " container";
    if (obj.flags.openable) out += obj.is_open ? " open" : " closed";
    out += ")";
  }
  out += "; relations:";
  first = true;
  for (const auto& r : o.visible_relations) {
    out += first ? " " : ", ";
    first = false;
    out += r.child + " " + to_string(r.rel) + " " + r.parent;
  }
  if (first) out += " none";
  return out;
}

std::string embodiment_digest(const Embodiment& e) {
  return "gripper capacity " + std::to_string(e.gripper_capacity) + "; reach anchor-equality";
}

DecompositionContext build_context(const SubgoalTree& tree, NodeId cursor_parent,
                                   const Observation& obs, const Embodiment& emb,
                                   ContextMode mode) {
  const SubgoalNode& parent = tree.node(cursor_parent);
  DecompositionContext ctx;
  ctx.mode = mode;
  ctx.observation = obs;
  ctx.observation_digest = observation_digest(obs);
  ctx.embodiment_digest = embodiment_digest(emb);

  switch (mode) {
    case ContextMode::FullStep:
      ctx.focus_text = parent.text;
      for (NodeId c : parent.children)
        if (tree.node(c).status == NodeStatus::Done) ctx.prior_steps.push_back(tree.node(c).text);
      break;
    case ContextMode::NoTreeStructure:
      ctx.focus_text = parent.text;
      ctx.prior_steps = tree.executed_leaf_texts();
      break;
    case ContextMode::NoSubgoalTree:
    case ContextMode::FlatBaseline:
      ctx.focus_text = tree.node(tree.root()).text;
      ctx.prior_steps = tree.executed_leaf_texts();
      break;
  }
  return ctx;
}

nlohmann::json context_to_json(const DecompositionContext& ctx) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(ctx.mode);
  j["focus"] = ctx.focus_text;
  j["prior"] = ctx.prior_steps;
  j["obs"] = ctx.observation_digest;
  j["emb"] = ctx.embodiment_digest;
  return j;
}

}  // namespace step
