#pragma once

// Decomposition contexts and the policy interface. The context is the only
// channel a policy sees; the four modes control how much of the tree it
// carries, which is what the ablation switches toggle.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "step/tree.hpp"
#include "step/world.hpp"

namespace step {

enum class ContextMode : std::uint8_t { FullStep, NoTreeStructure, NoSubgoalTree, FlatBaseline };

const char* to_string(ContextMode m);
std::optional<ContextMode> context_mode_from_string(const std::string& s);

struct DecompositionContext {
  ContextMode mode = ContextMode::FullStep;
  std::string focus_text;                 // node under expansion (or the root goal)
  std::vector<std::string> prior_steps;   // mode-dependent history, oldest first
  Observation observation;
  std::string observation_digest;
  std::string embodiment_digest;
};

struct Subgoal {
  std::string text;
  bool operator==(const Subgoal&) const = default;
};

struct EndOfSiblings {
  bool operator==(const EndOfSiblings&) const = default;
};

struct PolicyError {
  enum class Kind : std::uint8_t { GrammarError, BackendUnavailable, NoRecipeMatch };
  Kind kind{};
  std::string detail;  // raw model output for GrammarError
};

const char* to_string(PolicyError::Kind k);

using PolicyResult = std::variant<Subgoal, EndOfSiblings, PolicyError>;

struct PolicyResponse {
  PolicyResult result;
  int retries = 0;  // format re-asks consumed before this result settled
};

class DecompositionPolicy {
 public:
  virtual ~DecompositionPolicy() = default;
  virtual PolicyResponse next_subgoal(const DecompositionContext& ctx) = 0;
};

// Canonical single-line renderings; pinned by golden tests.
std::string observation_digest(const Observation& o);
std::string embodiment_digest(const Embodiment& e);

// FullStep:        focus = parent text, prior = parent's finished children.
// NoTreeStructure: focus = parent text, prior = every executed leaf so far.
// NoSubgoalTree:   focus = root goal,   prior = every executed leaf so far.
// FlatBaseline:    focus = root goal,   prior = executed actions as text.
DecompositionContext build_context(const SubgoalTree& tree, NodeId cursor_parent,
                                   const Observation& obs, const Embodiment& emb,
                                   ContextMode mode);

nlohmann::json context_to_json(const DecompositionContext& ctx);

}  // namespace step
