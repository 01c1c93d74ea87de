#pragma once

// Recipe-driven scripted backend: a deterministic decomposition policy plus
// the matching congruence judge, both driven by one JSON table so new tasks
// need data edits, not rebuilds.
//
// Heads and steps are word templates ("store {x} in {c}"); a slot may be
// guarded as category (must name a category), object (must not), or text
// (anything, the default when no guard is declared). Steps may carry "when"
// conditions (not_at/closed, AND-ed) evaluated against the current
// observation, and per-binding steps repeat for each member of a bound
// category. Effects declare the goal atoms a head is accountable for; the
// judge accepts a child whose own atoms fall inside the instrumental closure
// of the parent's still-unmet effects.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "step/decompose.hpp"
#include "step/terminate.hpp"
#include "step/world.hpp"

namespace step {

enum class SlotKind : std::uint8_t { Text, Object, Category };

struct RecipeStep {
  std::string text;               // template
  std::vector<std::string> when;  // condition templates, all must hold
  bool per_binding = false;
};

struct Recipe {
  std::string head;  // template
  std::vector<std::pair<std::string, SlotKind>> slots;  // declared guards
  std::vector<RecipeStep> steps;
  std::vector<std::string> effects;  // effect atom templates
  bool per_binding = false;          // simple schema: every step repeats
  bool terminal = false;             // head is already primitive; no children
};

struct RecipeTable {
  std::map<std::string, std::vector<std::string>> categories;
  std::vector<Recipe> recipes;
};

struct RecipeFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RecipeTable recipes_from_json(const nlohmann::ordered_json& j);
RecipeTable load_recipes(const std::string& path);

struct RecipeMatch {
  const Recipe* recipe = nullptr;
  std::map<std::string, std::string> bindings;  // slot -> normalized span
};

// First recipe (table order) whose head unifies with the normalized focus and
// whose slot guards pass. Slots span one or more words; ambiguity resolves
// leftmost-shortest.
std::optional<RecipeMatch> match_recipe(const RecipeTable& table, const std::string& focus);

// Candidate step texts for a match at this observation: per-binding expansion
// is binding-major over category members in declared order; a conditional
// step is listed iff its conditions hold now or its rendering was already
// consumed (so finished steps keep their slot when conditions turn false).
std::vector<std::string> candidate_steps(const RecipeTable& table, const RecipeMatch& m,
                                         const Observation& obs,
                                         const std::vector<std::string>& prior);

class ScriptedPolicy : public DecompositionPolicy {
 public:
  explicit ScriptedPolicy(RecipeTable table) : table_(std::move(table)) {}
  PolicyResponse next_subgoal(const DecompositionContext& ctx) override;

 private:
  RecipeTable table_;
};

// Goal atoms used by effect declarations and their closure.
struct EffectAtom {
  enum class Kind : std::uint8_t { Placed, Held, At, OpenState };
  Kind kind{};
  ObjectId obj;
  Rel rel = Rel::In;     // Placed
  ObjectId parent;       // Placed
  bool open = false;     // OpenState
  auto operator<=>(const EffectAtom&) const = default;
};

bool atom_satisfied(const WorldState& s, const EffectAtom& a);

// Effects a head is accountable for, grounded against the full state (the
// judge is simulator-side); atoms whose names don't ground are dropped.
std::vector<EffectAtom> recipe_effects(const RecipeTable& table, const RecipeMatch& m,
                                       const WorldState& s);

// Unmet parent atoms plus the setup atoms that serve them: Held/At for
// placements, At plus concealing-container opens for grasps, At for opens.
std::vector<EffectAtom> instrumental_closure(const std::vector<EffectAtom>& unmet,
                                             const WorldState& s);

class ScriptedCongruenceJudge : public CongruenceJudge {
 public:
  explicit ScriptedCongruenceJudge(RecipeTable table) : table_(std::move(table)) {}
  std::variant<bool, PolicyError> congruent(const CongruenceQuery& q, const WorldState& state,
                                            const Observation& obs) override;

 private:
  RecipeTable table_;
};

}  // namespace step
