#pragma once

// Deterministic household world: objects with flags, placement relations,
// a single-gripper agent, and the six primitive actions.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace step {

using ObjectId = std::string;

enum class Rel : std::uint8_t { In, On };

const char* to_string(Rel r);
std::optional<Rel> rel_from_string(const std::string& s);

struct ObjectFlags {
  bool graspable = false;
  bool openable = false;
  bool surface = false;
  bool container = false;
  bool operator==(const ObjectFlags&) const = default;
};

struct ObjectInstance {
  ObjectId id;
  std::string cls;          // class name, the word used in natural-language references
  ObjectFlags flags;
  bool is_open = false;     // meaningful only when flags.openable
  bool operator==(const ObjectInstance&) const = default;
};

struct Relation {
  ObjectId child;
  Rel rel{};
  ObjectId parent;
  auto operator<=>(const Relation&) const = default;
};

struct WorldState {
  std::map<ObjectId, ObjectInstance> objects;
  std::set<Relation> relations;          // placement: each child appears at most once
  ObjectId agent_at;                     // current location anchor (a placement root)
  std::optional<ObjectId> held;
  bool operator==(const WorldState&) const = default;

  const ObjectInstance* find(const ObjectId& id) const;
  std::optional<Relation> placement_of(const ObjectId& id) const;
};

struct Observation {
  std::map<ObjectId, ObjectInstance> visible;
  std::set<Relation> visible_relations;
  ObjectId agent_at;
  std::optional<ObjectId> held;
  bool operator==(const Observation&) const = default;
};

enum class ActionKind : std::uint8_t { Walk, Grasp, PutOn, PutIn, Open, Close };

const char* to_string(ActionKind k);

struct PrimitiveAction {
  ActionKind kind{};
  ObjectId a;       // Walk target / Grasp obj / Put obj / Open-Close container
  ObjectId b;       // Put destination; empty otherwise
  auto operator<=>(const PrimitiveAction&) const = default;

  static PrimitiveAction walk(ObjectId t) { return {ActionKind::Walk, std::move(t), {}}; }
  static PrimitiveAction grasp(ObjectId o) { return {ActionKind::Grasp, std::move(o), {}}; }
  static PrimitiveAction put_on(ObjectId o, ObjectId s) { return {ActionKind::PutOn, std::move(o), std::move(s)}; }
  static PrimitiveAction put_in(ObjectId o, ObjectId c) { return {ActionKind::PutIn, std::move(o), std::move(c)}; }
  static PrimitiveAction open(ObjectId c) { return {ActionKind::Open, std::move(c), {}}; }
  static PrimitiveAction close(ObjectId c) { return {ActionKind::Close, std::move(c), {}}; }
};

// Canonical id rendering used in traces, e.g. "put_in(tape_1,drawer_1)".
std::string render_action(const PrimitiveAction& a);

struct Embodiment {
  int gripper_capacity = 1;   // fixed at 1; reach model is anchor equality
  bool operator==(const Embodiment&) const = default;
};

enum class ActionError : std::uint8_t {
  NotVisible,
  NotReachable,
  GripperOccupied,
  GripperEmpty,
  ContainerClosed,
  WrongFlag,
  AlreadyInState,
};

const char* to_string(ActionError e);

struct RuleCheck {
  bool ok = true;
  std::optional<ActionError> violated;
  static RuleCheck pass() { return {}; }
  static RuleCheck fail(ActionError e) { return {false, e}; }
};

using ApplyResult = std::variant<WorldState, ActionError>;

inline bool apply_ok(const ApplyResult& r) { return std::holds_alternative<WorldState>(r); }

// Topmost placement ancestor of `id`; the held object (and anything inside it)
// anchors at the agent's current location. Unknown ids anchor at themselves.
ObjectId root_anchor(const WorldState& s, const ObjectId& id);

// False iff the placement chain of `id` passes into a closed container.
bool is_visible(const WorldState& s, const ObjectId& id);

Observation observe(const WorldState& s);

// Embodiment-side legality only: gripper occupancy and object flags.
RuleCheck affordance_allows(const WorldState& s, const Embodiment& emb, const PrimitiveAction& a);

// Environment-side legality only: visibility, reach, openness.
RuleCheck legal_in_environment(const WorldState& s, const PrimitiveAction& a);

// Succeeds iff affordance_allows and legal_in_environment both pass;
// environment violations are reported first. Never mutates the input.
ApplyResult apply_action(const WorldState& s, const Embodiment& emb, const PrimitiveAction& a);

struct GoalPredicate {
  enum class Kind : std::uint8_t { Placed, OpenState } kind{};
  ObjectId obj;               // Placed: child      | OpenState: container
  Rel rel = Rel::In;          // Placed only
  ObjectId parent;            // Placed only
  bool open = false;          // OpenState only
  auto operator<=>(const GoalPredicate&) const = default;

  static GoalPredicate placed(ObjectId o, Rel r, ObjectId p) {
    return {Kind::Placed, std::move(o), r, std::move(p), false};
  }
  static GoalPredicate open_state(ObjectId c, bool open) {
    return {Kind::OpenState, std::move(c), Rel::In, {}, open};
  }
};

std::string render_goal(const GoalPredicate& g);

struct UnknownObject : std::runtime_error {
  explicit UnknownObject(const std::string& id)
      : std::runtime_error("unknown object id: " + id) {}
};

// Throws UnknownObject when a referenced id is not in the state.
bool goal_satisfied(const WorldState& s, const GoalPredicate& g);

// All actions that would succeed, in canonical order: action kind
// (Walk, Grasp, PutOn, PutIn, Open, Close), then referenced ids lexicographic.
std::vector<PrimitiveAction> legal_actions(const WorldState& s, const Embodiment& emb);

// Structural invariant check; returns a message naming the first violation.
std::optional<std::string> validate_state(const WorldState& s);

}  // namespace step
