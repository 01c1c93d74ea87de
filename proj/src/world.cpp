#include "step/world.hpp"

#include <algorithm>

namespace step {

const char* to_string(Rel r) { return r == Rel::In ? "In" : "On"; }

std::optional<Rel> rel_from_string(const std::string& s) {
  if (s == "In") return Rel::In;
  if (s == "On") return Rel::On;
  return std::nullopt;
}

const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Walk: return "walk";
    case ActionKind::Grasp: return "grasp";
    case ActionKind::PutOn: return "put_on";
    case ActionKind::PutIn: return "put_in";
    case ActionKind::Open: return "open";
    case ActionKind::Close: return "close";
  }
  return "?";
}

const char* to_string(ActionError e) {
  switch (e) {
    case ActionError::NotVisible: return "NotVisible";
    case ActionError::NotReachable: return "NotReachable";
    case ActionError::GripperOccupied: return "GripperOccupied";
    case ActionError::GripperEmpty: return "GripperEmpty";
    case ActionError::ContainerClosed: return "ContainerClosed";
    case ActionError::WrongFlag: return "WrongFlag";
    case ActionError::AlreadyInState: return "AlreadyInState";
  }
  return "?";
}

std::string render_action(const PrimitiveAction& a) {
  std::string out = to_string(a.kind);
  out += '(';
  out += a.a;
  if (!a.b.empty()) {
    out += ',';
    out += a.b;
  }
  out += ')';
  return out;
}

std::string render_goal(const GoalPredicate& g) {
  if (g.kind == GoalPredicate::Kind::Placed)
    return "placed(" + g.obj + "," + to_string(g.rel) + "," + g.parent + ")";
  return std::string("open_state(") + g.obj + "," + (g.open ? "true" : "false") + ")";
}

const ObjectInstance* WorldState::find(const ObjectId& id) const {
  auto it = objects.find(id);
  return it == objects.end() ? nullptr : &it->second;
}

std::optional<Relation> WorldState::placement_of(const ObjectId& id) const {
  for (const auto& r : relations)
    if (r.child == id) return r;
  return std::nullopt;
}

ObjectId root_anchor(const WorldState& s, const ObjectId& id) {
  ObjectId cur = id;
  for (std::size_t guard = 0; guard <= s.objects.size(); ++guard) {
    if (s.held && *s.held == cur) return s.agent_at;
    auto p = s.placement_of(cur);
    if (!p) return cur;
    cur = p->parent;
  }
  return cur;  // cyclic state; validate_state reports it
}

bool is_visible(const WorldState& s, const ObjectId& id) {
  if (!s.find(id)) return false;
  ObjectId cur = id;
  for (std::size_t guard = 0; guard <= s.objects.size(); ++guard) {
    if (s.held && *s.held == cur) return true;
    auto p = s.placement_of(cur);
    if (!p) return true;
    if (p->rel == Rel::In) {
      const ObjectInstance* parent = s.find(p->parent);
      if (parent && parent->flags.openable && !parent->is_open) return false;
    }
    cur = p->parent;
  }
  return true;
}

Observation observe(const WorldState& s) {
  Observation o;
  o.agent_at = s.agent_at;
  o.held = s.held;
  for (const auto& [id, obj] : s.objects)
    if (is_visible(s, id)) o.visible.emplace(id, obj);
  for (const auto& r : s.relations)
    if (o.visible.count(r.child) && o.visible.count(r.parent)) o.visible_relations.insert(r);
  return o;
}

namespace {

// Is `id` the held object or transitively inside it?
bool within_held(const WorldState& s, const ObjectId& id) {
  if (!s.held) return false;
  ObjectId cur = id;
  for (std::size_t guard = 0; guard <= s.objects.size(); ++guard) {
    if (cur == *s.held) return true;
    auto p = s.placement_of(cur);
    if (!p) return false;
    cur = p->parent;
  }
  return false;
}

bool reachable(const WorldState& s, const ObjectId& id) {
  return root_anchor(s, id) == s.agent_at;
}

}  // namespace

RuleCheck affordance_allows(const WorldState& s, const Embodiment& emb, const PrimitiveAction& a) {
  (void)emb;  // capacity fixed at 1
  const ObjectInstance* a_obj = s.find(a.a);
  const ObjectInstance* b_obj = s.find(a.b);
  switch (a.kind) {
    case ActionKind::Walk:
      return RuleCheck::pass();
    case ActionKind::Grasp:
      if (s.held) return RuleCheck::fail(ActionError::GripperOccupied);
      if (a_obj && !a_obj->flags.graspable) return RuleCheck::fail(ActionError::WrongFlag);
      return RuleCheck::pass();
    case ActionKind::PutOn:
      if (!s.held || *s.held != a.a) return RuleCheck::fail(ActionError::GripperEmpty);
      if (b_obj && !b_obj->flags.surface) return RuleCheck::fail(ActionError::WrongFlag);
      return RuleCheck::pass();
    case ActionKind::PutIn:
      if (!s.held || *s.held != a.a) return RuleCheck::fail(ActionError::GripperEmpty);
      if (b_obj && !b_obj->flags.container) return RuleCheck::fail(ActionError::WrongFlag);
      return RuleCheck::pass();
    case ActionKind::Open:
    case ActionKind::Close:
      if (a_obj && !a_obj->flags.openable) return RuleCheck::fail(ActionError::WrongFlag);
      if (s.held) return RuleCheck::fail(ActionError::GripperOccupied);
      return RuleCheck::pass();
  }
  return RuleCheck::pass();
}

RuleCheck legal_in_environment(const WorldState& s, const PrimitiveAction& a) {
  const ObjectInstance* a_obj = s.find(a.a);
  if (!a_obj || !is_visible(s, a.a)) return RuleCheck::fail(ActionError::NotVisible);

  switch (a.kind) {
    case ActionKind::Walk:
      if (root_anchor(s, a.a) == s.agent_at) return RuleCheck::fail(ActionError::AlreadyInState);
      return RuleCheck::pass();
    case ActionKind::Grasp:
      if (!reachable(s, a.a)) return RuleCheck::fail(ActionError::NotReachable);
      return RuleCheck::pass();
    case ActionKind::PutOn:
    case ActionKind::PutIn: {
      const ObjectInstance* b_obj = s.find(a.b);
      if (!b_obj || !is_visible(s, a.b)) return RuleCheck::fail(ActionError::NotVisible);
      // Destination must be placed in the environment, not in the gripper.
      if (within_held(s, a.b)) return RuleCheck::fail(ActionError::NotReachable);
      if (!reachable(s, a.b)) return RuleCheck::fail(ActionError::NotReachable);
      if (a.kind == ActionKind::PutIn && b_obj->flags.openable && !b_obj->is_open)
        return RuleCheck::fail(ActionError::ContainerClosed);
      return RuleCheck::pass();
    }
    case ActionKind::Open:
      if (!reachable(s, a.a)) return RuleCheck::fail(ActionError::NotReachable);
      if (a_obj->flags.openable && a_obj->is_open) return RuleCheck::fail(ActionError::AlreadyInState);
      return RuleCheck::pass();
    case ActionKind::Close:
      if (!reachable(s, a.a)) return RuleCheck::fail(ActionError::NotReachable);
      if (a_obj->flags.openable && !a_obj->is_open) return RuleCheck::fail(ActionError::AlreadyInState);
      return RuleCheck::pass();
  }
  return RuleCheck::pass();
}

ApplyResult apply_action(const WorldState& s, const Embodiment& emb, const PrimitiveAction& a) {
  if (auto env = legal_in_environment(s, a); !env.ok) return *env.violated;
  if (auto aff = affordance_allows(s, emb, a); !aff.ok) return *aff.violated;

  WorldState next = s;
  switch (a.kind) {
    case ActionKind::Walk:
      next.agent_at = root_anchor(s, a.a);
      break;
    case ActionKind::Grasp: {
      if (auto p = next.placement_of(a.a)) next.relations.erase(*p);
      next.held = a.a;
      break;
    }
    case ActionKind::PutOn:
      next.held.reset();
      next.relations.insert({a.a, Rel::On, a.b});
      break;
    case ActionKind::PutIn:
      next.held.reset();
      next.relations.insert({a.a, Rel::In, a.b});
      break;
    case ActionKind::Open:
      next.objects.at(a.a).is_open = true;
      break;
    case ActionKind::Close:
      next.objects.at(a.a).is_open = false;
      break;
  }
  return next;
}

bool goal_satisfied(const WorldState& s, const GoalPredicate& g) {
  if (!s.find(g.obj)) throw UnknownObject(g.obj);
  if (g.kind == GoalPredicate::Kind::Placed) {
    if (!s.find(g.parent)) throw UnknownObject(g.parent);
    return s.relations.count({g.obj, g.rel, g.parent}) > 0;
  }
  return s.objects.at(g.obj).is_open == g.open;
}

std::vector<PrimitiveAction> legal_actions(const WorldState& s, const Embodiment& emb) {
  std::vector<PrimitiveAction> out;
  auto consider = [&](PrimitiveAction a) {
    if (legal_in_environment(s, a).ok && affordance_allows(s, emb, a).ok) out.push_back(std::move(a));
  };
  // objects map is id-sorted, so each block comes out lexicographic
  for (const auto& [id, obj] : s.objects) consider(PrimitiveAction::walk(id));
  for (const auto& [id, obj] : s.objects) consider(PrimitiveAction::grasp(id));
  if (s.held) {
    for (const auto& [id, obj] : s.objects) consider(PrimitiveAction::put_on(*s.held, id));
    for (const auto& [id, obj] : s.objects) consider(PrimitiveAction::put_in(*s.held, id));
  }
  for (const auto& [id, obj] : s.objects) consider(PrimitiveAction::open(id));
  for (const auto& [id, obj] : s.objects) consider(PrimitiveAction::close(id));
  return out;
}

std::optional<std::string> validate_state(const WorldState& s) {
  for (const auto& [id, obj] : s.objects) {
    if (id != obj.id) return "objects[" + id + "]: id field mismatch (" + obj.id + ")";
    if (obj.flags.openable && !obj.flags.container)
      return "objects[" + id + "]: openable requires container flag";
  }
  if (!s.find(s.agent_at)) return "agent_at: unknown object " + s.agent_at;
  if (s.held) {
    const ObjectInstance* h = s.find(*s.held);
    if (!h) return "held: unknown object " + *s.held;
    if (!h->flags.graspable) return "held: object " + *s.held + " is not graspable";
  }
  std::set<ObjectId> placed;
  for (const auto& r : s.relations) {
    if (!s.find(r.child)) return "relations: unknown child " + r.child;
    if (!s.find(r.parent)) return "relations: unknown parent " + r.parent;
    if (!placed.insert(r.child).second) return "relations: " + r.child + " placed more than once";
    if (s.held && *s.held == r.child) return "relations: " + r.child + " is both placed and held";
  }
  for (const auto& [id, obj] : s.objects) {
    // cycle check: the parent chain must terminate
    ObjectId cur = id;
    std::set<ObjectId> seen;
    while (true) {
      if (!seen.insert(cur).second) return "relations: containment cycle through " + cur;
      auto p = s.placement_of(cur);
      if (!p) break;
      cur = p->parent;
    }
  }
  return std::nullopt;
}

}  // namespace step
