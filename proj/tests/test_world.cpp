#include <doctest.h>

#include <random>

#include "step/world.hpp"
#include "step/world_io.hpp"

using namespace step;

namespace {

WorldState workshop() { return load_world(std::string(STEP_DATA_DIR) + "/worlds/workshop.json"); }

std::vector<std::string> rendered(const std::vector<PrimitiveAction>& as) {
  std::vector<std::string> out;
  for (const auto& a : as) out.push_back(render_action(a));
  return out;
}

WorldState must_apply(const WorldState& s, const PrimitiveAction& a) {
  auto r = apply_action(s, {}, a);
  REQUIRE(apply_ok(r));
  return std::get<WorldState>(r);
}

// Random-but-valid state over a fixed object pool; placements are acyclic by
// construction (each object may only be placed onto an earlier one).
WorldState random_state(std::mt19937_64& rng) {
  WorldState s;
  struct Spec { const char* id; const char* cls; bool g, o, srf, c; };
  const Spec pool[] = {
      {"room_a", "room", false, false, true, false},
      {"room_b", "room", false, false, true, false},
      {"table_1", "table", false, false, true, false},
      {"box_1", "box", true, true, false, true},     // graspable container, lid
      {"bin_1", "bin", false, false, false, true},   // always-open container
      {"cup_1", "cup", true, false, false, false},
      {"fork_1", "fork", true, false, false, false},
      {"lid_1", "lid", true, false, false, false},
  };
  std::vector<ObjectId> order;
  for (const auto& p : pool) {
    ObjectInstance o{p.id, p.cls, {p.g, p.o, p.srf, p.c}, false};
    if (o.flags.openable) o.is_open = rng() % 2 == 0;
    s.objects.emplace(o.id, o);
    order.push_back(o.id);
  }
  // rooms stay roots; others get a random placement among earlier objects (or none)
  for (std::size_t i = 2; i < order.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::size_t p = pick(rng);
    if (p == i) continue;  // leave as root
    const auto& parent = s.objects.at(order[p]);
    if (parent.flags.container && rng() % 2 == 0)
      s.relations.insert({order[i], Rel::In, order[p]});
    else if (parent.flags.surface)
      s.relations.insert({order[i], Rel::On, order[p]});
  }
  std::vector<ObjectId> roots;
  for (const auto& id : order)
    if (!s.placement_of(id)) roots.push_back(id);
  s.agent_at = roots[rng() % roots.size()];
  if (rng() % 3 == 0) {
    // hold a random graspable root-or-placed object (detach it)
    std::vector<ObjectId> graspable;
    for (const auto& [id, o] : s.objects)
      if (o.flags.graspable) graspable.push_back(id);
    ObjectId h = graspable[rng() % graspable.size()];
    if (auto p = s.placement_of(h)) s.relations.erase(*p);
    if (h != s.agent_at) s.held = h;
  }
  REQUIRE(validate_state(s) == std::nullopt);
  return s;
}

PrimitiveAction random_action(std::mt19937_64& rng, const WorldState& s) {
  std::vector<ObjectId> ids;
  for (const auto& [id, o] : s.objects) ids.push_back(id);
  ids.push_back("ghost_1");  // unknown id candidates
  auto pick = [&] { return ids[rng() % ids.size()]; };
  switch (rng() % 6) {
    case 0: return PrimitiveAction::walk(pick());
    case 1: return PrimitiveAction::grasp(pick());
    case 2: return PrimitiveAction::put_on(s.held.value_or(pick()), pick());
    case 3: return PrimitiveAction::put_in(s.held.value_or(pick()), pick());
    case 4: return PrimitiveAction::open(pick());
    default: return PrimitiveAction::close(pick());
  }
}

}  // namespace

TEST_CASE("world: observation hides transitive contents of closed containers") {
  WorldState s = workshop();
  Observation o = observe(s);
  CHECK(o.visible.count("hammer_1") == 0);
  CHECK(o.visible.count("cabinet_1") == 1);
  CHECK(o.visible.count("tape_1") == 1);
  CHECK(o.visible_relations.count({"hammer_1", Rel::In, "cabinet_1"}) == 0);
  CHECK(o.visible_relations.count({"tape_1", Rel::On, "desk_1"}) == 1);
  CHECK(o.agent_at == "bench_1");

  s.objects.at("cabinet_1").is_open = true;
  Observation o2 = observe(s);
  CHECK(o2.visible.count("hammer_1") == 1);
  CHECK(o2.visible_relations.count({"hammer_1", Rel::In, "cabinet_1"}) == 1);
}

TEST_CASE("world: legal actions at the initial workshop scene") {
  // frozen by hand-walking the rules: gripper empty, everything at the desk or
  // cabinet is out of reach from the bench, hammer is hidden
  WorldState s = workshop();
  CHECK(rendered(legal_actions(s, {})) == std::vector<std::string>{
      "walk(cabinet_1)", "walk(desk_1)", "walk(drawer_1)", "walk(screwdriver_1)", "walk(tape_1)"});
}

TEST_CASE("world: legal actions after walking to the desk") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
  CHECK(s.agent_at == "desk_1");
  CHECK(rendered(legal_actions(s, {})) == std::vector<std::string>{
      "walk(bench_1)", "walk(cabinet_1)", "grasp(screwdriver_1)", "grasp(tape_1)", "open(drawer_1)"});
}

TEST_CASE("world: walk targets resolve to their root anchor") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("tape_1"));
  CHECK(s.agent_at == "desk_1");
  auto again = apply_action(s, {}, PrimitiveAction::walk("drawer_1"));
  REQUIRE(!apply_ok(again));
  CHECK(std::get<ActionError>(again) == ActionError::AlreadyInState);
}

TEST_CASE("world: grasp removes the placement and fills the gripper") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
  WorldState held = must_apply(s, PrimitiveAction::grasp("tape_1"));
  CHECK(held.held == ObjectId("tape_1"));
  CHECK(held.relations.count({"tape_1", Rel::On, "desk_1"}) == 0);
  CHECK(observe(held).visible.count("tape_1") == 1);  // the held object stays visible

  auto second = apply_action(held, {}, PrimitiveAction::grasp("screwdriver_1"));
  REQUIRE(!apply_ok(second));
  CHECK(std::get<ActionError>(second) == ActionError::GripperOccupied);
}

TEST_CASE("world: affordance and environment split") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
  WorldState held = must_apply(s, PrimitiveAction::grasp("tape_1"));

  SUBCASE("occupied gripper blocks grasp and open on the affordance side") {
    auto g = affordance_allows(held, {}, PrimitiveAction::grasp("screwdriver_1"));
    CHECK(!g.ok);
    CHECK(*g.violated == ActionError::GripperOccupied);
    auto o = affordance_allows(held, {}, PrimitiveAction::open("drawer_1"));
    CHECK(!o.ok);
    CHECK(*o.violated == ActionError::GripperOccupied);
    // but the environment side is fine with both
    CHECK(legal_in_environment(held, PrimitiveAction::grasp("screwdriver_1")).ok);
    CHECK(legal_in_environment(held, PrimitiveAction::open("drawer_1")).ok);
  }

  SUBCASE("closed container blocks put-in on the environment side") {
    auto e = legal_in_environment(held, PrimitiveAction::put_in("tape_1", "drawer_1"));
    CHECK(!e.ok);
    CHECK(*e.violated == ActionError::ContainerClosed);
    CHECK(affordance_allows(held, {}, PrimitiveAction::put_in("tape_1", "drawer_1")).ok);
  }

  SUBCASE("hidden object is an environment failure") {
    auto e = legal_in_environment(held, PrimitiveAction::grasp("hammer_1"));
    CHECK(!e.ok);
    CHECK(*e.violated == ActionError::NotVisible);
  }

  SUBCASE("non-graspable target is an affordance failure") {
    WorldState empty_hand = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
    auto a = affordance_allows(empty_hand, {}, PrimitiveAction::grasp("desk_1"));
    CHECK(!a.ok);
    CHECK(*a.violated == ActionError::WrongFlag);
  }

  SUBCASE("put requires the object in hand") {
    auto a = affordance_allows(s, {}, PrimitiveAction::put_on("tape_1", "desk_1"));
    CHECK(!a.ok);
    CHECK(*a.violated == ActionError::GripperEmpty);
  }
}

TEST_CASE("world: open/close toggle with preconditions") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
  WorldState open = must_apply(s, PrimitiveAction::open("drawer_1"));
  CHECK(open.objects.at("drawer_1").is_open);
  auto again = apply_action(open, {}, PrimitiveAction::open("drawer_1"));
  REQUIRE(!apply_ok(again));
  CHECK(std::get<ActionError>(again) == ActionError::AlreadyInState);
  WorldState closed = must_apply(open, PrimitiveAction::close("drawer_1"));
  CHECK(closed == s);  // open then close restores the state exactly
}

TEST_CASE("world: put-in lands inside, put-on lands on top") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
  s = must_apply(s, PrimitiveAction::open("drawer_1"));
  s = must_apply(s, PrimitiveAction::grasp("tape_1"));
  WorldState in = must_apply(s, PrimitiveAction::put_in("tape_1", "drawer_1"));
  CHECK(!in.held);
  CHECK(in.relations.count({"tape_1", Rel::In, "drawer_1"}) == 1);

  WorldState back = must_apply(in, PrimitiveAction::grasp("tape_1"));
  WorldState on = must_apply(back, PrimitiveAction::put_on("tape_1", "desk_1"));
  CHECK(on.relations.count({"tape_1", Rel::On, "desk_1"}) == 1);
}

TEST_CASE("world: destination in the gripper is not a valid placement") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
  s = must_apply(s, PrimitiveAction::grasp("tape_1"));
  auto self = apply_action(s, {}, PrimitiveAction::put_on("tape_1", "tape_1"));
  REQUIRE(!apply_ok(self));
  CHECK(std::get<ActionError>(self) == ActionError::NotReachable);
}

TEST_CASE("world: goal predicates") {
  WorldState s = workshop();
  CHECK(goal_satisfied(s, GoalPredicate::placed("tape_1", Rel::On, "desk_1")));
  CHECK(!goal_satisfied(s, GoalPredicate::placed("tape_1", Rel::In, "drawer_1")));
  CHECK(goal_satisfied(s, GoalPredicate::open_state("drawer_1", false)));
  CHECK(!goal_satisfied(s, GoalPredicate::open_state("drawer_1", true)));

  // a held object satisfies no placement
  WorldState h = must_apply(s, PrimitiveAction::walk("desk_1"));
  h = must_apply(h, PrimitiveAction::grasp("tape_1"));
  CHECK(!goal_satisfied(h, GoalPredicate::placed("tape_1", Rel::On, "desk_1")));

  CHECK_THROWS_AS((void)goal_satisfied(s, GoalPredicate::placed("ghost_1", Rel::In, "drawer_1")),
                  UnknownObject);
  CHECK_THROWS_AS((void)goal_satisfied(s, GoalPredicate::open_state("ghost_1", true)), UnknownObject);
}

TEST_CASE("world: apply never mutates its input") {
  WorldState s = workshop();
  WorldState copy = s;
  (void)apply_action(s, {}, PrimitiveAction::walk("desk_1"));
  (void)apply_action(s, {}, PrimitiveAction::grasp("hammer_1"));
  CHECK(s == copy);
}

TEST_CASE("world: success is exactly affordance and environment passing") {
  std::mt19937_64 rng(20240817);
  int successes = 0;
  for (int i = 0; i < 4000; ++i) {
    WorldState s = random_state(rng);
    PrimitiveAction a = random_action(rng, s);
    auto aff = affordance_allows(s, {}, a);
    auto env = legal_in_environment(s, a);
    auto r = apply_action(s, {}, a);
    CHECK(apply_ok(r) == (aff.ok && env.ok));
    if (!apply_ok(r)) {
      ActionError got = std::get<ActionError>(r);
      CHECK(got == (!env.ok ? *env.violated : *aff.violated));
    } else {
      ++successes;
    }
  }
  CHECK(successes > 200);  // the generator must exercise the success path too
}

TEST_CASE("world: invariants survive random legal action sequences") {
  std::mt19937_64 rng(911);
  for (int ep = 0; ep < 150; ++ep) {
    WorldState s = random_state(rng);
    for (int t = 0; t < 40; ++t) {
      auto legal = legal_actions(s, {});
      if (legal.empty()) break;
      const auto& a = legal[rng() % legal.size()];
      auto r = apply_action(s, {}, a);
      REQUIRE(apply_ok(r));
      s = std::get<WorldState>(r);
      auto err = validate_state(s);
      if (err) FAIL("invariant broken after ", render_action(a), ": ", *err);
    }
  }
}

TEST_CASE("world: legal_actions lists exactly the applicable actions") {
  std::mt19937_64 rng(5150);
  for (int ep = 0; ep < 60; ++ep) {
    WorldState s = random_state(rng);
    auto legal = legal_actions(s, {});
    for (const auto& a : legal) CHECK(apply_ok(apply_action(s, {}, a)));
    // canonical order: kind, then ids
    for (std::size_t i = 1; i < legal.size(); ++i) {
      CHECK(std::tie(legal[i - 1].kind, legal[i - 1].a, legal[i - 1].b) <
            std::tie(legal[i].kind, legal[i].a, legal[i].b));
    }
  }
}

TEST_CASE("world: opening a container never shrinks the visible set") {
  std::mt19937_64 rng(77);
  for (int ep = 0; ep < 80; ++ep) {
    WorldState s = random_state(rng);
    Observation before = observe(s);
    for (const auto& [id, obj] : s.objects) {
      if (!obj.flags.openable || obj.is_open) continue;
      WorldState opened = s;
      opened.objects.at(id).is_open = true;
      Observation after = observe(opened);
      for (const auto& [vid, vobj] : before.visible) CHECK(after.visible.count(vid) == 1);
    }
  }
}

TEST_CASE("world: grasp then replace is an identity") {
  WorldState s = must_apply(workshop(), PrimitiveAction::walk("desk_1"));
  WorldState t = must_apply(s, PrimitiveAction::grasp("tape_1"));
  t = must_apply(t, PrimitiveAction::put_on("tape_1", "desk_1"));
  CHECK(t == s);
}

TEST_CASE("world: determinism of apply and observe") {
  WorldState s = workshop();
  CHECK(apply_action(s, {}, PrimitiveAction::walk("desk_1")) ==
        apply_action(s, {}, PrimitiveAction::walk("desk_1")));
  CHECK(observe(s) == observe(s));
}

TEST_CASE("world: loader accepts the documented schema") {
  WorldState s = workshop();
  CHECK(s.objects.size() == 7);
  CHECK(s.objects.at("drawer_1").flags.openable);
  CHECK(!s.objects.at("drawer_1").is_open);
  CHECK(s.agent_at == "bench_1");
  // round trip
  CHECK(world_from_json(world_to_json(s)) == s);
}

TEST_CASE("world: loader rejects malformed input with a path-qualified message") {
  auto reject = [](const char* text, const char* needle) {
    try {
      (void)world_from_json(nlohmann::json::parse(text));
      FAIL_CHECK("expected rejection for: ", text);
    } catch (const WorldFormatError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  reject(R"({"objects":[{"id":"a","class":"x","flags":["fluffy"]}],"agent_at":"a"})",
         "$.objects[0].flags");
  reject(R"({"objects":[{"id":"a","class":"x","flags":[]},{"id":"a","class":"x","flags":[]}],"agent_at":"a"})",
         "duplicate id");
  reject(R"({"objects":[{"id":"a","class":"x","flags":[],"is_open":true}],"agent_at":"a"})",
         "only valid on openable");
  reject(R"({"objects":[{"id":"a","class":"x","flags":["openable","container"]}],"agent_at":"a"})",
         "requires boolean \"is_open\"");
  reject(R"({"objects":[{"id":"a","class":"x","flags":["openable"],"is_open":false}],"agent_at":"a"})",
         "openable requires container");
  reject(R"({"objects":[{"id":"a","class":"x","flags":[]}],"relations":[["a","On","b"]],"agent_at":"a"})",
         "unknown parent");
  reject(R"({"objects":[{"id":"a","class":"x","flags":["surface"]},{"id":"b","class":"y","flags":[]}],"relations":[["b","In","a"]],"agent_at":"a"})",
         "not a container");
  reject(R"({"objects":[{"id":"a","class":"x","flags":["surface"]},{"id":"b","class":"y","flags":["surface"]},{"id":"c","class":"z","flags":[]}],"relations":[["c","On","a"],["c","On","b"]],"agent_at":"a"})",
         "placed more than once");
  reject(R"({"objects":[{"id":"a","class":"x","flags":[]}],"agent_at":"ghost"})", "$.agent_at");
  reject(R"({"objects":[{"id":"a","class":"x","flags":["surface"]},{"id":"b","class":"y","flags":[]}],"relations":[["b","On","a"]],"agent_at":"b"})",
         "not a location anchor");
  reject(R"({"objects":[],"agent_at":"a","extra":1})", "unknown key");
}
