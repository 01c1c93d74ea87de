#pragma once

// JSON (de)serialization for worlds and goal predicates.
//
// World schema:
//   {"objects":[{"id":"tape_1","class":"tape","flags":["graspable"],"is_open":false}],
//    "relations":[["tape_1","On","desk_1"]],
//    "agent_at":"desk_1"}
// is_open is required exactly when "openable" is flagged.

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "step/world.hpp"

namespace step {

struct WorldFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses and validates; throws WorldFormatError with a path-qualified message.
WorldState world_from_json(const nlohmann::json& j);
WorldState load_world(const std::string& path);

nlohmann::json world_to_json(const WorldState& s);

// Goal schema: {"placed":["tape_1","In","drawer_1"]} or {"open_state":["cabinet_1",false]}
GoalPredicate goal_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json goal_to_json(const GoalPredicate& g);

}  // namespace step
