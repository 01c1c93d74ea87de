#include "step/world_io.hpp"

#include <fstream>

namespace step {

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  throw WorldFormatError(path + ": " + msg);
}

std::string need_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) bad(where, std::string("missing \"") + key + "\"");
  if (!j[key].is_string()) bad(where + "." + key, "expected a string");
  return j[key].get<std::string>();
}

}  // namespace

WorldState world_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad("$", "world must be a JSON object");
  for (const auto& [key, val] : j.items())
    if (key != "objects" && key != "relations" && key != "agent_at")
      bad("$", "unknown key \"" + key + "\"");

  WorldState s;
  if (!j.contains("objects") || !j["objects"].is_array()) bad("$.objects", "expected an array");
  int idx = 0;
  for (const auto& jo : j["objects"]) {
    std::string where = "$.objects[" + std::to_string(idx++) + "]";
    if (!jo.is_object()) bad(where, "expected an object");
    for (const auto& [key, val] : jo.items())
      if (key != "id" && key != "class" && key != "flags" && key != "is_open")
        bad(where, "unknown key \"" + key + "\"");
    ObjectInstance obj;
    obj.id = need_string(jo, "id", where);
    obj.cls = need_string(jo, "class", where);
    if (!jo.contains("flags") || !jo["flags"].is_array()) bad(where + ".flags", "expected an array");
    for (const auto& f : jo["flags"]) {
      if (!f.is_string()) bad(where + ".flags", "expected strings");
      std::string name = f.get<std::string>();
      if (name == "graspable") obj.flags.graspable = true;
      else if (name == "openable") obj.flags.openable = true;
      else if (name == "surface") obj.flags.surface = true;
      else if (name == "container") obj.flags.container = true;
      else bad(where + ".flags", "unknown flag \"" + name + "\"");
    }
    if (obj.flags.openable) {
      if (!jo.contains("is_open") || !jo["is_open"].is_boolean())
        bad(where, "openable object requires boolean \"is_open\"");
      obj.is_open = jo["is_open"].get<bool>();
    } else if (jo.contains("is_open")) {
      bad(where, "\"is_open\" is only valid on openable objects");
    }
    if (obj.flags.openable && !obj.flags.container)
      bad(where + ".flags", "openable requires container");
    if (!s.objects.emplace(obj.id, obj).second) bad(where + ".id", "duplicate id \"" + obj.id + "\"");
  }

  if (j.contains("relations")) {
    if (!j["relations"].is_array()) bad("$.relations", "expected an array");
    idx = 0;
    for (const auto& jr : j["relations"]) {
      std::string where = "$.relations[" + std::to_string(idx++) + "]";
      if (!jr.is_array() || jr.size() != 3 || !jr[0].is_string() || !jr[1].is_string() || !jr[2].is_string())
        bad(where, "expected [child, \"In\"|\"On\", parent]");
      Relation r;
      r.child = jr[0].get<std::string>();
      auto rel = rel_from_string(jr[1].get<std::string>());
      if (!rel) bad(where, "relation must be \"In\" or \"On\"");
      r.rel = *rel;
      r.parent = jr[2].get<std::string>();
      const ObjectInstance* child = s.find(r.child);
      const ObjectInstance* parent = s.find(r.parent);
      if (!child) bad(where, "unknown child \"" + r.child + "\"");
      if (!parent) bad(where, "unknown parent \"" + r.parent + "\"");
      if (r.rel == Rel::In && !parent->flags.container)
        bad(where, "\"" + r.parent + "\" is not a container");
      if (r.rel == Rel::On && !parent->flags.surface)
        bad(where, "\"" + r.parent + "\" is not a surface");
      if (!s.relations.insert(r).second) bad(where, "duplicate relation");
    }
  }

  s.agent_at = need_string(j, "agent_at", "$");
  if (!s.find(s.agent_at)) bad("$.agent_at", "unknown object \"" + s.agent_at + "\"");
  if (s.placement_of(s.agent_at))
    bad("$.agent_at", "\"" + s.agent_at + "\" is not a location anchor (it is placed on/in something)");

  if (auto err = validate_state(s)) bad("$", *err);
  return s;
}

WorldState load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw WorldFormatError(path + ": cannot open file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw WorldFormatError(path + ": " + e.what());
  }
  try {
    return world_from_json(j);
  } catch (const WorldFormatError& e) {
    throw WorldFormatError(path + ": " + e.what());
  }
}

nlohmann::json world_to_json(const WorldState& s) {
  nlohmann::json j;
  j["objects"] = nlohmann::json::array();
  for (const auto& [id, obj] : s.objects) {
    nlohmann::json jo;
    jo["id"] = obj.id;
    jo["class"] = obj.cls;
    auto flags = nlohmann::json::array();
    if (obj.flags.graspable) flags.push_back("graspable");
    if (obj.flags.openable) flags.push_back("openable");
    if (obj.flags.surface) flags.push_back("surface");
    if (obj.flags.container) flags.push_back("container");
    jo["flags"] = flags;
    if (obj.flags.openable) jo["is_open"] = obj.is_open;
    j["objects"].push_back(jo);
  }
  j["relations"] = nlohmann::json::array();
  for (const auto& r : s.relations)
    j["relations"].push_back({r.child, to_string(r.rel), r.parent});
  j["agent_at"] = s.agent_at;
  return j;
}

GoalPredicate goal_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || j.size() != 1)
    throw WorldFormatError(where + ": goal must be {\"placed\": ...} or {\"open_state\": ...}");
  if (j.contains("placed")) {
    const auto& p = j["placed"];
    if (!p.is_array() || p.size() != 3 || !p[0].is_string() || !p[1].is_string() || !p[2].is_string())
      throw WorldFormatError(where + ".placed: expected [obj, \"In\"|\"On\", parent]");
    auto rel = rel_from_string(p[1].get<std::string>());
    if (!rel) throw WorldFormatError(where + ".placed: relation must be \"In\" or \"On\"");
    return GoalPredicate::placed(p[0].get<std::string>(), *rel, p[2].get<std::string>());
  }
  if (j.contains("open_state")) {
    const auto& p = j["open_state"];
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_boolean())
      throw WorldFormatError(where + ".open_state: expected [container, bool]");
    return GoalPredicate::open_state(p[0].get<std::string>(), p[1].get<bool>());
  }
  throw WorldFormatError(where + ": goal must be {\"placed\": ...} or {\"open_state\": ...}");
}

nlohmann::json goal_to_json(const GoalPredicate& g) {
  nlohmann::json j;
  if (g.kind == GoalPredicate::Kind::Placed)
    j["placed"] = {g.obj, to_string(g.rel), g.parent};
  else
    j["open_state"] = nlohmann::json::array({g.obj, g.open});
  return j;
}

}  // namespace step
