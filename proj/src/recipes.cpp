#include "step/recipes.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace step {

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> toks;
  std::string t;
  while (in >> t) toks.push_back(t);
  return toks;
}

std::string join(const std::vector<std::string>& toks, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (!out.empty()) out += ' ';
    out += toks[i];
  }
  return out;
}

bool is_slot_token(const std::string& tok) {
  if (tok.size() < 3 || tok.front() != '{' || tok.back() != '}') return false;
  for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
    char c = tok[i];
    if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
          c == '_'))
      return false;
  }
  return true;
}

std::string slot_name(const std::string& tok) { return tok.substr(1, tok.size() - 2); }

// slot names referenced by a template
std::set<std::string> slot_refs(const std::string& tmpl) {
  std::set<std::string> out;
  for (const auto& t : split_words(tmpl))
    if (is_slot_token(t)) out.insert(slot_name(t));
  return out;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw RecipeFormatError(where + ": " + what);
}

std::string render(const std::string& tmpl, const std::map<std::string, std::string>& bindings) {
  std::string out;
  for (const auto& t : split_words(tmpl)) {
    if (!out.empty()) out += ' ';
    if (is_slot_token(t))
      out += bindings.at(slot_name(t));
    else
      out += t;
  }
  return out;
}

bool unify(const std::vector<std::string>& pat, std::size_t pi, const std::vector<std::string>& words,
           std::size_t wi, std::map<std::string, std::string>& b) {
  if (pi == pat.size()) return wi == words.size();
  const std::string& t = pat[pi];
  if (!is_slot_token(t)) {
    if (wi < words.size() && words[wi] == t) return unify(pat, pi + 1, words, wi + 1, b);
    return false;
  }
  std::string name = slot_name(t);
  for (std::size_t len = 1; wi + len <= words.size(); ++len) {
    std::string span = join(words, wi, wi + len);
    auto it = b.find(name);
    if (it != b.end()) {
      if (it->second != span) continue;
      if (unify(pat, pi + 1, words, wi + len, b)) return true;
      continue;
    }
    b.emplace(name, span);
    if (unify(pat, pi + 1, words, wi + len, b)) return true;
    b.erase(name);
  }
  return false;
}

SlotKind declared_kind(const Recipe& r, const std::string& slot) {
  for (const auto& [name, kind] : r.slots)
    if (name == slot) return kind;
  return SlotKind::Text;
}

bool has_declared(const Recipe& r, const std::string& slot) {
  for (const auto& [name, kind] : r.slots)
    if (name == slot) return true;
  return false;
}

// category slots in head-appearance order, for deterministic expansion
std::vector<std::string> category_slots(const RecipeTable& table, const Recipe& r,
                                        const std::map<std::string, std::string>& bindings) {
  std::vector<std::string> order;
  for (const auto& t : split_words(r.head)) {
    if (!is_slot_token(t)) continue;
    std::string name = slot_name(t);
    if (std::find(order.begin(), order.end(), name) != order.end()) continue;
    if (table.categories.count(bindings.at(name))) order.push_back(name);
  }
  return order;
}

std::vector<std::map<std::string, std::string>> expand_bindings(
    const RecipeTable& table, const Recipe& r, const std::map<std::string, std::string>& bindings) {
  std::vector<std::map<std::string, std::string>> out{bindings};
  for (const auto& slot : category_slots(table, r, bindings)) {
    const auto& members = table.categories.at(bindings.at(slot));
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& b : out)
      for (const auto& m : members) {
        auto b2 = b;
        b2[slot] = m;
        next.push_back(std::move(b2));
      }
    out = std::move(next);
  }
  return out;
}

// unique visible object of this (normalized) class
std::optional<ObjectId> ground_visible(const Observation& obs, const std::string& name) {
  std::optional<ObjectId> found;
  for (const auto& [id, o] : obs.visible) {
    if (normalize_text(o.cls) != name) continue;
    if (found) return std::nullopt;
    found = id;
  }
  return found;
}

// unique object of this class anywhere in the state (the judge sees everything)
std::optional<ObjectId> ground_state(const WorldState& s, const std::string& name) {
  std::optional<ObjectId> found;
  for (const auto& [id, o] : s.objects) {
    if (normalize_text(o.cls) != name) continue;
    if (found) return std::nullopt;
    found = id;
  }
  return found;
}

ObjectId anchor_of(const Observation& obs, ObjectId cur) {
  for (std::size_t hops = 0; hops <= obs.visible_relations.size(); ++hops) {
    if (obs.held && *obs.held == cur) return obs.agent_at;
    const Relation* up = nullptr;
    for (const auto& r : obs.visible_relations)
      if (r.child == cur) {
        up = &r;
        break;
      }
    if (!up) return cur;
    cur = up->parent;
  }
  return cur;  // cyclic input; unreachable from a valid state
}

// "not_at x": not known to be at it (unseen counts as away);
// "closed x": visibly closed (unseen does not).
bool eval_condition(const std::string& tmpl, const std::map<std::string, std::string>& bindings,
                    const Observation& obs) {
  auto toks = split_words(normalize_text(render(tmpl, bindings)));
  std::string op = toks.front();
  auto id = ground_visible(obs, join(toks, 1, toks.size()));
  if (op == "not_at") return !id || anchor_of(obs, *id) != obs.agent_at;
  return id && obs.visible.at(*id).flags.openable && !obs.visible.at(*id).is_open;  // closed
}

EffectAtom make_atom(const std::string& op, const ObjectId& a, const ObjectId& b) {
  EffectAtom atom;
  if (op == "in" || op == "on") {
    atom.kind = EffectAtom::Kind::Placed;
    atom.obj = a;
    atom.rel = op == "in" ? Rel::In : Rel::On;
    atom.parent = b;
  } else if (op == "held") {
    atom.kind = EffectAtom::Kind::Held;
    atom.obj = a;
  } else if (op == "at") {
    atom.kind = EffectAtom::Kind::At;
    atom.obj = a;
  } else {
    atom.kind = EffectAtom::Kind::OpenState;
    atom.obj = a;
    atom.open = op == "open";
  }
  return atom;
}

// operands resolve per template token so multiword spans stay intact
std::optional<EffectAtom> ground_effect(const std::string& tmpl,
                                        const std::map<std::string, std::string>& bindings,
                                        const WorldState& s) {
  auto toks = split_words(normalize_text(tmpl));
  auto operand = [&](const std::string& tok) {
    return is_slot_token(tok) ? bindings.at(slot_name(tok)) : tok;
  };
  std::string op = toks.front();
  bool binary = op == "in" || op == "on";
  auto a = ground_state(s, operand(toks[1]));
  if (!a) return std::nullopt;
  ObjectId b;
  if (binary) {
    auto bid = ground_state(s, operand(toks[2]));
    if (!bid) return std::nullopt;
    b = *bid;
  }
  return make_atom(op, *a, b);
}

EffectAtom action_effect(const PrimitiveAction& a) {
  switch (a.kind) {
    case ActionKind::Walk: return make_atom("at", a.a, {});
    case ActionKind::Grasp: return make_atom("held", a.a, {});
    case ActionKind::PutOn: return make_atom("on", a.a, a.b);
    case ActionKind::PutIn: return make_atom("in", a.a, a.b);
    case ActionKind::Open: return make_atom("open", a.a, {});
    case ActionKind::Close: return make_atom("closed", a.a, {});
  }
  return {};
}

const std::set<std::string> kUnaryOps{"held", "at", "open", "closed"};
const std::set<std::string> kBinaryOps{"in", "on"};

}  // namespace

std::optional<RecipeMatch> match_recipe(const RecipeTable& table, const std::string& focus) {
  auto words = split_words(normalize_text(focus));
  for (const auto& r : table.recipes) {
    auto pat = split_words(normalize_text(r.head));
    std::map<std::string, std::string> b;
    if (!unify(pat, 0, words, 0, b)) continue;
    bool guards_ok = true;
    for (const auto& [slot, span] : b) {
      bool is_cat = table.categories.count(span) > 0;
      SlotKind kind = has_declared(r, slot)
                          ? declared_kind(r, slot)
                          : (is_cat ? SlotKind::Category : SlotKind::Text);
      if (kind == SlotKind::Category && !is_cat) guards_ok = false;
      if (kind == SlotKind::Object && is_cat) guards_ok = false;
    }
    if (!guards_ok) continue;
    return RecipeMatch{&r, std::move(b)};
  }
  return std::nullopt;
}

std::vector<std::string> candidate_steps(const RecipeTable& table, const RecipeMatch& m,
                                         const Observation& obs,
                                         const std::vector<std::string>& prior) {
  const Recipe& r = *m.recipe;
  std::multiset<std::string> prior_norm;
  for (const auto& p : prior) prior_norm.insert(normalize_text(p));

  std::vector<std::string> out;
  auto emit = [&](const RecipeStep& s, const std::map<std::string, std::string>& b) {
    std::string text = render(s.text, b);
    bool live = true;
    for (const auto& c : s.when)
      if (!eval_condition(c, b, obs)) {
        live = false;
        break;
      }
    // a finished occurrence backs at most one candidate: consume it in step
    // order so a later duplicate rendering can't claim it and resurface as a
    // bogus fresh step (the dormant return-walk in the move recipe)
    auto it = prior_norm.find(normalize_text(text));
    if (it != prior_norm.end()) {
      prior_norm.erase(it);
      out.push_back(text);
    } else if (live) {
      out.push_back(text);
    }
  };

  auto expanded = expand_bindings(table, r, m.bindings);
  std::size_t i = 0;
  while (i < r.steps.size()) {
    auto per = [&](std::size_t k) { return r.per_binding || r.steps[k].per_binding; };
    if (!per(i)) {
      emit(r.steps[i], m.bindings);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < r.steps.size() && per(j)) ++j;
    // a run of per-binding steps expands binding-major
    for (const auto& b : expanded)
      for (std::size_t k = i; k < j; ++k) emit(r.steps[k], b);
    i = j;
  }
  return out;
}

PolicyResponse ScriptedPolicy::next_subgoal(const DecompositionContext& ctx) {
  auto m = match_recipe(table_, ctx.focus_text);
  if (!m)
    return {PolicyError{PolicyError::Kind::NoRecipeMatch,
                        "no recipe matches \"" + ctx.focus_text + "\""},
            0};
  if (m->recipe->terminal) return {EndOfSiblings{}, 0};

  auto cands = candidate_steps(table_, *m, ctx.observation, ctx.prior_steps);
  std::vector<bool> used(cands.size(), false);
  for (const auto& p : ctx.prior_steps) {
    std::string pn = normalize_text(p);
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (!used[i] && normalize_text(cands[i]) == pn) {
        used[i] = true;
        break;
      }
  }
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (!used[i]) return {Subgoal{cands[i]}, 0};
  return {EndOfSiblings{}, 0};
}

bool atom_satisfied(const WorldState& s, const EffectAtom& a) {
  switch (a.kind) {
    case EffectAtom::Kind::Placed:
      return s.relations.count({a.obj, a.rel, a.parent}) > 0;
    case EffectAtom::Kind::Held:
      return s.held == a.obj;
    case EffectAtom::Kind::At:
      return root_anchor(s, a.obj) == s.agent_at;
    case EffectAtom::Kind::OpenState: {
      const ObjectInstance* o = s.find(a.obj);
      return o && o->is_open == a.open;
    }
  }
  return false;
}

std::vector<EffectAtom> recipe_effects(const RecipeTable& table, const RecipeMatch& m,
                                       const WorldState& s) {
  std::set<EffectAtom> atoms;
  for (const auto& b : expand_bindings(table, *m.recipe, m.bindings))
    for (const auto& e : m.recipe->effects)
      if (auto a = ground_effect(e, b, s)) atoms.insert(*a);
  return {atoms.begin(), atoms.end()};
}

std::vector<EffectAtom> instrumental_closure(const std::vector<EffectAtom>& unmet,
                                             const WorldState& s) {
  std::set<EffectAtom> out(unmet.begin(), unmet.end());
  std::vector<EffectAtom> frontier(unmet);
  auto add = [&](const EffectAtom& a) {
    if (out.insert(a).second) frontier.push_back(a);
  };
  auto at = [](const ObjectId& id) { return make_atom("at", id, {}); };
  while (!frontier.empty()) {
    EffectAtom a = frontier.back();
    frontier.pop_back();
    switch (a.kind) {
      case EffectAtom::Kind::Placed: {
        add(make_atom("held", a.obj, {}));
        add(at(a.obj));
        add(at(a.parent));
        const ObjectInstance* dst = s.find(a.parent);
        if (dst && dst->flags.openable) add(make_atom("open", a.parent, {}));
        break;
      }
      case EffectAtom::Kind::Held: {
        add(at(a.obj));
        // opening whatever conceals the object is in service of holding it
        ObjectId cur = a.obj;
        for (;;) {
          auto p = s.placement_of(cur);
          if (!p) break;
          const ObjectInstance* po = s.find(p->parent);
          if (po && po->flags.openable) {
            add(make_atom("open", p->parent, {}));
            add(at(p->parent));
          }
          cur = p->parent;
        }
        break;
      }
      case EffectAtom::Kind::OpenState:
        add(at(a.obj));
        break;
      case EffectAtom::Kind::At:
        break;
    }
  }
  return {out.begin(), out.end()};
}

std::variant<bool, PolicyError> ScriptedCongruenceJudge::congruent(const CongruenceQuery& q,
                                                                   const WorldState& state,
                                                                   const Observation&) {
  auto pm = match_recipe(table_, q.parent_text);
  if (!pm || pm->recipe->effects.empty()) return true;  // nothing declared to hold it to

  std::vector<EffectAtom> unmet;
  for (const auto& a : recipe_effects(table_, *pm, state))
    if (!atom_satisfied(state, a)) unmet.push_back(a);
  auto closure = instrumental_closure(unmet, state);
  std::set<EffectAtom> allowed(closure.begin(), closure.end());

  std::vector<EffectAtom> child;
  auto cm = match_recipe(table_, q.subgoal_text);
  if (cm && !cm->recipe->effects.empty())
    child = recipe_effects(table_, *cm, state);
  else if (q.mapped)
    child.push_back(action_effect(*q.mapped));
  else
    return true;  // no semantics known; refinement is not vetoed

  for (const auto& a : child)
    if (!allowed.count(a)) return false;
  return true;
}

RecipeTable recipes_from_json(const nlohmann::ordered_json& j) {
  RecipeTable table;
  if (!j.is_object()) fail("$", "recipe table must be an object");
  for (const auto& [key, val] : j.items())
    if (key != "categories" && key != "recipes") fail("$", "unknown key \"" + key + "\"");

  if (j.contains("categories")) {
    const auto& cats = j.at("categories");
    if (!cats.is_object()) fail("$.categories", "must be an object");
    for (const auto& [name, members] : cats.items()) {
      if (!members.is_array() || members.empty())
        fail("$.categories." + name, "must be a non-empty array");
      std::vector<std::string> list;
      for (const auto& m : members) {
        if (!m.is_string() || m.get<std::string>().empty())
          fail("$.categories." + name, "members must be non-empty strings");
        std::string norm = normalize_text(m.get<std::string>());
        if (std::find(list.begin(), list.end(), norm) != list.end())
          fail("$.categories." + name, "duplicate member \"" + norm + "\"");
        list.push_back(norm);
      }
      table.categories.emplace(normalize_text(name), std::move(list));
    }
  }

  if (!j.contains("recipes") || !j.at("recipes").is_array())
    fail("$", "requires a \"recipes\" array");
  std::size_t idx = 0;
  for (const auto& rj : j.at("recipes")) {
    std::string where = "$.recipes[" + std::to_string(idx++) + "]";
    if (!rj.is_object()) fail(where, "must be an object");
    for (const auto& [key, val] : rj.items())
      if (key != "head" && key != "steps" && key != "slots" && key != "effects" &&
          key != "per_binding" && key != "terminal")
        fail(where, "unknown key \"" + key + "\"");

    Recipe r;
    if (!rj.contains("head") || !rj.at("head").is_string()) fail(where, "requires a string \"head\"");
    r.head = rj.at("head").get<std::string>();

    std::set<std::string> head_slots;
    for (const auto& t : split_words(r.head)) {
      if (t.find('{') == std::string::npos && t.find('}') == std::string::npos) continue;
      if (!is_slot_token(t)) fail(where + ".head", "malformed slot token \"" + t + "\"");
      head_slots.insert(slot_name(t));
    }
    if (split_words(normalize_text(r.head)).empty()) fail(where + ".head", "must not be empty");

    if (rj.contains("slots")) {
      if (!rj.at("slots").is_object()) fail(where + ".slots", "must be an object");
      for (const auto& [name, kind] : rj.at("slots").items()) {
        if (!head_slots.count(name))
          fail(where + ".slots", "slot \"" + name + "\" does not appear in the head");
        if (!kind.is_string()) fail(where + ".slots." + name, "kind must be a string");
        std::string ks = kind.get<std::string>();
        SlotKind k;
        if (ks == "text")
          k = SlotKind::Text;
        else if (ks == "object")
          k = SlotKind::Object;
        else if (ks == "category")
          k = SlotKind::Category;
        else
          fail(where + ".slots." + name, "unknown kind \"" + ks + "\"");
        r.slots.emplace_back(name, k);
      }
    }

    if (rj.contains("per_binding")) {
      if (!rj.at("per_binding").is_boolean()) fail(where + ".per_binding", "must be a boolean");
      r.per_binding = rj.at("per_binding").get<bool>();
    }
    if (rj.contains("terminal")) {
      if (!rj.at("terminal").is_boolean()) fail(where + ".terminal", "must be a boolean");
      r.terminal = rj.at("terminal").get<bool>();
    }

    if (!rj.contains("steps") || !rj.at("steps").is_array())
      fail(where, "requires a \"steps\" array");
    auto check_refs = [&](const std::string& at, const std::string& tmpl) {
      for (const auto& s : slot_refs(tmpl))
        if (!head_slots.count(s)) fail(at, "references unknown slot \"" + s + "\"");
      for (const auto& t : split_words(tmpl))
        if ((t.find('{') != std::string::npos || t.find('}') != std::string::npos) &&
            !is_slot_token(t))
          fail(at, "malformed slot token \"" + t + "\"");
    };
    std::size_t sidx = 0;
    for (const auto& sj : rj.at("steps")) {
      std::string swhere = where + ".steps[" + std::to_string(sidx++) + "]";
      RecipeStep step;
      if (sj.is_string()) {
        step.text = sj.get<std::string>();
      } else if (sj.is_object()) {
        for (const auto& [key, val] : sj.items())
          if (key != "text" && key != "when" && key != "per_binding")
            fail(swhere, "unknown key \"" + key + "\"");
        if (!sj.contains("text") || !sj.at("text").is_string())
          fail(swhere, "requires a string \"text\"");
        step.text = sj.at("text").get<std::string>();
        if (sj.contains("when")) {
          const auto& w = sj.at("when");
          if (w.is_string())
            step.when.push_back(w.get<std::string>());
          else if (w.is_array())
            for (const auto& c : w) {
              if (!c.is_string()) fail(swhere + ".when", "conditions must be strings");
              step.when.push_back(c.get<std::string>());
            }
          else
            fail(swhere + ".when", "must be a string or array of strings");
        }
        if (sj.contains("per_binding")) {
          if (!sj.at("per_binding").is_boolean()) fail(swhere + ".per_binding", "must be a boolean");
          step.per_binding = sj.at("per_binding").get<bool>();
        }
      } else {
        fail(swhere, "must be a string or an object");
      }
      if (split_words(step.text).empty()) fail(swhere, "step text must not be empty");
      check_refs(swhere, step.text);
      for (const auto& c : step.when) {
        check_refs(swhere + ".when", c);
        auto toks = split_words(normalize_text(c));
        if (toks.size() < 2 || (toks[0] != "not_at" && toks[0] != "closed"))
          fail(swhere + ".when", "conditions are \"not_at <x>\" or \"closed <x>\"");
      }
      // a category-guarded slot in a once-only step has no single value
      std::set<std::string> refs = slot_refs(step.text);
      for (const auto& c : step.when)
        for (const auto& s : slot_refs(c)) refs.insert(s);
      for (const auto& s : refs)
        if (!r.per_binding && !step.per_binding && declared_kind(r, s) == SlotKind::Category)
          fail(swhere, "category slot \"" + s + "\" needs per_binding");
      r.steps.push_back(std::move(step));
    }
    if (r.terminal && !r.steps.empty()) fail(where, "terminal recipes take no steps");

    if (rj.contains("effects")) {
      if (!rj.at("effects").is_array()) fail(where + ".effects", "must be an array");
      std::size_t eidx = 0;
      for (const auto& ej : rj.at("effects")) {
        std::string ewhere = where + ".effects[" + std::to_string(eidx++) + "]";
        if (!ej.is_string()) fail(ewhere, "must be a string");
        std::string tmpl = ej.get<std::string>();
        check_refs(ewhere, tmpl);
        auto toks = split_words(normalize_text(tmpl));
        bool unary = !toks.empty() && kUnaryOps.count(toks[0]) && toks.size() == 2;
        bool binary = !toks.empty() && kBinaryOps.count(toks[0]) && toks.size() == 3;
        if (!unary && !binary)
          fail(ewhere, "effects are \"in|on <x> <c>\" or \"held|at|open|closed <x>\"");
        r.effects.push_back(tmpl);
      }
    }
    table.recipes.push_back(std::move(r));
  }
  return table;
}

RecipeTable load_recipes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RecipeFormatError(path + ": cannot open");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw RecipeFormatError(path + ": " + e.what());
  }
  try {
    return recipes_from_json(j);
  } catch (const RecipeFormatError& e) {
    throw RecipeFormatError(path + ": " + e.what());
  }
}

}  // namespace step
