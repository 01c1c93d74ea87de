#include "step/terminate.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <vector>

namespace step {

const char* to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::Execute: return "Execute";
    case VerdictKind::Refine: return "Refine";
    case VerdictKind::Replan: return "Replan";
  }
  return "?";
}

std::string normalize_text(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (unsigned char c : text) lowered.push_back(static_cast<char>(std::tolower(c)));
  while (!lowered.empty() && (lowered.back() == '.' || lowered.back() == ' '))
    lowered.pop_back();
  std::istringstream in(lowered);
  std::string tok, out;
  while (in >> tok) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

namespace {

std::vector<std::string> tokens_of(const std::string& normalized) {
  std::istringstream in(normalized);
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

// all visible objects whose class matches the (normalized) name
std::vector<ObjectId> ground(const Observation& obs, const std::string& name) {
  std::vector<ObjectId> ids;
  if (name.empty()) return ids;
  for (const auto& [id, obj] : obs.visible)
    if (normalize_text(obj.cls) == name) ids.push_back(id);
  return ids;
}

}  // namespace

std::optional<PrimitiveAction> check_mappability(const std::string& text, const Observation& obs) {
  auto toks = tokens_of(normalize_text(text));
  if (toks.empty()) return std::nullopt;

  std::vector<PrimitiveAction> parses;
  auto add_unary = [&](ActionKind kind, const std::string& name) {
    for (const auto& id : ground(obs, name)) parses.push_back({kind, id, {}});
  };

  if (toks[0] == "grasp" && toks.size() >= 2) {
    add_unary(ActionKind::Grasp, join(toks, 1, toks.size()));
  } else if (toks[0] == "open" && toks.size() >= 2) {
    add_unary(ActionKind::Open, join(toks, 1, toks.size()));
  } else if (toks[0] == "close" && toks.size() >= 2) {
    add_unary(ActionKind::Close, join(toks, 1, toks.size()));
  } else if (toks[0] == "walk" && toks.size() >= 3 && toks[1] == "to") {
    add_unary(ActionKind::Walk, join(toks, 2, toks.size()));
  } else if (toks[0] == "put" && toks.size() >= 4) {
    // every split at an "on"/"in" is a candidate parse; grounding disambiguates
    for (std::size_t sep = 2; sep + 1 < toks.size(); ++sep) {
      if (toks[sep] != "on" && toks[sep] != "in") continue;
      ActionKind kind = toks[sep] == "on" ? ActionKind::PutOn : ActionKind::PutIn;
      for (const auto& obj : ground(obs, join(toks, 1, sep)))
        for (const auto& dst : ground(obs, join(toks, sep + 1, toks.size())))
          parses.push_back({kind, obj, dst});
    }
  }

  std::sort(parses.begin(), parses.end());
  parses.erase(std::unique(parses.begin(), parses.end()), parses.end());
  if (parses.size() != 1) return std::nullopt;
  return parses[0];
}

std::string render_action_text(const PrimitiveAction& a, const WorldState& s) {
  auto cls = [&](const ObjectId& id) {
    const ObjectInstance* o = s.find(id);
    return o ? o->cls : id;
  };
  switch (a.kind) {
    case ActionKind::Walk: return "walk to the " + cls(a.a);
    case ActionKind::Grasp: return "grasp the " + cls(a.a);
    case ActionKind::PutOn: return "put the " + cls(a.a) + " on the " + cls(a.b);
    case ActionKind::PutIn: return "put the " + cls(a.a) + " in the " + cls(a.b);
    case ActionKind::Open: return "open the " + cls(a.a);
    case ActionKind::Close: return "close the " + cls(a.a);
  }
  return "?";
}

VerdictKind verdict_from(const CriterionReport& r) {
  if (!(r.affordance_ok && r.environment_ok && r.congruence_ok)) return VerdictKind::Replan;
  return r.mappable ? VerdictKind::Execute : VerdictKind::Refine;
}

std::variant<CriterionReport, PolicyError> check_consistency(
    const std::optional<PrimitiveAction>& mapped, const std::string& text,
    const SubgoalNode& parent, const std::optional<std::string>& left_sibling_text,
    const WorldState& state, const Observation& obs, const Embodiment& emb,
    CongruenceJudge& judge) {
  CriterionReport r;
  r.mappable = mapped.has_value();
  r.mapped_action = mapped;

  if (mapped) {
    auto aff = affordance_allows(state, emb, *mapped);
    r.affordance_ok = aff.ok;
    if (!aff.ok && !r.violated) r.violated = to_string(*aff.violated);
    auto env = legal_in_environment(state, *mapped);
    r.environment_ok = env.ok;
    if (!env.ok && !r.violated) r.violated = to_string(*env.violated);
  }

  CongruenceQuery q{text, mapped, parent.text, left_sibling_text};
  auto verdict = judge.congruent(q, state, obs);
  if (std::holds_alternative<PolicyError>(verdict)) return std::get<PolicyError>(verdict);
  r.congruence_ok = std::get<bool>(verdict);
  if (!r.congruence_ok && !r.violated) r.violated = "TaskIncongruent";
  return r;
}

std::variant<EvalOutcome, PolicyError> evaluate(const SubgoalNode& node, const SubgoalNode& parent,
                                                const std::optional<std::string>& left_sibling_text,
                                                const WorldState& state, const Observation& obs,
                                                const Embodiment& emb, CongruenceJudge& judge) {
  auto mapped = check_mappability(node.text, obs);
  auto checked = check_consistency(mapped, node.text, parent, left_sibling_text, state, obs, emb, judge);
  if (std::holds_alternative<PolicyError>(checked)) return std::get<PolicyError>(checked);

  EvalOutcome out;
  out.report = std::get<CriterionReport>(checked);
  out.verdict.kind = verdict_from(out.report);
  if (out.verdict.kind == VerdictKind::Execute) out.verdict.action = out.report.mapped_action;
  if (out.verdict.kind == VerdictKind::Replan)
    out.verdict.reason = out.report.violated.value_or("Inconsistent");
  return out;
}

}  // namespace step
