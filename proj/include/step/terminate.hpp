#pragma once

// Leaf termination: maps subgoal text onto the action grammar and judges the
// three consistency criteria. The verdict logic is the closed-loop core:
// consistency failures replan, unmappable-but-consistent text refines,
// mappable-and-consistent text executes.
//
// Grammar (see docs/grammar.md): grasp <obj> | put <obj> on <surface> |
// put <obj> in <container> | open <c> | close <c> | walk to <t>.
// Case-insensitive, articles stripped; names ground by class against visible
// objects and must resolve to exactly one action.

#include <optional>
#include <string>
#include <variant>

#include "step/decompose.hpp"
#include "step/tree.hpp"
#include "step/world.hpp"

namespace step {

// lowercase, articles (a/an/the) removed, whitespace collapsed, one trailing
// period tolerated
std::string normalize_text(const std::string& text);

std::optional<PrimitiveAction> check_mappability(const std::string& text, const Observation& obs);

// Natural-language rendering of an action ("put the tape in the drawer");
// inverse of check_mappability on scenes whose visible classes are unambiguous.
std::string render_action_text(const PrimitiveAction& a, const WorldState& s);

struct CriterionReport {
  bool mappable = false;
  std::optional<PrimitiveAction> mapped_action;
  bool affordance_ok = true;    // vacuously true when nothing mapped
  bool environment_ok = true;   // vacuously true when nothing mapped
  bool congruence_ok = true;
  std::optional<std::string> violated;  // first violated rule name
};

enum class VerdictKind : std::uint8_t { Execute, Refine, Replan };

const char* to_string(VerdictKind v);

struct TerminationVerdict {
  VerdictKind kind = VerdictKind::Refine;
  std::optional<PrimitiveAction> action;  // Execute only
  std::string reason;                     // Replan only
};

// Pure truth table over the four report booleans:
//   any consistency criterion false -> Replan (even when mappable);
//   all true and mappable -> Execute; all true and unmappable -> Refine.
VerdictKind verdict_from(const CriterionReport& r);

struct CongruenceQuery {
  std::string subgoal_text;
  std::optional<PrimitiveAction> mapped;
  std::string parent_text;
  std::optional<std::string> left_sibling_text;
};

class CongruenceJudge {
 public:
  virtual ~CongruenceJudge() = default;
  virtual std::variant<bool, PolicyError> congruent(const CongruenceQuery& q,
                                                    const WorldState& state,
                                                    const Observation& obs) = 0;
};

// Test helper: fixed answer.
class ConstantJudge : public CongruenceJudge {
 public:
  explicit ConstantJudge(bool answer) : answer_(answer) {}
  std::variant<bool, PolicyError> congruent(const CongruenceQuery&, const WorldState&,
                                            const Observation&) override {
    return answer_;
  }

 private:
  bool answer_;
};

// Affordance and environment are judged on the mapped action against the true
// state (vacuous without one); congruence is delegated to the judge.
std::variant<CriterionReport, PolicyError> check_consistency(
    const std::optional<PrimitiveAction>& mapped, const std::string& text,
    const SubgoalNode& parent, const std::optional<std::string>& left_sibling_text,
    const WorldState& state, const Observation& obs, const Embodiment& emb,
    CongruenceJudge& judge);

struct EvalOutcome {
  TerminationVerdict verdict;
  CriterionReport report;
};

std::variant<EvalOutcome, PolicyError> evaluate(const SubgoalNode& node, const SubgoalNode& parent,
                                                const std::optional<std::string>& left_sibling_text,
                                                const WorldState& state, const Observation& obs,
                                                const Embodiment& emb, CongruenceJudge& judge);

}  // namespace step
