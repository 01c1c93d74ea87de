// Builds the committed replay cassette: runs the scripted backend over the
// bundled suite and stores, for every prompt the LLM backend would have
// issued, the scripted decision rendered in the LLM line format. Replaying
// the cassette through the llm backend then reproduces the scripted episodes
// byte for byte. The timestamp is pinned so re-recording is reproducible.
//
// Usage: record_cassette [suite_dir] [recipes_file] [cassette_out]

#include <cstdio>
#include <variant>

#include "step/eval.hpp"
#include "step/llm.hpp"
#include "step/recipes.hpp"

namespace step {
namespace {

constexpr const char* kModel = "scripted-mirror";
constexpr double kTemperature = 0.0;
constexpr const char* kTimestamp = "1970-01-01T00:00:00Z";

void record(Cassette& cas, const PromptBundle& b, const std::string& response) {
  const std::string digest = request_digest(b, kModel, kTemperature);
  cas.store(cassette_key(digest), {digest, response, kTimestamp});
}

class MirrorPolicy : public DecompositionPolicy {
 public:
  MirrorPolicy(const RecipeTable& table, Cassette& cas) : inner_(table), cas_(cas) {}

  PolicyResponse next_subgoal(const DecompositionContext& ctx) override {
    PolicyResponse r = inner_.next_subgoal(ctx);
    if (const auto* sub = std::get_if<Subgoal>(&r.result))
      record(cas_, render_decomposition_prompt(ctx), "SUBGOAL: " + sub->text);
    else if (std::holds_alternative<EndOfSiblings>(r.result))
      record(cas_, render_decomposition_prompt(ctx), "DONE");
    // policy errors are not decisions; nothing to record
    return r;
  }

 private:
  ScriptedPolicy inner_;
  Cassette& cas_;
};

class MirrorJudge : public CongruenceJudge {
 public:
  MirrorJudge(const RecipeTable& table, Cassette& cas) : inner_(table), cas_(cas) {}

  std::variant<bool, PolicyError> congruent(const CongruenceQuery& q, const WorldState& state,
                                            const Observation& obs) override {
    auto r = inner_.congruent(q, state, obs);
    if (const bool* v = std::get_if<bool>(&r)) {
      Embodiment emb;  // same default the llm judge digests
      record(cas_, render_verdict_prompt(q, observation_digest(obs), embodiment_digest(emb)),
             *v ? "YES" : "NO");
    }
    return r;
  }

 private:
  ScriptedCongruenceJudge inner_;
  Cassette& cas_;
};

}  // namespace
}  // namespace step

int main(int argc, char** argv) {
  using namespace step;
  const std::string suite_dir = argc > 1 ? argv[1] : "data/tasks";
  const std::string recipes_file = argc > 2 ? argv[2] : "data/recipes/default.json";
  const std::string out = argc > 3 ? argv[3] : "data/cassettes/scripted_mirror.json";

  const RecipeTable table = load_recipes(recipes_file);
  const std::vector<TaskSpec> tasks = load_suite(suite_dir);

  Cassette cas;
  for (const TaskSpec& task : tasks) {
    MirrorPolicy policy(table, cas);
    MirrorJudge judge(table, cas);
    EpisodeTrace t = run_episode(task, policy, judge, PlannerConfig{});
    if (!t.outcome.success) {
      std::fprintf(stderr, "scripted run failed on %s; cassette not written\n", task.id.c_str());
      return 1;
    }
  }
  cas.save(out);
  std::printf("%zu entries -> %s\n", cas.size(), out.c_str());
  return 0;
}
