#pragma once

// Chat-completions backend with deterministic record/replay. Prompts are
// rendered canonically from the decomposition context; responses are parsed
// against strict single-line contracts so format drift surfaces as
// GrammarError instead of silent misbehavior. Cassettes key on a content hash
// of the full request, so a prompt change in replay mode fails loudly
// (CassetteMiss) rather than replaying a stale answer.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "step/decompose.hpp"
#include "step/terminate.hpp"

namespace step {

enum class ExpectedForm : std::uint8_t { SubgoalLine, VerdictToken, ActionLine };
enum class TransportMode : std::uint8_t { Live, Record, Replay };

const char* to_string(ExpectedForm f);
const char* to_string(TransportMode m);
std::optional<TransportMode> transport_mode_from_string(const std::string& s);

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  ExpectedForm expected_form = ExpectedForm::SubgoalLine;
};

struct TransportError : std::runtime_error {
  enum class Kind : std::uint8_t { Timeout, HttpStatus, CassetteMiss };
  Kind kind;
  int status;  // HttpStatus only
  TransportError(Kind k, const std::string& msg, int status_code = 0)
      : std::runtime_error(msg), kind(k), status(status_code) {}
};

const char* to_string(TransportError::Kind k);

// FNV-1a 64-bit over the canonical request digest; the cassette key.
std::uint64_t fnv1a64(const std::string& s);
std::string request_digest(const PromptBundle& b, const std::string& model, double temperature);
std::string cassette_key(const std::string& digest);

class Cassette {
 public:
  struct Entry {
    std::string request_digest;
    std::string response_text;
    std::string timestamp;
  };

  // Missing file loads empty; malformed JSON throws std::runtime_error.
  static Cassette load(const std::string& path);
  void save(const std::string& path) const;

  const Entry* find(const std::string& key) const;
  void store(const std::string& key, Entry e);
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Entry> entries_;
};

struct LlmConfig {
  std::string base_url;  // http://host:port — required for Live/Record
  std::string model;
  std::string api_key;   // optional; sent as a bearer token when set
  double temperature = 0.0;
  int timeout_seconds = 30;
  int max_format_retries = 2;  // re-asks after an unparseable reply
  std::string cassette_path;   // required for Record/Replay

  // STEP_LLM_BASE_URL / STEP_LLM_MODEL / STEP_LLM_API_KEY
  static LlmConfig from_env();
};

// Thread-safe for concurrent complete() calls; cassette writes are serialized
// and persisted immediately. Throws std::invalid_argument on configuration
// holes and TransportError on transport faults — transport problems are
// infrastructure failures, never policy outcomes.
class LlmClient {
 public:
  LlmClient(LlmConfig config, TransportMode mode);

  std::string complete(const PromptBundle& bundle);

  const LlmConfig& config() const { return cfg_; }
  TransportMode mode() const { return mode_; }

 private:
  std::string http_complete(const PromptBundle& bundle);

  LlmConfig cfg_;
  TransportMode mode_;
  Cassette cassette_;
  mutable std::mutex mu_;
};

// Strict single-line output contracts.
//   parse_subgoal: `SUBGOAL: <text>` -> Subgoal, `DONE` -> EndOfSiblings,
//                  anything else -> PolicyError{GrammarError, raw}.
//   parse_verdict: YES/NO (case-insensitive, trimmed) -> value, else nullopt.
PolicyResult parse_subgoal(const std::string& raw);
std::optional<bool> parse_verdict(const std::string& raw);

// Canonical prompt renderings (pinned by tests). Original prompt wording —
// deliberately terse, with the reply contract stated in the system text.
PromptBundle render_decomposition_prompt(const DecompositionContext& ctx);
PromptBundle render_verdict_prompt(const CongruenceQuery& q, const std::string& obs_digest,
                                   const std::string& emb_digest);
// Appended to the user text before a re-ask; numbered so every attempt has a
// distinct cassette key.
std::string format_reminder(ExpectedForm form, int attempt);

class LlmDecompositionPolicy : public DecompositionPolicy {
 public:
  explicit LlmDecompositionPolicy(LlmClient& client) : client_(client) {}
  PolicyResponse next_subgoal(const DecompositionContext& ctx) override;

 private:
  LlmClient& client_;
};

class LlmCongruenceJudge : public CongruenceJudge {
 public:
  explicit LlmCongruenceJudge(LlmClient& client) : client_(client) {}
  std::variant<bool, PolicyError> congruent(const CongruenceQuery& q, const WorldState& state,
                                            const Observation& obs) override;

 private:
  LlmClient& client_;
};

}  // namespace step
