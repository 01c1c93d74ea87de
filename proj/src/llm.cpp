#include "step/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace step {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string timestamp_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string env_or(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return v ? v : fallback;
}

}  // namespace

const char* to_string(ExpectedForm f) {
  switch (f) {
    case ExpectedForm::SubgoalLine: return "SubgoalLine";
    case ExpectedForm::VerdictToken: return "VerdictToken";
    case ExpectedForm::ActionLine: return "ActionLine";
  }
  return "?";
}

const char* to_string(TransportMode m) {
  switch (m) {
    case TransportMode::Live: return "live";
    case TransportMode::Record: return "record";
    case TransportMode::Replay: return "replay";
  }
  return "?";
}

std::optional<TransportMode> transport_mode_from_string(const std::string& s) {
  if (s == "live") return TransportMode::Live;
  if (s == "record") return TransportMode::Record;
  if (s == "replay") return TransportMode::Replay;
  return std::nullopt;
}

const char* to_string(TransportError::Kind k) {
  switch (k) {
    case TransportError::Kind::Timeout: return "Timeout";
    case TransportError::Kind::HttpStatus: return "HttpStatus";
    case TransportError::Kind::CassetteMiss: return "CassetteMiss";
  }
  return "?";
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string request_digest(const PromptBundle& b, const std::string& model, double temperature) {
  std::ostringstream os;
  os << "form=" << to_string(b.expected_form) << "\nmodel=" << model
     << "\ntemperature=" << temperature << "\n--system--\n"
     << b.system_text << "\n--user--\n" << b.user_text << '\n';
  return os.str();
}

std::string cassette_key(const std::string& digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(digest)));
  return buf;
}

Cassette Cassette::load(const std::string& path) {
  Cassette c;
  std::ifstream in(path);
  if (!in) return c;
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw std::runtime_error("malformed cassette: " + path);
  for (const auto& [key, val] : doc.items()) {
    if (!val.is_object() || !val.contains("request_digest") || !val.contains("response_text") ||
        !val.contains("timestamp") || !val["request_digest"].is_string() ||
        !val["response_text"].is_string() || !val["timestamp"].is_string())
      throw std::runtime_error("malformed cassette entry '" + key + "' in " + path);
    c.entries_[key] = {val["request_digest"].get<std::string>(),
                       val["response_text"].get<std::string>(),
                       val["timestamp"].get<std::string>()};
  }
  return c;
}

void Cassette::save(const std::string& path) const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [key, e] : entries_)  // std::map order: deterministic files
    doc[key] = {{"request_digest", e.request_digest},
                {"response_text", e.response_text},
                {"timestamp", e.timestamp}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cassette: " + path);
  out << doc.dump(2) << '\n';
}

const Cassette::Entry* Cassette::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void Cassette::store(const std::string& key, Entry e) { entries_[key] = std::move(e); }

LlmConfig LlmConfig::from_env() {
  LlmConfig cfg;
  cfg.base_url = env_or("STEP_LLM_BASE_URL", "");
  cfg.model = env_or("STEP_LLM_MODEL", "");
  cfg.api_key = env_or("STEP_LLM_API_KEY", "");
  return cfg;
}

LlmClient::LlmClient(LlmConfig config, TransportMode mode)
    : cfg_(std::move(config)), mode_(mode) {
  if (mode_ != TransportMode::Replay && cfg_.base_url.empty())
    throw std::invalid_argument("live/record transport requires base_url");
  if (mode_ != TransportMode::Live) {
    if (cfg_.cassette_path.empty())
      throw std::invalid_argument("record/replay transport requires cassette_path");
    if (mode_ == TransportMode::Replay && !std::filesystem::exists(cfg_.cassette_path))
      throw std::invalid_argument("replay requires an existing cassette: " + cfg_.cassette_path);
    cassette_ = Cassette::load(cfg_.cassette_path);
  }
}

std::string LlmClient::complete(const PromptBundle& bundle) {
  const std::string digest = request_digest(bundle, cfg_.model, cfg_.temperature);
  const std::string key = cassette_key(digest);

  if (mode_ == TransportMode::Replay) {
    std::lock_guard lk(mu_);
    const Cassette::Entry* e = cassette_.find(key);
    if (!e)
      throw TransportError(TransportError::Kind::CassetteMiss, "cassette miss: no entry " + key);
    if (e->request_digest != digest)
      throw TransportError(TransportError::Kind::CassetteMiss,
                           "cassette miss: request changed under " + key);
    return e->response_text;
  }

  std::string text = http_complete(bundle);
  if (mode_ == TransportMode::Record) {
    std::lock_guard lk(mu_);
    cassette_.store(key, {digest, text, timestamp_now()});
    cassette_.save(cfg_.cassette_path);
  }
  return text;
}

std::string LlmClient::http_complete(const PromptBundle& bundle) {
  httplib::Client cli(cfg_.base_url);
  cli.set_connection_timeout(cfg_.timeout_seconds, 0);
  cli.set_read_timeout(cfg_.timeout_seconds, 0);
  cli.set_write_timeout(cfg_.timeout_seconds, 0);

  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  nlohmann::ordered_json req = {
      {"model", cfg_.model},
      {"temperature", cfg_.temperature},
      {"messages",
       {{{"role", "system"}, {"content", bundle.system_text}},
        {{"role", "user"}, {"content", bundle.user_text}}}}};

  auto res = cli.Post("/v1/chat/completions", headers, req.dump(), "application/json");
  if (!res)
    throw TransportError(TransportError::Kind::Timeout,
                         "no response from " + cfg_.base_url + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError(TransportError::Kind::HttpStatus,
                         "HTTP " + std::to_string(res->status) + " from " + cfg_.base_url,
                         res->status);

  nlohmann::json body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("choices") || !body["choices"].is_array() ||
      body["choices"].empty() || !body["choices"][0].contains("message") ||
      !body["choices"][0]["message"].contains("content") ||
      !body["choices"][0]["message"]["content"].is_string())
    throw TransportError(TransportError::Kind::HttpStatus, "malformed completion body",
                         res->status);
  return body["choices"][0]["message"]["content"].get<std::string>();
}

PolicyResult parse_subgoal(const std::string& raw) {
  std::string t = trim(raw);
  if (t.find('\n') == std::string::npos) {
    if (t == "DONE") return EndOfSiblings{};
    constexpr const char* kPrefix = "SUBGOAL:";
    if (t.rfind(kPrefix, 0) == 0) {
      std::string text = trim(t.substr(std::strlen(kPrefix)));
      if (!text.empty()) return Subgoal{text};
    }
  }
  return PolicyError{PolicyError::Kind::GrammarError, raw};
}

std::optional<bool> parse_verdict(const std::string& raw) {
  std::string t = lower(trim(raw));
  if (t == "yes") return true;
  if (t == "no") return false;
  return std::nullopt;
}

PromptBundle render_decomposition_prompt(const DecompositionContext& ctx) {
  PromptBundle b;
  b.expected_form =
      ctx.mode == ContextMode::FlatBaseline ? ExpectedForm::ActionLine : ExpectedForm::SubgoalLine;
  if (b.expected_form == ExpectedForm::ActionLine) {
    b.system_text =
        "You control a one-gripper household robot. Given the goal, the actions taken so far, "
        "and the observation, produce the single next primitive action. Allowed forms: "
        "grasp <object> / put <object> on <surface> / put <object> in <container> / "
        "open <container> / close <container> / walk to <target>. Reply with exactly one line: "
        "'SUBGOAL: <action phrase>' to act, or 'DONE' when the goal needs nothing more.";
  } else {
    b.system_text =
        "You plan for a one-gripper household robot. Given the focus goal, what was done so far, "
        "and the observation, produce the single next subgoal toward the focus goal. Keep it one "
        "short imperative phrase. Reply with exactly one line: 'SUBGOAL: <phrase>' to continue, "
        "or 'DONE' when the focus goal needs nothing more.";
  }
  std::ostringstream os;
  os << "Focus: " << ctx.focus_text << '\n';
  if (ctx.prior_steps.empty()) {
    os << "Done so far: none\n";
  } else {
    os << "Done so far:\n";
    for (const auto& s : ctx.prior_steps) os << "- " << s << '\n';
  }
  os << "Observation: " << ctx.observation_digest << '\n';
  os << "Embodiment: " << ctx.embodiment_digest << '\n';
  os << "Reply now.";
  b.user_text = os.str();
  return b;
}

PromptBundle render_verdict_prompt(const CongruenceQuery& q, const std::string& obs_digest,
                                   const std::string& emb_digest) {
  PromptBundle b;
  b.expected_form = ExpectedForm::VerdictToken;
  b.system_text =
      "You audit a household robot's plan. Decide whether the candidate subgoal contributes to "
      "its parent goal from the current state, with no redundant or contrary work. Reply with "
      "exactly one word: YES or NO.";
  std::ostringstream os;
  os << "Parent goal: " << q.parent_text << '\n';
  os << "Candidate subgoal: " << q.subgoal_text << '\n';
  if (q.mapped) os << "Maps to action: " << render_action(*q.mapped) << '\n';
  os << "Previous sibling: " << (q.left_sibling_text ? *q.left_sibling_text : "none") << '\n';
  os << "Observation: " << obs_digest << '\n';
  os << "Embodiment: " << emb_digest << '\n';
  os << "Reply now.";
  b.user_text = os.str();
  return b;
}

std::string format_reminder(ExpectedForm form, int attempt) {
  std::ostringstream os;
  os << "\n\nFormat reminder (attempt " << attempt << "): your previous reply was not parseable. ";
  if (form == ExpectedForm::VerdictToken)
    os << "Reply with exactly one word: YES or NO.";
  else
    os << "Reply with exactly one line: 'SUBGOAL: <text>' or 'DONE'.";
  return os.str();
}

PolicyResponse LlmDecompositionPolicy::next_subgoal(const DecompositionContext& ctx) {
  PromptBundle b = render_decomposition_prompt(ctx);
  const int max_retries = client_.config().max_format_retries;
  for (int attempt = 0;; ++attempt) {
    std::string raw = client_.complete(b);
    PolicyResult r = parse_subgoal(raw);
    bool grammar = std::holds_alternative<PolicyError>(r) &&
                   std::get<PolicyError>(r).kind == PolicyError::Kind::GrammarError;
    if (!grammar || attempt == max_retries) return {std::move(r), attempt};
    b.user_text += format_reminder(b.expected_form, attempt + 1);
  }
}

std::variant<bool, PolicyError> LlmCongruenceJudge::congruent(const CongruenceQuery& q,
                                                              const WorldState& state,
                                                              const Observation& obs) {
  Embodiment emb;  // judged embodiment facts come from the digest
  (void)state;
  PromptBundle b = render_verdict_prompt(q, observation_digest(obs), embodiment_digest(emb));
  const int max_retries = client_.config().max_format_retries;
  std::string raw;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    raw = client_.complete(b);
    if (auto v = parse_verdict(raw)) return *v;
    b.user_text += format_reminder(b.expected_form, attempt + 1);
  }
  return PolicyError{PolicyError::Kind::GrammarError, raw};
}

}  // namespace step
