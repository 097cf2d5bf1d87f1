#include "finrag/llmgen.hpp"

#include <cctype>
#include <cmath>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace finrag::llmgen {

const std::string kInstruction =
    "given the contexts, your generated response to the above question must only be a single "
    "numerical number only (without any symbols nor texts), or a numerical number with a "
    "percentage sign only, or just yes/no, whichever applicable.";

const std::vector<FewShotExample>& default_few_shot_examples() {
  static const std::vector<FewShotExample> examples = {
      {"as of and for the years ended december 31 , the operating income of 2003 is 1039 ; "
       "the operating income of 2002 ( 1 ) is 695 ; the operating income of 2001 ( 1 ) is "
       "1717 ; what was the percentage change in operating income for entities in which the "
       "company has the ability to exercise significant influence but does not control and "
       "that are accounted for using the equity method between 2002 and 2003?",
       "0.4949."},
      {"in millions except for per share data the diluted-as reported of 2005 is $ 4.55 ; in "
       "millions except for per share data the diluted-pro forma of 2005 is 4.52 ; was "
       "diluted-as reported net income per share greater than diluted-pro forma net income "
       "per share?",
       "Yes."},
  };
  return examples;
}

PromptConfig PromptConfig::zero_shot() { return PromptConfig{}; }

PromptConfig PromptConfig::few_shot() {
  PromptConfig cfg;
  cfg.mode = PromptMode::FewShot;
  cfg.few_shot_examples = default_few_shot_examples();
  return cfg;
}

std::string build_prompt(const std::vector<std::string>& context_sentences,
                         const std::string& question, const PromptConfig& config) {
  std::string out;
  if (config.mode == PromptMode::FewShot) {
    for (const auto& ex : config.few_shot_examples) {
      out += ex.context_and_question;
      out += ' ';
      out += config.instruction;
      out += ' ';
      out += ex.answer;
      out += '\n';
    }
  }
  for (const auto& s : context_sentences) {
    out += s;
    out += '\n';
  }
  out += question;
  out += '\n';
  out += config.instruction;
  return out;
}

// ---------------------------------------------------------------------------
// answer normalization

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::optional<double> match_full_number(const std::string& s, bool& was_percent) {
  size_t i = 0;
  double sign = 1.0;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
    if (s[i] == '-') sign = -1.0;
    ++i;
  }
  if (i < s.size() && s[i] == '$') {
    ++i;
    while (i < s.size() && s[i] == ' ') ++i;
  }
  std::string digits;
  size_t start = i;
  while (i < s.size() && (is_digit(s[i]) || s[i] == ',')) {
    if (s[i] != ',') digits += s[i];
    ++i;
  }
  if (i < s.size() && s[i] == '.') {
    digits += '.';
    ++i;
    while (i < s.size() && is_digit(s[i])) digits += s[i++];
  }
  if (i == start || digits.empty() || digits == ".") return std::nullopt;
  if (i < s.size() && s[i] == '%') {
    was_percent = true;
    ++i;
  }
  if (i != s.size()) return std::nullopt;
  try {
    return sign * std::stod(digits);
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

NormalizedAnswer parse_answer(const std::string& raw) {
  std::string t = trim(raw);
  if (!t.empty() && (t.back() == '.' || t.back() == '!')) {
    t.pop_back();  // sentence-final punctuation
    t = trim(t);
  }
  if (t.empty()) return Unparseable{trim(raw)};
  std::string low = lowercase(t);
  if (low == "yes") return YesNoAnswer{true};
  if (low == "no") return YesNoAnswer{false};
  bool was_percent = false;
  if (auto v = match_full_number(t, was_percent)) {
    return NumberAnswer{was_percent ? *v / 100.0 : *v, was_percent};
  }
  return Unparseable{trim(raw)};
}

bool answers_match(const NormalizedAnswer& pred, const std::string& gold, double epsilon) {
  NormalizedAnswer g = parse_answer(gold);
  if (std::holds_alternative<Unparseable>(g)) {
    throw BadGoldError("gold answer '" + gold + "' is not a number or yes/no");
  }
  if (const auto* py = std::get_if<YesNoAnswer>(&pred)) {
    const auto* gy = std::get_if<YesNoAnswer>(&g);
    return gy && gy->value == py->value;
  }
  if (const auto* pn = std::get_if<NumberAnswer>(&pred)) {
    const auto* gn = std::get_if<NumberAnswer>(&g);
    if (!gn) return false;
    double tol = epsilon * std::max(1.0, std::fabs(gn->value));
    for (double candidate : {pn->value, pn->value / 100.0, pn->value * 100.0}) {
      if (std::fabs(candidate - gn->value) <= tol) return true;
    }
    return false;
  }
  return false;
}

// ---------------------------------------------------------------------------
// generator client

namespace {

struct ParsedEndpoint {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  std::string rest = endpoint;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  ParsedEndpoint out;
  size_t slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) out.path = rest.substr(slash);
  size_t colon = hostport.rfind(':');
  if (colon != std::string::npos) {
    out.host = hostport.substr(0, colon);
    out.port = std::stoi(hostport.substr(colon + 1));
  } else {
    out.host = hostport;
  }
  if (out.host.empty()) {
    throw ClientError(ClientError::Kind::Transport, "endpoint '" + endpoint + "' has no host");
  }
  return out;
}

bool is_timeout(httplib::Error err) {
  return err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
         err == httplib::Error::Write;
}

}  // namespace

std::string call_generator(const std::string& endpoint, const std::string& prompt,
                           std::chrono::milliseconds timeout, const RetryPolicy& retry) {
  ParsedEndpoint ep = parse_endpoint(endpoint);
  nlohmann::json body_json{{"prompt", prompt}};
  std::string body = body_json.dump();

  ClientError::Kind last_kind = ClientError::Kind::Transport;
  std::string last_msg = "no attempt made";
  auto backoff = retry.initial_backoff;
  for (int attempt = 0; attempt <= retry.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client cli(ep.host, ep.port);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());

    auto res = cli.Post(ep.path, body, "application/json");
    if (!res) {
      last_kind = is_timeout(res.error()) ? ClientError::Kind::Timeout
                                          : ClientError::Kind::Transport;
      last_msg = "request to " + endpoint + " failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_kind = ClientError::Kind::Transport;
      last_msg = "server returned status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ClientError(ClientError::Kind::Transport,
                        "server returned status " + std::to_string(res->status));
    }
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ClientError(ClientError::Kind::MalformedResponse,
                        std::string("response is not JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("text") || !doc["text"].is_string()) {
      throw ClientError(ClientError::Kind::MalformedResponse,
                        "response lacks a string 'text' field");
    }
    return doc["text"].get<std::string>();
  }
  throw ClientError(last_kind, last_msg + " (after " + std::to_string(retry.max_retries + 1) +
                                   " attempts)");
}

}  // namespace finrag::llmgen
