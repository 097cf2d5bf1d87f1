#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "finrag/common.hpp"

namespace finrag::llmgen {

class ClientError : public Error {
 public:
  enum class Kind { Timeout, Transport, MalformedResponse };
  ClientError(Kind kind, const std::string& msg) : Error(tag(kind), msg), kind_(kind) {}
  Kind client_kind() const { return kind_; }

 private:
  static std::string tag(Kind k) {
    switch (k) {
      case Kind::Timeout: return "timeout";
      case Kind::Transport: return "transport";
      case Kind::MalformedResponse: return "malformed_response";
    }
    return "client";
  }
  Kind kind_;
};

class BadGoldError : public Error {
 public:
  explicit BadGoldError(const std::string& msg) : Error("bad_gold", msg) {}
};

// The fixed instruction appended to every prompt.
extern const std::string kInstruction;

struct FewShotExample {
  std::string context_and_question;
  std::string answer;
};

// The two bundled worked examples (percentage change; yes/no comparison).
const std::vector<FewShotExample>& default_few_shot_examples();

enum class PromptMode { ZeroShot, FewShot };

struct PromptConfig {
  PromptMode mode = PromptMode::ZeroShot;
  std::vector<FewShotExample> few_shot_examples;  // required for FewShot
  std::string instruction = kInstruction;

  static PromptConfig zero_shot();
  static PromptConfig few_shot();  // with the default examples
};

// Examples first (context+question, instruction, answer each), then the
// retrieved context sentences, the question, and the instruction last.
std::string build_prompt(const std::vector<std::string>& context_sentences,
                         const std::string& question, const PromptConfig& config);

struct NumberAnswer {
  double value = 0.0;
  bool was_percent = false;  // value already divided by 100
};
struct YesNoAnswer {
  bool value = false;
};
struct Unparseable {
  std::string raw;
};

using NormalizedAnswer = std::variant<NumberAnswer, YesNoAnswer, Unparseable>;

// Total over arbitrary input: yes/no (case-insensitive), a number with
// optional $ , % decorations ("94.17%" -> 0.9417 percent), else Unparseable.
NormalizedAnswer parse_answer(const std::string& raw);

// Numbers match when any of {v, v/100, v*100} is within
// epsilon * max(1, |gold|) of the parsed gold value.
bool answers_match(const NormalizedAnswer& pred, const std::string& gold, double epsilon);

inline constexpr double kDefaultEpsilon = 1e-3;

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
};

// POST {"prompt": ...} to an http endpoint, returns the response "text".
std::string call_generator(const std::string& endpoint, const std::string& prompt,
                           std::chrono::milliseconds timeout,
                           const RetryPolicy& retry = {});

}  // namespace finrag::llmgen
