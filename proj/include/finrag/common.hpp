#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace finrag {

// Base for all library errors; `kind()` is a stable machine-readable tag.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Shortest decimal representation that round-trips the double.
std::string format_number(double value);

// Splits on runs of whitespace.
std::vector<std::string> whitespace_tokens(std::string_view text);
size_t count_tokens(std::string_view text);

std::string trim(std::string_view text);
std::string lowercase(std::string_view text);

// FNV-1a, used wherever a platform-stable hash is required.
uint64_t stable_hash(std::string_view text, uint64_t seed = 0);

// Deterministic splitmix64-based generator. std:: distributions are not
// bit-stable across standard libraries, so sampling helpers live here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next_u64();
  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  int uniform_int(int lo, int hi);     // inclusive bounds
  double normal(double mean = 0.0, double stddev = 1.0);

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace finrag
