#pragma once

#include <stdexcept>
#include <string>

namespace microgrid {

// Non-finite inputs to the closed-form market rates.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A parameter set violates a positivity or ordering invariant.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateMarketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AssemblyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BracketError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double time)
      : std::runtime_error(what + " (t=" + std::to_string(time) + ")"),
        time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Raised by the config parser; carries the offending key and 1-based line
// (0 when the key is missing altogether).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& key, int line, const std::string& message)
      : std::runtime_error(Format(key, line, message)), key_(key), line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  static std::string Format(const std::string& key, int line,
                            const std::string& message) {
    std::string out = "config key '" + key + "'";
    if (line > 0) out += " (line " + std::to_string(line) + ")";
    return out + ": " + message;
  }
  std::string key_;
  int line_;
};

}  // namespace microgrid
