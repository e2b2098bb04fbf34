#pragma once

#include <stdexcept>
#include <string>

namespace arqsec {

// Invalid model or experiment parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain of a closed-form expression (e.g. P <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed caller input such as key parts of unequal length.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bayes step eliminated every grid point of a belief.
class DegeneratePosterior : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multicast encapsulation requested before every member acknowledged V_g.
class NotReadyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Attacker script references an event that has not happened yet.
class ScriptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail

}  // namespace arqsec
