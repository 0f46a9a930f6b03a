#pragma once

#include <stdexcept>
#include <string>

namespace vhtk {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad CLI flags, config files, or client setup (e.g. missing API key env var).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Rule-based negation cannot parse the question form.
class UnhandledFormError : public Error {
 public:
  using Error::Error;
};

// Attempt to negate a case that is itself a negation.
class ChainedNegationError : public Error {
 public:
  using Error::Error;
};

// LLM reply rejected (empty, multi-line, ...).
class NonConformingReplyError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

// Backend does not implement the requested capability (e.g. gradients).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Attack optimization aborted (non-finite loss).
class AttackError : public Error {
 public:
  using Error::Error;
};

}  // namespace vhtk
