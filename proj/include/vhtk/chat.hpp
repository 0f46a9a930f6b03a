#pragma once
// Text-completion client contract used by LLM-backed negation and question
// rephrasing. The remote implementation lives in harness.hpp next to the
// rest of the HTTP machinery; this header stays light so the negation rules
// can be used without pulling in networking code.

#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "vhtk/errors.hpp"

namespace vhtk {

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the model's reply text; throws TransportError on failure.
  virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic stand-in for tests: replies come from a user-supplied
// function of the prompt. Records every prompt it sees.
class ScriptedChatClient : public ChatClient {
 public:
  explicit ScriptedChatClient(std::function<std::string(const std::string&)> reply_fn)
      : reply_fn_(std::move(reply_fn)) {}

  std::string complete(const std::string& prompt) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      prompts_.push_back(prompt);
    }
    return reply_fn_(prompt);
  }

  std::vector<std::string> prompts() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return prompts_;
  }

 private:
  std::function<std::string(const std::string&)> reply_fn_;
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
};

}  // namespace vhtk
