#pragma once
// Model evaluation harness: the model-client contract, scripted mock
// clients for offline runs, a chat-completions HTTP client for real
// endpoints, batch evaluation with repetitions, and fine-tuning data
// export.
//
// Remote wire format (request):
//   POST {base_url}/chat/completions
//   {"model": ..., "temperature": ...,
//    "messages": [{"role": "user", "content": [
//       {"type": "text", "text": <question>},
//       {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}]}]}
// The reply text is the first choice's message content. The bearer token
// comes from the environment variable named in the client config.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vhtk/chat.hpp"
#include "vhtk/dataset.hpp"
#include "vhtk/errors.hpp"
#include "vhtk/image_io.hpp"
#include "vhtk/metrics.hpp"
#include "vhtk/rng.hpp"

namespace vhtk {

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string name() const = 0;
  virtual bool supports_temperature() const { return true; }
  virtual int max_concurrency() const { return 1; }
  // Returns raw reply text; throws TransportError on delivery failure.
  virtual std::string answer(const std::string& image_path, const std::string& question,
                             double temperature) = 0;
};

namespace detail {

inline std::string base64_encode(const std::uint8_t* data, std::size_t len) {
  static const char table[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < len; i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += table[(v >> 6) & 63];
    out += table[v & 63];
  }
  if (i + 1 == len) {
    const std::uint32_t v = data[i] << 16;
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == len) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += table[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}
  void acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int count_;
};

struct SemaphoreGuard {
  explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  Semaphore& sem;
};

// Worker pool over [0, n); rethrows the first worker exception.
template <typename Fn>
inline void parallel_for_bounded(std::size_t n, int max_workers, Fn fn) {
  if (n == 0) return;
  const unsigned workers = std::max(
      1u, std::min({static_cast<unsigned>(std::max(1, max_workers)),
                    std::thread::hardware_concurrency() * 4, static_cast<unsigned>(n)}));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto body = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct ParsedUrl {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // leading path, no trailing slash
};

inline ParsedUrl parse_base_url(const std::string& base_url) {
  const std::size_t scheme = base_url.find("://");
  if (scheme == std::string::npos)
    throw ConfigError("base_url must include a scheme: " + base_url);
  const std::size_t slash = base_url.find('/', scheme + 3);
  ParsedUrl u;
  if (slash == std::string::npos) {
    u.origin = base_url;
  } else {
    u.origin = base_url.substr(0, slash);
    u.path_prefix = base_url.substr(slash);
    while (!u.path_prefix.empty() && u.path_prefix.back() == '/')
      u.path_prefix.pop_back();
  }
  return u;
}

}  // namespace detail

struct RetryPolicy {
  int attempts = 3;     // total tries, not retries
  int backoff_ms = 250; // initial backoff, doubled per retry
};

struct RemoteClientConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env_var = "VHTK_API_KEY";
  int max_concurrent_requests = 4;
  RetryPolicy retry;
  int timeout_seconds = 60;

  void validate() const {
    if (base_url.empty()) throw ConfigError("remote client: base_url is required");
    if (model_name.empty()) throw ConfigError("remote client: model_name is required");
    if (max_concurrent_requests < 1)
      throw ConfigError("remote client: max_concurrent_requests must be >= 1");
    if (retry.attempts < 1) throw ConfigError("remote client: attempts must be >= 1");
  }
};

namespace detail {

inline std::string env_api_key(const RemoteClientConfig& config) {
  config.validate();
  const char* key = std::getenv(config.api_key_env_var.c_str());
  if (!key || !*key)
    throw ConfigError("environment variable " + config.api_key_env_var +
                      " is not set (required for " + config.base_url + ")");
  return key;
}

inline bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

// POST {base_url}/chat/completions with retry/backoff; returns the first
// choice's message content.
inline std::string chat_completions_post(const RemoteClientConfig& config,
                                         const std::string& api_key,
                                         const nlohmann::json& body) {
  const ParsedUrl url = parse_base_url(config.base_url);
  std::string last_failure = "no attempts made";
  int backoff_ms = config.retry.backoff_ms;
  for (int attempt = 1; attempt <= config.retry.attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    httplib::Client cli(url.origin);
    cli.set_connection_timeout(config.timeout_seconds, 0);
    cli.set_read_timeout(config.timeout_seconds, 0);
    cli.set_write_timeout(config.timeout_seconds, 0);
    httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};
    auto res = cli.Post(url.path_prefix + "/chat/completions", headers, body.dump(),
                        "application/json");
    if (!res) {
      last_failure = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      try {
        const nlohmann::json j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed chat completion response: ") +
                             e.what());
      }
    }
    if (detail::retryable_status(res->status)) {
      last_failure = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        try {
          backoff_ms = std::max(backoff_ms,
                                1000 * std::stoi(res->get_header_value("Retry-After")));
        } catch (...) {
        }
      }
      continue;
    }
    throw TransportError("HTTP " + std::to_string(res->status) + " from " +
                         config.base_url + ": " + res->body.substr(0, 200));
  }
  throw TransportError("request failed after " + std::to_string(config.retry.attempts) +
                       " attempts: " + last_failure);
}

}  // namespace detail

struct MockPolicy {
  enum class Kind { AlwaysYes, AlwaysNo, Oracle, NoisyOracle, RandomGuess };
  Kind kind = Kind::Oracle;
  double p_correct = 1.0;  // NoisyOracle
  double p_yes = 0.5;      // RandomGuess
  std::uint64_t seed = 0;

  void validate() const {
    if (p_correct < 0.0 || p_correct > 1.0 || p_yes < 0.0 || p_yes > 1.0)
      throw ConfigError("mock probabilities must lie in [0,1]");
  }
};

inline std::string to_string(MockPolicy::Kind k) {
  switch (k) {
    case MockPolicy::Kind::AlwaysYes: return "always-yes";
    case MockPolicy::Kind::AlwaysNo: return "always-no";
    case MockPolicy::Kind::Oracle: return "oracle";
    case MockPolicy::Kind::NoisyOracle: return "noisy-oracle";
    case MockPolicy::Kind::RandomGuess: return "random-guess";
  }
  throw Error("bad MockPolicy::Kind");
}

// Offline stand-in for an MLLM. Oracle variants look the ground truth up in
// the dataset they were built from; stochastic variants derive their draw
// from (seed, request key, per-key call count), so results are bit-stable
// no matter how calls interleave across threads.
class MockModelClient : public ModelClient {
 public:
  explicit MockModelClient(MockPolicy policy) : policy_(policy) { policy_.validate(); }

  MockModelClient(MockPolicy policy, const Dataset& ds) : MockModelClient(policy) {
    for (const auto& c : ds.cases)
      truth_[ds.resolve_image_path(c)].emplace_back(c.question, c.answer);
  }

  std::string name() const override { return "mock:" + to_string(policy_.kind); }
  int max_concurrency() const override { return 8; }

  std::string answer(const std::string& image_path, const std::string& question,
                     double /*temperature*/) override {
    switch (policy_.kind) {
      case MockPolicy::Kind::AlwaysYes: return "Yes";
      case MockPolicy::Kind::AlwaysNo: return "No";
      case MockPolicy::Kind::Oracle:
        return to_string(lookup_truth(image_path, question));
      case MockPolicy::Kind::NoisyOracle: {
        const Answer truth = lookup_truth(image_path, question);
        const double u = draw(image_path, question);
        return to_string(u < policy_.p_correct ? truth : flip(truth));
      }
      case MockPolicy::Kind::RandomGuess: {
        const double u = draw(image_path, question);
        return u < policy_.p_yes ? "yes" : "no";
      }
    }
    throw Error("bad MockPolicy::Kind");
  }

 private:
  Answer lookup_truth(const std::string& image_path, const std::string& question) const {
    const auto it = truth_.find(image_path);
    if (it == truth_.end())
      throw Error("oracle mock: unknown image \"" + image_path + "\"");
    // the harness may append an instruction suffix; match the longest
    // stored question that prefixes what we received
    const std::pair<std::string, Answer>* best = nullptr;
    for (const auto& entry : it->second) {
      if (question.rfind(entry.first, 0) != 0) continue;
      if (!best || entry.first.size() > best->first.size()) best = &entry;
    }
    if (!best)
      throw Error("oracle mock: unknown question \"" + question + "\"");
    return best->second;
  }

  double draw(const std::string& image_path, const std::string& question) {
    const std::string key = image_path + "\x1f" + question;
    std::uint64_t call = 0;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      call = counters_[key]++;
    }
    Rng rng(derive_seed(policy_.seed ^ fnv1a64(key), call));
    return rng.uniform01();
  }

  MockPolicy policy_;
  std::map<std::string, std::vector<std::pair<std::string, Answer>>> truth_;
  std::mutex mutex_;
  std::map<std::string, std::uint64_t> counters_;
};

class RemoteModelClient : public ModelClient {
 public:
  explicit RemoteModelClient(RemoteClientConfig config)
      : config_(std::move(config)),
        api_key_(detail::env_api_key(config_)),
        semaphore_(config_.max_concurrent_requests) {}

  std::string name() const override { return "remote:" + config_.model_name; }
  int max_concurrency() const override { return config_.max_concurrent_requests; }

  std::string answer(const std::string& image_path, const std::string& question,
                     double temperature) override {
    const std::vector<std::uint8_t> bytes = read_file_bytes(image_path);
    const char* mime = looks_like_png(bytes.data(), bytes.size()) ? "image/png"
                       : looks_like_jpeg(bytes.data(), bytes.size())
                           ? "image/jpeg"
                           : nullptr;
    if (!mime) throw Error("unsupported image format for upload: " + image_path);
    const std::string data_url = std::string("data:") + mime + ";base64," +
                                 detail::base64_encode(bytes.data(), bytes.size());
    nlohmann::json body = {
        {"model", config_.model_name},
        {"temperature", temperature},
        {"messages",
         {{{"role", "user"},
           {"content",
            {{{"type", "text"}, {"text", question}},
             {{"type", "image_url"}, {"image_url", {{"url", data_url}}}}}}}}}};
    detail::SemaphoreGuard guard(semaphore_);
    return detail::chat_completions_post(config_, api_key_, body);
  }

 private:
  RemoteClientConfig config_;
  std::string api_key_;
  detail::Semaphore semaphore_;
};

class RemoteChatClient : public ChatClient {
 public:
  explicit RemoteChatClient(RemoteClientConfig config)
      : config_(std::move(config)),
        api_key_(detail::env_api_key(config_)),
        semaphore_(config_.max_concurrent_requests) {}

  std::string complete(const std::string& prompt) override {
    nlohmann::json body = {{"model", config_.model_name},
                           {"temperature", 0.0},
                           {"messages", {{{"role", "user"}, {"content", prompt}}}}};
    detail::SemaphoreGuard guard(semaphore_);
    return detail::chat_completions_post(config_, api_key_, body);
  }

  int max_concurrency() const { return config_.max_concurrent_requests; }

 private:
  RemoteClientConfig config_;
  std::string api_key_;
  detail::Semaphore semaphore_;
};

struct EvalRunConfig {
  int repetitions = 1;
  double temperature = 0.0;
  // Raw MLLM replies are free-form; this suffix nudges them into parseable
  // yes/no shape. Configurable and recorded in the run manifest.
  std::string answer_instruction_suffix = "Answer with yes or no.";

  void validate() const {
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
  }
};

// One outcome per (case, repetition). Transport failures become Unknown
// outcomes with an error annotation; they are never dropped, so
// #outcomes == #cases * repetitions always holds. Repetitions of a case run
// in order on one worker; cases fan out up to the client's concurrency cap.
inline std::vector<EvalOutcome> evaluate(const Dataset& ds, ModelClient& client,
                                         const EvalRunConfig& run = {}) {
  run.validate();
  const std::size_t n = ds.cases.size();
  const int reps = run.repetitions;
  std::vector<EvalOutcome> outcomes(n * static_cast<std::size_t>(reps));

  detail::parallel_for_bounded(n, client.max_concurrency(), [&](std::size_t i) {
    const TestCase& c = ds.cases[i];
    const std::string image_path = ds.resolve_image_path(c);
    std::string question = c.question;
    if (!run.answer_instruction_suffix.empty())
      question += " " + run.answer_instruction_suffix;
    for (int r = 0; r < reps; ++r) {
      EvalOutcome o;
      o.case_id = c.id;
      o.repetition_index = r;
      o.temperature = run.temperature;
      try {
        o.raw_response = client.answer(image_path, question, run.temperature);
      } catch (const TransportError& e) {
        o.raw_response.clear();
        o.error = e.what();
      }
      o.normalized = o.error ? NormalizedAnswer::Unknown
                             : normalize_answer(o.raw_response);
      o.correct = answer_matches(o.normalized, c.answer);
      outcomes[i * static_cast<std::size_t>(reps) + r] = std::move(o);
    }
  });

  std::sort(outcomes.begin(), outcomes.end(),
            [](const EvalOutcome& a, const EvalOutcome& b) {
              if (a.case_id != b.case_id) return a.case_id < b.case_id;
              return a.repetition_index < b.repetition_index;
            });
  return outcomes;
}

// First-repetition incorrectness per case; feeds adversarial mode selection.
inline std::map<std::string, bool> vh_flags(const std::vector<EvalOutcome>& outcomes,
                                            const Dataset& ds) {
  std::map<std::string, bool> flags;
  const auto table = detail::outcome_table(outcomes);
  for (const auto& c : ds.cases) {
    const auto it = table.find(c.id);
    if (it == table.end() || it->second.empty())
      throw Error("vh_flags: no outcome for case \"" + c.id + "\"");
    flags[c.id] = !it->second.begin()->second;
  }
  return flags;
}

inline void save_flags(const std::map<std::string, bool>& flags,
                       const std::string& path) {
  nlohmann::ordered_json j;
  for (const auto& [id, v] : flags) j[id] = v;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write flags: " + path);
  out << j.dump(2) << "\n";
}

inline std::map<std::string, bool> load_flags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open flags file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed flags file " + path + ": " + e.what());
  }
  std::map<std::string, bool> flags;
  for (const auto& [id, v] : j.items()) flags[id] = v.get<bool>();
  return flags;
}

inline constexpr const char* kDefaultRephrasePrompt =
    "Rephrase the following question, keeping its meaning and its yes/no "
    "answer unchanged. You should only return the rephrased question. The "
    "question is: [{question}].";

struct FinetuneExportStats {
  std::size_t base_records = 0;
  std::size_t variant_records = 0;
  std::size_t skipped_variants = 0;
  std::vector<std::string> warnings;

  std::size_t total_records() const { return base_records + variant_records; }
};

// Instruction-tuning export: one JSONL record per case plus rephrase_count
// question variants when a rephraser is supplied. A failing rephrase skips
// that variant with a warning; the base record is always written.
inline FinetuneExportStats export_finetune_data(const Dataset& ds,
                                                const std::string& out_path,
                                                ChatClient* rephraser = nullptr,
                                                int rephrase_count = 0,
                                                std::string prompt_template =
                                                    kDefaultRephrasePrompt) {
  if (rephrase_count < 0) throw ConfigError("rephrase_count must be >= 0");
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write export: " + out_path);
  const std::filesystem::path out_dir =
      std::filesystem::path(out_path).parent_path();

  FinetuneExportStats stats;
  auto emit = [&](const TestCase& c, const std::string& question) {
    std::error_code ec;
    std::filesystem::path resolved(ds.resolve_image_path(c));
    std::filesystem::path rel = std::filesystem::proximate(resolved, out_dir, ec);
    nlohmann::ordered_json j;
    j["image"] = (ec ? resolved : rel).generic_string();
    j["question"] = question;
    j["answer"] = to_string(c.answer);
    out << j.dump() << "\n";
  };

  for (const auto& c : ds.cases) {
    emit(c, c.question);
    ++stats.base_records;
    if (!rephraser || rephrase_count == 0) continue;
    std::string prompt = prompt_template;
    const std::string placeholder = "{question}";
    const std::size_t at = prompt.find(placeholder);
    if (at != std::string::npos) prompt.replace(at, placeholder.size(), c.question);
    for (int k = 0; k < rephrase_count; ++k) {
      try {
        std::string variant = rephraser->complete(prompt);
        while (!variant.empty() && std::isspace(static_cast<unsigned char>(variant.back())))
          variant.pop_back();
        while (!variant.empty() && std::isspace(static_cast<unsigned char>(variant.front())))
          variant.erase(variant.begin());
        if (variant.empty() || variant.find('\n') != std::string::npos)
          throw NonConformingReplyError("rephrase reply empty or multi-line");
        emit(c, variant);
        ++stats.variant_records;
      } catch (const Error& e) {
        ++stats.skipped_variants;
        stats.warnings.push_back("case \"" + c.id + "\" variant " +
                                 std::to_string(k + 1) + " skipped: " + e.what());
      }
    }
  }
  if (!out) throw IoError("export write failed: " + out_path);
  return stats;
}

}  // namespace vhtk
