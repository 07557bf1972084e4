#pragma once

// Clients for the external models: planning agent, completer (the in-context
// LLM), vision-language annotator and visual embedder. Chat and embedding
// calls use OpenAI-compatible request/response shapes over HTTP(S); a
// provider string of the form "mock:<script.json>" swaps in a scripted,
// deterministic backend instead.
//
// Mock chat script:
//   {
//     "rules": [{"contains": "stack", "response": "Reach[cup]\nGrasp[cup]"}],
//     "default": "...",            // used when no rule matches
//     "unavailable": false,        // every call fails as a transport error
//     "transient_failures": 0,     // first N calls fail with a retryable 503
//     "max_prompt_chars": 0        // > 0 rejects longer requests
//   }
// Rules match against the user message text, first match wins. A rule with
// "unavailable": true fails like an unreachable endpoint instead.
//
// Mock embedding script:
//   {"vectors": {"images/q1.png": [..], "q1.png": [..]}, "default": [..]}

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnr/error.hpp"
#include "dnr/prompt_builder.hpp"
#include "dnr/retrieval_dynamic.hpp"
#include "dnr/skill_collection.hpp"
#include "dnr/skill_grammar.hpp"

namespace dnr {

struct ProviderConfig {
  std::string provider = "http";  // "http" or "mock:<script-file>"
  std::string endpoint_url;
  std::string model_name;
  std::string auth_token_env;  // name of the variable holding the bearer token
  double timeout_s = 60.0;
  int max_retries = 2;
  double temperature = 0.0;

  bool is_mock() const { return provider.starts_with("mock:"); }
  std::string mock_script() const { return is_mock() ? provider.substr(5) : std::string(); }
  void check() const;  // kConfigError

  friend bool operator==(const ProviderConfig&, const ProviderConfig&) = default;
};

nlohmann::json provider_config_to_json(const ProviderConfig& cfg);
ProviderConfig provider_config_from_json(const nlohmann::json& j);

// A retryable failure (connection error, timeout, HTTP 429/5xx).
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message)
      : Error(ErrorCode::kTransportError, message) {}
};

struct ChatMessage {
  std::string role;  // "system" or "user"
  std::string text;
  std::vector<std::string> image_paths;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;

  std::size_t total_chars() const;
  std::string user_text() const;
};

// Performs a single attempt; retry policy lives in the callers.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string send(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<double> embed_image(const std::string& image_path) = 0;
};

// OpenAI-compatible chat completions endpoint (the full URL, e.g.
// http://host:8000/v1/chat/completions).
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(ProviderConfig cfg);
  std::string send(const ChatRequest& request) override;

  // The JSON body sent for `request`; exposed for wire-format tests.
  nlohmann::json request_body(const ChatRequest& request) const;

 private:
  ProviderConfig cfg_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(ProviderConfig cfg);
  std::vector<double> embed_image(const std::string& image_path) override;

 private:
  ProviderConfig cfg_;
};

class MockChatBackend : public ChatBackend {
 public:
  explicit MockChatBackend(nlohmann::json script);
  static std::shared_ptr<MockChatBackend> from_file(const std::filesystem::path& path);

  std::string send(const ChatRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  nlohmann::json script_;
  std::atomic<std::size_t> calls_{0};
};

class MockEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(nlohmann::json script);
  static std::shared_ptr<MockEmbeddingBackend> from_file(const std::filesystem::path& path);

  std::vector<double> embed_image(const std::string& image_path) override;

 private:
  nlohmann::json script_;
};

// Mock script paths are resolved against `base_dir` when relative.
std::shared_ptr<ChatBackend> make_chat_backend(const ProviderConfig& cfg,
                                               const std::filesystem::path& base_dir = {});
std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ProviderConfig& cfg,
                                                         const std::filesystem::path& base_dir = {});

// Sends with up to max_retries retries on TransientError. `attempts` receives
// the number of attempts made. The final transient failure is rethrown as
// Error(kTransportError).
std::string send_with_retries(ChatBackend& backend, const ChatRequest& request, int max_retries,
                              int* attempts = nullptr);

struct PlannerOutput {
  SkillSequence plan;
  std::string raw_text;
  std::vector<std::string> skipped_lines;
  int attempts = 0;
};

// Parses one label per line; lines that do not parse are skipped.
PlannerOutput parse_plan_response(std::string_view text);

class Planner {
 public:
  Planner(std::shared_ptr<ChatBackend> backend, ProviderConfig cfg);
  PlannerOutput plan(std::string_view instruction, std::string_view scene_state_text) const;

  static std::string system_prompt();

 private:
  std::shared_ptr<ChatBackend> backend_;
  ProviderConfig cfg_;
};

struct Completion {
  std::string text;
  int attempts = 0;
};

class Completer {
 public:
  Completer(std::shared_ptr<ChatBackend> backend, ProviderConfig cfg);
  Completion complete(const PromptBundle& prompt) const;

 private:
  std::shared_ptr<ChatBackend> backend_;
  ProviderConfig cfg_;
};

class ChatAnnotator : public Annotator {
 public:
  ChatAnnotator(std::shared_ptr<ChatBackend> backend, ProviderConfig cfg);
  AnnotatorResult annotate(const AnnotationRequest& request, std::string_view feedback) override;

 private:
  std::shared_ptr<ChatBackend> backend_;
  ProviderConfig cfg_;
};

struct EmbeddingSource {
  enum class Kind { kPrecomputed, kImage };

  Kind kind = Kind::kPrecomputed;
  std::string path;

  static EmbeddingSource precomputed(std::string p) { return {Kind::kPrecomputed, std::move(p)}; }
  static EmbeddingSource image(std::string p) { return {Kind::kImage, std::move(p)}; }
};

// Reads a JSON float array (or {"embedding": [...]}) and normalizes it.
// Throws kMissingFile, kMalformedRecord or kZeroVector.
std::vector<double> read_embedding_file(const std::filesystem::path& path);

class Embedder {
 public:
  Embedder(std::shared_ptr<EmbeddingBackend> backend, ProviderConfig cfg);

  // The first successful call fixes the dimension; later calls with another
  // dimension throw kDimensionMismatch.
  EmbeddingVector embed(const EmbeddingSource& source);
  std::size_t dimension() const { return dimension_.load(); }
  void expect_dimension(std::size_t dim);

 private:
  EmbeddingVector check_dimension(std::vector<double> values);

  std::shared_ptr<EmbeddingBackend> backend_;
  ProviderConfig cfg_;
  std::atomic<std::size_t> dimension_{0};
};

std::string image_data_uri(const std::filesystem::path& path);

}  // namespace dnr
