#include "dnr/providers.hpp"

#include <algorithm>
#include <cstdlib>

namespace dnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename Fn>
auto with_retries(int max_retries, int* attempts, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 1;; ++attempt) {
    if (attempts) *attempts = attempt;
    try {
      return fn();
    } catch (const TransientError& e) {
      if (attempt > max_retries) {
        throw Error(ErrorCode::kTransportError,
                    std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
      }
    }
  }
}

fs::path resolve(const fs::path& base_dir, const std::string& path) {
  fs::path p(path);
  return (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
}

json read_script(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kConfigError, "mock script " + path.string() + " not found");
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, "mock script " + path.string() + ": " + e.what());
  }
}

}  // namespace

void ProviderConfig::check() const {
  if (!(timeout_s > 0.0)) throw Error(ErrorCode::kConfigError, "timeout_s must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::kConfigError, "max_retries must be >= 0");
  if (provider != "http" && !is_mock()) {
    throw Error(ErrorCode::kConfigError, "provider must be \"http\" or \"mock:<script>\"");
  }
  if (is_mock() && mock_script().empty()) {
    throw Error(ErrorCode::kConfigError, "mock provider needs a script path");
  }
}

json provider_config_to_json(const ProviderConfig& cfg) {
  return json{{"provider", cfg.provider},       {"endpoint_url", cfg.endpoint_url},
              {"model_name", cfg.model_name},   {"auth_token_env", cfg.auth_token_env},
              {"timeout_s", cfg.timeout_s},     {"max_retries", cfg.max_retries},
              {"temperature", cfg.temperature}};
}

ProviderConfig provider_config_from_json(const json& j) {
  ProviderConfig cfg;
  cfg.provider = j.value("provider", cfg.provider);
  cfg.endpoint_url = j.value("endpoint_url", cfg.endpoint_url);
  cfg.model_name = j.value("model_name", cfg.model_name);
  cfg.auth_token_env = j.value("auth_token_env", cfg.auth_token_env);
  cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
  cfg.max_retries = j.value("max_retries", cfg.max_retries);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.check();
  return cfg;
}

std::size_t ChatRequest::total_chars() const {
  std::size_t n = 0;
  for (const auto& m : messages) n += m.text.size();
  return n;
}

std::string ChatRequest::user_text() const {
  std::string out;
  for (const auto& m : messages) {
    if (m.role != "user") continue;
    if (!out.empty()) out += "\n";
    out += m.text;
  }
  return out;
}

MockChatBackend::MockChatBackend(json script) : script_(std::move(script)) {
  if (!script_.is_object()) throw Error(ErrorCode::kConfigError, "mock chat script must be an object");
}

std::shared_ptr<MockChatBackend> MockChatBackend::from_file(const fs::path& path) {
  return std::make_shared<MockChatBackend>(read_script(path));
}

std::string MockChatBackend::send(const ChatRequest& request) {
  const std::size_t call = calls_++;
  if (script_.value("unavailable", false)) {
    throw TransientError("mock endpoint unavailable");
  }
  if (call < script_.value("transient_failures", std::size_t{0})) {
    throw TransientError("mock endpoint returned HTTP 503");
  }
  const std::size_t cap = script_.value("max_prompt_chars", std::size_t{0});
  if (cap > 0 && request.total_chars() > cap) {
    throw Error(ErrorCode::kContextOverflow, "request has " + std::to_string(request.total_chars()) +
                                                 " characters, mock limit is " + std::to_string(cap));
  }
  const std::string text = request.user_text();
  if (script_.contains("rules")) {
    for (const auto& rule : script_.at("rules")) {
      if (text.find(rule.at("contains").get<std::string>()) != std::string::npos) {
        if (rule.value("unavailable", false)) throw TransientError("mock endpoint unavailable");
        return rule.at("response").get<std::string>();
      }
    }
  }
  if (script_.contains("default")) return script_.at("default").get<std::string>();
  throw Error(ErrorCode::kTransportError, "mock script has no response for this request");
}

MockEmbeddingBackend::MockEmbeddingBackend(json script) : script_(std::move(script)) {
  if (!script_.is_object()) {
    throw Error(ErrorCode::kConfigError, "mock embedding script must be an object");
  }
}

std::shared_ptr<MockEmbeddingBackend> MockEmbeddingBackend::from_file(const fs::path& path) {
  return std::make_shared<MockEmbeddingBackend>(read_script(path));
}

std::vector<double> MockEmbeddingBackend::embed_image(const std::string& image_path) {
  if (script_.value("unavailable", false)) throw TransientError("mock embedder unavailable");
  const json vectors = script_.value("vectors", json::object());
  for (const std::string& key : {image_path, fs::path(image_path).filename().string()}) {
    if (vectors.contains(key)) return vectors.at(key).get<std::vector<double>>();
  }
  if (script_.contains("default")) return script_.at("default").get<std::vector<double>>();
  throw Error(ErrorCode::kMissingFile, "mock embedder has no vector for " + image_path);
}

std::shared_ptr<ChatBackend> make_chat_backend(const ProviderConfig& cfg, const fs::path& base_dir) {
  cfg.check();
  if (cfg.is_mock()) return MockChatBackend::from_file(resolve(base_dir, cfg.mock_script()));
  return std::make_shared<HttpChatBackend>(cfg);
}

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ProviderConfig& cfg,
                                                         const fs::path& base_dir) {
  cfg.check();
  if (cfg.is_mock()) return MockEmbeddingBackend::from_file(resolve(base_dir, cfg.mock_script()));
  return std::make_shared<HttpEmbeddingBackend>(cfg);
}

std::string send_with_retries(ChatBackend& backend, const ChatRequest& request, int max_retries,
                              int* attempts) {
  return with_retries(max_retries, attempts, [&] { return backend.send(request); });
}

PlannerOutput parse_plan_response(std::string_view text) {
  PlannerOutput out;
  out.raw_text = std::string(text);
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    // Accept "1. Reach[cup]" and "- Reach[cup]" list styles.
    std::size_t digits = 0;
    while (digits < line.size() && line[digits] >= '0' && line[digits] <= '9') ++digits;
    if (digits > 0 && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
      line = trim(line.substr(digits + 1));
    } else if (!line.empty() && (line.front() == '-' || line.front() == '*')) {
      line = trim(line.substr(1));
    }
    if (line.empty() || line.starts_with("```")) continue;
    try {
      out.plan.push_back(parse_skill(line));
    } catch (const Error&) {
      out.skipped_lines.emplace_back(line);
    }
  }
  return out;
}

Planner::Planner(std::shared_ptr<ChatBackend> backend, ProviderConfig cfg)
    : backend_(std::move(backend)), cfg_(std::move(cfg)) {}

std::string Planner::system_prompt() {
  return "You are a robot task planner. Decompose the task into atomic skills.\n"
         "Write one skill per line as Verb[object] or Verb[movable_object, target_object], "
         "using verbs such as Reach, Move, Grasp, Release, Place, Insert, Close, Push, Pull, "
         "Lift, Rotate. Write nothing else.";
}

PlannerOutput Planner::plan(std::string_view instruction, std::string_view scene_state_text) const {
  ChatRequest request{{{"system", system_prompt(), {}},
                       {"user",
                        "Instruction: " + std::string(instruction) + "\nObservation: " +
                            std::string(scene_state_text),
                        {}}}};
  int attempts = 0;
  const std::string text = send_with_retries(*backend_, request, cfg_.max_retries, &attempts);
  PlannerOutput out = parse_plan_response(text);
  out.attempts = attempts;
  return out;
}

Completer::Completer(std::shared_ptr<ChatBackend> backend, ProviderConfig cfg)
    : backend_(std::move(backend)), cfg_(std::move(cfg)) {}

Completion Completer::complete(const PromptBundle& prompt) const {
  ChatRequest request{{{"system", prompt.system_text, {}}, {"user", prompt.user_text(), {}}}};
  Completion out;
  out.text = send_with_retries(*backend_, request, cfg_.max_retries, &out.attempts);
  return out;
}

ChatAnnotator::ChatAnnotator(std::shared_ptr<ChatBackend> backend, ProviderConfig cfg)
    : backend_(std::move(backend)), cfg_(std::move(cfg)) {}

AnnotatorResult ChatAnnotator::annotate(const AnnotationRequest& request,
                                        std::string_view feedback) {
  ChatMessage user{"user", build_annotation_prompt(request, feedback), {}};
  for (const auto& image : {request.start_image_ref, request.end_image_ref}) {
    if (!image.empty()) user.image_paths.push_back(image);
  }
  ChatRequest chat{{std::move(user)}};
  AnnotatorResult result;
  result.raw_label_text = send_with_retries(*backend_, chat, cfg_.max_retries);
  return result;
}

std::vector<double> read_embedding_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, path.string() + " does not exist");
  std::vector<double> values;
  try {
    const json j = json::parse(read_text_file(path));
    values = (j.is_object() ? j.at("embedding") : j).get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
  return l2_normalized(std::move(values));
}

Embedder::Embedder(std::shared_ptr<EmbeddingBackend> backend, ProviderConfig cfg)
    : backend_(std::move(backend)), cfg_(std::move(cfg)) {}

void Embedder::expect_dimension(std::size_t dim) {
  std::size_t unset = 0;
  if (!dimension_.compare_exchange_strong(unset, dim) && unset != dim) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding dimension " + std::to_string(dim) +
                                                   " differs from established " + std::to_string(unset));
  }
}

EmbeddingVector Embedder::check_dimension(std::vector<double> values) {
  EmbeddingVector v(std::move(values));
  expect_dimension(v.dimension());
  return v;
}

EmbeddingVector Embedder::embed(const EmbeddingSource& source) {
  if (source.kind == EmbeddingSource::Kind::kPrecomputed) {
    return check_dimension(read_embedding_file(source.path));
  }
  if (!backend_) throw Error(ErrorCode::kConfigError, "no embedding provider configured");
  auto values = with_retries(cfg_.max_retries, nullptr,
                             [&] { return backend_->embed_image(source.path); });
  return check_dimension(std::move(values));
}

}  // namespace dnr
