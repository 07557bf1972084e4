#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "dnr/providers.hpp"

namespace dnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfigError, "endpoint_url '" + url + "' has no scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Headers auth_headers(const ProviderConfig& cfg) {
  httplib::Headers headers;
  if (cfg.auth_token_env.empty()) return headers;
  const char* token = std::getenv(cfg.auth_token_env.c_str());
  if (token == nullptr || *token == '\0') {
    throw Error(ErrorCode::kAuthMissing, "environment variable " + cfg.auth_token_env + " is not set");
  }
  headers.emplace("Authorization", std::string("Bearer ") + token);
  return headers;
}

json post_json(const ProviderConfig& cfg, const json& body) {
  const auto url = split_url(cfg.endpoint_url);
  const auto headers = auth_headers(cfg);

  httplib::Client client(url.origin);
  const auto seconds = static_cast<time_t>(cfg.timeout_s);
  const auto micros = static_cast<time_t>((cfg.timeout_s - static_cast<double>(seconds)) * 1e6);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);

  auto response = client.Post(url.path, headers, body.dump(), "application/json");
  if (!response) {
    throw TransientError("POST " + cfg.endpoint_url + " failed: " + httplib::to_string(response.error()));
  }
  const int status = response->status;
  if (status == 429 || status >= 500) {
    throw TransientError("POST " + cfg.endpoint_url + " returned HTTP " + std::to_string(status));
  }
  if (status == 413 || (status == 400 && (response->body.find("context") != std::string::npos ||
                                          response->body.find("too long") != std::string::npos))) {
    throw Error(ErrorCode::kContextOverflow, "provider rejected the request length: " + response->body);
  }
  if (status < 200 || status >= 300) {
    throw Error(ErrorCode::kTransportError,
                "POST " + cfg.endpoint_url + " returned HTTP " + std::to_string(status) + ": " +
                    response->body);
  }
  try {
    return json::parse(response->body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kTransportError, "unparseable provider response: " + std::string(e.what()));
  }
}

}  // namespace

std::string image_data_uri(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, path.string() + " does not exist");
  std::string ext = ascii_lower(path.extension().string());
  std::string mime = "application/octet-stream";
  if (ext == ".png") mime = "image/png";
  if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
  if (ext == ".webp") mime = "image/webp";
  return "data:" + mime + ";base64," + httplib::detail::base64_encode(read_text_file(path));
}

HttpChatBackend::HttpChatBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {}

json HttpChatBackend::request_body(const ChatRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages) {
    if (m.image_paths.empty()) {
      messages.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    json parts = json::array({{{"type", "text"}, {"text", m.text}}});
    for (const auto& image : m.image_paths) {
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", image_data_uri(image)}}}});
    }
    messages.push_back({{"role", m.role}, {"content", std::move(parts)}});
  }
  return json{{"model", cfg_.model_name}, {"temperature", cfg_.temperature}, {"messages", messages}};
}

std::string HttpChatBackend::send(const ChatRequest& request) {
  const json reply = post_json(cfg_, request_body(request));
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kTransportError, "chat response missing choices[0].message.content");
  }
}

HttpEmbeddingBackend::HttpEmbeddingBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {}

std::vector<double> HttpEmbeddingBackend::embed_image(const std::string& image_path) {
  const json body{{"model", cfg_.model_name}, {"input", image_data_uri(image_path)}};
  const json reply = post_json(cfg_, body);
  try {
    return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kTransportError, "embedding response missing data[0].embedding");
  }
}

}  // namespace dnr
