#include "perq/http_client.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cmath>

#include "perq/io.hpp"

namespace perq {

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint: missing scheme in '" + url + "'");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ValidationError("endpoint: unsupported scheme '" + scheme + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, path_start);
  ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (ep.scheme_host_port.size() <= scheme_end + 3) throw ValidationError("endpoint: missing host in '" + url + "'");
  return ep;
}

std::string completion_text_from_response(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw TransientError(std::string("response is not JSON: ") + e.what());
  }
  if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    const auto& c = doc["choices"][0];
    if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
    if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string()) {
      return c["message"]["content"].get<std::string>();
    }
  }
  for (const char* key : {"text", "response", "content"}) {
    if (doc.contains(key) && doc[key].is_string()) return doc[key].get<std::string>();
  }
  throw TransientError("response has no completion text");
}

std::string post_completion(const Endpoint& endpoint, const CompletionRequest& request,
                            const std::optional<std::string>& api_key, double timeout_s) {
  httplib::Client client(endpoint.scheme_host_port);
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - std::floor(timeout_s)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (api_key && !api_key->empty()) headers.emplace("Authorization", "Bearer " + *api_key);

  const json payload = {{"model", request.model},
                        {"prompt", request.prompt},
                        {"max_tokens", request.max_tokens},
                        {"temperature", request.temperature}};
  auto res = client.Post(endpoint.path, headers, payload.dump(), "application/json");
  if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw TransientError("HTTP " + std::to_string(res->status));
  }
  return completion_text_from_response(res->body);
}

}  // namespace perq
