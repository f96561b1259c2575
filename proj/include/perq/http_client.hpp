#pragma once

#include <optional>
#include <string>

#include "perq/error.hpp"

namespace perq {

/// Single-turn completion request: {model, prompt, max_tokens, temperature}.
struct CompletionRequest {
  std::string model;
  std::string prompt;
  int max_tokens = 256;
  double temperature = 0.0;
};

/// A failed call that is worth retrying (network error, timeout, non-2xx).
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message) : Error(ErrorKind::Judge, "TransientError", message) {}
};

struct Endpoint {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path;              // e.g. "/v1/completions"
};

/// Splits "http[s]://host[:port]/path". Throws ValidationError on anything else.
Endpoint parse_endpoint(const std::string& url);

/// Extracts generated text from common completion response shapes:
/// choices[0].text, choices[0].message.content, text, response, content.
std::string completion_text_from_response(const std::string& body);

/// POSTs one completion request. Blocking; one connection per call.
std::string post_completion(const Endpoint& endpoint, const CompletionRequest& request,
                            const std::optional<std::string>& api_key, double timeout_s);

}  // namespace perq
