#include <httplib.h>

#include "textsynth/llm_gateway.hpp"

namespace textsynth {

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw Error("base URL needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

HttpChatBackend::HttpChatBackend(HttpBackendOptions options) : options_(std::move(options)) {
  split_base_url(options_.base_url);  // validates
}

json HttpChatBackend::request_body(const ChatPrompt& prompt, const std::string& model) {
  json messages = json::array();
  if (prompt.system) messages.push_back({{"role", "system"}, {"content", *prompt.system}});
  messages.push_back({{"role", "user"}, {"content", prompt.user}});
  json body = {{"model", model},
               {"messages", messages},
               {"temperature", prompt.params.temperature},
               {"max_tokens", prompt.params.max_tokens}};
  if (!prompt.params.stop.empty()) body["stop"] = prompt.params.stop;
  return body;
}

BackendReply HttpChatBackend::send(const ChatPrompt& prompt) {
  const auto [origin, prefix] = split_base_url(options_.base_url);
  httplib::Client client(origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), usec.count());
  client.set_read_timeout(seconds.count(), usec.count());
  client.set_write_timeout(seconds.count(), usec.count());

  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  BackendReply reply;
  reply.model_id = options_.model;
  const auto res = client.Post(prefix + "/chat/completions", headers,
                               request_body(prompt, options_.model).dump(), "application/json");
  if (!res) {
    reply.status = 0;
    reply.error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  if (res->status != 200) {
    reply.error = res->body.substr(0, 256);
    return reply;
  }
  try {
    const json body = json::parse(res->body);
    const auto& choices = body.at("choices");
    if (!choices.empty()) {
      const auto& content = choices.at(0).at("message").at("content");
      if (content.is_string()) reply.text = content.get<std::string>();
    }
    if (body.contains("usage")) {
      reply.prompt_tokens = body["usage"].value("prompt_tokens", std::size_t{0});
      reply.completion_tokens = body["usage"].value("completion_tokens", std::size_t{0});
    }
    if (body.contains("model") && body["model"].is_string()) reply.model_id = body["model"];
  } catch (const json::exception& e) {
    reply.error = std::string("unparseable response: ") + e.what();
  }
  return reply;
}

}  // namespace textsynth
