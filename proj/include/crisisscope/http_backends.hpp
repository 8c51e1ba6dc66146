#pragma once

// Encoder and generator backends served over HTTP/JSON.
//
//   POST {url}/encode    {"texts": [str]}                 -> {"embeddings": [[float]]}
//   POST {url}/generate  {"text": str, "max_tokens": int} -> {"text": str}

#include <chrono>
#include <string>
#include <utility>
#include <vector>

// Eigen first: httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen's headers.
#include "crisisscope/encoder.hpp"
#include "crisisscope/error.hpp"
#include "crisisscope/summarize.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace crisisscope {

namespace detail {

inline nlohmann::json post_json(const std::string& base_url, const std::string& path, const nlohmann::json& body,
                                std::chrono::milliseconds timeout, const std::string& who) {
  httplib::Client client(base_url);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw BackendError(who + ": " + base_url + path + " unreachable (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw BackendError(who + ": " + base_url + path + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(who + ": malformed response body: " + e.what());
  }
}

}  // namespace detail

class HttpEncoder final : public EncoderBackend {
 public:
  HttpEncoder(std::string url, std::size_t dimension, std::string model_tag = "",
              std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : url_(std::move(url)), dim_(dimension), tag_(std::move(model_tag)), timeout_(timeout) {
    if (dim_ == 0) throw ValidationError("http encoder: dimension must be positive");
  }

  std::string name() const override { return "http"; }
  std::size_t dimension() const override { return dim_; }
  std::string identity() const override {
    return "http:" + url_ + ":d=" + std::to_string(dim_) + (tag_.empty() ? "" : ":model=" + tag_);
  }

 protected:
  std::vector<Embedding> do_encode(std::span<const std::string> texts) const override {
    const auto j = detail::post_json(url_, "/encode", {{"texts", std::vector<std::string>(texts.begin(), texts.end())}},
                                     timeout_, "http encoder");
    std::vector<Embedding> out;
    try {
      for (const auto& row : j.at("embeddings")) out.push_back(embedding_from_json(row));
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("http encoder: bad response: ") + e.what());
    }
    return out;
  }

 private:
  std::string url_;
  std::size_t dim_;
  std::string tag_;
  std::chrono::milliseconds timeout_;
};

class HttpGenerator final : public GenerationBackend {
 public:
  HttpGenerator(std::string url, std::size_t max_input_tokens, std::string model_tag = "",
                std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : url_(std::move(url)), max_input_(max_input_tokens), tag_(std::move(model_tag)), timeout_(timeout) {}

  std::string name() const override { return "http"; }
  std::string identity() const override {
    return "http:" + url_ + ":max_input=" + std::to_string(max_input_) + (tag_.empty() ? "" : ":model=" + tag_);
  }
  std::size_t max_input_tokens() const override { return max_input_; }

 protected:
  std::string do_generate(const std::string& source, std::size_t max_tokens) const override {
    const auto j = detail::post_json(url_, "/generate", {{"text", source}, {"max_tokens", max_tokens}}, timeout_,
                                     "http generator");
    if (!j.contains("text") || !j["text"].is_string()) throw BackendError("http generator: response lacks 'text'");
    return j["text"].get<std::string>();
  }

 private:
  std::string url_;
  std::size_t max_input_;
  std::string tag_;
  std::chrono::milliseconds timeout_;
};

}  // namespace crisisscope
