#pragma once

#include "thinkstop/client.hpp"
#include "thinkstop/connect.hpp"
#include "thinkstop/simtarget.hpp"
#include "thinkstop/tokenizer.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace thinkstop::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(THINKSTOP_TEST_DATA) / name;
}

inline std::filesystem::path source_path(const std::string& name) {
  return std::filesystem::path(THINKSTOP_SOURCE_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("thinkstop-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline EndpointDescriptor sim_endpoint(bool supports_prefix = true) {
  EndpointDescriptor e;
  e.base_url = "sim://test";
  e.model_name = "sim-reasoner";
  e.supports_prefix = supports_prefix;
  e.retry_backoff_ms = 0;
  return e;
}

/// Client wired to an in-process simulator.
struct SimRig {
  std::shared_ptr<SimTarget> target;
  ChatClient client;

  explicit SimRig(SimBehavior b)
      : target(std::make_shared<SimTarget>(b)),
        client(sim_endpoint(b.supports_prefix), std::make_shared<SimTransport>(target)) {}
};

/// Body of a chat-completion reply.
inline std::string chat_body(const std::optional<std::string>& content,
                             const std::optional<std::string>& reasoning = std::nullopt) {
  nlohmann::json message{{"role", "assistant"}};
  message["content"] = content ? nlohmann::json(*content) : nlohmann::json(nullptr);
  message["reasoning_content"] = reasoning ? nlohmann::json(*reasoning) : nlohmann::json(nullptr);
  return nlohmann::json{{"choices", nlohmann::json::array({nlohmann::json{{"index", 0}, {"message", message}}})}}.dump();
}

/// Compressor mock: answers with the first floor(ratio * n) tokens of the user text.
inline ChatClient ratio_compressor(double ratio, std::shared_ptr<std::atomic<int>> calls = nullptr) {
  auto transport = std::make_shared<FunctionTransport>([ratio, calls](const std::string&, const std::string& body) {
    if (calls) ++*calls;
    const auto req = parse_request(body);
    const Tokenizer tok;
    const auto& text = req.messages.back().content;
    const auto keep = static_cast<std::size_t>(static_cast<double>(tok.count(text)) * ratio);
    return HttpReply{200, chat_body(std::string(tok.truncate(text, keep)))};
  });
  EndpointDescriptor e = sim_endpoint(false);
  e.base_url = "mock://compressor";
  return ChatClient(e, transport);
}

/// Text of exactly n tokens under ws-punct-v1.
inline std::string words(std::size_t n, const std::string& word = "step") {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += word;
  }
  return s;
}

}  // namespace thinkstop::testing
