#include "thinkstop/simtarget.hpp"

#include "thinkstop/error.hpp"

#include <httplib.h>

#include <thread>

namespace thinkstop {

struct SimServer::Impl {
  httplib::Server server;
  std::thread worker;
  std::string host;
};

SimServer::SimServer() : impl_(std::make_unique<Impl>()) {}

SimServer::~SimServer() { stop(); }

std::unique_ptr<SimServer> SimServer::start(SimBehavior behavior, const std::string& host, int port) {
  std::unique_ptr<SimServer> s(new SimServer());
  s->target_ = std::make_shared<SimTarget>(std::move(behavior));
  s->impl_->host = host;

  auto chat = [target = s->target_](const httplib::Request& req, httplib::Response& res) {
    auto reply = target->handle(req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  };
  auto& server = s->impl_->server;
  // httplib's default adds SO_REUSEPORT, which would let a second server share the port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  server.Post("/chat/completions", chat);
  server.Post("/v1/chat/completions", chat);
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  if (port == 0) {
    s->port_ = server.bind_to_any_port(host);
    if (s->port_ < 0) throw ConfigError("cannot bind " + host + " to an ephemeral port");
  } else {
    if (!server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    s->port_ = port;
  }
  s->impl_->worker = std::thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  return s;
}

std::string SimServer::base_url() const { return "http://" + impl_->host + ":" + std::to_string(port_); }

void SimServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace thinkstop
