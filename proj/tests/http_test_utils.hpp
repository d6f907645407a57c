#pragma once

// Minimal local chat-completions server for exercising the live gateway path.

#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace confcal::testhttp {

class TestServer {
public:
    explicit TestServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~TestServer() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

inline std::string chat_body(const std::string& text) {
    return nlohmann::json{
        {"choices",
         nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", text}}},
                                 {"finish_reason", "stop"}}})}}
        .dump();
}

} // namespace confcal::testhttp
