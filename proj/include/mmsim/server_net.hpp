#pragma once

// Network front end for a Session: a UDP socket for native agent engines and
// a WebSocket bridge for browsers. One transport thread does all socket I/O
// and answers PINGs; one simulation thread owns the Session.

#include "mmsim/sim_server.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace mmsim {

struct ServeStats {
    std::uint64_t tick = 0;
    double sim_time_s = 0.0;
    std::size_t clients = 0;          // joined clients
    std::uint64_t datagrams_in = 0;
    std::uint64_t datagrams_out = 0;
    std::uint64_t queue_drops = 0;    // inbound datagrams dropped on a full queue
    std::uint64_t decode_errors = 0;
    std::int64_t max_tick_us = 0;     // slowest tick in the last second
};

struct ServeOptions {
    std::string bind_address = "0.0.0.0";
    std::uint16_t udp_port = net::kDefaultUdpPort;  // 0 picks a free port
    std::uint16_t ws_port = net::kDefaultWsPort;    // 0 picks a free port
    bool enable_ws = true;
    std::optional<std::string> log_path;            // replay log destination
    double duration_s = 0.0;                        // 0: until interrupted or every client left
    std::size_t queue_capacity = 4096;
    std::function<void(const ServeStats&)> on_stats;  // once per wall-clock second
};

class Server {
public:
    Server(SessionConfig config, ServeOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds the sockets. Throws std::system_error on failure.
    void bind();
    std::uint16_t udp_port() const;
    std::uint16_t ws_port() const;

    /// Runs until stop(), SIGINT/SIGTERM, the duration limit, or the last
    /// joined client leaving. Returns the final stats. Throws ReplayIoError
    /// if the log file cannot be created.
    ServeStats run();
    void stop();

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace mmsim
