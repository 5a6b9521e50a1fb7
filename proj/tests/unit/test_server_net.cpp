#include <doctest.h>

#include "../support/client.hpp"
#include "../support/fixtures.hpp"
#include "mmsim/server_net.hpp"
#include "mmsim/ws_codec.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <thread>

using namespace mmsim;

namespace {

// A plain blocking socket with a receive timeout, closed on scope exit.
struct Sock {
    int fd = -1;
    explicit Sock(int type)
    {
        fd = ::socket(AF_INET, type, 0);
        timeval tv{0, 200'000};
        ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    }
    ~Sock() { ::close(fd); }
    Sock(const Sock&) = delete;
    Sock& operator=(const Sock&) = delete;
};

sockaddr_in loopback(std::uint16_t port)
{
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(port);
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    return a;
}

// Runs a server on free ports in a background thread.
struct Running {
    Server server;
    std::thread thread;
    ServeStats final{};

    explicit Running(const std::string& scenario)
        : server(
              [&] {
                  SessionConfig cfg;
                  cfg.scenario = fixtures::scenario(scenario);
                  return cfg;
              }(),
              [] {
                  ServeOptions o;
                  o.bind_address = "127.0.0.1";
                  o.udp_port = 0;
                  o.ws_port = 0;
                  o.duration_s = 20.0;
                  return o;
              }())
    {
        server.bind();
        thread = std::thread([this] { final = server.run(); });
    }
    ~Running()
    {
        server.stop();
        thread.join();
    }
};

template <class Pred>
std::optional<net::Message> udp_wait(int fd, Pred pred, double seconds = 3.0)
{
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    std::uint8_t buf[2048];
    while (std::chrono::steady_clock::now() < until) {
        const auto n = ::recv(fd, buf, sizeof buf, 0);
        if (n <= 0) continue;
        auto d = net::decode(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
        if (d.ok() && pred(*d.message)) return d.message;
    }
    return std::nullopt;
}

void send_all(int fd, const std::vector<std::uint8_t>& bytes)
{
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = ::send(fd, bytes.data() + off, bytes.size() - off, 0);
        REQUIRE(n > 0);
        off += static_cast<std::size_t>(n);
    }
}

}  // namespace

TEST_CASE("UDP join, ping and snapshots over loopback")
{
    Running r("crossing_human_car.json");
    REQUIRE(r.server.udp_port() != 0);
    Sock s(SOCK_DGRAM);
    const auto addr = loopback(r.server.udp_port());
    REQUIRE(::connect(s.fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0);

    fixtures::FakeClient c;
    const auto hello = c.hello(AgentKind::Driver);
    ::send(s.fd, hello.data(), hello.size(), 0);
    const auto welcome = udp_wait(s.fd, [](const net::Message& m) { return m.type() == net::MsgType::Welcome; });
    REQUIRE(welcome);
    c.agent = static_cast<std::uint16_t>(std::get<net::Welcome>(welcome->payload).assigned_agent_id);
    CHECK(c.agent != 0);

    const auto snap = udp_wait(s.fd, [](const net::Message& m) { return m.type() == net::MsgType::Snapshot; });
    CHECK(snap);

    const auto ping = c.make(net::Ping{424242});
    ::send(s.fd, ping.data(), ping.size(), 0);
    const auto pong = udp_wait(s.fd, [](const net::Message& m) { return m.type() == net::MsgType::Pong; });
    REQUIRE(pong);
    CHECK(std::get<net::Pong>(pong->payload).t0 == 424242u);

    // Leaving as the only client ends the run.
    const auto bye = c.make(net::Bye{});
    ::send(s.fd, bye.data(), bye.size(), 0);
    r.thread.join();
    r.thread = std::thread([] {});
    CHECK(r.final.tick > 0);
    CHECK(r.final.datagrams_in >= 3);
}

TEST_CASE("WebSocket handshake and binary frames")
{
    Running r("crossing.json");
    REQUIRE(r.server.ws_port() != 0);
    Sock s(SOCK_STREAM);
    const auto addr = loopback(r.server.ws_port());
    REQUIRE(::connect(s.fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0);

    const std::string key = "dGhlIHNhbXBsZSBub25jZQ==";
    const std::string req = "GET /ws HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                            "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n";
    send_all(s.fd, std::vector<std::uint8_t>(req.begin(), req.end()));

    std::vector<std::uint8_t> rx;
    std::string head;
    const auto until = std::chrono::steady_clock::now() + std::chrono::seconds(3);
    while (head.find("\r\n\r\n") == std::string::npos && std::chrono::steady_clock::now() < until) {
        std::uint8_t buf[1024];
        const auto n = ::recv(s.fd, buf, sizeof buf, 0);
        if (n > 0) rx.insert(rx.end(), buf, buf + n);
        head.assign(rx.begin(), rx.end());
    }
    const auto end = head.find("\r\n\r\n");
    REQUIRE(end != std::string::npos);
    CHECK(head.rfind("HTTP/1.1 101", 0) == 0);
    CHECK(head.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=") != std::string::npos);
    rx.erase(rx.begin(), rx.begin() + static_cast<std::ptrdiff_t>(end + 4));

    fixtures::FakeClient c;
    send_all(s.fd, net::ws_frame(net::decode(c.make(net::Ping{99})).message.value(), net::WsMask{1, 2, 3, 4}));

    bool got_pong = false;
    const auto until2 = std::chrono::steady_clock::now() + std::chrono::seconds(3);
    while (!got_pong && std::chrono::steady_clock::now() < until2) {
        for (;;) {
            const auto p = net::ws_parse_frame(rx);
            if (p.error != net::WsError::None) break;
            rx.erase(rx.begin(), rx.begin() + static_cast<std::ptrdiff_t>(p.consumed));
            CHECK(p.frame->opcode == net::WsOpcode::Binary);
            const auto d = net::decode(p.frame->payload);
            REQUIRE(d.ok());
            if (d.message->type() == net::MsgType::Pong) got_pong = std::get<net::Pong>(d.message->payload).t0 == 99;
        }
        std::uint8_t buf[4096];
        const auto n = ::recv(s.fd, buf, sizeof buf, 0);
        if (n > 0) rx.insert(rx.end(), buf, buf + n);
    }
    CHECK(got_pong);

    // A text frame is a protocol error: the server answers with close 1002.
    const std::string hi = "hi";
    send_all(s.fd, net::ws_encode_frame(net::WsOpcode::Text,
                                        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(hi.data()), 2),
                                        net::WsMask{9, 9, 9, 9}));
    bool closed = false;
    const auto until3 = std::chrono::steady_clock::now() + std::chrono::seconds(3);
    while (!closed && std::chrono::steady_clock::now() < until3) {
        std::uint8_t buf[4096];
        const auto n = ::recv(s.fd, buf, sizeof buf, 0);
        if (n == 0) break;
        if (n > 0) rx.insert(rx.end(), buf, buf + n);
        for (;;) {
            const auto p = net::ws_parse_frame(rx);
            if (p.error != net::WsError::None) break;
            rx.erase(rx.begin(), rx.begin() + static_cast<std::ptrdiff_t>(p.consumed));
            if (p.frame->opcode == net::WsOpcode::Close) {
                REQUIRE(p.frame->payload.size() >= 2);
                CHECK(p.frame->payload[0] == 0x03);
                CHECK(p.frame->payload[1] == 0xEA);
                closed = true;
            }
        }
    }
    CHECK(closed);
}

TEST_CASE("stop() ends an idle server")
{
    const auto t0 = std::chrono::steady_clock::now();
    {
        Running r("crossing.json");
        std::this_thread::sleep_for(std::chrono::milliseconds(150));
    }
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(3));
}
