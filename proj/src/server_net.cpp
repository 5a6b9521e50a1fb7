#include "mmsim/server_net.hpp"

#include "mmsim/ws_codec.hpp"

#include <boost/asio.hpp>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <thread>
#include <variant>

namespace mmsim {

namespace asio = boost::asio;
using asio::ip::tcp;
using asio::ip::udp;

namespace {

constexpr std::size_t kMaxHandshake = 8192;

struct Inbound {
    ClientId client = 0;
    std::vector<std::uint8_t> bytes;  // empty: the client disconnected
};

/// Bounded multi-producer queue feeding the simulation thread.
class InboundQueue {
public:
    explicit InboundQueue(std::size_t capacity) : capacity_(capacity) {}

    bool push(Inbound item)
    {
        std::lock_guard lock(mu_);
        if (q_.size() >= capacity_ && !item.bytes.empty()) return false;
        q_.push_back(std::move(item));
        return true;
    }

    std::deque<Inbound> drain()
    {
        std::lock_guard lock(mu_);
        std::deque<Inbound> out;
        out.swap(q_);
        return out;
    }

private:
    std::mutex mu_;
    std::deque<Inbound> q_;
    std::size_t capacity_;
};

std::string header_value(const std::string& request, std::string_view name)
{
    std::size_t pos = 0;
    while (true) {
        const auto eol = request.find("\r\n", pos);
        if (eol == std::string::npos || eol == pos) return {};
        const std::string line = request.substr(pos, eol - pos);
        pos = eol + 2;
        const auto colon = line.find(':');
        if (colon == std::string::npos || colon != name.size()) continue;
        if (!std::equal(name.begin(), name.end(), line.begin(),
                        [](char a, char b) { return std::tolower(a) == std::tolower(b); }))
            continue;
        auto v = line.substr(colon + 1);
        v.erase(0, v.find_first_not_of(' '));
        v.erase(v.find_last_not_of(' ') + 1);
        return v;
    }
}

}  // namespace

struct WsConnection;

struct Server::Impl {
    SessionConfig config;
    ServeOptions options;
    asio::io_context io;
    udp::socket udp_socket{io};
    tcp::acceptor acceptor{io};
    asio::signal_set signals{io, SIGINT, SIGTERM};
    InboundQueue inbound;
    std::atomic<bool> stopping{false};

    std::mutex clients_mu;
    ClientId next_client = 1;
    std::map<udp::endpoint, ClientId> udp_ids;
    std::map<ClientId, std::variant<udp::endpoint, std::weak_ptr<WsConnection>>> routes;
    std::uint32_t pong_seq = 0;

    std::atomic<std::uint64_t> datagrams_in{0};
    std::atomic<std::uint64_t> datagrams_out{0};
    std::atomic<std::uint64_t> queue_drops{0};

    std::array<std::uint8_t, 2048> udp_buf{};
    udp::endpoint udp_from;

    Impl(SessionConfig c, ServeOptions o) : config(std::move(c)), options(std::move(o)), inbound(options.queue_capacity) {}

    ClientId register_route(std::variant<udp::endpoint, std::weak_ptr<WsConnection>> route)
    {
        std::lock_guard lock(clients_mu);
        const ClientId id = next_client++;
        routes.emplace(id, std::move(route));
        return id;
    }

    /// PINGs are answered on the transport thread with the wall clock so
    /// the offset estimate does not include simulation queueing.
    std::optional<std::vector<std::uint8_t>> try_pong(std::span<const std::uint8_t> bytes, std::int64_t t1)
    {
        if (bytes.size() < net::kHeaderSize || bytes[5] != static_cast<std::uint8_t>(net::MsgType::Ping))
            return std::nullopt;
        const auto d = net::decode(bytes);
        if (!d.ok()) return std::nullopt;
        const auto& ping = std::get<net::Ping>(d.message->payload);
        net::Header h;
        h.session = config.session_id;
        h.agent_id = d.message->header.agent_id;
        h.seq = ++pong_seq;
        const auto t2 = static_cast<std::uint64_t>(monotonic_us());
        h.timestamp_us = t2;
        return net::encode(net::Message{h, net::Pong{ping.t0, static_cast<std::uint64_t>(t1), t2}});
    }

    void accept_inbound(ClientId client, std::vector<std::uint8_t> bytes)
    {
        ++datagrams_in;
        if (!inbound.push({client, std::move(bytes)})) ++queue_drops;
    }

    void start_udp_receive();
    void start_accept();
    void send(const Outbound& o);
};

struct WsConnection : std::enable_shared_from_this<WsConnection> {
    Server::Impl& srv;
    tcp::socket socket;
    ClientId id = 0;
    std::vector<std::uint8_t> rx;
    std::array<std::uint8_t, 4096> buf{};
    std::deque<std::vector<std::uint8_t>> tx;
    bool open = false;
    bool closing = false;

    WsConnection(Server::Impl& s, tcp::socket sock) : srv(s), socket(std::move(sock)) {}

    void start() { read_handshake(); }

    void read_handshake()
    {
        auto self = shared_from_this();
        socket.async_read_some(asio::buffer(buf), [self](boost::system::error_code ec, std::size_t n) {
            if (ec) return;
            self->rx.insert(self->rx.end(), self->buf.begin(), self->buf.begin() + static_cast<std::ptrdiff_t>(n));
            const std::string req(self->rx.begin(), self->rx.end());
            const auto end = req.find("\r\n\r\n");
            if (end == std::string::npos) {
                if (req.size() > kMaxHandshake) return;
                self->read_handshake();
                return;
            }
            const std::string key = header_value(req.substr(req.find("\r\n") + 2), "Sec-WebSocket-Key");
            if (key.empty()) {
                const std::string resp = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
                self->closing = true;
                self->queue(std::vector<std::uint8_t>(resp.begin(), resp.end()));
                return;
            }
            self->rx.erase(self->rx.begin(), self->rx.begin() + static_cast<std::ptrdiff_t>(end + 4));
            const std::string resp = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                                     "Sec-WebSocket-Accept: " +
                                     net::ws_accept_key(key) + "\r\n\r\n";
            self->open = true;
            self->id = self->srv.register_route(std::weak_ptr<WsConnection>(self));
            self->queue(std::vector<std::uint8_t>(resp.begin(), resp.end()));
            self->process();
            self->read_frames();
        });
    }

    void read_frames()
    {
        auto self = shared_from_this();
        socket.async_read_some(asio::buffer(buf), [self](boost::system::error_code ec, std::size_t n) {
            if (ec) {
                self->drop();
                return;
            }
            self->rx.insert(self->rx.end(), self->buf.begin(), self->buf.begin() + static_cast<std::ptrdiff_t>(n));
            if (self->process()) self->read_frames();
        });
    }

    // Returns false once the connection is closing.
    bool process()
    {
        while (!closing) {
            const auto p = net::ws_parse_frame(rx);
            if (p.error == net::WsError::NeedMore) return true;
            if (p.error != net::WsError::None) {
                close(p.error == net::WsError::TooLarge ? net::kWsCloseTooBig : net::kWsCloseProtocolError);
                return false;
            }
            rx.erase(rx.begin(), rx.begin() + static_cast<std::ptrdiff_t>(p.consumed));
            const auto& f = *p.frame;
            if (!f.fin) {
                close(net::kWsCloseProtocolError);  // fragmented messages are not supported
                return false;
            }
            switch (f.opcode) {
            case net::WsOpcode::Binary: {
                const auto t1 = monotonic_us();
                if (auto pong = srv.try_pong(f.payload, t1)) {
                    queue(net::ws_encode_frame(net::WsOpcode::Binary, *pong));
                    ++srv.datagrams_in;
                } else {
                    srv.accept_inbound(id, f.payload);
                }
                break;
            }
            case net::WsOpcode::Ping: queue(net::ws_encode_frame(net::WsOpcode::Pong, f.payload)); break;
            case net::WsOpcode::Pong: break;
            case net::WsOpcode::Close: close(net::kWsCloseNormal); return false;
            default: close(net::kWsCloseProtocolError); return false;
            }
        }
        return false;
    }

    void close(std::uint16_t code)
    {
        if (closing) return;
        queue(net::ws_close_frame(code));
        closing = true;
    }

    void drop()
    {
        if (!open) return;
        open = false;
        srv.inbound.push({id, {}});
        boost::system::error_code ignored;
        socket.close(ignored);
    }

    void queue(std::vector<std::uint8_t> bytes)
    {
        tx.push_back(std::move(bytes));
        if (tx.size() == 1) flush();
    }

    void flush()
    {
        if (tx.empty()) {
            if (closing) drop();
            return;
        }
        auto self = shared_from_this();
        asio::async_write(socket, asio::buffer(tx.front()), [self](boost::system::error_code ec, std::size_t) {
            if (ec) {
                self->drop();
                return;
            }
            self->tx.pop_front();
            self->flush();
        });
    }
};

void Server::Impl::start_udp_receive()
{
    udp_socket.async_receive_from(asio::buffer(udp_buf), udp_from, [this](boost::system::error_code ec, std::size_t n) {
        if (ec) {
            if (ec != asio::error::operation_aborted) start_udp_receive();
            return;
        }
        const std::int64_t t1 = monotonic_us();
        std::span<const std::uint8_t> bytes(udp_buf.data(), n);
        if (auto pong = try_pong(bytes, t1)) {
            ++datagrams_in;
            boost::system::error_code ignored;
            udp_socket.send_to(asio::buffer(*pong), udp_from, 0, ignored);
            ++datagrams_out;
        } else if (n > 0) {
            ClientId id = 0;
            {
                std::lock_guard lock(clients_mu);
                auto it = udp_ids.find(udp_from);
                if (it != udp_ids.end()) id = it->second;
            }
            if (id == 0) {
                id = register_route(udp_from);
                std::lock_guard lock(clients_mu);
                udp_ids[udp_from] = id;
            }
            accept_inbound(id, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
        }
        start_udp_receive();
    });
}

void Server::Impl::start_accept()
{
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket sock) {
        if (ec) return;
        std::make_shared<WsConnection>(*this, std::move(sock))->start();
        start_accept();
    });
}

// Runs on the io thread.
void Server::Impl::send(const Outbound& o)
{
    std::vector<std::variant<udp::endpoint, std::weak_ptr<WsConnection>>> targets;
    {
        std::lock_guard lock(clients_mu);
        if (o.to) {
            if (auto it = routes.find(*o.to); it != routes.end()) targets.push_back(it->second);
        } else {
            for (const auto& [id, r] : routes) targets.push_back(r);
        }
    }
    for (const auto& t : targets) {
        if (const auto* ep = std::get_if<udp::endpoint>(&t)) {
            boost::system::error_code ignored;
            udp_socket.send_to(asio::buffer(o.bytes), *ep, 0, ignored);
            ++datagrams_out;
        } else if (auto ws = std::get<std::weak_ptr<WsConnection>>(t).lock(); ws && ws->open && !ws->closing) {
            ws->queue(net::ws_encode_frame(net::WsOpcode::Binary, o.bytes));
            ++datagrams_out;
        }
    }
}

Server::Server(SessionConfig config, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(options)))
{
}

Server::~Server() { stop(); }

void Server::bind()
{
    auto& s = *impl_;
    const auto addr = asio::ip::make_address(s.options.bind_address);
    s.udp_socket.open(addr.is_v6() ? udp::v6() : udp::v4());
    s.udp_socket.bind(udp::endpoint(addr, s.options.udp_port));
    if (s.options.enable_ws) {
        const tcp::endpoint ep(addr, s.options.ws_port);
        s.acceptor.open(ep.protocol());
        s.acceptor.set_option(tcp::acceptor::reuse_address(true));
        s.acceptor.bind(ep);
        s.acceptor.listen();
    }
}

std::uint16_t Server::udp_port() const { return impl_->udp_socket.local_endpoint().port(); }
std::uint16_t Server::ws_port() const { return impl_->acceptor.is_open() ? impl_->acceptor.local_endpoint().port() : 0; }

void Server::stop()
{
    impl_->stopping = true;
}

ServeStats Server::run()
{
    auto& s = *impl_;
    if (!s.udp_socket.is_open()) bind();

    Session session(s.config);
    std::ofstream log_file;
    std::optional<ReplayWriter> writer;
    if (s.options.log_path) {
        log_file.open(*s.options.log_path);
        if (!log_file) throw ReplayIoError("cannot open log " + *s.options.log_path);
        writer.emplace(log_file);
        writer->attach(session);
    }

    s.signals.async_wait([&s](boost::system::error_code ec, int) {
        if (!ec) s.stopping = true;
    });
    s.start_udp_receive();
    if (s.acceptor.is_open()) s.start_accept();
    auto guard = asio::make_work_guard(s.io);
    std::thread io_thread([&s] { s.io.run(); });

    auto dispatch = [&s](std::vector<Outbound> out) {
        if (out.empty()) return;
        asio::post(s.io, [&s, out = std::move(out)] {
            for (const auto& o : out) s.send(o);
        });
    };

    ServeStats stats;
    Pacer pacer(s.config.tick_rate_hz, monotonic_us);
    const std::int64_t started = monotonic_us();
    std::int64_t next_report = started + 1'000'000;
    std::int64_t slowest = 0;
    const auto duration_ticks =
        static_cast<std::uint64_t>(s.options.duration_s * static_cast<double>(s.config.tick_rate_hz) + 0.5);

    auto fill_stats = [&] {
        stats.tick = session.tick();
        stats.sim_time_s = static_cast<double>(session.sim_time_us()) * 1e-6;
        stats.clients = session.joined_clients().size();
        stats.datagrams_in = s.datagrams_in;
        stats.datagrams_out = s.datagrams_out;
        stats.queue_drops = s.queue_drops;
        stats.decode_errors = session.counters().decode_errors;
        stats.max_tick_us = slowest;
    };

    while (!s.stopping) {
        for (auto& in : s.inbound.drain()) dispatch(session.deliver(in.client, in.bytes));

        const auto due = pacer.due();
        for (std::uint64_t i = 0; i < due && !s.stopping; ++i) {
            const std::int64_t t0 = monotonic_us();
            auto out = session.run_tick();
            if (writer) writer->after_tick(session, out);
            dispatch(std::move(out));
            pacer.take(1);
            slowest = std::max(slowest, monotonic_us() - t0);
            if (duration_ticks > 0 && session.tick() >= duration_ticks) s.stopping = true;
            if (session.any_joined_ever() && session.joined_clients().empty()) s.stopping = true;
        }

        const std::int64_t now = monotonic_us();
        if (now >= next_report) {
            fill_stats();
            if (s.options.on_stats) s.options.on_stats(stats);
            slowest = 0;
            next_report += 1'000'000;
        }
        const auto wait = std::min<std::int64_t>(pacer.until_next(), 1000);
        if (wait > 0) std::this_thread::sleep_for(std::chrono::microseconds(wait));
    }

    if (writer) writer->finish(session);
    fill_stats();
    // Let queued sends go out before tearing down.
    std::promise<void> flushed;
    asio::post(s.io, [&flushed] { flushed.set_value(); });
    flushed.get_future().wait_for(std::chrono::milliseconds(200));
    guard.reset();
    s.io.stop();
    io_thread.join();
    return stats;
}

}  // namespace mmsim
