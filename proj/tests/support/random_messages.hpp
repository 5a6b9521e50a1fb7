#pragma once

#include "mmsim/net_protocol.hpp"

#include <random>

namespace fixtures {

/// Random valid protocol messages for round-trip fuzzing.
class MessageFuzzer {
public:
    explicit MessageFuzzer(std::uint64_t seed) : rng_(seed) {}

    mmsim::net::Header header()
    {
        mmsim::net::Header h;
        h.flags = 0;
        h.kind = pick(0, 5) == 5 ? mmsim::net::kNoKind : static_cast<std::uint8_t>(pick(0, 4));
        h.session = static_cast<std::uint16_t>(pick(0, 0xFFFF));
        h.agent_id = static_cast<std::uint16_t>(pick(0, 0xFFFF));
        h.seq = static_cast<std::uint32_t>(rng_());
        h.timestamp_us = rng_();
        return h;
    }

    mmsim::ControlInput control()
    {
        using namespace mmsim;
        switch (pick(0, 3)) {
        case 0: {
            DriverInput d;
            d.steer_wheel = uf(-8.0f, 8.0f);
            d.throttle = uf(0.0f, 1.0f);
            d.brake = uf(0.0f, 1.0f);
            d.gear = static_cast<std::int8_t>(pick(-1, 6));
            return d;
        }
        case 1: {
            CyclistInput c;
            c.power = uf(0.0f, 2500.0f);
            c.cadence = uf(0.0f, 250.0f);
            c.steer = uf(-1.0f, 1.0f);
            c.brake = uf(0.0f, 1.0f);
            c.assist = static_cast<AssistLevel>(pick(0, 3));
            return c;
        }
        case 2: {
            PedestrianInput p;
            p.walk_speed = uf(0.0f, 10.0f);
            p.walk_heading = uf(-6.0f, 6.0f);
            p.seated_request = pick(0, 1) == 1;
            return p;
        }
        default: return PolicyInput{};
        }
    }

    mmsim::net::Snapshot snapshot(std::size_t n)
    {
        mmsim::net::Snapshot s;
        s.tick = rng_();
        s.sim_time_us = rng_();
        for (std::size_t i = 0; i < n; ++i) {
            mmsim::net::AgentRecord r;
            r.id = static_cast<std::uint32_t>(rng_());
            r.kind = static_cast<mmsim::AgentKind>(pick(0, 4));
            r.flags = static_cast<std::uint8_t>(pick(0, 255));
            r.x = ud(-1e4, 1e4);
            r.y = ud(-1e4, 1e4);
            r.heading = uf(-3.14f, 3.14f);
            r.speed = uf(0.0f, 60.0f);
            r.accel = uf(-10.0f, 10.0f);
            r.aux = uf(0.0f, 200.0f);
            s.agents.push_back(r);
        }
        return s;
    }

    mmsim::net::Message message()
    {
        using namespace mmsim::net;
        Message m;
        m.header = header();
        switch (pick(0, 9)) {
        case 0: {
            Hello h;
            h.role = static_cast<mmsim::AgentKind>(pick(0, 4));
            const int len = pick(0, 32);
            for (int i = 0; i < len; ++i) h.display_name.push_back(static_cast<char>(pick('a', 'z')));
            m.payload = h;
            break;
        }
        case 1:
            m.payload = Welcome{static_cast<std::uint32_t>(rng_()), static_cast<std::uint16_t>(pick(20, 1000)),
                                static_cast<std::uint8_t>(pick(1, 255)), rng_()};
            break;
        case 2: m.payload = Input{control(), rng_()}; break;
        case 3: m.payload = snapshot(static_cast<std::size_t>(pick(0, 35))); break;
        case 4:
            m.payload = Event{static_cast<std::uint16_t>(pick(0, 0xFFFF)), static_cast<std::uint32_t>(rng_()),
                              static_cast<std::uint32_t>(rng_()), ud(-1e6, 1e6)};
            break;
        case 5: m.payload = Ping{rng_()}; break;
        case 6: m.payload = Pong{rng_(), rng_(), rng_()}; break;
        case 7:
            m.payload = QResponse{static_cast<std::uint8_t>(pick(0, 4)), static_cast<std::uint8_t>(pick(0, 19)),
                                  uf(0.0f, 100.0f)};
            break;
        case 8:
            m.payload = Nback{static_cast<NbackKind>(pick(0, 1)), static_cast<std::uint8_t>(pick(0, 25)),
                              static_cast<std::uint32_t>(rng_())};
            break;
        default: m.payload = Bye{}; break;
        }
        return m;
    }

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    float uf(float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng_); }
    double ud(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace fixtures
