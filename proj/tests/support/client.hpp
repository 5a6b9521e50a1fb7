#pragma once

#include "mmsim/net_protocol.hpp"
#include "mmsim/sim_server.hpp"

#include <optional>
#include <vector>

namespace fixtures {

/// Builds the datagrams a single agent engine would send.
struct FakeClient {
    mmsim::ClientId id = 1;
    std::uint16_t session = 1;
    std::uint16_t agent = 0;
    std::uint32_t seq = 0;

    std::vector<std::uint8_t> make(mmsim::net::Payload p)
    {
        mmsim::net::Message m;
        m.header.session = session;
        m.header.agent_id = agent;
        m.header.seq = ++seq;
        m.payload = std::move(p);
        return mmsim::net::encode(m);
    }

    std::vector<std::uint8_t> hello(mmsim::AgentKind role, std::string name = "participant")
    {
        return make(mmsim::net::Hello{role, std::move(name)});
    }

    std::vector<std::uint8_t> input(mmsim::ControlInput c) { return make(mmsim::net::Input{c, 0}); }

    /// Sends HELLO and adopts the assigned id. Returns false on rejection.
    bool join(mmsim::Session& s, mmsim::AgentKind role)
    {
        const auto out = s.deliver(id, hello(role));
        for (const auto& o : out) {
            const auto d = mmsim::net::decode(o.bytes);
            if (!d.ok()) continue;
            if (const auto* w = std::get_if<mmsim::net::Welcome>(&d.message->payload)) {
                agent = static_cast<std::uint16_t>(w->assigned_agent_id);
                return true;
            }
        }
        return false;
    }
};

inline std::optional<mmsim::net::Message> decode_one(const mmsim::Outbound& o)
{
    auto d = mmsim::net::decode(o.bytes);
    return d.message;
}

}  // namespace fixtures
