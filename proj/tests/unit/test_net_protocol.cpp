#include <doctest.h>

#include "../support/random_messages.hpp"
#include "mmsim/net_protocol.hpp"

#include <cstring>

using namespace mmsim;
using namespace mmsim::net;

namespace {

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at)
{
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

}  // namespace

TEST_CASE("BYE is a bare header")
{
    Message m{Header{}, Bye{}};
    const auto b = encode(m);
    REQUIRE(b.size() == 24);
    CHECK(read_u32(b, 0) == 0x53494D31);
    CHECK(b[0] == 0x31);  // little endian: the '1' of "SIM1" comes first
    CHECK(b[4] == 1);
    CHECK(b[5] == 0x0F);
}

TEST_CASE("PING with t0 = 0 is a header and eight zero bytes")
{
    Message m{Header{}, Ping{0}};
    const auto b = encode(m);
    REQUIRE(b.size() == 32);
    for (std::size_t i = 24; i < 32; ++i) CHECK(b[i] == 0);
    CHECK(b[5] == 0x06);
}

TEST_CASE("header layout")
{
    Header h;
    h.flags = 0xA5;
    h.kind = 2;
    h.session = 0x1234;
    h.agent_id = 0xBEEF;
    h.seq = 0x01020304;
    h.timestamp_us = 0x1122334455667788ULL;
    const auto b = encode(Message{h, Bye{}});
    CHECK(b[6] == 0xA5);
    CHECK(b[7] == 2);
    CHECK(b[8] == 0x34);
    CHECK(b[9] == 0x12);
    CHECK(b[10] == 0xEF);
    CHECK(b[11] == 0xBE);
    CHECK(read_u32(b, 12) == 0x01020304);
    CHECK(b[16] == 0x88);
    CHECK(b[23] == 0x11);
}

TEST_CASE("snapshot size law")
{
    fixtures::MessageFuzzer fz(1);
    for (std::size_t n : {0u, 1u, 2u, 17u, 35u}) {
        const auto b = encode(Message{Header{}, fz.snapshot(n)});
        CHECK(b.size() == 24 + 18 + 38 * n);
    }
    CHECK(kMaxSnapshotAgents == 35);
    CHECK_THROWS_AS(encode(Message{Header{}, fz.snapshot(36)}), std::length_error);
}

TEST_CASE("agent record layout")
{
    Snapshot s;
    AgentRecord r;
    r.id = 7;
    r.kind = AgentKind::Cyclist;
    r.flags = 3;
    r.x = 1.5;
    r.y = -2.25;
    r.heading = 0.5f;
    r.speed = 4.0f;
    r.accel = -1.0f;
    r.aux = 85.0f;
    s.agents.push_back(r);
    const auto b = encode(Message{Header{}, s});
    const std::size_t at = 24 + 18;
    CHECK(read_u32(b, at) == 7u);
    CHECK(b[at + 4] == 2);
    CHECK(b[at + 5] == 3);
    double x = 0;
    std::memcpy(&x, &b[at + 6], 8);
    CHECK(x == 1.5);
    float aux = 0;
    std::memcpy(&aux, &b[at + 34], 4);
    CHECK(aux == 85.0f);
}

TEST_CASE("randomized round trip")
{
    fixtures::MessageFuzzer fz(42);
    for (int i = 0; i < 10000; ++i) {
        const auto m = fz.message();
        const auto b = encode(m);
        CHECK(b.size() <= kMaxDatagram);
        const auto d = decode(b);
        REQUIRE(d.ok());
        CHECK(*d.message == m);
    }
}

TEST_CASE("every truncation is rejected without reading past the end")
{
    fixtures::MessageFuzzer fz(9);
    for (int i = 0; i < 300; ++i) {
        const auto b = encode(fz.message());
        for (std::size_t len = 0; len < b.size(); ++len) {
            // Copy into an exact-size buffer so a sanitizer would see overreads.
            std::vector<std::uint8_t> cut(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(len));
            CHECK_FALSE(decode(cut).ok());
        }
    }
}

TEST_CASE("typed decode errors")
{
    auto b = encode(Message{Header{}, Ping{5}});
    auto bad = b;
    bad[0] ^= 0xFF;
    CHECK(decode(bad).error == DecodeError::BadMagic);
    bad = b;
    bad[4] = 2;
    CHECK(decode(bad).error == DecodeError::BadVersion);
    bad = b;
    bad[5] = 0x0E;
    CHECK(decode(bad).error == DecodeError::UnknownType);
    bad = b;
    bad.push_back(0);
    CHECK(decode(bad).error == DecodeError::TrailingBytes);

    auto h = encode(Message{Header{}, Hello{AgentKind::Pedestrian, "ana"}});
    h[24] = 9;  // role outside AgentKind
    CHECK(decode(h).error == DecodeError::BadEnum);
}

TEST_CASE("random bytes never crash the decoder")
{
    fixtures::MessageFuzzer fz(77);
    for (int i = 0; i < 20000; ++i) {
        std::vector<std::uint8_t> b(static_cast<std::size_t>(fz.pick(0, 200)));
        for (auto& x : b) x = static_cast<std::uint8_t>(fz.pick(0, 255));
        if (b.size() >= 6 && fz.pick(0, 1)) {
            b[0] = 0x31, b[1] = 0x4D, b[2] = 0x49, b[3] = 0x53, b[4] = 1, b[5] = static_cast<std::uint8_t>(fz.pick(1, 15));
        }
        (void)decode(b);
    }
    CHECK(true);
}

TEST_CASE("oversized names are refused")
{
    Hello h{AgentKind::Pedestrian, std::string(33, 'x')};
    CHECK_THROWS_AS(encode(Message{Header{}, h}), std::length_error);
}

TEST_CASE("snapshot fragmentation and reassembly")
{
    fixtures::MessageFuzzer fz(3);
    const auto snap = fz.snapshot(80);
    Header first;
    first.seq = 10;
    const auto frags = fragment_snapshot(snap, first);
    REQUIRE(frags.size() == 3);
    CHECK((frags[0].header.flags & header_flags::kMoreFragments) != 0);
    CHECK((frags[2].header.flags & header_flags::kMoreFragments) == 0);
    CHECK(frags[1].header.seq == 11);
    SnapshotAssembler as;
    CHECK_FALSE(as.push(frags[0]));
    CHECK_FALSE(as.push(frags[1]));
    const auto full = as.push(frags[2]);
    REQUIRE(full);
    CHECK(*full == snap);

    const auto empty = fragment_snapshot(Snapshot{}, first);
    CHECK(empty.size() == 1);
}

TEST_CASE("NTP offset examples")
{
    const ClockSample zero{1000, 1000, 1000, 1000};
    CHECK(sample_offset(zero) == 0);
    CHECK(sample_delay(zero) == 0);

    const ClockSample ex{100, 160, 165, 130};
    CHECK(sample_offset(ex) == 47);
    CHECK(sample_delay(ex) == 25);

    // Symmetric 10 ms one-way latency, server 50 ms ahead.
    const std::uint64_t t0 = 1'000'000;
    const ClockSample sym{t0, t0 + 10'000 + 50'000, t0 + 10'500 + 50'000, t0 + 20'500};
    CHECK(sample_offset(sym) == 50'000);

    const ClockSample neg{100, 20, 25, 130};
    CHECK(sample_offset(neg) == -92);  // -92.5 truncates toward zero
}

TEST_CASE("estimate_offset uses the minimum-delay sample of the window")
{
    std::vector<ClockSample> s{
        {0, 100, 100, 400},   // delay 400
        {1000, 1050, 1060, 1020},  // delay 10, offset 45
        {2000, 2300, 2300, 2500},  // delay 500
    };
    const auto e = estimate_offset(s, 3);
    CHECK(e.delay_us == 10);
    CHECK(e.offset_us == 45);
    CHECK(estimate_offset(s, 1).delay_us == 500);
    CHECK_THROWS(estimate_offset(std::span<const ClockSample>{}, 4));
}

TEST_CASE("sequence gate")
{
    CHECK(sequence_gate(5, 6) == GateResult::Accept);
    CHECK(sequence_gate(5, 5) == GateResult::Stale);
    CHECK(sequence_gate(5, 3) == GateResult::Stale);

    SequenceTracker tr;
    Message m{Header{}, Ping{}};
    m.header.seq = 4;
    CHECK(tr.admit(m) == GateResult::Accept);
    CHECK(tr.admit(m) == GateResult::Stale);
    Message other = m;
    other.payload = Bye{};
    CHECK(tr.admit(other) == GateResult::Accept);  // separate stream per type
}
