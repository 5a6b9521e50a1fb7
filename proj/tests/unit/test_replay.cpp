#include <doctest.h>

#include "../support/fixtures.hpp"
#include "../support/recording.hpp"
#include "mmsim/sim_server.hpp"

#include <sstream>

using namespace mmsim;

namespace {

SessionConfig human_car()
{
    SessionConfig cfg;
    cfg.scenario = fixtures::scenario("crossing_human_car.json");
    cfg.full_snapshot_every = 200;
    return cfg;
}

ReplayLog parse(const std::string& text)
{
    std::istringstream in(text);
    return read_replay_log(in);
}

}  // namespace

TEST_CASE("a fresh log replays with zero divergence")
{
    const auto rec = fixtures::record_session(human_car(), 1500, fixtures::random_driver(1));
    const auto log = parse(rec.log_text);
    CHECK(log.end_tick == 1500);
    CHECK_FALSE(log.inputs.empty());
    CHECK(log.checkpoints.size() >= 7);
    const auto res = replay(log);
    CHECK(res.ticks == 1500);
    CHECK(res.snapshots == rec.snapshots);
    CHECK(res.events == rec.events);
    REQUIRE(log.digest);
    CHECK(res.digest == *log.digest);
}

TEST_CASE("two runs from the same input trace are bitwise identical")
{
    const auto a = fixtures::record_session(human_car(), 800, fixtures::random_driver(5));
    const auto b = fixtures::record_session(human_car(), 800, fixtures::random_driver(5));
    CHECK(a.log_text == b.log_text);
    CHECK(a.snapshots == b.snapshots);
    const auto c = fixtures::record_session(human_car(), 800, fixtures::random_driver(6));
    CHECK(a.snapshots != c.snapshots);
}

TEST_CASE("an empty input log matches a direct run")
{
    SessionConfig cfg;
    cfg.scenario = fixtures::scenario("crossing.json");
    const auto rec = fixtures::record_session(cfg, 600, nullptr);
    const auto log = parse(rec.log_text);
    CHECK(log.inputs.empty());
    Session direct(cfg);
    std::vector<std::vector<std::uint8_t>> snaps;
    for (int i = 0; i < 600; ++i) {
        for (auto& o : direct.run_tick()) {
            if (net::decode(o.bytes).message->type() == net::MsgType::Snapshot) snaps.push_back(o.bytes);
        }
    }
    CHECK(replay(log).snapshots == snaps);
}

TEST_CASE("a flipped input byte is caught by the record checksum")
{
    const auto rec = fixtures::record_session(human_car(), 600, fixtures::random_driver(2));
    auto log = parse(rec.log_text);
    REQUIRE(log.inputs.size() > 20);
    auto& victim = log.inputs[20];
    victim.datagram[victim.datagram.size() / 2] ^= 0x10;
    try {
        replay(log);
        FAIL("flip went unnoticed");
    } catch (const ReplayDivergence& e) {
        CHECK(e.tick() == victim.tick);
    }
}

TEST_CASE("without checksums a flipped control byte diverges at or after its tick")
{
    const auto rec = fixtures::record_session(human_car(), 1200, fixtures::random_driver(3));
    auto log = parse(rec.log_text);
    // Find an INPUT record and flip the top byte of its throttle float.
    std::size_t k = 0;
    for (; k < log.inputs.size(); ++k) {
        const auto d = net::decode(log.inputs[k].datagram);
        if (d.ok() && d.message->type() == net::MsgType::Input && log.inputs[k].tick > 100) break;
    }
    REQUIRE(k < log.inputs.size());
    auto& victim = log.inputs[k];
    // Payload starts after the header with the input tag; flip inside the pedal floats.
    victim.datagram[24 + 1 + 4 + 3] ^= 0x01;
    ReplayOptions opt;
    opt.verify_checksums = false;
    try {
        replay(log, opt);
        FAIL("flip went unnoticed");
    } catch (const ReplayDivergence& e) {
        CHECK(e.tick() >= victim.tick);
    }
}

TEST_CASE("text-level corruption is reported with a line number")
{
    const auto rec = fixtures::record_session(human_car(), 50, fixtures::random_driver(4));
    std::string text = rec.log_text;
    text.insert(text.find('\n') + 1, "{not json\n");
    try {
        parse(text);
        FAIL("expected a format error");
    } catch (const ReplayFormatError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("hash mismatch against a different scenario")
{
    const auto rec = fixtures::record_session(human_car(), 50, fixtures::random_driver(4));
    const auto log = parse(rec.log_text);
    const auto other = fixtures::scenario("crossing.json");
    ReplayOptions opt;
    opt.expected_scenario = &other;
    CHECK_THROWS_AS(replay(log, opt), HashMismatch);
}

TEST_CASE("disconnects are replayed")
{
    auto driver = fixtures::random_driver(8);
    const auto rec = fixtures::record_session(human_car(), 400, [&](Session& s, std::uint64_t t) {
        if (t == 300) {
            s.deliver(1, {});  // transport drop of the driver
            return;
        }
        if (t < 300) driver(s, t);
    });
    const auto log = parse(rec.log_text);
    const auto res = replay(log);
    CHECK(res.events == rec.events);
}

TEST_CASE("fnv1a32 reference values")
{
    const std::string a = "a";
    CHECK(fnv1a32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(a.data()), 1)) == 0xe40c292cu);
    CHECK(fnv1a32({}) == 0x811c9dc5u);
}
