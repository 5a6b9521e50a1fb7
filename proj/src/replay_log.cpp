#include "mmsim/sim_server.hpp"
#include "mmsim/ws_codec.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mmsim {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "mmsim-replay";
constexpr int kFormatVersion = 1;

std::string hex64(std::uint64_t v)
{
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::optional<std::uint64_t> parse_hex64(const std::string& s)
{
    if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) return std::nullopt;
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(s.substr(2), &pos, 16);
        if (pos != s.size() - 2) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

json event_json(const EventRecord& e)
{
    return json{{"type", "event"},     {"tick", e.tick},       {"t_us", e.sim_time_us},
                {"code", e.code},      {"name", event_code_name(e.code)},
                {"subject", e.subject}, {"object", e.object}, {"value", e.value}};
}

bool is_snapshot(const std::vector<std::uint8_t>& bytes)
{
    return bytes.size() > 5 && bytes[5] == static_cast<std::uint8_t>(net::MsgType::Snapshot);
}

}  // namespace

std::uint32_t fnv1a32(std::span<const std::uint8_t> bytes)
{
    std::uint32_t h = 0x811c9dc5u;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x01000193u;
    }
    return h;
}

void StreamDigest::add_bytes(std::span<const std::uint8_t> bytes)
{
    for (auto b : bytes) {
        h_ ^= b;
        h_ *= 0x100000001b3ULL;
    }
}

void StreamDigest::add_event(const EventRecord& e)
{
    const std::string line = event_json(e).dump();
    add_bytes(std::span(reinterpret_cast<const std::uint8_t*>(line.data()), line.size()));
}

ReplayWriter::ReplayWriter(std::ostream& out) : out_(out) {}

void ReplayWriter::attach(Session& session)
{
    const auto& cfg = session.config();
    json header = {{"type", "header"},
                   {"format", kFormat},
                   {"version", kFormatVersion},
                   {"scenario_hash", hex64(session.scenario_hash())},
                   {"seed", cfg.scenario.seed},
                   {"tick_rate", cfg.tick_rate_hz},
                   {"snapshot_div", cfg.snapshot_div},
                   {"session", cfg.session_id},
                   {"full_snapshot_every", cfg.full_snapshot_every},
                   {"scenario", json::parse(serialize(cfg.scenario))}};
    out_ << header.dump() << '\n';
    header_written_ = true;
    session.on_input = [this](std::uint64_t tick, ClientId client, std::span<const std::uint8_t> bytes) {
        json rec = {{"type", "input"},
                    {"tick", tick},
                    {"client", client},
                    {"crc", fnv1a32(bytes)},
                    {"data", net::base64_encode(bytes)}};
        out_ << rec.dump() << '\n';
    };
    session.on_event = [this](const EventRecord& e) {
        digest_.add_event(e);
        out_ << event_json(e).dump() << '\n';
    };
}

void ReplayWriter::after_tick(const Session& session, const std::vector<Outbound>& out)
{
    for (const auto& o : out)
        if (is_snapshot(o.bytes)) digest_.add_bytes(o.bytes);
    if (session.tick() % session.config().full_snapshot_every == 0) {
        json rec = {{"type", "snapshot"},
                    {"tick", session.tick()},
                    {"t_us", session.sim_time_us()},
                    {"data", net::base64_encode(session.state_blob())}};
        out_ << rec.dump() << '\n';
    }
}

void ReplayWriter::finish(const Session& session)
{
    if (session.tick() % session.config().full_snapshot_every != 0) {
        json rec = {{"type", "snapshot"},
                    {"tick", session.tick()},
                    {"t_us", session.sim_time_us()},
                    {"data", net::base64_encode(session.state_blob())}};
        out_ << rec.dump() << '\n';
    }
    json end = {{"type", "end"}, {"tick", session.tick()}, {"digest", hex64(digest_.value())}};
    out_ << end.dump() << '\n';
    out_.flush();
}

ReplayLog read_replay_log(std::istream& in)
{
    ReplayLog log;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    bool have_end = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ReplayFormatError(line_no, std::string("malformed JSON: ") + e.what());
        }
        try {
            const std::string type = rec.at("type").get<std::string>();
            if (!have_header && type != "header") throw ReplayFormatError(line_no, "first record must be the header");
            if (type == "header") {
                if (have_header) throw ReplayFormatError(line_no, "duplicate header");
                if (rec.at("format").get<std::string>() != kFormat || rec.at("version").get<int>() != kFormatVersion)
                    throw ReplayFormatError(line_no, "unsupported log format");
                const auto hash = parse_hex64(rec.at("scenario_hash").get<std::string>());
                if (!hash) throw ReplayFormatError(line_no, "bad scenario_hash");
                log.scenario_hash = *hash;
                log.seed = rec.at("seed").get<std::uint64_t>();
                log.tick_rate_hz = rec.at("tick_rate").get<std::uint16_t>();
                log.snapshot_div = rec.at("snapshot_div").get<std::uint8_t>();
                log.session_id = rec.value("session", std::uint16_t{1});
                log.full_snapshot_every = rec.value("full_snapshot_every", std::uint64_t{1000});
                auto loaded = load_scenario(rec.at("scenario").dump());
                if (!loaded.ok()) {
                    std::string msg = "embedded scenario invalid";
                    if (!loaded.diagnostics.empty()) msg += ": " + loaded.diagnostics.front().message;
                    throw ReplayFormatError(line_no, msg);
                }
                log.scenario = std::move(*loaded.spec);
                have_header = true;
            } else if (type == "input") {
                ReplayInput ri;
                ri.tick = rec.at("tick").get<std::uint64_t>();
                ri.client = rec.at("client").get<ClientId>();
                if (rec.contains("crc")) ri.checksum = rec.at("crc").get<std::uint32_t>();
                auto data = net::base64_decode(rec.at("data").get<std::string>());
                if (!data) throw ReplayFormatError(line_no, "input data is not base64");
                ri.datagram = std::move(*data);
                log.inputs.push_back(std::move(ri));
            } else if (type == "event") {
                EventRecord e;
                e.tick = rec.at("tick").get<std::uint64_t>();
                e.sim_time_us = rec.at("t_us").get<std::uint64_t>();
                e.code = rec.at("code").get<std::uint16_t>();
                e.subject = rec.at("subject").get<std::uint32_t>();
                e.object = rec.at("object").get<std::uint32_t>();
                e.value = rec.at("value").get<double>();
                log.events.push_back(e);
            } else if (type == "snapshot") {
                ReplayCheckpoint cp;
                cp.tick = rec.at("tick").get<std::uint64_t>();
                auto data = net::base64_decode(rec.at("data").get<std::string>());
                if (!data) throw ReplayFormatError(line_no, "snapshot data is not base64");
                cp.state = std::move(*data);
                log.checkpoints.push_back(std::move(cp));
            } else if (type == "end") {
                log.end_tick = rec.at("tick").get<std::uint64_t>();
                if (rec.contains("digest")) log.digest = parse_hex64(rec.at("digest").get<std::string>());
                have_end = true;
            } else if (type == "diag") {
                // Wall-clock diagnostics are not part of the deterministic record.
            } else {
                throw ReplayFormatError(line_no, "unknown record type " + type);
            }
        } catch (const json::exception& e) {
            throw ReplayFormatError(line_no, std::string("bad record: ") + e.what());
        }
    }
    if (!have_header) throw ReplayFormatError(line_no, "empty log");
    if (!have_end) {
        // A log cut short (crash, kill) still replays up to its last input.
        log.end_tick = log.inputs.empty() ? 0 : log.inputs.back().tick;
        if (!log.checkpoints.empty()) log.end_tick = std::max(log.end_tick, log.checkpoints.back().tick);
    }
    return log;
}

ReplayLog read_replay_log_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ReplayIoError("cannot open " + path);
    return read_replay_log(in);
}

ReplayResult replay(const ReplayLog& log, const ReplayOptions& options)
{
    const std::uint64_t embedded = scenario_hash(log.scenario);
    if (embedded != log.scenario_hash)
        throw HashMismatch("log header hash " + hex64(log.scenario_hash) + " does not match embedded scenario " +
                           hex64(embedded));
    if (options.expected_scenario) {
        const std::uint64_t want = scenario_hash(*options.expected_scenario);
        if (want != log.scenario_hash)
            throw HashMismatch("log was recorded with scenario " + hex64(log.scenario_hash) + ", loaded scenario is " +
                               hex64(want));
    }

    SessionConfig cfg;
    cfg.tick_rate_hz = log.tick_rate_hz;
    cfg.snapshot_div = log.snapshot_div;
    cfg.session_id = log.session_id;
    cfg.full_snapshot_every = log.full_snapshot_every;
    cfg.scenario = log.scenario;
    cfg.max_agents = static_cast<std::uint16_t>(std::max<std::size_t>(cfg.scenario.agents.size(), 256));
    Session session(cfg);

    ReplayResult result;
    StreamDigest digest;
    std::size_t compared = 0;
    session.on_event = [&](const EventRecord& e) {
        digest.add_event(e);
        result.events.push_back(e);
    };
    auto check_events = [&]() {
        if (!options.compare_events) return;
        for (; compared < result.events.size(); ++compared) {
            const EventRecord& got = result.events[compared];
            if (compared >= log.events.size())
                throw ReplayDivergence(got.tick, "extra event " + event_code_name(got.code));
            const EventRecord& want = log.events[compared];
            if (!(got == want))
                throw ReplayDivergence(std::min(got.tick, want.tick),
                                       "event " + std::to_string(compared) + " differs (" + event_code_name(want.code) +
                                           " expected, " + event_code_name(got.code) + " produced)");
        }
    };

    std::map<std::uint64_t, const ReplayCheckpoint*> checkpoints;
    for (const auto& cp : log.checkpoints) checkpoints[cp.tick] = &cp;

    std::size_t next_input = 0;
    if (options.on_tick) options.on_tick(session);
    while (true) {
        while (next_input < log.inputs.size() && log.inputs[next_input].tick == session.tick()) {
            const ReplayInput& ri = log.inputs[next_input++];
            if (options.verify_checksums && ri.checksum && fnv1a32(ri.datagram) != *ri.checksum)
                throw ReplayDivergence(ri.tick, "input record checksum mismatch");
            session.deliver(ri.client, ri.datagram);
        }
        if (next_input < log.inputs.size() && log.inputs[next_input].tick < session.tick())
            throw ReplayDivergence(log.inputs[next_input].tick, "input records out of order");
        check_events();
        if (session.tick() >= log.end_tick) break;

        auto out = session.run_tick();
        for (auto& o : out) {
            if (is_snapshot(o.bytes)) {
                digest.add_bytes(o.bytes);
                result.snapshots.push_back(std::move(o.bytes));
            }
        }
        check_events();
        if (auto it = checkpoints.find(session.tick()); it != checkpoints.end()) {
            if (session.state_blob() != it->second->state)
                throw ReplayDivergence(session.tick(), "world state differs from the recorded checkpoint");
        }
        if (options.on_tick) options.on_tick(session);
    }
    if (options.compare_events && compared < log.events.size())
        throw ReplayDivergence(log.events[compared].tick, "missing event " + event_code_name(log.events[compared].code));
    result.ticks = session.tick();
    result.digest = digest.value();
    if (log.digest && *log.digest != result.digest)
        throw ReplayDivergence(session.tick(), "snapshot stream digest differs");
    return result;
}

}  // namespace mmsim
