#pragma once

// Authoritative simulation session: fixed-timestep world update, role
// assignment, event log, snapshot generation, replay logs and pacing.
//
// A Session is transport-agnostic. Datagrams go in through deliver() between
// ticks; everything the session wants sent comes back as Outbound values.

#include "mmsim/av_policy.hpp"
#include "mmsim/dynamics.hpp"
#include "mmsim/events.hpp"
#include "mmsim/net_protocol.hpp"
#include "mmsim/scenario.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmsim {

using ClientId = std::uint32_t;

struct SessionConfig {
    std::uint16_t tick_rate_hz = 100;
    std::uint8_t snapshot_div = 2;
    std::uint16_t max_agents = 256;
    std::uint16_t session_id = 1;
    double sync_mark_interval_s = 10.0;
    std::uint64_t full_snapshot_every = 1000;  // ticks between replay checkpoints
    ScenarioSpec scenario;
};

/// Empty string when the configuration is usable.
std::string validate(const SessionConfig& config);

struct Outbound {
    std::optional<ClientId> to;  // nullopt: every connected client
    std::vector<std::uint8_t> bytes;
};

/// Per-agent view of what was applied during the last tick, for metrics.
struct AppliedControl {
    std::uint32_t agent_id = 0;
    ControlInput control = PolicyInput{};
    bool from_human = false;
};

struct SessionCounters {
    std::uint64_t decode_errors = 0;
    std::uint64_t stale = 0;
    std::uint64_t rejected_inputs = 0;
    std::uint64_t unknown_sender = 0;
};

class Session {
public:
    explicit Session(SessionConfig config);

    const SessionConfig& config() const { return config_; }
    std::uint64_t tick() const { return tick_; }
    std::uint64_t sim_time_us() const { return sim_time_us_at(tick_); }
    std::uint64_t sim_time_us_at(std::uint64_t tick) const;
    double dt() const { return 1.0 / config_.tick_rate_hz; }
    std::uint64_t scenario_hash() const { return hash_; }

    /// Live agents, ascending id.
    const std::vector<AgentState>& agents() const { return agents_; }
    const AgentState* find(std::uint32_t id) const;
    std::optional<AvState> av_state(std::uint32_t id) const;
    std::optional<EhmiState> ehmi(std::uint32_t id) const;
    std::optional<SignalPhase> signal_phase() const { return phase_; }
    const ApproachPath* path_of(std::uint32_t id) const;
    const std::map<std::uint32_t, const ApproachPath*>& paths() const { return paths_; }

    /// Full event log so far, in emission order.
    const std::vector<EventRecord>& events() const { return events_; }
    const std::vector<AppliedControl>& applied() const { return applied_; }
    const SessionCounters& counters() const { return counters_; }

    /// Handles one inbound datagram from `client`. Processed immediately; input
    /// takes effect at the next tick. The raw bytes are what gets logged.
    std::vector<Outbound> deliver(ClientId client, std::span<const std::uint8_t> datagram);

    /// Transport-level disconnect: frees the client's slot like BYE. Logged as
    /// an empty input record; delivering an empty datagram does the same.
    void disconnect(ClientId client);

    /// Advances the world by one tick.
    std::vector<Outbound> run_tick();

    /// Snapshot of the current tick as wire fragments.
    std::vector<Outbound> snapshot_messages();

    /// Full-precision world state, used for replay checkpoints.
    std::vector<std::uint8_t> state_blob() const;

    /// Clients that completed a join and are still present.
    std::vector<ClientId> joined_clients() const;
    bool any_joined_ever() const { return any_joined_ever_; }

    /// Observer for every successfully delivered stateful datagram (the
    /// replay writer hooks in here).
    std::function<void(std::uint64_t tick, ClientId, std::span<const std::uint8_t>)> on_input;
    std::function<void(const EventRecord&)> on_event;

private:
    struct AgentRuntime {
        const AgentSpec* spec = nullptr;
        const ApproachPath* path = nullptr;
        double path_length = 0.0;
        double script_s = 0.0;          // arc position for scripted agents
        bool spawned = true;            // false while waiting for a SpawnScript trigger
        std::optional<ControlInput> input;  // latest human input (latest-wins)
        std::optional<ClientId> client;     // human occupying the slot
        AvMemory av;
        EhmiState ehmi;                 // masked
        std::optional<double> takeover_request;
        std::optional<TransitMotion> transit;
        std::optional<std::uint32_t> seated_in;
        Pose2D seat_offset;
        bool last_seat_request = false;
        bool in_zone = false;
    };

    struct NbackBlock {
        std::uint32_t block = 0;
        std::uint8_t n = 2;
        std::vector<std::uint8_t> symbols;
        std::uint64_t start_tick = 0;
        std::size_t next = 0;
    };

    struct ClientInfo {
        std::optional<std::uint32_t> agent;
        std::optional<std::uint32_t> hello_seq;
        bool present = true;
    };

    void init_world();
    void emit(std::uint16_t code, std::uint32_t subject, std::uint32_t object, double value,
              std::vector<Outbound>& out);
    std::vector<Outbound> handle_hello(ClientId client, const net::Message& msg);
    std::vector<Outbound> reject(ClientId client, std::uint32_t reason);
    std::vector<std::uint8_t> welcome_bytes(std::uint32_t agent_id);
    net::Header server_header(net::MsgType type, std::uint16_t agent_id);

    void step_agents(std::vector<Outbound>& out);
    void step_script(AgentState& s, AgentRuntime& rt, double dt);
    void apply_action(std::size_t trigger, const TriggerAction& action, std::vector<Outbound>& out);
    void update_zone_flags(std::vector<Outbound>& out);
    void run_nback(std::vector<Outbound>& out);
    void despawn_passed(std::vector<Outbound>& out);

    SessionConfig config_;
    std::uint64_t hash_ = 0;
    std::uint64_t tick_ = 0;
    std::vector<AgentState> agents_;
    std::map<std::uint32_t, AgentRuntime> runtime_;
    std::map<std::uint32_t, const ApproachPath*> paths_;
    std::map<ClientId, ClientInfo> clients_;
    bool any_joined_ever_ = false;
    net::SequenceTracker gate_;
    TriggerState triggers_;
    std::optional<SignalPhase> phase_;
    std::vector<EventRecord> events_;
    std::vector<AppliedControl> applied_;
    std::vector<NbackBlock> nback_;
    std::uint32_t next_nback_block_ = 0;
    std::uint64_t next_sync_mark_ = 0;
    std::uint32_t sync_index_ = 0;
    std::map<std::uint8_t, std::uint32_t> out_seq_;
    std::mt19937_64 rng_;
    SessionCounters counters_;
    VehicleParams vehicle_;
    CyclistParams cyclist_;
};

// -- replay log -------------------------------------------------------------------

struct ReplayInput {
    std::uint64_t tick = 0;
    ClientId client = 0;
    std::vector<std::uint8_t> datagram;
    std::optional<std::uint32_t> checksum;  // FNV-1a 32 of the datagram as written
};

struct ReplayCheckpoint {
    std::uint64_t tick = 0;
    std::vector<std::uint8_t> state;
};

struct ReplayLog {
    ScenarioSpec scenario;
    std::uint64_t scenario_hash = 0;
    std::uint64_t seed = 0;
    std::uint16_t tick_rate_hz = 100;
    std::uint8_t snapshot_div = 2;
    std::uint16_t session_id = 1;
    std::uint64_t full_snapshot_every = 1000;
    std::vector<ReplayInput> inputs;
    std::vector<EventRecord> events;
    std::vector<ReplayCheckpoint> checkpoints;
    std::uint64_t end_tick = 0;
    std::optional<std::uint64_t> digest;
};

class ReplayFormatError : public std::runtime_error {
public:
    ReplayFormatError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ReplayIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ReplayDivergence : public std::runtime_error {
public:
    ReplayDivergence(std::uint64_t tick, const std::string& what)
        : std::runtime_error("divergence at tick " + std::to_string(tick) + ": " + what), tick_(tick) {}
    std::uint64_t tick() const { return tick_; }

private:
    std::uint64_t tick_;
};

class HashMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint32_t fnv1a32(std::span<const std::uint8_t> bytes);

/// Streaming digest over snapshot datagrams and event records.
class StreamDigest {
public:
    void add_bytes(std::span<const std::uint8_t> bytes);
    void add_event(const EventRecord& e);
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

/// Writes the replay log as it happens. Attach with attach(); call finish()
/// after the last tick.
class ReplayWriter {
public:
    explicit ReplayWriter(std::ostream& out);

    void attach(Session& session);
    /// Call after each run_tick with that tick's output.
    void after_tick(const Session& session, const std::vector<Outbound>& out);
    void finish(const Session& session);

private:
    std::ostream& out_;
    StreamDigest digest_;
    bool header_written_ = false;
};

/// Parses a replay log. Throws ReplayFormatError.
ReplayLog read_replay_log(std::istream& in);
/// Throws ReplayIoError when the file cannot be opened.
ReplayLog read_replay_log_file(const std::string& path);

struct ReplayOptions {
    bool verify_checksums = true;
    bool compare_events = true;
    const ScenarioSpec* expected_scenario = nullptr;  // hash must match when given
    std::function<void(const Session&)> on_tick;      // after every tick (and once at tick 0)
};

struct ReplayResult {
    std::uint64_t ticks = 0;
    std::uint64_t digest = 0;
    std::vector<std::vector<std::uint8_t>> snapshots;  // outbound SNAPSHOT datagrams in order
    std::vector<EventRecord> events;
};

/// Re-runs the session from the recorded inputs. Throws HashMismatch or
/// ReplayDivergence naming the first divergent tick.
ReplayResult replay(const ReplayLog& log, const ReplayOptions& options = {});

// -- pacing ------------------------------------------------------------------------

/// Converts wall time into a count of due ticks. Ticks are never skipped:
/// after a stall, every missing tick is reported due at once.
class Pacer {
public:
    using NowFn = std::function<std::int64_t()>;  // microseconds, monotonic

    Pacer(std::uint16_t tick_rate_hz, NowFn now);

    /// Ticks that should have run by now but have not yet been taken.
    std::uint64_t due();
    void take(std::uint64_t n) { done_ += n; }
    std::uint64_t done() const { return done_; }
    /// Microseconds until the next tick boundary (0 when one is due).
    std::int64_t until_next() const;

private:
    std::uint16_t rate_;
    NowFn now_;
    std::int64_t start_;
    std::uint64_t done_ = 0;
};

std::int64_t monotonic_us();

}  // namespace mmsim
