#pragma once

// Binary datagram protocol between agent engines and the authoritative
// server. All multi-byte fields are little-endian; floats are IEEE-754.
//
// Header (24 bytes):
//   0  u32 magic 0x53494D31     8  u16 session
//   4  u8  version (1)         10  u16 agent_id
//   5  u8  msg_type            12  u32 seq
//   6  u8  flags               16  u64 timestamp_us
//   7  u8  kind (AgentKind or 0xFF)

#include "mmsim/world_model.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace mmsim::net {

inline constexpr std::uint32_t kMagic = 0x53494D31;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::size_t kAgentRecordSize = 38;
inline constexpr std::size_t kSnapshotFixedSize = 18;
inline constexpr std::size_t kMaxDatagram = 1400;
inline constexpr std::size_t kMaxSnapshotAgents = (kMaxDatagram - kHeaderSize - kSnapshotFixedSize) / kAgentRecordSize;
inline constexpr std::size_t kMaxNameBytes = 32;
inline constexpr std::uint8_t kNoKind = 0xFF;

inline constexpr std::uint16_t kDefaultUdpPort = 47810;
inline constexpr std::uint16_t kDefaultWsPort = 47811;

enum class MsgType : std::uint8_t {
    Hello = 0x01,
    Welcome = 0x02,
    Input = 0x03,
    Snapshot = 0x04,
    Event = 0x05,
    Ping = 0x06,
    Pong = 0x07,
    QResponse = 0x08,
    Nback = 0x09,
    Bye = 0x0F,
};

namespace header_flags {
/// On SNAPSHOT: further fragments of the same tick follow.
inline constexpr std::uint8_t kMoreFragments = 1u << 0;
}  // namespace header_flags

/// Snapshot record flag bits (AgentRecord.flags).
namespace record_flags {
inline constexpr std::uint8_t kYielding = 1u << 0;
inline constexpr std::uint8_t kBraking = 1u << 1;
inline constexpr std::uint8_t kInConflictZone = 1u << 2;
inline constexpr std::uint8_t kSeated = 1u << 3;
inline constexpr std::uint8_t kHumanControl = 1u << 4;
inline constexpr unsigned kAvStateShift = 5;  // bits 5-7 carry AvState on AV records
}  // namespace record_flags

struct Header {
    std::uint8_t flags = 0;
    std::uint8_t kind = kNoKind;
    std::uint16_t session = 0;
    std::uint16_t agent_id = 0;
    std::uint32_t seq = 0;
    std::uint64_t timestamp_us = 0;

    friend bool operator==(const Header&, const Header&) = default;
};

struct Hello {
    AgentKind role = AgentKind::Pedestrian;
    std::string display_name;  // UTF-8, at most 32 bytes
    friend bool operator==(const Hello&, const Hello&) = default;
};

struct Welcome {
    std::uint32_t assigned_agent_id = 0;
    std::uint16_t tick_rate_hz = 0;
    std::uint8_t snapshot_div = 0;
    std::uint64_t scenario_hash = 0;
    friend bool operator==(const Welcome&, const Welcome&) = default;
};

struct Input {
    ControlInput control = PolicyInput{};
    std::uint64_t client_tick_hint = 0;
    friend bool operator==(const Input&, const Input&) = default;
};

struct AgentRecord {
    std::uint32_t id = 0;
    AgentKind kind = AgentKind::Driver;
    std::uint8_t flags = 0;
    double x = 0.0;
    double y = 0.0;
    float heading = 0.0f;
    float speed = 0.0f;
    float accel = 0.0f;
    float aux = 0.0f;
    friend bool operator==(const AgentRecord&, const AgentRecord&) = default;
};

struct Snapshot {
    std::uint64_t tick = 0;
    std::uint64_t sim_time_us = 0;
    std::vector<AgentRecord> agents;
    friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct Event {
    std::uint16_t code = 0;
    std::uint32_t subject = 0;
    std::uint32_t object = 0;
    double value = 0.0;
    friend bool operator==(const Event&, const Event&) = default;
};

struct Ping {
    std::uint64_t t0 = 0;
    friend bool operator==(const Ping&, const Ping&) = default;
};

struct Pong {
    std::uint64_t t0 = 0;
    std::uint64_t t1 = 0;
    std::uint64_t t2 = 0;
    friend bool operator==(const Pong&, const Pong&) = default;
};

struct QResponse {
    std::uint8_t instrument = 0;  // Instrument enum value
    std::uint8_t item = 0;
    float value = 0.0f;
    friend bool operator==(const QResponse&, const QResponse&) = default;
};

enum class NbackKind : std::uint8_t { Stimulus = 0, Response = 1 };

struct Nback {
    NbackKind kind = NbackKind::Response;
    std::uint8_t symbol = 0;
    std::uint32_t rt_hint_us = 0;  // client-measured reaction time, advisory
    friend bool operator==(const Nback&, const Nback&) = default;
};

struct Bye {
    friend bool operator==(const Bye&, const Bye&) = default;
};

using Payload = std::variant<Hello, Welcome, Input, Snapshot, Event, Ping, Pong, QResponse, Nback, Bye>;

struct Message {
    Header header;
    Payload payload;

    MsgType type() const;
    friend bool operator==(const Message&, const Message&) = default;
};

MsgType type_of(const Payload& payload);

enum class DecodeError : std::uint8_t {
    BadMagic,
    BadVersion,
    Truncated,
    UnknownType,
    BadEnum,
    BadLength,
    TrailingBytes,
    Oversize,
};

std::string_view to_string(DecodeError e);

struct Decoded {
    std::optional<Message> message;
    DecodeError error = DecodeError::Truncated;

    bool ok() const { return message.has_value(); }
};

/// Serializes a message. Throws std::length_error when the payload breaks a
/// size rule (name > 32 bytes, datagram > 1400 bytes).
std::vector<std::uint8_t> encode(const Message& msg);

/// Never reads outside `bytes`; every malformed datagram maps to an error.
Decoded decode(std::span<const std::uint8_t> bytes);

/// Splits a snapshot into datagrams of at most kMaxSnapshotAgents records.
/// Every fragment but the last carries kMoreFragments; seq increments from
/// `first.seq`.
std::vector<Message> fragment_snapshot(const Snapshot& snapshot, const Header& first);

/// Reassembles fragments of one tick. Returns the full snapshot when the last
/// fragment arrives; a fragment of a newer tick discards a partial older one.
class SnapshotAssembler {
public:
    std::optional<Snapshot> push(const Message& fragment);

private:
    std::optional<Snapshot> partial_;
};

// -- clock synchronization -------------------------------------------------------

struct ClockSample {
    std::uint64_t t0 = 0;  // client send
    std::uint64_t t1 = 0;  // server receive
    std::uint64_t t2 = 0;  // server send
    std::uint64_t t3 = 0;  // client receive
};

struct OffsetEstimate {
    std::int64_t offset_us = 0;  // server clock minus client clock
    std::uint64_t delay_us = 0;
};

std::int64_t sample_offset(const ClockSample& s);
std::uint64_t sample_delay(const ClockSample& s);

/// Offset of the minimum-delay sample among the last `window` samples.
/// Throws std::invalid_argument on an empty list or zero window.
OffsetEstimate estimate_offset(std::span<const ClockSample> samples, std::size_t window);

// -- sequencing ------------------------------------------------------------------

enum class GateResult : std::uint8_t { Accept, Stale };

/// Latest-wins: accept iff incoming > last.
GateResult sequence_gate(std::uint32_t last_seq, std::uint32_t incoming_seq);

/// Tracks the last accepted seq per (session, agent, msg_type).
class SequenceTracker {
public:
    GateResult admit(const Message& msg);
    void reset() { last_.clear(); }

private:
    std::map<std::tuple<std::uint16_t, std::uint16_t, std::uint8_t>, std::uint32_t> last_;
};

/// Packs AgentState into a wire record. `av_state` is the AvState value for
/// AV agents (ignored otherwise).
AgentRecord to_record(const AgentState& state, std::uint8_t av_state);

}  // namespace mmsim::net
