#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mmsim {

/// Simulator event codes. Values are part of the wire format (EVENT.code) and
/// of the log files. Codes at or above kUserEventBase are scenario-defined.
enum class EventCode : std::uint16_t {
    EHMI_CHANGE = 1,
    TAKEOVER_REQUEST = 2,
    TAKEOVER_ENGAGE = 3,
    TRIGGER_FIRED = 4,
    CONFLICT_ENTER = 5,
    CONFLICT_EXIT = 6,
    SIGNAL_PHASE = 7,
    QRESPONSE = 8,
    NBACK_STIM = 9,
    NBACK_RESP = 10,
    SYNC_MARK = 11,
    JOIN_REJECTED = 12,
    SEAT_WARNING = 13,
    ACTION_DROPPED = 14,
    DIAGNOSTIC = 15,
    START_QUESTIONNAIRE = 16,
    START_NBACK = 17,
    AGENT_SPAWN = 18,
    AGENT_DESPAWN = 19,
    DOOR_OPEN = 20,
    DOOR_CLOSE = 21,
    BOARDED = 22,
    ALIGHTED = 23,
    HAZARD = 0x100,
    CROSSING_CUE = 0x101,
};

inline constexpr std::uint16_t kUserEventBase = 0x1000;

std::string event_code_name(std::uint16_t code);
std::optional<std::uint16_t> event_code_from_name(std::string_view name);

/// One record of the session event log.
struct EventRecord {
    std::uint64_t sim_time_us = 0;
    std::uint64_t tick = 0;
    std::uint16_t code = 0;
    std::uint32_t subject = 0;
    std::uint32_t object = 0;
    double value = 0.0;

    double sim_time_s() const { return static_cast<double>(sim_time_us) * 1e-6; }
    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

}  // namespace mmsim
