#include "mmsim/events.hpp"

#include <array>
#include <charconv>
#include <utility>

namespace mmsim {

namespace {

constexpr std::array<std::pair<EventCode, std::string_view>, 25> kNames = {{
    {EventCode::EHMI_CHANGE, "EHMI_CHANGE"},
    {EventCode::TAKEOVER_REQUEST, "TAKEOVER_REQUEST"},
    {EventCode::TAKEOVER_ENGAGE, "TAKEOVER_ENGAGE"},
    {EventCode::TRIGGER_FIRED, "TRIGGER_FIRED"},
    {EventCode::CONFLICT_ENTER, "CONFLICT_ENTER"},
    {EventCode::CONFLICT_EXIT, "CONFLICT_EXIT"},
    {EventCode::SIGNAL_PHASE, "SIGNAL_PHASE"},
    {EventCode::QRESPONSE, "QRESPONSE"},
    {EventCode::NBACK_STIM, "NBACK_STIM"},
    {EventCode::NBACK_RESP, "NBACK_RESP"},
    {EventCode::SYNC_MARK, "SYNC_MARK"},
    {EventCode::JOIN_REJECTED, "JOIN_REJECTED"},
    {EventCode::SEAT_WARNING, "SEAT_WARNING"},
    {EventCode::ACTION_DROPPED, "ACTION_DROPPED"},
    {EventCode::DIAGNOSTIC, "DIAGNOSTIC"},
    {EventCode::START_QUESTIONNAIRE, "START_QUESTIONNAIRE"},
    {EventCode::START_NBACK, "START_NBACK"},
    {EventCode::AGENT_SPAWN, "AGENT_SPAWN"},
    {EventCode::AGENT_DESPAWN, "AGENT_DESPAWN"},
    {EventCode::DOOR_OPEN, "DOOR_OPEN"},
    {EventCode::DOOR_CLOSE, "DOOR_CLOSE"},
    {EventCode::BOARDED, "BOARDED"},
    {EventCode::ALIGHTED, "ALIGHTED"},
    {EventCode::HAZARD, "HAZARD"},
    {EventCode::CROSSING_CUE, "CROSSING_CUE"},
}};

}  // namespace

std::string event_code_name(std::uint16_t code)
{
    for (const auto& [c, name] : kNames) {
        if (static_cast<std::uint16_t>(c) == code) {
            return std::string(name);
        }
    }
    return "USER_" + std::to_string(code);
}

std::optional<std::uint16_t> event_code_from_name(std::string_view name)
{
    for (const auto& [c, n] : kNames) {
        if (n == name) {
            return static_cast<std::uint16_t>(c);
        }
    }
    if (name.starts_with("USER_")) {
        unsigned value = 0;
        const auto digits = name.substr(5);
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec == std::errc{} && ptr == digits.data() + digits.size() && value <= 0xFFFF) {
            return static_cast<std::uint16_t>(value);
        }
    }
    return std::nullopt;
}

}  // namespace mmsim
