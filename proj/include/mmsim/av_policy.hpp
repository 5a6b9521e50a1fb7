#pragma once

// Automated-vehicle behaviour: a five-state yielding machine, the external
// HMI channels it drives, and the latching human takeover.

#include "mmsim/dynamics.hpp"
#include "mmsim/world_model.hpp"

#include <map>
#include <optional>
#include <span>

namespace mmsim {

enum class AvState : std::uint8_t { Cruising = 0, Approaching = 1, Yielding = 2, Stopped = 3, Resuming = 4 };

inline constexpr std::array<AvState, 5> kAllAvStates = {
    AvState::Cruising, AvState::Approaching, AvState::Yielding, AvState::Stopped, AvState::Resuming};

std::string_view to_string(AvState s);

enum class LightBand : std::uint8_t { Off = 0, Aware = 1, Yielding = 2 };
enum class AudioCue : std::uint8_t { None = 0, Chime = 1 };

struct EhmiState {
    bool projection_on = false;
    LightBand light_band = LightBand::Off;
    AudioCue audio_cue = AudioCue::None;
    bool phone_alert = false;

    friend bool operator==(const EhmiState&, const EhmiState&) = default;
};

/// Per-channel enable mask for an experimental condition.
struct EhmiMask {
    bool projection = true;
    bool light_band = true;
    bool audio = true;
    bool phone = true;

    friend bool operator==(const EhmiMask&, const EhmiMask&) = default;
};

/// Channel table. Audio is reported as Chime for the Yielding state; the
/// server plays it once, on entry.
EhmiState set_ehmi(AvState state);
EhmiState apply_mask(EhmiState ehmi, const EhmiMask& mask);

/// bit0 projection, bits1-2 light band, bit3 chime, bit4 phone alert.
std::uint8_t pack_ehmi(const EhmiState& ehmi);
EhmiState unpack_ehmi(std::uint8_t bits);

struct AvParams {
    double v_cruise = 30.0 / 3.6;  // m/s
    double detect_radius = 35.0;   // m
    double ttc_yield = 4.0;        // s
    double stop_buffer = 2.0;      // m, front bumper to conflict point
    double comfort_decel = 2.5;    // m/s^2
    double resume_clear_time = 1.5;  // s
    double zone_radius = 3.0;      // m around the conflict point
    double lookahead = 8.0;        // m, pure pursuit
    double speed_gain = 1.0;       // 1/s, speed-hold P gain
    double resume_accel = 1.5;     // m/s^2

    friend bool operator==(const AvParams&, const AvParams&) = default;
};

/// Returns an empty string when the parameters are consistent.
std::string validate(const AvParams& params);

/// Decision state the server keeps per AV between ticks.
struct AvMemory {
    AvState state = AvState::Cruising;
    double clear_time = 0.0;  // continuous seconds with no VRU in or near the zone

    friend bool operator==(const AvMemory&, const AvMemory&) = default;
};

/// Read-only view of the world the policy reasons over.
struct PolicyWorld {
    std::span<const AgentState> agents;
    const MapModel* map = nullptr;
    const std::map<std::uint32_t, const ApproachPath*>* paths = nullptr;  // by agent id
};

struct AvDecision {
    DriverInput actuation;
    AvMemory memory;
    EhmiState ehmi;  // unmasked channel state for memory.state
    std::optional<double> min_ttc;
};

/// Throws std::invalid_argument when the AV or its conflict mapping is missing
/// (scenario validation rejects that configuration up front).
AvDecision av_decide(const PolicyWorld& world, std::uint32_t av_id, const AvMemory& memory,
                     const AvParams& params, const VehicleParams& vehicle, double dt);

/// Converts a desired longitudinal acceleration into pedal commands for
/// step_vehicle in forward gear.
DriverInput pedals_for_accel(double desired_accel, double speed, double grade, const VehicleParams& vehicle);

namespace takeover_threshold {
inline constexpr float kSteer = 0.1f;     // rad
inline constexpr float kPedal = 0.05f;
}  // namespace takeover_threshold

bool exceeds_engagement(const DriverInput& manual);

struct TakeoverEvent {
    std::uint32_t agent_id = 0;
    std::optional<double> request_time;  // s; absent for spontaneous overrides
    double engage_time = 0.0;            // s

    std::optional<double> time_to_intervention() const
    {
        if (!request_time) return std::nullopt;
        return engage_time - *request_time;
    }
};

struct TakeoverResult {
    AgentState state;
    std::optional<TakeoverEvent> event;  // set only when authority changed now
};

/// Hands the AV to the human when the manual input crosses the engagement
/// threshold. Authority latches: a Human AV stays Human.
TakeoverResult takeover(const AgentState& av, const DriverInput& manual, double t,
                        std::optional<double> request_time);

}  // namespace mmsim
