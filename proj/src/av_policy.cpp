#include "mmsim/av_policy.hpp"

#include "mmsim/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmsim {

std::string_view to_string(AvState s)
{
    switch (s) {
    case AvState::Cruising: return "Cruising";
    case AvState::Approaching: return "Approaching";
    case AvState::Yielding: return "Yielding";
    case AvState::Stopped: return "Stopped";
    case AvState::Resuming: return "Resuming";
    }
    return "?";
}

EhmiState set_ehmi(AvState state)
{
    switch (state) {
    case AvState::Cruising: return {false, LightBand::Off, AudioCue::None, false};
    case AvState::Approaching: return {false, LightBand::Aware, AudioCue::None, true};
    case AvState::Yielding: return {true, LightBand::Yielding, AudioCue::Chime, true};
    case AvState::Stopped: return {true, LightBand::Yielding, AudioCue::None, false};
    case AvState::Resuming: return {false, LightBand::Aware, AudioCue::None, false};
    }
    return {};
}

EhmiState apply_mask(EhmiState ehmi, const EhmiMask& mask)
{
    if (!mask.projection) ehmi.projection_on = false;
    if (!mask.light_band) ehmi.light_band = LightBand::Off;
    if (!mask.audio) ehmi.audio_cue = AudioCue::None;
    if (!mask.phone) ehmi.phone_alert = false;
    return ehmi;
}

std::uint8_t pack_ehmi(const EhmiState& ehmi)
{
    return static_cast<std::uint8_t>((ehmi.projection_on ? 1u : 0u) |
                                     (static_cast<unsigned>(ehmi.light_band) << 1) |
                                     (ehmi.audio_cue == AudioCue::Chime ? 1u << 3 : 0u) |
                                     (ehmi.phone_alert ? 1u << 4 : 0u));
}

EhmiState unpack_ehmi(std::uint8_t bits)
{
    EhmiState e;
    e.projection_on = (bits & 1u) != 0;
    e.light_band = static_cast<LightBand>(std::min<unsigned>((bits >> 1) & 3u, 2u));
    e.audio_cue = (bits & (1u << 3)) ? AudioCue::Chime : AudioCue::None;
    e.phone_alert = (bits & (1u << 4)) != 0;
    return e;
}

std::string validate(const AvParams& p)
{
    if (!(p.v_cruise > 0 && p.detect_radius > 0 && p.ttc_yield > 0 && p.stop_buffer > 0 &&
          p.comfort_decel > 0 && p.resume_clear_time > 0 && p.zone_radius > 0 && p.lookahead > 0 &&
          p.speed_gain > 0 && p.resume_accel > 0)) {
        return "AV parameters must all be positive";
    }
    if (p.stop_buffer >= p.detect_radius) {
        return "stop_buffer must be smaller than detect_radius";
    }
    return {};
}

DriverInput pedals_for_accel(double desired_accel, double speed, double grade, const VehicleParams& vehicle)
{
    DriverInput in;
    in.gear = 1;
    // Invert v' = throttle*a_max - brake*b_max - c_d*v - g*grade for v >= 0.
    const double needed = desired_accel + vehicle.drag_coeff * speed + kGravity * grade;
    if (needed >= 0.0) {
        in.throttle = static_cast<float>(std::clamp(needed / vehicle.a_max, 0.0, 1.0));
    } else {
        in.brake = static_cast<float>(std::clamp(-needed / vehicle.b_max, 0.0, 1.0));
    }
    return in;
}

bool exceeds_engagement(const DriverInput& manual)
{
    return std::abs(manual.steer_wheel) > takeover_threshold::kSteer ||
           manual.brake > takeover_threshold::kPedal || manual.throttle > takeover_threshold::kPedal;
}

TakeoverResult takeover(const AgentState& av, const DriverInput& manual, double t,
                        std::optional<double> request_time)
{
    TakeoverResult result{av, std::nullopt};
    if (av.control_authority == ControlAuthority::Human || !exceeds_engagement(manual)) {
        return result;
    }
    result.state.control_authority = ControlAuthority::Human;
    result.event = TakeoverEvent{av.agent_id, request_time, t};
    return result;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStoppedSpeed = 0.05;
constexpr double kCruiseBand = 0.1;

struct Situation {
    double d_av = 0.0;      // signed distance of the AV centre to the conflict point
    double tta_av = kInf;
    bool av_cleared = false;
    bool vru_detected = false;  // any VRU within detect radius that has not cleared the zone
    std::optional<double> min_ttc;
};

Situation assess(const PolicyWorld& world, const AgentState& av, const ApproachPath& av_path,
                 Vec2 conflict, const AvParams& params)
{
    Situation s;
    const double v = av.kin.speed;
    const double h_av = half_length(av.kind);
    s.d_av = signed_distance_to_conflict(av, av_path);
    s.av_cleared = s.d_av < -h_av;
    if (s.d_av > 0.0 && v > 1e-9) {
        s.tta_av = s.d_av / v;
    }
    for (const AgentState& other : world.agents) {
        if (!is_vulnerable(other.kind) || other.seated) {
            continue;
        }
        const auto it = world.paths->find(other.agent_id);
        if (it == world.paths->end() || it->second == nullptr ||
            it->second->conflict_point != av_path.conflict_point) {
            continue;
        }
        const double r = distance(other.pose.position(), conflict);
        if (r > params.detect_radius) {
            continue;
        }
        const double d_vru = signed_distance_to_conflict(other, *it->second);
        if (d_vru < -params.zone_radius && r > params.zone_radius) {
            continue;  // crossed and walked clear
        }
        s.vru_detected = true;
        if (!s.av_cleared) {
            const auto ttc = crossing_ttc(s.d_av, v, h_av, d_vru, other.kin.speed, half_length(other.kind));
            if (ttc && (!s.min_ttc || *ttc < *s.min_ttc)) {
                s.min_ttc = ttc;
            }
        }
    }
    return s;
}

}  // namespace

AvDecision av_decide(const PolicyWorld& world, std::uint32_t av_id, const AvMemory& memory,
                     const AvParams& params, const VehicleParams& vehicle, double dt)
{
    check_timestep(dt);
    if (world.map == nullptr || world.paths == nullptr) {
        throw std::invalid_argument("policy world is incomplete");
    }
    const AgentState* av = nullptr;
    for (const auto& a : world.agents) {
        if (a.agent_id == av_id) {
            av = &a;
            break;
        }
    }
    if (av == nullptr) {
        throw std::invalid_argument("unknown AV id");
    }
    const auto path_it = world.paths->find(av_id);
    if (path_it == world.paths->end() || path_it->second == nullptr) {
        throw std::invalid_argument("AV has no approach path");
    }
    const ApproachPath& path = *path_it->second;
    const ConflictPoint* cp = world.map->find_conflict_point(path.conflict_point);
    if (cp == nullptr) {
        throw std::invalid_argument("AV path has no conflict point");
    }

    const Situation s = assess(world, *av, path, cp->position, params);
    const double v = av->kin.speed;

    AvMemory next = memory;
    next.clear_time = s.vru_detected ? 0.0 : memory.clear_time + dt;
    const bool approaching = !s.av_cleared && s.vru_detected && s.tta_av < 2.0 * params.ttc_yield;
    const bool must_yield = !s.av_cleared && s.min_ttc && *s.min_ttc < params.ttc_yield;
    const bool released = next.clear_time >= params.resume_clear_time;

    switch (memory.state) {
    case AvState::Cruising:
        if (approaching) next.state = AvState::Approaching;
        break;
    case AvState::Approaching:
        if (must_yield) {
            next.state = AvState::Yielding;
        } else if (!approaching) {
            next.state = AvState::Cruising;
        }
        break;
    case AvState::Yielding:
        if (released || s.av_cleared) {
            next.state = AvState::Resuming;
        } else if (v < kStoppedSpeed) {
            next.state = AvState::Stopped;
        }
        break;
    case AvState::Stopped:
        if (released || s.av_cleared) next.state = AvState::Resuming;
        break;
    case AvState::Resuming:
        if (must_yield) {
            next.state = AvState::Yielding;
        } else if (v >= params.v_cruise - kCruiseBand) {
            next.state = AvState::Cruising;
        }
        break;
    }

    // Lateral: pure pursuit on the approach path, extended past its end.
    const double progress = path_progress(av->pose, path.points);
    const Pose2D target = point_at(path.points, progress + params.lookahead);
    const double dx = target.x - av->pose.x;
    const double dy = target.y - av->pose.y;
    const double ld = std::max(std::hypot(dx, dy), 1e-6);
    const double alpha = normalize_heading(std::atan2(dy, dx) - av->pose.heading);
    const double delta = std::atan2(2.0 * vehicle.wheelbase * std::sin(alpha), ld);
    const double steer_wheel = std::clamp(delta * vehicle.steer_ratio,
                                          -static_cast<double>(input_limits::kMaxSteerWheel),
                                          static_cast<double>(input_limits::kMaxSteerWheel));

    // Longitudinal.
    const double grade = path.grade_at(progress);
    const double hold = std::clamp(params.speed_gain * (params.v_cruise - v), -params.comfort_decel, vehicle.a_max);
    double desired = hold;
    bool full_stop = false;
    switch (next.state) {
    case AvState::Cruising:
    case AvState::Approaching: desired = hold; break;
    case AvState::Resuming: desired = std::min(hold, params.resume_accel); break;
    case AvState::Yielding: {
        const double d_stop = s.d_av - half_length(av->kind) - params.stop_buffer;
        if (d_stop <= 0.01) {
            full_stop = true;
        } else {
            const double required = v * v / (2.0 * d_stop);
            if (required >= params.comfort_decel) {
                desired = -required;
            } else {
                desired = std::min(hold, 0.0);
            }
        }
        break;
    }
    case AvState::Stopped: full_stop = true; break;
    }

    AvDecision decision;
    if (full_stop) {
        decision.actuation = DriverInput{};
        decision.actuation.gear = 1;
        decision.actuation.brake = 1.0f;
    } else {
        decision.actuation = pedals_for_accel(desired, v, grade, vehicle);
    }
    decision.actuation.steer_wheel = static_cast<float>(steer_wheel);
    decision.memory = next;
    decision.ehmi = set_ehmi(next.state);
    decision.min_ttc = s.min_ttc;
    return decision;
}

}  // namespace mmsim
