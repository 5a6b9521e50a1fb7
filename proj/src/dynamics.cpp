#include "mmsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmsim {

namespace {

constexpr double kBrakeFlagThreshold = 0.05;

double sign_of(double v)
{
    return static_cast<double>((v > 0.0) - (v < 0.0));
}

double clamp_speed(double v, AgentKind kind)
{
    const double cap = max_speed(kind);
    return std::clamp(v, -cap, cap);
}

}  // namespace

void check_timestep(double dt)
{
    if (!(dt > 0.0 && dt <= 0.1)) {
        throw std::invalid_argument("timestep must lie in (0, 0.1] s");
    }
}

double road_wheel_angle(const DriverInput& input, const VehicleParams& params)
{
    const double delta = static_cast<double>(input.steer_wheel) / params.steer_ratio;
    return std::clamp(delta, -params.max_road_wheel, params.max_road_wheel);
}

AgentState step_vehicle(const AgentState& state, const DriverInput& input,
                        const VehicleParams& params, double grade, double dt)
{
    check_timestep(dt);
    AgentState next = state;
    const double v = state.kin.speed;
    const double delta = road_wheel_angle(input, params);
    const double gear_sign = input.gear > 0 ? 1.0 : (input.gear < 0 ? -1.0 : 0.0);
    const double brake_accel = static_cast<double>(input.brake) * params.b_max;
    const double drive = gear_sign * static_cast<double>(input.throttle) * params.a_max - kGravity * grade;

    double v_new = 0.0;
    if (v != 0.0) {
        const double vdot = drive - sign_of(v) * brake_accel - params.drag_coeff * v;
        v_new = v + vdot * dt;
        // Brake and drag can bring the vehicle to rest but never reverse it.
        if (sign_of(v_new) != sign_of(v)) {
            v_new = 0.0;
        }
    } else {
        // At rest the brake acts as static friction up to its full capacity.
        if (std::abs(drive) > brake_accel) {
            v_new = (drive - sign_of(drive) * brake_accel) * dt;
        }
    }
    v_new = clamp_speed(v_new, state.kind);

    const double yaw_rate = v * std::tan(delta) / params.wheelbase;
    next.pose.x = state.pose.x + v * std::cos(state.pose.heading) * dt;
    next.pose.y = state.pose.y + v * std::sin(state.pose.heading) * dt;
    next.pose.heading = normalize_heading(state.pose.heading + yaw_rate * dt);
    next.kin.speed = v_new;
    next.kin.accel = (v_new - v) / dt;
    next.kin.yaw_rate = yaw_rate;
    next.kin.aux = 0.0;
    next.set_flag(agent_flags::kBraking, input.brake > kBrakeFlagThreshold);
    return next;
}

double assist_factor(double speed, AssistLevel level, const CyclistParams& params)
{
    double gain = 0.0;
    switch (level) {
    case AssistLevel::Off: gain = 0.0; break;
    case AssistLevel::Eco: gain = params.gain_eco; break;
    case AssistLevel::Tour: gain = params.gain_tour; break;
    case AssistLevel::Turbo: gain = params.gain_turbo; break;
    }
    if (speed >= params.assist_cutoff_speed) {
        return 0.0;
    }
    if (speed <= params.assist_taper_start) {
        return gain;
    }
    const double taper = (params.assist_cutoff_speed - speed) /
                         (params.assist_cutoff_speed - params.assist_taper_start);
    return gain * taper;
}

namespace {

struct BikeForces {
    double propulsive = 0.0;  // drive + gravity component, signed
    double resistive = 0.0;   // magnitude opposing motion
};

BikeForces bike_forces(double v, const CyclistInput& input, const CyclistParams& p, double grade)
{
    const double theta = std::atan(grade);
    const double rider = static_cast<double>(input.power);
    const double total_power = rider * (1.0 + assist_factor(v, input.assist, p));
    BikeForces f;
    f.propulsive = p.drivetrain_eff * total_power / std::max(v, p.min_propulsion_speed) -
                   p.mass * p.g * std::sin(theta);
    f.resistive = p.crr * p.mass * p.g * std::cos(theta) + 0.5 * p.rho * p.cda * v * v +
                  static_cast<double>(input.brake) * p.brake_force_max;
    return f;
}

}  // namespace

double cyclist_net_force(double speed, const CyclistInput& input, const CyclistParams& params, double grade)
{
    const BikeForces f = bike_forces(speed, input, params, grade);
    return f.propulsive - f.resistive;
}

AgentState step_cyclist(const AgentState& state, const CyclistInput& input,
                        const CyclistParams& params, double grade, double dt)
{
    check_timestep(dt);
    AgentState next = state;
    const double v = std::max(state.kin.speed, 0.0);
    const BikeForces f = bike_forces(v, input, params, grade);

    double v_new = 0.0;
    if (v > 0.0) {
        v_new = std::max(0.0, v + (f.propulsive - f.resistive) / params.mass * dt);
    } else if (f.propulsive > f.resistive) {
        v_new = (f.propulsive - f.resistive) / params.mass * dt;
    }
    v_new = std::min(v_new, max_speed(state.kind));

    const double delta = std::clamp(static_cast<double>(input.steer), -0.6, 0.6);
    const double yaw_rate = v * std::tan(delta) / params.wheelbase;
    next.pose.x = state.pose.x + v * std::cos(state.pose.heading) * dt;
    next.pose.y = state.pose.y + v * std::sin(state.pose.heading) * dt;
    next.pose.heading = normalize_heading(state.pose.heading + yaw_rate * dt);
    next.kin.speed = v_new;
    next.kin.accel = (v_new - v) / dt;
    next.kin.yaw_rate = yaw_rate;
    next.kin.aux = static_cast<double>(input.cadence);
    next.set_flag(agent_flags::kBraking, input.brake > kBrakeFlagThreshold);
    return next;
}

bool TransitContext::contains(Vec2 p) const
{
    const double dx = p.x - vehicle_pose.x;
    const double dy = p.y - vehicle_pose.y;
    const double c = std::cos(vehicle_pose.heading);
    const double s = std::sin(vehicle_pose.heading);
    const double along = dx * c + dy * s;
    const double across = -dx * s + dy * c;
    return std::abs(along) <= zone_half_length && std::abs(across) <= zone_half_width;
}

Pose2D to_local(const Pose2D& pose, const Pose2D& vehicle_pose)
{
    const double dx = pose.x - vehicle_pose.x;
    const double dy = pose.y - vehicle_pose.y;
    const double c = std::cos(vehicle_pose.heading);
    const double s = std::sin(vehicle_pose.heading);
    return {dx * c + dy * s, -dx * s + dy * c, normalize_heading(pose.heading - vehicle_pose.heading)};
}

AgentState follow_vehicle(const AgentState& seated, const Pose2D& vehicle_pose, const Pose2D& local_offset)
{
    AgentState next = seated;
    const double c = std::cos(vehicle_pose.heading);
    const double s = std::sin(vehicle_pose.heading);
    next.pose.x = vehicle_pose.x + local_offset.x * c - local_offset.y * s;
    next.pose.y = vehicle_pose.y + local_offset.x * s + local_offset.y * c;
    next.pose.heading = normalize_heading(vehicle_pose.heading + local_offset.heading);
    next.kin = KinematicState{};
    return next;
}

PedestrianStepResult step_pedestrian(const AgentState& state, const PedestrianInput& input, double dt,
                                     const std::vector<TransitContext>& transit)
{
    check_timestep(dt);
    PedestrianStepResult result;
    result.state = state;
    AgentState& next = result.state;

    if (state.seated) {
        if (input.seated_request) {
            next.kin = KinematicState{};
            return result;
        }
        next.seated = false;
    }

    const double v = next.kin.speed;
    const double target = std::min(static_cast<double>(input.walk_speed), max_speed(state.kind));
    // First-order lag, with a minimum rate so the speed settles exactly.
    const double err = target - v;
    const double rate = std::max(std::abs(err) * std::min(dt / kWalkResponseTau, 1.0), kWalkMinAccel * dt);
    const double v_new = v + std::clamp(err, -rate, rate);
    double turn = normalize_heading(static_cast<double>(input.walk_heading) - state.pose.heading);
    if (turn < -kPi + 1e-6) {
        turn = kPi;  // a half turn (float pi rounds past pi) goes counter-clockwise
    }
    const double max_turn = kWalkSlewRate * dt;
    const double applied = std::clamp(turn, -max_turn, max_turn);

    next.pose.x = state.pose.x + v * std::cos(state.pose.heading) * dt;
    next.pose.y = state.pose.y + v * std::sin(state.pose.heading) * dt;
    next.pose.heading = normalize_heading(state.pose.heading + applied);
    next.kin.speed = v_new;
    next.kin.accel = (v_new - v) / dt;
    next.kin.yaw_rate = applied / dt;
    next.kin.aux = std::abs(v_new) / kWalkStepLength;

    if (input.seated_request && !state.seated) {
        const TransitContext* zone = nullptr;
        for (const auto& t : transit) {
            if (t.contains(next.pose.position())) {
                zone = &t;
                break;
            }
        }
        if (zone == nullptr) {
            result.seat_request_ignored = true;
        } else if (v_new < kSeatMaxSpeed) {
            next.seated = true;
            next.kin = KinematicState{};
            result.boarded_vehicle = zone->vehicle_id;
        }
    }
    return result;
}

CueCommand compute_cues(const AgentState& state, double grade)
{
    CueCommand cue;
    const double v = state.kin.speed;
    cue.fan_intensity = std::clamp(v / kFanReferenceSpeed, 0.0, 1.0);
    cue.bike_tilt = std::atan(std::clamp(grade, -0.10, 0.20));
    const double a_long = state.kin.accel;
    const double a_lat = v * state.kin.yaw_rate;
    cue.platform_pitch = std::clamp(-kPlatformGain * a_long, -kPlatformLimit, kPlatformLimit);
    cue.platform_roll = std::clamp(kPlatformGain * a_lat, -kPlatformLimit, kPlatformLimit);
    return cue;
}

TransitMotion step_transit(const TransitMotion& motion, const TransitSchedule& schedule, double dt,
                           bool* arrived)
{
    check_timestep(dt);
    if (arrived != nullptr) {
        *arrived = false;
    }
    TransitMotion next = motion;
    if (motion.dwell_remaining > 0.0) {
        next.speed = 0.0;
        next.dwell_remaining = motion.dwell_remaining - dt;
        if (next.dwell_remaining <= 0.0) {
            next.dwell_remaining = 0.0;
            next.doors_open = false;
            ++next.next_stop;
        }
        return next;
    }

    const double a = schedule.accel;
    double v_target = schedule.cruise_speed;
    const bool has_stop = motion.next_stop < schedule.stops.size();
    double stop_s = 0.0;
    if (has_stop) {
        stop_s = schedule.stops[motion.next_stop];
        const double remaining = std::max(stop_s - motion.s, 0.0);
        v_target = std::min(v_target, std::sqrt(2.0 * a * remaining));
    }
    double v_new = v_target;
    if (v_target > motion.speed) {
        v_new = std::min(v_target, motion.speed + a * dt);
    }
    next.speed = v_new;
    next.s = motion.s + v_new * dt;
    if (has_stop && (next.s >= stop_s || stop_s - motion.s <= 1e-3)) {
        next.s = stop_s;
        next.speed = 0.0;
        next.dwell_remaining = schedule.dwell_s;
        next.doors_open = true;
        if (arrived != nullptr) {
            *arrived = true;
        }
        if (schedule.dwell_s <= 0.0) {
            next.doors_open = false;
            ++next.next_stop;
        }
    }
    return next;
}

}  // namespace mmsim
