#pragma once

// Fixed-timestep motion models per agent kind and the actuator cue laws.
// All step functions are pure: identical arguments give bitwise-identical
// results. Integration is explicit Euler at the server tick.

#include "mmsim/world_model.hpp"

namespace mmsim {

struct VehicleParams {
    double wheelbase = 2.7;       // m
    double steer_ratio = 15.0;
    double max_road_wheel = 0.6;  // rad
    double a_max = 3.0;           // m/s^2
    double b_max = 8.0;           // m/s^2
    double drag_coeff = 0.05;     // 1/s, linear in speed
};

struct CyclistParams {
    double mass = 85.0;  // kg, rider + bike
    double crr = 0.005;
    double cda = 0.5;    // m^2
    double rho = 1.225;  // kg/m^3
    double drivetrain_eff = 0.97;
    double g = 9.81;
    double assist_cutoff_speed = 6.944;  // 25 km/h
    double assist_taper_start = 5.556;   // 20 km/h
    double gain_eco = 0.5;
    double gain_tour = 1.0;
    double gain_turbo = 2.0;
    double brake_force_max = 400.0;  // N
    double wheelbase = 1.1;          // m
    double min_propulsion_speed = 0.5;  // floor in the P/v term
};

inline constexpr double kGravity = 9.81;

struct CueCommand {
    double fan_intensity = 0.0;   // [0, 1]
    double bike_tilt = 0.0;       // rad
    double platform_pitch = 0.0;  // rad
    double platform_roll = 0.0;   // rad
};

/// Throws std::invalid_argument when dt is outside (0, 0.1].
void check_timestep(double dt);

double road_wheel_angle(const DriverInput& input, const VehicleParams& params);

AgentState step_vehicle(const AgentState& state, const DriverInput& input,
                        const VehicleParams& params, double grade, double dt);

/// Assist multiplier for the rider's power: gain * taper(v).
double assist_factor(double speed, AssistLevel level, const CyclistParams& params);

/// Net longitudinal force on the bike (N) before the no-reverse saturation.
double cyclist_net_force(double speed, const CyclistInput& input, const CyclistParams& params,
                         double grade);

AgentState step_cyclist(const AgentState& state, const CyclistInput& input,
                        const CyclistParams& params, double grade, double dt);

/// Frame of a transit vehicle a walker may sit down in. `zone_half_length`
/// and `zone_half_width` describe the boarding rectangle around the vehicle.
struct TransitContext {
    std::uint32_t vehicle_id = 0;
    Pose2D vehicle_pose;
    double zone_half_length = 6.0;
    double zone_half_width = 1.5;

    bool contains(Vec2 p) const;
};

struct PedestrianStepResult {
    AgentState state;
    std::optional<std::uint32_t> boarded_vehicle;  // set on the tick the walker sits down
    bool seat_request_ignored = false;             // seated_request outside any transit zone
};

inline constexpr double kWalkResponseTau = 0.3;  // s
inline constexpr double kWalkSlewRate = 4.0;     // rad/s
inline constexpr double kWalkMinAccel = 0.5;     // m/s^2, floor of the lag's rate
inline constexpr double kWalkStepLength = 0.75;  // m, for the step-rate aux channel
inline constexpr double kSeatMaxSpeed = 0.1;     // m/s

PedestrianStepResult step_pedestrian(const AgentState& state, const PedestrianInput& input, double dt,
                                     const std::vector<TransitContext>& transit = {});

/// Places a seated walker in the vehicle frame given its offset in that frame.
AgentState follow_vehicle(const AgentState& seated, const Pose2D& vehicle_pose, const Pose2D& local_offset);

/// Offset of `pose` expressed in the frame of `vehicle_pose`.
Pose2D to_local(const Pose2D& pose, const Pose2D& vehicle_pose);

inline constexpr double kFanReferenceSpeed = 13.4;  // m/s
inline constexpr double kPlatformGain = 0.05;       // rad per m/s^2
inline constexpr double kPlatformLimit = 0.12;      // rad

CueCommand compute_cues(const AgentState& state, double grade);

/// Trapezoidal speed profile for scripted transit vehicles: accelerate at
/// `accel`, cruise, decelerate to stop at each stop, dwell, repeat.
struct TransitSchedule {
    double cruise_speed = 8.0;
    double accel = 1.0;
    double dwell_s = 20.0;
    std::vector<double> stops;  // arc positions, ascending

    friend bool operator==(const TransitSchedule&, const TransitSchedule&) = default;
};

struct TransitMotion {
    double s = 0.0;
    double speed = 0.0;
    double dwell_remaining = 0.0;
    std::size_t next_stop = 0;
    bool doors_open = false;
};

/// Advances a scripted transit vehicle. `arrived` reports a stop arrival this tick.
TransitMotion step_transit(const TransitMotion& motion, const TransitSchedule& schedule, double dt,
                           bool* arrived = nullptr);

}  // namespace mmsim
