#pragma once

// Closed-form surrogate-safety primitives shared by the AV policy and the
// post-hoc metrics.

#include <optional>

namespace mmsim {

/// Time interval during which an agent's body covers a conflict point.
struct Occupancy {
    double start = 0.0;
    double end = 0.0;  // may be +inf for a stationary occupant
};

/// `signed_distance` is the distance remaining to the point along the path
/// (negative once past it), `speed` is along-path speed, `half_len` the body
/// half-length. Returns nullopt when the agent will never cover the point
/// (already cleared it, or stationary away from it).
std::optional<Occupancy> occupancy_interval(double signed_distance, double speed, double half_len);

/// Crossing-path time-to-collision: earliest time at which both occupancy
/// intervals overlap under constant-velocity extrapolation. nullopt is
/// "infinite" (no overlap).
std::optional<double> crossing_ttc(double d_a, double v_a, double h_a, double d_b, double v_b, double h_b);

/// Car-following time-to-collision: gap / (v_f - v_l) when closing, else
/// nullopt. `gap` is bumper to bumper.
std::optional<double> following_ttc(double gap, double v_follower, double v_leader);

inline constexpr double kDracCap = 99.9;  // m/s^2

struct DracValue {
    double value = 0.0;
    bool saturated = false;
};

/// Deceleration rate to avoid collision: closing^2 / (2 gap) when closing,
/// else 0. Values above kDracCap (including gap <= 0) are capped and flagged.
DracValue drac(double gap, double v_follower, double v_leader);

}  // namespace mmsim
