#include "mmsim/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmsim {

namespace {
constexpr double kStationary = 1e-9;
}

std::optional<Occupancy> occupancy_interval(double signed_distance, double speed, double half_len)
{
    const double inf = std::numeric_limits<double>::infinity();
    if (std::abs(speed) <= kStationary) {
        if (std::abs(signed_distance) <= half_len) {
            return Occupancy{0.0, inf};
        }
        return std::nullopt;
    }
    // Body covers the point while |d - v t| <= h.
    double t_in = (signed_distance - half_len) / speed;
    double t_out = (signed_distance + half_len) / speed;
    if (t_in > t_out) {
        std::swap(t_in, t_out);
    }
    if (t_out < 0.0) {
        return std::nullopt;
    }
    return Occupancy{std::max(t_in, 0.0), t_out};
}

std::optional<double> crossing_ttc(double d_a, double v_a, double h_a, double d_b, double v_b, double h_b)
{
    const auto a = occupancy_interval(d_a, v_a, h_a);
    const auto b = occupancy_interval(d_b, v_b, h_b);
    if (!a || !b) {
        return std::nullopt;
    }
    const double start = std::max(a->start, b->start);
    const double end = std::min(a->end, b->end);
    if (start <= end) {
        return start;
    }
    return std::nullopt;
}

std::optional<double> following_ttc(double gap, double v_follower, double v_leader)
{
    const double closing = v_follower - v_leader;
    if (closing <= 0.0) {
        return std::nullopt;
    }
    return std::max(gap, 0.0) / closing;
}

DracValue drac(double gap, double v_follower, double v_leader)
{
    const double closing = v_follower - v_leader;
    if (closing <= 0.0) {
        return {0.0, false};
    }
    if (gap <= 0.0) {
        return {kDracCap, true};
    }
    const double value = closing * closing / (2.0 * gap);
    if (value > kDracCap) {
        return {kDracCap, true};
    }
    return {value, false};
}

}  // namespace mmsim
