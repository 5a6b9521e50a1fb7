#pragma once

// Reference implementations used by the unit tests and the acceptance
// binary. They are written from the definitions of each quantity and share
// no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace oracle {

/// First time in [0, horizon] where `hit` holds: a 1 ms scan followed by
/// bisection inside the bracketing step. The predicate must describe a
/// union of closed intervals.
inline std::optional<double> first_time(const std::function<bool(double)>& hit, double horizon,
                                        double step = 1e-3)
{
    if (hit(0.0)) return 0.0;
    double prev = 0.0;
    for (double t = step; t <= horizon + step; t += step) {
        if (hit(t)) {
            double lo = prev, hi = t;
            for (int i = 0; i < 60; ++i) {
                const double mid = 0.5 * (lo + hi);
                (hit(mid) ? hi : lo) = mid;
            }
            return hi;
        }
        prev = t;
    }
    return std::nullopt;
}

/// Two bodies moving toward a shared point along their own lines. `d` is the
/// distance left to the point, `h` the half body length.
inline std::optional<double> crossing_ttc(double d_a, double v_a, double h_a, double d_b, double v_b, double h_b,
                                          double horizon = 300.0)
{
    auto covers = [](double d, double v, double h, double t) { return std::abs(d - v * t) <= h; };
    return first_time([&](double t) { return covers(d_a, v_a, h_a, t) && covers(d_b, v_b, h_b, t); }, horizon);
}

/// Two bodies on one line at arc positions s_a, s_b.
inline std::optional<double> following_ttc(double s_a, double v_a, double h_a, double s_b, double v_b, double h_b,
                                           double horizon = 300.0)
{
    return first_time(
        [&](double t) { return std::abs((s_a + v_a * t) - (s_b + v_b * t)) <= h_a + h_b; }, horizon);
}

/// Smallest constant deceleration of the follower that keeps a positive gap
/// to a constant-speed leader, found by bisection on the deceleration. The
/// relative gap is smallest when the relative speed reaches zero.
inline double drac(double gap, double v_f, double v_l, double cap = 99.9)
{
    if (v_f <= v_l) return 0.0;
    auto collides = [&](double a) {
        auto rel_gap = [&](double t) {
            const double tf = std::min(t, v_f / a);  // the follower stops, it never reverses
            const double sf = v_f * tf - 0.5 * a * tf * tf;
            return gap + v_l * t - sf;
        };
        return rel_gap((v_f - v_l) / a) < 0.0;
    };
    double lo = 0.0, hi = 1e4;
    if (!collides(cap)) {
        for (int i = 0; i < 100; ++i) {
            const double mid = 0.5 * (lo + hi);
            (collides(mid) ? lo : hi) = mid;
        }
        return std::min(hi, cap);
    }
    return cap;
}

/// Flat-road cyclist steady state: the speed where drivetrain power equals
/// rolling plus aerodynamic drag power, by bisection.
inline double cyclist_steady_speed(double power, double eff, double mass, double crr, double g, double rho,
                                   double cda)
{
    auto surplus = [&](double v) { return (crr * mass * g + 0.5 * rho * cda * v * v) * v - power * eff; };
    double lo = 0.0, hi = 30.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (surplus(mid) > 0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

struct NbackTally {
    int hits = 0;
    int misses = 0;
    int false_alarms = 0;
    int correct_rejections = 0;
    int unmatched = 0;
};

/// Re-scans the stimulus list for every response: a stimulus is answered
/// when some response falls at or after its onset, no later than
/// onset + window, and before the next onset.
/// A response that answers no stimulus is unmatched; a second response to
/// the same stimulus is unmatched too.
inline NbackTally grade_nback(const std::vector<double>& onsets, const std::vector<int>& symbols,
                              const std::vector<double>& responses, int n, double window)
{
    NbackTally out;
    std::vector<bool> used(responses.size(), false);
    for (std::size_t i = 0; i < onsets.size(); ++i) {
        const double next = i + 1 < onsets.size() ? onsets[i + 1] : 1e300;
        bool answered = false;
        for (std::size_t r = 0; r < responses.size(); ++r) {
            if (!used[r] && responses[r] >= onsets[i] && responses[r] < next &&
                responses[r] - onsets[i] <= window) {
                if (!answered) {
                    answered = true;
                    used[r] = true;
                }
            }
        }
        const bool target = static_cast<int>(i) >= n && symbols[i] == symbols[i - n];
        if (target && answered) ++out.hits;
        if (target && !answered) ++out.misses;
        if (!target && answered) ++out.false_alarms;
        if (!target && !answered) ++out.correct_rejections;
    }
    for (bool u : used) {
        if (!u) ++out.unmatched;
    }
    return out;
}

}  // namespace oracle
