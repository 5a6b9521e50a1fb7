#pragma once

#include "mmsim/sim_server.hpp"

#include <map>

namespace fixtures {

// Interpolated time at which each agent's signed distance to its conflict
// point crosses zero.
inline std::map<std::uint32_t, double> arrival_times(mmsim::Session& s, double horizon_s)
{
    std::map<std::uint32_t, double> prev_d;
    std::map<std::uint32_t, double> arrival;
    const double dt = s.dt();
    for (const auto& a : s.agents()) prev_d[a.agent_id] = signed_distance_to_conflict(a, *s.path_of(a.agent_id));
    const auto ticks = static_cast<int>(horizon_s / dt);
    for (int i = 0; i < ticks; ++i) {
        const double t_prev = static_cast<double>(s.tick()) * dt;
        s.run_tick();
        for (const auto& a : s.agents()) {
            if (arrival.count(a.agent_id)) continue;
            const double d = signed_distance_to_conflict(a, *s.path_of(a.agent_id));
            const double dp = prev_d[a.agent_id];
            if (d <= 0.0 && dp > 0.0) arrival[a.agent_id] = t_prev + dt * dp / (dp - d);
            if (d <= 0.0 && dp <= 0.0 && !arrival.count(a.agent_id)) arrival[a.agent_id] = t_prev;
            prev_d[a.agent_id] = d;
        }
    }
    return arrival;
}

}  // namespace fixtures
