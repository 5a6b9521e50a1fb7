#pragma once

#include "mmsim/sensor_sync.hpp"

#include <cmath>
#include <functional>

namespace fixtures {

inline mmsim::sensors::SensorStream make_stream(mmsim::sensors::Modality m, double rate, double t0, double seconds,
                                                std::size_t channels,
                                                const std::function<double(double, std::size_t)>& f,
                                                std::string id = "s", std::string clock = "dev")
{
    mmsim::sensors::SensorStream s;
    s.stream_id = std::move(id);
    s.modality = m;
    s.rate_hz = rate;
    s.clock_id = std::move(clock);
    s.channels.assign(channels, {});
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) / rate;
        s.t.push_back(t);
        for (std::size_t c = 0; c < channels; ++c) s.channels[c].push_back(f(t, c));
    }
    return s;
}

/// Pulse wave: a sharp systolic bump per beat on a small sinusoidal baseline.
inline double bvp_wave(double t, double bpm)
{
    const double period = 60.0 / bpm;
    const double phase = std::fmod(t, period) / period;
    const double bump = std::exp(-std::pow((phase - 0.2) / 0.06, 2.0));
    return bump + 0.1 * std::sin(2.0 * 3.14159265358979 * t / period);
}

/// Skin-conductance response shape: rise over `rise` seconds, slow decay.
inline double scr_shape(double t, double onset, double amplitude, double rise)
{
    if (t < onset) return 0.0;
    const double u = t - onset;
    if (u <= rise) return amplitude * 0.5 * (1.0 - std::cos(3.14159265358979 * u / rise));
    return amplitude * std::exp(-(u - rise) / 1.5);
}

}  // namespace fixtures
