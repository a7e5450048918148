#pragma once

// Independent source waveforms: DC, SIN, PULSE and PWL.

#include "wavesim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace wavesim {

struct DcWave {
    double value = 0.0;
};

struct SinWave {
    double offset = 0.0;
    double amplitude = 0.0;
    double freq = 0.0;   ///< Hz, > 0
    double delay = 0.0;  ///< s
    double phase = 0.0;  ///< degrees
};

/// Trapezoid repeating with `period`. rise and fall are always > 0 after
/// construction through make_pulse().
struct PulseWave {
    double v1 = 0.0;
    double v2 = 0.0;
    double delay = 0.0;
    double rise = 0.0;
    double fall = 0.0;
    double width = 0.0;
    double period = 0.0;
};

struct PwlWave {
    std::vector<std::pair<double, double>> points;  ///< (time, value), strictly increasing time
};

using SourceWaveform = std::variant<DcWave, SinWave, PulseWave, PwlWave>;

/// Zero rise/fall are replaced by period * 1e-4.
inline PulseWave make_pulse(double v1, double v2, double delay, double rise, double fall,
                            double width, double period) {
    if (!(period > 0.0)) throw ArgumentError("PULSE period must be positive");
    if (rise < 0.0 || fall < 0.0 || width < 0.0 || delay < 0.0) {
        throw ArgumentError("PULSE times must be non-negative");
    }
    const double rise_min = period * 1e-4;
    return {v1, v2, delay, rise > 0.0 ? rise : rise_min, fall > 0.0 ? fall : rise_min, width, period};
}

inline SinWave make_sin(double offset, double amplitude, double freq, double delay = 0.0,
                        double phase = 0.0) {
    if (!(freq > 0.0)) throw ArgumentError("SIN frequency must be positive");
    return {offset, amplitude, freq, delay, phase};
}

inline PwlWave make_pwl(std::vector<std::pair<double, double>> points) {
    if (points.empty()) throw ArgumentError("PWL needs at least one point");
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (!(points[i].first > points[i - 1].first)) {
            throw ArgumentError("PWL times must be strictly increasing");
        }
    }
    return {std::move(points)};
}

namespace detail {

inline double pulse_value(const PulseWave& p, double t) {
    if (t < p.delay) return p.v1;
    double tau = std::fmod(t - p.delay, p.period);
    if (tau < 0.0) tau += p.period;
    if (tau < p.rise) return p.v1 + (p.v2 - p.v1) * tau / p.rise;
    tau -= p.rise;
    if (tau < p.width) return p.v2;
    tau -= p.width;
    if (tau < p.fall) return p.v2 + (p.v1 - p.v2) * tau / p.fall;
    return p.v1;
}

inline double pwl_value(const PwlWave& w, double t) {
    const auto& pts = w.points;
    if (t <= pts.front().first) return pts.front().second;
    if (t >= pts.back().first) return pts.back().second;
    auto it = std::upper_bound(pts.begin(), pts.end(), t,
                               [](double x, const auto& p) { return x < p.first; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    return lo.second + (hi.second - lo.second) * (t - lo.first) / (hi.first - lo.first);
}

}  // namespace detail

inline double eval_waveform(const SourceWaveform& w, double t) {
    return std::visit(
        [t](const auto& wave) -> double {
            using W = std::decay_t<decltype(wave)>;
            if constexpr (std::is_same_v<W, DcWave>) {
                return wave.value;
            } else if constexpr (std::is_same_v<W, SinWave>) {
                if (t < wave.delay) return wave.offset;
                return wave.offset +
                       wave.amplitude * std::sin(2.0 * std::numbers::pi * wave.freq * (t - wave.delay) +
                                                 wave.phase * std::numbers::pi / 180.0);
            } else if constexpr (std::is_same_v<W, PulseWave>) {
                return detail::pulse_value(wave, t);
            } else {
                return detail::pwl_value(wave, t);
            }
        },
        w);
}

/// Corner times of the waveform inside [t0, t1], sorted and unique.
inline std::vector<double> waveform_breakpoints(const SourceWaveform& w, double t0, double t1) {
    std::vector<double> out;
    auto keep = [&](double t) {
        if (t >= t0 && t <= t1) out.push_back(t);
    };
    std::visit(
        [&](const auto& wave) {
            using W = std::decay_t<decltype(wave)>;
            if constexpr (std::is_same_v<W, SinWave>) {
                if (wave.delay > 0.0) keep(wave.delay);
            } else if constexpr (std::is_same_v<W, PulseWave>) {
                keep(wave.delay);
                if (t1 < wave.delay) return;
                const double first = std::max(0.0, std::floor((t0 - wave.delay) / wave.period) - 1.0);
                const double corners[] = {0.0, wave.rise, wave.rise + wave.width,
                                          wave.rise + wave.width + wave.fall};
                for (double k = first;; k += 1.0) {
                    const double base = wave.delay + k * wave.period;
                    if (base > t1) break;
                    for (double c : corners) {
                        if (c < wave.period) keep(base + c);
                    }
                }
            } else if constexpr (std::is_same_v<W, PwlWave>) {
                for (const auto& p : wave.points) keep(p.first);
            }
        },
        w);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace wavesim
