#include "mmsim/sensor_sync.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace mmsim::sensors {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out)
{
    s = trim(s);
    if (s.empty()) return false;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

// Linear-interpolated quantile of an unsorted buffer (reorders it).
double quantile(std::vector<double>& v, double q)
{
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    if (frac == 0.0 || lo + 1 >= v.size()) return a;
    const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return a + frac * (b - a);
}

double median_of(std::vector<double>& v) { return quantile(v, 0.5); }

}  // namespace

std::string_view to_string(Modality m)
{
    switch (m) {
    case Modality::EDA: return "EDA";
    case Modality::BVP: return "BVP";
    case Modality::TEMP: return "TEMP";
    case Modality::ACC: return "ACC";
    case Modality::FNIRS: return "FNIRS";
    case Modality::GAZE: return "GAZE";
    case Modality::MARK: return "MARK";
    }
    return "?";
}

std::optional<Modality> modality_from_string(std::string_view s)
{
    for (auto m : {Modality::EDA, Modality::BVP, Modality::TEMP, Modality::ACC, Modality::FNIRS, Modality::GAZE,
                   Modality::MARK}) {
        std::string want(to_string(m));
        if (s.size() == want.size() &&
            std::equal(s.begin(), s.end(), want.begin(), [](char a, char b) { return std::toupper(a) == b; }))
            return m;
    }
    return std::nullopt;
}

std::size_t expected_channels(Modality m)
{
    switch (m) {
    case Modality::EDA:
    case Modality::BVP:
    case Modality::TEMP:
    case Modality::MARK: return 1;
    case Modality::ACC: return 3;
    case Modality::GAZE: return 4;
    case Modality::FNIRS: return 0;
    }
    return 0;
}

SensorStream parse_stream_csv(std::string_view text)
{
    SensorStream s;
    bool have_modality = false;
    bool hbt_absent = false;
    std::size_t line_no = 0;
    std::size_t ncols = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        if (line.front() == '#') {
            line.remove_prefix(1);
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) continue;
            const auto key = trim(line.substr(0, eq));
            const auto val = trim(line.substr(eq + 1));
            if (key == "stream_id") {
                s.stream_id = std::string(val);
            } else if (key == "modality") {
                auto m = modality_from_string(val);
                if (!m) throw StreamError("line " + std::to_string(line_no) + ": unknown modality " + std::string(val));
                s.modality = *m;
                have_modality = true;
            } else if (key == "rate_hz") {
                if (!parse_double(val, s.rate_hz) || !(s.rate_hz > 0))
                    throw StreamError("line " + std::to_string(line_no) + ": bad rate_hz");
            } else if (key == "clock_id") {
                s.clock_id = std::string(val);
            } else if (key == "hbt") {
                hbt_absent = val == "absent";
            }
            continue;
        }
        // Split on commas.
        std::vector<std::string_view> cells;
        std::size_t c0 = 0;
        while (true) {
            const auto comma = line.find(',', c0);
            cells.push_back(line.substr(c0, comma == std::string_view::npos ? std::string_view::npos : comma - c0));
            if (comma == std::string_view::npos) break;
            c0 = comma + 1;
        }
        double t = 0.0;
        if (!parse_double(cells[0], t)) {
            if (s.t.empty() && ncols == 0) {
                ncols = cells.size();  // column header row
                continue;
            }
            throw StreamError("line " + std::to_string(line_no) + ": bad time value");
        }
        if (cells.size() < 2) throw StreamError("line " + std::to_string(line_no) + ": no channels");
        if (s.channels.empty()) s.channels.resize(cells.size() - 1);
        if (cells.size() - 1 != s.channels.size())
            throw StreamError("line " + std::to_string(line_no) + ": channel count changed");
        if (!s.t.empty() && !(t > s.t.back()))
            throw StreamError("line " + std::to_string(line_no) + ": time not strictly increasing");
        s.t.push_back(t);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            double v = 0.0;
            if (!parse_double(cells[c], v)) {
                const auto cell = trim(cells[c]);
                if (cell == "nan" || cell == "NaN" || cell.empty()) {
                    v = kNaN;
                } else {
                    throw StreamError("line " + std::to_string(line_no) + ": bad value");
                }
            }
            s.channels[c - 1].push_back(v);
        }
    }
    if (!have_modality) throw StreamError("missing '# modality=' header");
    if (s.stream_id.empty()) s.stream_id = std::string(to_string(s.modality));
    if (s.clock_id.empty()) s.clock_id = "default";
    if (s.rate_hz <= 0.0 && s.t.size() >= 2)
        s.rate_hz = static_cast<double>(s.t.size() - 1) / (s.t.back() - s.t.front());

    if (s.modality == Modality::FNIRS) {
        if (hbt_absent) {
            if (s.channels.size() % 2 != 0) throw StreamError("FNIRS without HbT needs HbO/HbR pairs");
            std::vector<std::vector<double>> full;
            for (std::size_t o = 0; o < s.channels.size(); o += 2) {
                std::vector<double> total(s.t.size());
                for (std::size_t i = 0; i < s.t.size(); ++i) total[i] = s.channels[o][i] + s.channels[o + 1][i];
                full.push_back(s.channels[o]);
                full.push_back(s.channels[o + 1]);
                full.push_back(std::move(total));
            }
            s.channels = std::move(full);
            s.hbt_derived = true;
        } else if (s.channels.size() % 3 != 0) {
            throw StreamError("FNIRS needs HbO/HbR/HbT triplets (or '# hbt=absent')");
        }
    } else if (!s.channels.empty() && expected_channels(s.modality) != s.channels.size()) {
        throw StreamError(std::string(to_string(s.modality)) + " expects " +
                          std::to_string(expected_channels(s.modality)) + " channels");
    }
    return s;
}

SensorStream read_stream_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw StreamError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_stream_csv(ss.str());
}

std::string format_stream_csv(const SensorStream& s)
{
    std::ostringstream out;
    out.precision(17);
    out << "# stream_id=" << s.stream_id << "\n# modality=" << to_string(s.modality) << "\n";
    if (s.rate_hz > 0.0) out << "# rate_hz=" << s.rate_hz << "\n";  // irregular streams carry no rate
    out << "# clock_id=" << s.clock_id << "\n";
    out << "t_dev";
    for (std::size_t c = 0; c < s.channels.size(); ++c) out << ",ch" << c;
    out << "\n";
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        out << s.t[i];
        for (const auto& ch : s.channels) out << ',' << ch[i];
        out << "\n";
    }
    return out.str();
}

void check_stream(const SensorStream& s)
{
    for (std::size_t i = 1; i < s.t.size(); ++i)
        if (!(s.t[i] > s.t[i - 1])) throw StreamError(s.stream_id + ": time not strictly increasing");
    for (const auto& ch : s.channels)
        if (ch.size() != s.t.size()) throw StreamError(s.stream_id + ": ragged channels");
}

// ---------------------------------------------------------------------------

ClockMap fit_clock_map(std::span<const double> dev, std::span<const double> sim)
{
    if (dev.size() != sim.size()) throw ClockFitError("device and sim mark counts differ");
    if (dev.size() < 2) throw ClockFitError("need at least two sync marks");
    for (std::size_t i = 1; i < dev.size(); ++i) {
        if (!(dev[i] > dev[i - 1]) || !(sim[i] > sim[i - 1])) throw ClockFitError("sync marks must increase");
    }
    const double n = static_cast<double>(dev.size());
    const double mx = std::accumulate(dev.begin(), dev.end(), 0.0) / n;
    const double my = std::accumulate(sim.begin(), sim.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < dev.size(); ++i) {
        sxx += (dev[i] - mx) * (dev[i] - mx);
        sxy += (dev[i] - mx) * (sim[i] - my);
    }
    ClockMap m;
    m.a = sxy / sxx;
    m.b = my - m.a * mx;
    m.marks = dev.size();
    double ss = 0.0;
    for (std::size_t i = 0; i < dev.size(); ++i) {
        const double r = sim[i] - m.to_sim(dev[i]);
        ss += r * r;
    }
    m.residual_rms = std::sqrt(ss / n);
    return m;
}

std::pair<std::vector<double>, std::vector<double>> pair_sync_marks(const SensorStream& marks,
                                                                    std::span<const EventRecord> events)
{
    std::map<long long, double> sim_by_index;
    for (const auto& e : events)
        if (e.code == static_cast<std::uint16_t>(EventCode::SYNC_MARK)) sim_by_index[e.subject] = e.sim_time_s();
    std::pair<std::vector<double>, std::vector<double>> out;
    if (marks.channels.empty()) return out;
    for (std::size_t i = 0; i < marks.size(); ++i) {
        const auto idx = std::llround(marks.channels[0][i]);
        auto it = sim_by_index.find(idx);
        if (it == sim_by_index.end()) continue;
        out.first.push_back(marks.t[i]);
        out.second.push_back(it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------

double rmssd_ms(std::span<const double> ibi)
{
    if (ibi.size() < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 1; i < ibi.size(); ++i) {
        const double d = ibi[i] - ibi[i - 1];
        acc += d * d;
    }
    return 1000.0 * std::sqrt(acc / static_cast<double>(ibi.size() - 1));
}

double sdnn_ms(std::span<const double> ibi)
{
    if (ibi.empty()) return 0.0;
    const double mean = std::accumulate(ibi.begin(), ibi.end(), 0.0) / static_cast<double>(ibi.size());
    double acc = 0.0;
    for (double v : ibi) acc += (v - mean) * (v - mean);
    return 1000.0 * std::sqrt(acc / static_cast<double>(ibi.size()));
}

HrResult hr_from_bvp(const SensorStream& bvp, const HrParams& p)
{
    if (bvp.rate_hz < 32.0) throw StreamError("BVP rate must be at least 32 Hz");
    HrResult r;
    const std::size_t n = bvp.size();
    if (n < 3 || bvp.channels.empty()) {
        r.flagged = true;
        r.reason = "too few samples";
        return r;
    }
    const auto& x = bvp.channels[0];

    // Threshold from rolling median and IQR, refreshed every quarter second.
    std::vector<double> thr(n);
    const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(bvp.rate_hz / 4.0));
    std::size_t lo = 0, hi = 0;
    std::vector<double> buf;
    for (std::size_t i = 0; i < n; i += stride) {
        const double t = bvp.t[i];
        while (lo < n && bvp.t[lo] < t - p.window_s / 2) ++lo;
        while (hi < n && bvp.t[hi] <= t + p.window_s / 2) ++hi;
        buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
        const double med = median_of(buf);
        const double q1 = quantile(buf, 0.25);
        const double q3 = quantile(buf, 0.75);
        const double v = med + p.iqr_gain * (q3 - q1);
        for (std::size_t k = i; k < std::min(n, i + stride); ++k) thr[k] = v;
    }

    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > thr[i])) continue;
        if (!peaks.empty() && bvp.t[i] - bvp.t[peaks.back()] < p.refractory_s) {
            if (x[i] > x[peaks.back()]) peaks.back() = i;
            continue;
        }
        peaks.push_back(i);
    }
    for (auto i : peaks) {
        const double y0 = x[i - 1], y1 = x[i], y2 = x[i + 1];
        const double denom = y0 - 2.0 * y1 + y2;
        double offset = 0.0;
        if (denom < 0.0) offset = std::clamp(0.5 * (y0 - y2) / denom, -0.5, 0.5);
        const double h = offset >= 0 ? bvp.t[i + 1] - bvp.t[i] : bvp.t[i] - bvp.t[i - 1];
        r.peak_times.push_back(bvp.t[i] + offset * h);
    }
    if (r.peak_times.size() < 2) {
        r.flagged = true;
        r.reason = "fewer than two peaks";
        return r;
    }
    for (std::size_t k = 1; k < r.peak_times.size(); ++k) {
        const double ibi = r.peak_times[k] - r.peak_times[k - 1];
        r.ibi_s.push_back(ibi);
        r.hr_time.push_back(r.peak_times[k]);
        r.hr_bpm.push_back(60.0 / ibi);
    }
    const double mean_ibi = std::accumulate(r.ibi_s.begin(), r.ibi_s.end(), 0.0) / static_cast<double>(r.ibi_s.size());
    r.mean_hr_bpm = 60.0 / mean_ibi;
    r.rmssd_ms = rmssd_ms(r.ibi_s);
    r.sdnn_ms = sdnn_ms(r.ibi_s);
    return r;
}

// ---------------------------------------------------------------------------

std::vector<double> moving_median(std::span<const double> t, std::span<const double> x, double window_s)
{
    const std::size_t n = x.size();
    std::vector<double> out(n);
    std::vector<double> buf;
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (lo < n && t[lo] < t[i] - window_s / 2) ++lo;
        while (hi < n && t[hi] <= t[i] + window_s / 2) ++hi;
        buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
        out[i] = median_of(buf);
    }
    return out;
}

EdaResult eda_decompose(const SensorStream& eda, const EdaParams& p)
{
    if (eda.rate_hz < 2.0) throw StreamError("EDA rate must be at least 2 Hz");
    EdaResult r;
    if (eda.channels.empty()) return r;
    const auto& x = eda.channels[0];
    r.tonic = moving_median(eda.t, x, p.median_window_s);
    r.phasic.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.phasic[i] = x[i] - r.tonic[i];

    // Each maximal non-decreasing run of the phasic signal is a candidate rise.
    const auto& ph = r.phasic;
    std::size_t i = 0;
    while (i + 1 < ph.size()) {
        if (!(ph[i + 1] > ph[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < ph.size() && ph[j + 1] >= ph[j]) ++j;
        std::size_t peak = j;
        while (peak > i && ph[peak - 1] == ph[peak]) --peak;
        // The rise counts from the lowest point at most max_rise_s before the
        // peak; a flat stretch there is not part of the rise.
        std::size_t trough = i;
        while (trough < peak && eda.t[peak] - eda.t[trough] > p.max_rise_s) ++trough;
        while (trough < peak && ph[trough + 1] == ph[trough]) ++trough;
        const double amp = ph[peak] - ph[trough];
        const double rise = eda.t[peak] - eda.t[trough];
        if (amp >= p.scr_threshold && rise <= p.max_rise_s) r.scrs.push_back({eda.t[trough], eda.t[peak], amp});
        i = j;
    }
    return r;
}

// ---------------------------------------------------------------------------

double dispersion_deg(const SensorStream& g, std::size_t first, std::size_t last, const FixationParams& p)
{
    const auto [xmin, xmax] = std::minmax_element(g.channels[0].begin() + static_cast<std::ptrdiff_t>(first),
                                                  g.channels[0].begin() + static_cast<std::ptrdiff_t>(last) + 1);
    const auto [ymin, ymax] = std::minmax_element(g.channels[1].begin() + static_cast<std::ptrdiff_t>(first),
                                                  g.channels[1].begin() + static_cast<std::ptrdiff_t>(last) + 1);
    return (*xmax - *xmin) * p.fov_h_deg + (*ymax - *ymin) * p.fov_v_deg;
}

std::vector<Fixation> detect_fixations(const SensorStream& g, const FixationParams& p)
{
    std::vector<Fixation> out;
    const std::size_t n = g.size();
    if (n == 0 || g.channels.size() < 4) return out;
    const double period = g.rate_hz > 0 ? 1.0 / g.rate_hz : 0.0;
    const double min_dur = p.min_duration_ms * 1e-3;
    auto valid = [&](std::size_t i) {
        return g.channels[3][i] > 0.5 && std::isfinite(g.channels[0][i]) && std::isfinite(g.channels[1][i]);
    };

    std::size_t start = 0;
    while (start < n) {
        if (!valid(start)) {
            ++start;
            continue;
        }
        // Initial window spanning the minimum duration, valid samples only.
        std::size_t end = start;
        bool broken = false;
        while (g.t[end] + period - g.t[start] < min_dur - 1e-9) {
            if (end + 1 >= n || !valid(end + 1)) {
                broken = true;
                break;
            }
            ++end;
        }
        if (broken || dispersion_deg(g, start, end, p) > p.dispersion_deg) {
            ++start;
            continue;
        }
        while (end + 1 < n && valid(end + 1) && dispersion_deg(g, start, end + 1, p) <= p.dispersion_deg) ++end;
        Fixation f;
        f.first = start;
        f.last = end;
        f.start = g.t[start];
        f.end = g.t[end] + period;
        double sx = 0.0, sy = 0.0;
        for (std::size_t k = start; k <= end; ++k) {
            sx += g.channels[0][k];
            sy += g.channels[1][k];
        }
        const double cnt = static_cast<double>(end - start + 1);
        f.x = sx / cnt;
        f.y = sy / cnt;
        out.push_back(f);
        start = end + 1;
    }
    return out;
}

Heatmap gaze_heatmap(const SensorStream& g, std::size_t rows, std::size_t cols, double sigma, bool normalize)
{
    if (rows == 0 || cols == 0) throw std::invalid_argument("heatmap grid must be at least 1x1");
    Heatmap h{rows, cols, std::vector<double>(rows * cols, 0.0)};
    if (g.channels.size() < 4) return h;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.channels[0][i], y = g.channels[1][i];
        if (!(g.channels[3][i] > 0.5) || !std::isfinite(x) || !std::isfinite(y)) continue;
        if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) continue;
        const auto c = std::min(cols - 1, static_cast<std::size_t>(x * static_cast<double>(cols)));
        const auto r = std::min(rows - 1, static_cast<std::size_t>(y * static_cast<double>(rows)));
        h.cells[r * cols + c] += 1.0;
    }
    if (sigma > 0.0) {
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
        for (int d = -radius; d <= radius; ++d)
            k[static_cast<std::size_t>(d + radius)] = std::exp(-0.5 * d * d / (sigma * sigma));
        std::vector<double> tmp(h.cells.size(), 0.0);
        const auto R = static_cast<int>(rows), C = static_cast<int>(cols);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    const int cc = c + d;
                    if (cc >= 0 && cc < C) acc += k[static_cast<std::size_t>(d + radius)] * h.cells[static_cast<std::size_t>(r * C + cc)];
                }
                tmp[static_cast<std::size_t>(r * C + c)] = acc;
            }
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    const int rr = r + d;
                    if (rr >= 0 && rr < R) acc += k[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(rr * C + c)];
                }
                h.cells[static_cast<std::size_t>(r * C + c)] = acc;
            }
    }
    if (normalize) {
        const double mx = *std::max_element(h.cells.begin(), h.cells.end());
        if (mx > 0.0)
            for (auto& v : h.cells) v /= mx;
    }
    return h;
}

// ---------------------------------------------------------------------------

EpochResult cut_epochs(std::span<const SensorStream> streams, const std::map<std::string, ClockMap>& clocks,
                       std::span<const EventRecord> events, std::uint16_t code, double pre_s, double post_s,
                       double out_rate_hz)
{
    if (!(out_rate_hz > 0.0) || pre_s < 0.0 || post_s < 0.0)
        throw std::invalid_argument("epoch window and rate must be positive");
    for (const auto& s : streams)
        if (s.modality != Modality::MARK && clocks.find(s.clock_id) == clocks.end())
            throw StreamError("no clock map for clock_id " + s.clock_id);

    const auto steps = static_cast<std::size_t>(std::llround((pre_s + post_s) * out_rate_hz));
    std::vector<double> grid(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) grid[k] = -pre_s + static_cast<double>(k) / out_rate_hz;

    EpochResult result;
    for (const auto& e : events) {
        if (e.code != code) continue;
        Epoch ep;
        ep.code = code;
        ep.t0 = e.sim_time_s();
        ep.pre_s = pre_s;
        ep.post_s = post_s;
        ep.rate_hz = out_rate_hz;
        ep.grid = grid;
        bool skip = false;
        for (const auto& s : streams) {
            if (s.modality == Modality::MARK) continue;
            const ClockMap& cm = clocks.at(s.clock_id);
            if (s.size() < 2 || cm.to_device(ep.t0 - pre_s) < s.t.front() || cm.to_device(ep.t0 + post_s) > s.t.back()) {
                result.warnings.push_back({ep.t0, s.stream_id, "event too close to stream boundary, epoch skipped"});
                skip = true;
                break;
            }
            EpochStream es;
            es.stream_id = s.stream_id;
            es.modality = s.modality;
            es.channels.assign(s.channels.size(), std::vector<double>(grid.size(), kNaN));
            es.valid.assign(grid.size(), false);
            for (std::size_t k = 0; k < grid.size(); ++k) {
                const double td = cm.to_device(ep.t0 + grid[k]);
                auto it = std::upper_bound(s.t.begin(), s.t.end(), td);
                std::size_t j1 = static_cast<std::size_t>(it - s.t.begin());
                if (j1 == 0) continue;
                if (j1 >= s.size()) j1 = s.size() - 1;
                const std::size_t j0 = j1 - 1;
                const double span = s.t[j1] - s.t[j0];
                if (span > kMaxInterpolationGap) continue;
                const double w = std::clamp((td - s.t[j0]) / span, 0.0, 1.0);
                bool ok = true;
                for (std::size_t c = 0; c < s.channels.size(); ++c) {
                    const double v = s.channels[c][j0] + w * (s.channels[c][j1] - s.channels[c][j0]);
                    if (!std::isfinite(v)) ok = false;
                    es.channels[c][k] = v;
                }
                es.valid[k] = ok;
            }
            if (s.modality == Modality::FNIRS) {
                for (auto& ch : es.channels) {
                    double sum = 0.0;
                    std::size_t cnt = 0;
                    for (std::size_t k = 0; k < grid.size(); ++k)
                        if (grid[k] <= 1e-12 && es.valid[k]) {
                            sum += ch[k];
                            ++cnt;
                        }
                    if (cnt == 0) continue;
                    const double base = sum / static_cast<double>(cnt);
                    for (std::size_t k = 0; k < grid.size(); ++k)
                        if (es.valid[k]) ch[k] -= base;
                }
            }
            ep.streams.push_back(std::move(es));
        }
        if (!skip) result.epochs.push_back(std::move(ep));
    }
    return result;
}

}  // namespace mmsim::sensors
