#include <doctest.h>

#include "../support/signals.hpp"
#include "mmsim/sensor_sync.hpp"

#include <cmath>
#include <random>

using namespace mmsim;
using namespace mmsim::sensors;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("CSV parsing with headers")
{
    const auto s = parse_stream_csv(
        "# stream_id=wrist_eda\n# modality=EDA\n# rate_hz=4\n# clock_id=e4\n"
        "t_dev,eda_us\n0.0,2.0\n0.25,2.1\n0.5,nan\n");
    CHECK(s.stream_id == "wrist_eda");
    CHECK(s.modality == Modality::EDA);
    CHECK(s.rate_hz == 4.0);
    CHECK(s.clock_id == "e4");
    REQUIRE(s.size() == 3);
    CHECK(std::isnan(s.channels[0][2]));

    const auto again = parse_stream_csv(format_stream_csv(s));
    CHECK(again.t == s.t);
    CHECK(again.channels[0][1] == s.channels[0][1]);
}

TEST_CASE("CSV errors name the line")
{
    CHECK_THROWS_AS(parse_stream_csv("# modality=EDA\n0,1\n0,2\n"), StreamError);
    CHECK_THROWS_AS(parse_stream_csv("# modality=ACC\n0,1,2\n"), StreamError);
    CHECK_THROWS_AS(parse_stream_csv("0,1\n1,2\n"), StreamError);
    CHECK_THROWS_AS(parse_stream_csv("# modality=FNIRS\n0,1,2,3,4\n"), StreamError);
    try {
        parse_stream_csv("# modality=EDA\n0,1\n1,2\n0.5,3\n");
        FAIL("expected an error");
    } catch (const StreamError& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
}

TEST_CASE("FNIRS HbT is derived when absent")
{
    const auto s = parse_stream_csv("# modality=FNIRS\n# hbt=absent\n# rate_hz=10\n0,1.0,0.5\n0.1,2.0,0.25\n");
    REQUIRE(s.channels.size() == 3);
    CHECK(s.hbt_derived);
    CHECK(s.channels[2][0] == 1.5);
    CHECK(s.channels[2][1] == 2.25);
}

TEST_CASE("clock map examples")
{
    const std::vector<double> same{1, 2, 3};
    const auto id = fit_clock_map(same, same);
    CHECK(id.a == doctest::Approx(1.0));
    CHECK(id.b == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(id.residual_rms == doctest::Approx(0.0));

    const std::vector<double> d2{0, 100}, s2{50, 150};
    const auto off = fit_clock_map(d2, s2);
    CHECK(off.a == doctest::Approx(1.0));
    CHECK(off.b == doctest::Approx(50.0));

    const std::vector<double> d3{0, 100, 200}, s3{10, 110.1, 210.2};
    const auto lin = fit_clock_map(d3, s3);
    CHECK(std::abs(lin.a - 1.001) < 1e-9);
    CHECK(std::abs(lin.b - 10.0) < 1e-9);
    CHECK(lin.residual_rms < 1e-9);
    CHECK(lin.in_sanity_band());

    const std::vector<double> one{1};
    CHECK_THROWS_AS(fit_clock_map(one, one), ClockFitError);
    const std::vector<double> back{0, 2, 1};
    CHECK_THROWS_AS(fit_clock_map(back, same), ClockFitError);
}

TEST_CASE("random affine clocks are recovered exactly")
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> ga(0.99, 1.01), gb(-1e4, 1e4), gt(0, 3600);
    for (int i = 0; i < 200; ++i) {
        const double a = ga(rng), b = gb(rng);
        std::vector<double> dev(8), sim(8);
        double t = gt(rng);
        for (std::size_t k = 0; k < 8; ++k) {
            dev[k] = t;
            sim[k] = a * t + b;
            t += 10.0;
        }
        const auto m = fit_clock_map(dev, sim);
        CHECK(std::abs(m.a - a) < 1e-9);
        CHECK(std::abs(m.b - b) < 1e-6);
        CHECK(m.residual_rms < 1e-6);
    }
}

TEST_CASE("sync marks pair by index")
{
    const auto marks = parse_stream_csv("# modality=MARK\n# clock_id=dev\n5.0,0\n15.0,1\n25.0,2\n");
    std::vector<EventRecord> ev;
    for (std::uint32_t k = 0; k < 3; ++k) ev.push_back({k * 10'000'000ull + 10'000, k * 1000 + 1, 11, k, 0, double(k)});
    const auto [dev, sim] = pair_sync_marks(marks, ev);
    REQUIRE(dev.size() == 3);
    const auto m = fit_clock_map(dev, sim);
    CHECK(m.a == doctest::Approx(1.0));
    CHECK(m.b == doctest::Approx(-4.99));
}

TEST_CASE("heart rate from a 60 bpm sinusoid")
{
    const auto s = fixtures::make_stream(Modality::BVP, 64, 0, 60, 1,
                                         [](double t, std::size_t) { return std::sin(2 * kPi * t); });
    const auto hr = hr_from_bvp(s);
    REQUIRE_FALSE(hr.flagged);
    CHECK(std::abs(hr.mean_hr_bpm - 60.0) < 1.0);
    CHECK(hr.rmssd_ms < 1.0);
    for (double b : hr.hr_bpm) CHECK(std::abs(b - 60.0) < 1.0);
}

TEST_CASE("heart rate across the physiological range")
{
    for (double bpm = 40; bpm <= 180; bpm += 10) {
        for (double rate : {32.0, 64.0, 128.0}) {
            const auto s = fixtures::make_stream(Modality::BVP, rate, 0, 60, 1,
                                                 [&](double t, std::size_t) { return fixtures::bvp_wave(t, bpm); });
            const auto hr = hr_from_bvp(s);
            CAPTURE(bpm);
            CAPTURE(rate);
            REQUIRE_FALSE(hr.flagged);
            CHECK(std::abs(hr.mean_hr_bpm - bpm) < 1.0);
        }
    }
}

TEST_CASE("RMSSD and SDNN")
{
    std::vector<double> ibi;
    for (int i = 0; i < 40; ++i) ibi.push_back(i % 2 ? 1.1 : 0.9);
    CHECK(rmssd_ms(ibi) == doctest::Approx(200.0));
    CHECK(sdnn_ms(ibi) == doctest::Approx(100.0));
}

TEST_CASE("flat BVP is flagged, slow BVP is refused")
{
    const auto flat = fixtures::make_stream(Modality::BVP, 64, 0, 30, 1, [](double, std::size_t) { return 1.0; });
    const auto hr = hr_from_bvp(flat);
    CHECK(hr.flagged);
    CHECK(hr.hr_bpm.empty());
    const auto slow = fixtures::make_stream(Modality::BVP, 16, 0, 30, 1, [](double, std::size_t) { return 1.0; });
    CHECK_THROWS_AS(hr_from_bvp(slow), StreamError);
}

TEST_CASE("EDA decomposition")
{
    const auto flat = fixtures::make_stream(Modality::EDA, 4, 0, 60, 1, [](double, std::size_t) { return 2.0; });
    const auto r0 = eda_decompose(flat);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        CHECK(r0.tonic[i] == 2.0);
        CHECK(r0.phasic[i] == 0.0);
    }
    CHECK(r0.scrs.empty());

    auto bump = [](double amp) {
        return [amp](double t, std::size_t) {
            const double u = t - 30.0;
            return 2.0 + (std::abs(u) < 1.0 ? amp * 0.5 * (1 + std::cos(kPi * u)) : 0.0);
        };
    };
    const auto one = fixtures::make_stream(Modality::EDA, 4, 0, 60, 1, bump(0.3));
    const auto r1 = eda_decompose(one);
    REQUIRE(r1.scrs.size() == 1);
    CHECK(std::abs(r1.scrs[0].amplitude - 0.3) <= 0.03);
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(r1.tonic[i] + r1.phasic[i] == one.channels[0][i]);

    const auto small = fixtures::make_stream(Modality::EDA, 4, 0, 60, 1, bump(0.04));
    CHECK(eda_decompose(small).scrs.empty());
}

TEST_CASE("moving median shrinks at the edges")
{
    const std::vector<double> t{0, 1, 2, 3, 4};
    const std::vector<double> x{5, 1, 9, 3, 7};
    const auto m = moving_median(t, x, 2.0);  // half width 1 s
    CHECK(m[0] == doctest::Approx(3.0));      // {5, 1}
    CHECK(m[2] == doctest::Approx(3.0));      // {1, 9, 3}
    CHECK(m[4] == doctest::Approx(5.0));      // {3, 7}
}

namespace {

SensorStream gaze(double seconds, const std::function<std::pair<double, double>(double)>& xy,
                  const std::function<bool(double)>& valid = [](double) { return true; })
{
    return fixtures::make_stream(Modality::GAZE, 200, 0, seconds, 4, [&](double t, std::size_t c) {
        const auto [x, y] = xy(t);
        if (c == 0) return x;
        if (c == 1) return y;
        if (c == 2) return 3.5;
        return valid(t) ? 1.0 : 0.0;
    });
}

}  // namespace

TEST_CASE("static gaze gives one fixation")
{
    const auto g = gaze(1.0, [](double) { return std::pair{0.4, 0.6}; });
    const auto f = detect_fixations(g);
    REQUIRE(f.size() == 1);
    CHECK(f[0].duration() == doctest::Approx(1.0));
    CHECK(f[0].x == doctest::Approx(0.4));
}

TEST_CASE("two held points give two fixations")
{
    const auto g = gaze(1.0, [](double t) { return std::pair{t < 0.5 ? 0.4 : 0.5, 0.5}; });  // 0.1 * 100 deg
    const auto f = detect_fixations(g);
    REQUIRE(f.size() == 2);
    CHECK(f[0].end <= f[1].start);
    CHECK(f[0].duration() == doctest::Approx(0.5));
}

TEST_CASE("drifting gaze never yields long fixations")
{
    // 5 deg/s across a 100 deg field.
    const auto slow = gaze(4.0, [](double t) { return std::pair{0.1 + 0.05 * t, 0.5}; });
    for (const auto& f : detect_fixations(slow)) CHECK(f.duration() <= 0.2 + 0.005 + 1e-9);
    // 20 deg/s exceeds 1 deg before 100 ms have passed.
    const auto fast = gaze(2.0, [](double t) { return std::pair{0.1 + 0.2 * t, 0.5}; });
    CHECK(detect_fixations(fast).empty());
}

TEST_CASE("invalid samples split fixations")
{
    const auto g = gaze(1.0, [](double) { return std::pair{0.5, 0.5}; },
                        [](double t) { return t < 0.45 || t >= 0.55; });
    const auto f = detect_fixations(g);
    REQUIRE(f.size() == 2);
    CHECK(f[0].end <= 0.45 + 1e-9);
}

TEST_CASE("fixations are disjoint and maximal")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.05, 0.95), hold(0.15, 0.6);
    std::vector<std::tuple<double, double, double>> plan;
    double t = 0;
    while (t < 10) {
        const double h = hold(rng);
        plan.emplace_back(t, u(rng), u(rng));
        t += h;
    }
    const auto g = gaze(10.0, [&](double tt) {
        std::pair<double, double> p{0.5, 0.5};
        for (const auto& [t0, x, y] : plan)
            if (tt >= t0) p = {x, y};
        return p;
    });
    const auto f = detect_fixations(g);
    const FixationParams fp;
    for (std::size_t i = 1; i < f.size(); ++i) {
        CHECK(f[i - 1].end <= f[i].start + 1e-9);
        CHECK(dispersion_deg(g, f[i - 1].first, f[i].last, fp) > fp.dispersion_deg);
    }
}

TEST_CASE("heatmap")
{
    const auto center = gaze(1.0, [](double) { return std::pair{0.5, 0.5}; });
    const auto h = gaze_heatmap(center, 9, 9, 1.0);
    double peak = 0;
    std::size_t pr = 0, pc = 0;
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t c = 0; c < 9; ++c)
            if (h.at(r, c) > peak) peak = h.at(r, c), pr = r, pc = c;
    CHECK(peak == doctest::Approx(1.0));
    CHECK(pr == 4);
    CHECK(pc == 4);

    const auto none = gaze(1.0, [](double) { return std::pair{0.5, 0.5}; }, [](double) { return false; });
    const auto z = gaze_heatmap(none, 4, 4, 1.0);
    for (double v : z.cells) CHECK(v == 0.0);
}

TEST_CASE("uniform gaze gives a flat histogram")
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SensorStream g;
    g.modality = Modality::GAZE;
    g.rate_hz = 200;
    g.channels.assign(4, {});
    for (int i = 0; i < 100000; ++i) {
        g.t.push_back(i / 200.0);
        g.channels[0].push_back(u(rng));
        g.channels[1].push_back(u(rng));
        g.channels[2].push_back(3.0);
        g.channels[3].push_back(1.0);
    }
    const auto h = gaze_heatmap(g, 10, 10, 0.0, false);
    const double expected = 1000.0;
    for (double v : h.cells) CHECK(std::abs(v - expected) <= 5 * std::sqrt(expected));
}

TEST_CASE("epochs follow the inverse clock map")
{
    auto ramp = fixtures::make_stream(Modality::EDA, 4, 0, 200, 1, [](double t, std::size_t) { return t; }, "eda");
    std::map<std::string, ClockMap> clocks{{"dev", ClockMap{1.0, 50.0, 0.0, 2}}};
    std::vector<EventRecord> ev{{100'000'000ull, 10000, 0x100, 0, 0, 0}};
    const std::vector<SensorStream> streams{ramp};
    const auto r = cut_epochs(streams, clocks, ev, 0x100, 2.0, 8.0, 10.0);
    REQUIRE(r.epochs.size() == 1);
    const auto& e = r.epochs[0];
    const auto zero = static_cast<std::size_t>(std::llround(2.0 * 10.0));
    CHECK(e.grid[zero] == doctest::Approx(0.0));
    CHECK(e.streams[0].channels[0][zero] == doctest::Approx(50.0));
}

TEST_CASE("fNIRS baseline correction")
{
    auto constant = fixtures::make_stream(Modality::FNIRS, 10, 0, 60, 3, [](double, std::size_t c) { return 5.0 + c; }, "nirs");
    auto step = fixtures::make_stream(Modality::FNIRS, 10, 0, 60, 3,
                                      [](double t, std::size_t c) { return c == 0 && t >= 30.0 ? 1.0 : 0.0; }, "step");
    std::map<std::string, ClockMap> clocks{{"dev", ClockMap{}}};
    std::vector<EventRecord> ev{{30'000'000ull, 3000, 0x100, 0, 0, 0}};
    const std::vector<SensorStream> streams{constant, step};
    const auto r = cut_epochs(streams, clocks, ev, 0x100, 5.0, 10.0, 10.0);
    REQUIRE(r.epochs.size() == 1);
    for (const auto& ch : r.epochs[0].streams[0].channels)
        for (double v : ch) CHECK(v == doctest::Approx(0.0));
    const auto& e = r.epochs[0];
    double sum = 0;
    int n = 0;
    for (std::size_t i = 0; i < e.grid.size(); ++i) {
        if (e.grid[i] > 0) {
            sum += e.streams[1].channels[0][i];
            ++n;
        }
    }
    CHECK(std::abs(sum / n - 1.0) <= 1.0 / 10.0);
}

TEST_CASE("epochs near the boundary are skipped with a warning")
{
    auto s = fixtures::make_stream(Modality::EDA, 4, 0, 20, 1, [](double, std::size_t) { return 1.0; }, "eda");
    std::map<std::string, ClockMap> clocks{{"dev", ClockMap{}}};
    std::vector<EventRecord> ev{{1'000'000ull, 100, 0x100, 0, 0, 0}, {10'000'000ull, 1000, 0x100, 0, 0, 0}};
    const std::vector<SensorStream> streams{s};
    const auto r = cut_epochs(streams, clocks, ev, 0x100, 2.0, 8.0, 10.0);
    CHECK(r.epochs.size() == 1);
    CHECK(r.warnings.size() == 1);
    std::map<std::string, ClockMap> none;
    CHECK_THROWS_AS(cut_epochs(streams, none, ev, 0x100, 2.0, 8.0, 10.0), StreamError);
}

TEST_CASE("gaps longer than half a second are not interpolated")
{
    auto s = fixtures::make_stream(Modality::EDA, 4, 0, 40, 1, [](double, std::size_t) { return 1.0; }, "eda");
    // Remove one second of samples around t = 21.
    SensorStream cut = s;
    cut.t.clear();
    cut.channels[0].clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.t[i] > 20.5 && s.t[i] < 21.5) continue;
        cut.t.push_back(s.t[i]);
        cut.channels[0].push_back(1.0);
    }
    std::map<std::string, ClockMap> clocks{{"dev", ClockMap{}}};
    std::vector<EventRecord> ev{{20'000'000ull, 2000, 0x100, 0, 0, 0}};
    const std::vector<SensorStream> streams{cut};
    const auto r = cut_epochs(streams, clocks, ev, 0x100, 2.0, 8.0, 10.0);
    REQUIRE(r.epochs.size() == 1);
    const auto& es = r.epochs[0].streams[0];
    int invalid = 0;
    for (std::size_t i = 0; i < es.valid.size(); ++i) {
        if (!es.valid[i]) {
            ++invalid;
            CHECK(std::isnan(es.channels[0][i]));
        }
    }
    CHECK(invalid > 0);
}
