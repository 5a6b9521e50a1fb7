// Writes a simulated session for the command-line tests:
//   <out>/session.jsonl        replay log of a 30 s drive with a random driver
//   <out>/streams/*.csv        wristband and eye-tracker streams on their own clocks
// Usage: make_session_fixture <out dir>

#include "../support/fixtures.hpp"
#include "../support/recording.hpp"
#include "../support/signals.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace mmsim;
namespace fs = std::filesystem;
namespace ss = mmsim::sensors;

namespace {

void write(const fs::path& p, const std::string& text)
{
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

// A device clock that runs 200 ppm fast and started at an arbitrary epoch.
struct DeviceClock {
    double a;
    double b;
    double to_dev(double sim) const { return (sim - b) / a; }
};

}  // namespace

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: make_session_fixture <out dir>\n";
        return 1;
    }
    const fs::path out(argv[1]);
    fs::create_directories(out / "streams");

    SessionConfig cfg;
    cfg.scenario = fixtures::scenario("crossing_human_car.json");
    const auto rec = fixtures::record_session(cfg, 3000, fixtures::random_driver(7));
    write(out / "session.jsonl", rec.log_text);

    std::vector<double> marks;
    for (const auto& e : rec.events)
        if (e.code == static_cast<std::uint16_t>(EventCode::SYNC_MARK)) marks.push_back(e.sim_time_s());

    const std::map<std::string, DeviceClock> clocks{{"wrist", {1.0002, -1234.5}}, {"tracker", {0.9999, 86.25}}};
    for (const auto& [id, clk] : clocks) {
        ss::SensorStream m;
        m.stream_id = id + "_marks";
        m.modality = ss::Modality::MARK;
        m.clock_id = id;
        m.channels.assign(1, {});
        for (std::size_t k = 0; k < marks.size(); ++k) {
            m.t.push_back(clk.to_dev(marks[k]));
            m.channels[0].push_back(static_cast<double>(k));
        }
        write(out / "streams" / (m.stream_id + ".csv"), ss::format_stream_csv(m));
    }

    const auto& wrist = clocks.at("wrist");
    const auto& tracker = clocks.at("tracker");
    const double t0w = wrist.to_dev(0.0);
    write(out / "streams" / "eda.csv",
          ss::format_stream_csv(fixtures::make_stream(
              ss::Modality::EDA, 4, t0w, 30, 1,
              [&](double t, std::size_t) { return 2.0 + fixtures::scr_shape(t - t0w, 12.5, 0.4, 1.5); }, "eda",
              "wrist")));
    write(out / "streams" / "bvp.csv",
          ss::format_stream_csv(fixtures::make_stream(
              ss::Modality::BVP, 64, t0w, 30, 1, [](double t, std::size_t) { return fixtures::bvp_wave(t, 72); },
              "bvp", "wrist")));
    const double t0t = tracker.to_dev(0.0);
    write(out / "streams" / "gaze.csv",
          ss::format_stream_csv(fixtures::make_stream(
              ss::Modality::GAZE, 200, t0t, 30, 4,
              [&](double t, std::size_t c) {
                  const bool left = static_cast<int>(t - t0t) % 2 == 0;
                  if (c == 0) return left ? 0.3 : 0.7;
                  if (c == 1) return 0.5;
                  if (c == 2) return 3.2;
                  return 1.0;
              },
              "gaze", "tracker")));
    return 0;
}
