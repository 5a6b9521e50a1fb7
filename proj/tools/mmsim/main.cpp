// mmsim: command line entry point.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 replay divergence, 4 I/O.

#include "mmsim/metrics.hpp"
#include "mmsim/scenario.hpp"
#include "mmsim/sensor_sync.hpp"
#include "mmsim/server_net.hpp"
#include "mmsim/sim_server.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kValidation = 2, kDivergence = 3, kIo = 4 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream o;
    o << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
    return o.str();
}

json diagnostics_json(const std::vector<mmsim::Diagnostic>& diags)
{
    json arr = json::array();
    for (const auto& d : diags)
        arr.push_back({{"severity", d.severity == mmsim::Severity::Error ? "error" : "warning"},
                       {"message", d.message},
                       {"line", d.line},
                       {"column", d.column}});
    return arr;
}

void print_diagnostics(const std::string& path, const std::vector<mmsim::Diagnostic>& diags)
{
    for (const auto& d : diags) {
        std::cerr << path;
        if (d.line > 0) std::cerr << ':' << d.line << ':' << d.column;
        std::cerr << ": " << (d.severity == mmsim::Severity::Error ? "error" : "warning") << ": " << d.message << '\n';
    }
}

// Loads a scenario or reports why not. Returns the exit code on failure.
std::variant<mmsim::ScenarioSpec, int> load(const std::string& path, bool as_json)
{
    const auto result = mmsim::load_scenario(read_text(path));
    if (!result.ok()) {
        if (as_json)
            std::cout << json{{"ok", false}, {"diagnostics", diagnostics_json(result.diagnostics)}}.dump(2) << '\n';
        else
            print_diagnostics(path, result.diagnostics);
        return kValidation;
    }
    if (!as_json) print_diagnostics(path, result.diagnostics);
    return *result.spec;
}

// -- validate ---------------------------------------------------------------------

int cmd_validate(const std::string& path, bool as_json)
{
    const auto result = mmsim::load_scenario(read_text(path));
    if (as_json) {
        json j{{"ok", result.ok()}, {"diagnostics", diagnostics_json(result.diagnostics)}};
        if (result.ok()) {
            j["scenario_hash"] = hex64(mmsim::scenario_hash(*result.spec));
            j["agents"] = result.spec->agents.size();
        }
        std::cout << j.dump(2) << '\n';
    } else {
        print_diagnostics(path, result.diagnostics);
        if (result.ok())
            std::cout << path << ": ok (" << result.spec->agents.size() << " agents, hash "
                      << hex64(mmsim::scenario_hash(*result.spec)) << ")\n";
    }
    return result.ok() ? kOk : kValidation;
}

// -- place --------------------------------------------------------------------------

int cmd_place(const std::string& path, bool as_json)
{
    auto loaded = load(path, as_json);
    if (auto* code = std::get_if<int>(&loaded)) return *code;
    const auto& spec = std::get<mmsim::ScenarioSpec>(loaded);
    std::vector<mmsim::Placement> rows;
    try {
        rows = mmsim::solve_tta_placement(spec);
    } catch (const mmsim::PlacementError& e) {
        if (as_json)
            std::cout << json{{"ok", false}, {"agent", e.agent()}, {"error", e.what()}}.dump(2) << '\n';
        else
            std::cerr << "placement failed for agent '" << e.agent() << "': " << e.what() << '\n';
        return kValidation;
    }
    if (as_json) {
        json j{{"ok", true}, {"sync_tta_s", spec.sync_tta_s}, {"placements", json::array()}};
        for (const auto& p : rows)
            j["placements"].push_back({{"agent_id", p.agent_id},
                                       {"name", p.name},
                                       {"kind", std::string(mmsim::to_string(p.kind))},
                                       {"speed_mps", p.speed},
                                       {"distance_m", p.distance},
                                       {"arc_start_m", p.arc_start}});
        std::cout << j.dump(2) << '\n';
        return kOk;
    }
    std::printf("T = %.3f s\n", spec.sync_tta_s);
    std::printf("%-4s %-16s %-18s %12s %14s\n", "id", "agent", "kind", "speed_m/s", "distance_m");
    for (const auto& p : rows)
        std::printf("%-4u %-16s %-18s %12.3f %14.1f\n", p.agent_id, p.name.c_str(),
                    std::string(mmsim::to_string(p.kind)).c_str(), p.speed, p.distance);
    return kOk;
}

// -- serve ---------------------------------------------------------------------------

struct ServeArgs {
    std::string scenario;
    std::string bind = "0.0.0.0";
    int udp_port = mmsim::net::kDefaultUdpPort;
    int ws_port = mmsim::net::kDefaultWsPort;
    bool no_ws = false;
    int tick_hz = 100;
    int snapshot_div = 2;
    int session = 1;
    std::string log;
    double duration = 0.0;
    int checkpoint_every = 1000;
};

int cmd_serve(const ServeArgs& a, bool as_json)
{
    auto loaded = load(a.scenario, as_json);
    if (auto* code = std::get_if<int>(&loaded)) return *code;
    mmsim::SessionConfig cfg;
    cfg.scenario = std::get<mmsim::ScenarioSpec>(loaded);
    cfg.tick_rate_hz = static_cast<std::uint16_t>(a.tick_hz);
    cfg.snapshot_div = static_cast<std::uint8_t>(a.snapshot_div);
    cfg.session_id = static_cast<std::uint16_t>(a.session);
    cfg.full_snapshot_every = static_cast<std::uint64_t>(a.checkpoint_every);
    if (const auto err = mmsim::validate(cfg); !err.empty()) {
        std::cerr << "invalid session configuration: " << err << '\n';
        return kValidation;
    }
    mmsim::ServeOptions opt;
    opt.bind_address = a.bind;
    opt.udp_port = static_cast<std::uint16_t>(a.udp_port);
    opt.ws_port = static_cast<std::uint16_t>(a.ws_port);
    opt.enable_ws = !a.no_ws;
    opt.duration_s = a.duration;
    if (!a.log.empty()) opt.log_path = a.log;
    auto line = [as_json](const mmsim::ServeStats& s) {
        if (as_json) {
            std::cout << json{{"tick", s.tick},
                              {"sim_time_s", s.sim_time_s},
                              {"clients", s.clients},
                              {"in", s.datagrams_in},
                              {"out", s.datagrams_out},
                              {"queue_drops", s.queue_drops},
                              {"decode_errors", s.decode_errors},
                              {"max_tick_us", s.max_tick_us}}
                             .dump()
                      << std::endl;
        } else {
            std::printf("tick %8llu  t %9.2f s  clients %zu  in %llu  out %llu  drops %llu  bad %llu  max_tick %lld us\n",
                        static_cast<unsigned long long>(s.tick), s.sim_time_s, s.clients,
                        static_cast<unsigned long long>(s.datagrams_in), static_cast<unsigned long long>(s.datagrams_out),
                        static_cast<unsigned long long>(s.queue_drops), static_cast<unsigned long long>(s.decode_errors),
                        static_cast<long long>(s.max_tick_us));
            std::fflush(stdout);
        }
    };
    opt.on_stats = line;
    mmsim::Server server(cfg, opt);
    try {
        server.bind();
    } catch (const std::exception& e) {
        std::cerr << "cannot bind: " << e.what() << '\n';
        return kIo;
    }
    if (!as_json)
        std::printf("serving '%s' udp:%u ws:%u at %d Hz\n", cfg.scenario.name.c_str(), server.udp_port(),
                    server.ws_port(), a.tick_hz);
    const auto final_stats = server.run();
    line(final_stats);
    return kOk;
}

// -- replay ------------------------------------------------------------------------------

int cmd_replay(const std::string& path, const std::string& scenario_path, bool no_checksums, bool as_json)
{
    mmsim::ReplayLog log;
    try {
        log = mmsim::read_replay_log_file(path);
    } catch (const mmsim::ReplayFormatError& e) {
        std::cerr << path << ": " << e.what() << '\n';
        return kValidation;
    }
    std::optional<mmsim::ScenarioSpec> expected;
    if (!scenario_path.empty()) {
        auto loaded = load(scenario_path, as_json);
        if (auto* code = std::get_if<int>(&loaded)) return *code;
        expected = std::get<mmsim::ScenarioSpec>(loaded);
    }
    mmsim::ReplayOptions opt;
    opt.verify_checksums = !no_checksums;
    opt.expected_scenario = expected ? &*expected : nullptr;
    try {
        const auto r = mmsim::replay(log, opt);
        if (as_json)
            std::cout << json{{"ok", true},
                              {"ticks", r.ticks},
                              {"events", r.events.size()},
                              {"snapshots", r.snapshots.size()},
                              {"digest", hex64(r.digest)},
                              {"divergent_tick", nullptr}}
                             .dump(2)
                      << '\n';
        else
            std::cout << "replay ok: " << r.ticks << " ticks, " << r.events.size() << " events, " << r.snapshots.size()
                      << " snapshot datagrams, digest " << hex64(r.digest) << '\n';
        return kOk;
    } catch (const mmsim::ReplayDivergence& e) {
        if (as_json)
            std::cout << json{{"ok", false}, {"divergent_tick", e.tick()}, {"error", e.what()}}.dump(2) << '\n';
        else
            std::cerr << "replay diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const mmsim::HashMismatch& e) {
        if (as_json)
            std::cout << json{{"ok", false}, {"error", e.what()}}.dump(2) << '\n';
        else
            std::cerr << "scenario mismatch: " << e.what() << '\n';
        return kValidation;
    }
}

// -- metrics -------------------------------------------------------------------------------

int cmd_metrics(const std::string& path, const std::string& out_dir, const mmsim::metrics::MetricsParams& prm,
                bool as_json)
{
    mmsim::ReplayLog log;
    try {
        log = mmsim::read_replay_log_file(path);
    } catch (const mmsim::ReplayFormatError& e) {
        std::cerr << path << ": " << e.what() << '\n';
        return kValidation;
    }
    mmsim::metrics::Recording rec;
    try {
        rec = mmsim::metrics::record(log);
    } catch (const mmsim::ReplayDivergence& e) {
        std::cerr << "log does not replay: " << e.what() << '\n';
        return kDivergence;
    }
    const auto report = mmsim::metrics::compute_report(rec, prm);
    std::string summary;
    try {
        summary = mmsim::metrics::write_report(report, out_dir);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return kIo;
    }
    if (as_json) {
        std::cout << summary << '\n';
    } else {
        std::cout << "metrics written to " << out_dir << '\n';
        for (const auto& p : report.pairs)
            std::cout << "  pair " << p.a << '-' << p.b << ": min TTC "
                      << (p.min_ttc ? std::to_string(*p.min_ttc) + " s" : std::string("inf")) << ", max DRAC "
                      << p.max_drac << " m/s^2\n";
        for (const auto& r : report.reactions)
            std::cout << "  " << r.metric << " agent " << r.agent << ": "
                      << (r.value ? std::to_string(*r.value) + " s" : "absent (" + r.reason + ")") << '\n';
        for (const auto& [adm, s] : report.instruments)
            if (adm.instrument == mmsim::Instrument::TLX)
                std::cout << "  TLX agent " << adm.agent << ": "
                          << (s.tlx_raw ? std::to_string(*s.tlx_raw) : std::string("partial")) << '\n';
        for (const auto& [b, g] : report.nback)
            std::cout << "  N-back block " << b.block << " (n=" << b.n << "): hits " << g.hits << ", omissions "
                      << g.omissions << ", false alarms " << g.false_alarms << ", accuracy " << g.accuracy << '\n';
    }
    return kOk;
}

// -- align -----------------------------------------------------------------------------------

struct AlignArgs {
    std::string events;
    std::string streams;
    std::string out;
    std::string code = "TRIGGER_FIRED";
    double pre = 2.0;
    double post = 8.0;
    double rate = 10.0;
    int heat_rows = 32;
    int heat_cols = 32;
    double heat_sigma = 1.0;
};

int cmd_align(const AlignArgs& a, bool as_json)
{
    namespace ss = mmsim::sensors;
    mmsim::ReplayLog log;
    try {
        log = mmsim::read_replay_log_file(a.events);
    } catch (const mmsim::ReplayFormatError& e) {
        std::cerr << a.events << ": " << e.what() << '\n';
        return kValidation;
    }
    std::optional<std::uint16_t> code = mmsim::event_code_from_name(a.code);
    if (!code) {
        try {
            code = static_cast<std::uint16_t>(std::stoul(a.code, nullptr, 0));
        } catch (const std::exception&) {
            std::cerr << "unknown event code '" << a.code << "'\n";
            return kUsage;
        }
    }
    if (!fs::is_directory(a.streams)) throw IoError("not a directory: " + a.streams);

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.streams))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ss::SensorStream> streams;
    for (const auto& f : files) {
        try {
            streams.push_back(ss::parse_stream_csv(read_text(f.string())));
        } catch (const ss::StreamError& e) {
            std::cerr << f.string() << ": " << e.what() << '\n';
            return kValidation;
        }
    }

    json summary{{"clocks", json::object()}, {"streams", json::array()}, {"warnings", json::array()}};
    std::map<std::string, ss::ClockMap> clocks;
    for (const auto& s : streams) {
        if (s.modality != ss::Modality::MARK) continue;
        const auto [dev, sim] = ss::pair_sync_marks(s, log.events);
        try {
            const auto cm = ss::fit_clock_map(dev, sim);
            clocks[s.clock_id] = cm;
            summary["clocks"][s.clock_id] = {{"a", cm.a},
                                             {"b", cm.b},
                                             {"residual_rms_s", cm.residual_rms},
                                             {"marks", cm.marks},
                                             {"in_sanity_band", cm.in_sanity_band()}};
            if (!cm.in_sanity_band())
                summary["warnings"].push_back("clock " + s.clock_id + " drift outside [0.99, 1.01]");
        } catch (const ss::ClockFitError& e) {
            std::cerr << "clock " << s.clock_id << ": " << e.what() << '\n';
            return kValidation;
        }
    }

    const fs::path out(a.out);
    fs::create_directories(out);
    auto open = [&out](const std::string& name) {
        std::ofstream f(out / name);
        if (!f) throw IoError("cannot write " + (out / name).string());
        f.precision(10);
        return f;
    };

    for (const auto& s : streams) {
        if (s.modality == ss::Modality::MARK) continue;
        const auto cit = clocks.find(s.clock_id);
        if (cit == clocks.end()) {
            std::cerr << s.stream_id << ": no MARK stream for clock '" << s.clock_id << "'\n";
            return kValidation;
        }
        const ss::ClockMap& cm = cit->second;
        json info{{"stream_id", s.stream_id},
                  {"modality", std::string(ss::to_string(s.modality))},
                  {"samples", s.size()},
                  {"clock_id", s.clock_id}};
        if (s.modality == ss::Modality::FNIRS) info["hbt"] = s.hbt_derived ? "derived" : "stored";
        if (s.modality == ss::Modality::BVP) {
            const auto hr = ss::hr_from_bvp(s);
            auto f = open(s.stream_id + "_hr.csv");
            f << "t_sim_s,ibi_s,hr_bpm\n";
            for (std::size_t i = 0; i < hr.hr_bpm.size(); ++i)
                f << cm.to_sim(hr.hr_time[i]) << ',' << hr.ibi_s[i] << ',' << hr.hr_bpm[i] << '\n';
            info["mean_hr_bpm"] = hr.mean_hr_bpm;
            info["rmssd_ms"] = hr.rmssd_ms;
            info["sdnn_ms"] = hr.sdnn_ms;
            if (hr.flagged) info["flag"] = hr.reason;
        } else if (s.modality == ss::Modality::EDA) {
            const auto eda = ss::eda_decompose(s);
            auto f = open(s.stream_id + "_eda.csv");
            f << "t_sim_s,raw_us,tonic_us,phasic_us\n";
            for (std::size_t i = 0; i < s.size(); ++i)
                f << cm.to_sim(s.t[i]) << ',' << s.channels[0][i] << ',' << eda.tonic[i] << ',' << eda.phasic[i] << '\n';
            auto g = open(s.stream_id + "_scr.csv");
            g << "onset_sim_s,peak_sim_s,amplitude_us\n";
            for (const auto& r : eda.scrs) g << cm.to_sim(r.onset) << ',' << cm.to_sim(r.peak_time) << ',' << r.amplitude << '\n';
            info["scr_count"] = eda.scrs.size();
        } else if (s.modality == ss::Modality::GAZE) {
            const auto fx = ss::detect_fixations(s);
            auto f = open(s.stream_id + "_fixations.csv");
            f << "start_sim_s,end_sim_s,duration_s,x_norm,y_norm\n";
            for (const auto& x : fx)
                f << cm.to_sim(x.start) << ',' << cm.to_sim(x.end) << ',' << x.duration() << ',' << x.x << ',' << x.y << '\n';
            const auto hm = ss::gaze_heatmap(s, static_cast<std::size_t>(a.heat_rows),
                                             static_cast<std::size_t>(a.heat_cols), a.heat_sigma);
            auto h = open(s.stream_id + "_heatmap.csv");
            for (std::size_t r = 0; r < hm.rows; ++r) {
                for (std::size_t c = 0; c < hm.cols; ++c) h << (c ? "," : "") << hm.at(r, c);
                h << '\n';
            }
            info["fixations"] = fx.size();
        }
        summary["streams"].push_back(info);
    }

    const auto epochs = ss::cut_epochs(streams, clocks, log.events, *code, a.pre, a.post, a.rate);
    {
        auto f = open("epochs.csv");
        f << "epoch,code,t0_sim_s,stream_id,channel,t_rel_s,value\n";
        for (std::size_t e = 0; e < epochs.epochs.size(); ++e) {
            const auto& ep = epochs.epochs[e];
            for (const auto& st : ep.streams)
                for (std::size_t c = 0; c < st.channels.size(); ++c)
                    for (std::size_t k = 0; k < ep.grid.size(); ++k) {
                        f << e << ',' << ep.code << ',' << ep.t0 << ',' << st.stream_id << ',' << c << ',' << ep.grid[k] << ',';
                        if (st.valid[k]) f << st.channels[c][k];
                        f << '\n';
                    }
        }
    }
    for (const auto& w : epochs.warnings)
        summary["warnings"].push_back(w.stream_id + " at t0 " + std::to_string(w.t0) + ": " + w.message);
    summary["epochs"] = epochs.epochs.size();
    summary["event_code"] = *code;
    {
        auto f = open("alignment.json");
        f << summary.dump(2) << '\n';
    }
    if (as_json) {
        std::cout << summary.dump(2) << '\n';
    } else {
        for (const auto& [id, cm] : clocks)
            std::printf("clock %-12s a=%.9f b=%.6f s residual=%.3g s (%zu marks)\n", id.c_str(), cm.a, cm.b,
                        cm.residual_rms, cm.marks);
        std::printf("%zu epochs of %s written to %s\n", epochs.epochs.size(), a.code.c_str(), a.out.c_str());
        for (const auto& w : summary["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"mmsim: multi-agent traffic simulation server and analysis tools"};
    app.require_subcommand(1);
    bool as_json = false;
    app.add_flag("--json", as_json, "Machine-readable JSON output");

    std::string scenario_path;
    auto* validate = app.add_subcommand("validate", "Load and check a scenario file");
    validate->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    validate->add_flag("--json", as_json, "Machine-readable JSON output");

    auto* place = app.add_subcommand("place", "Print the TTA placement table (agent, speed m/s, distance m)");
    place->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    place->add_flag("--json", as_json, "Machine-readable JSON output");

    ServeArgs sa;
    auto* serve = app.add_subcommand("serve", "Run the authoritative simulation server");
    serve->add_option("scenario", sa.scenario, "Scenario JSON file")->required();
    serve->add_option("--bind", sa.bind, "Bind address")->capture_default_str();
    serve->add_option("--udp-port", sa.udp_port, "UDP port (0 picks one)")->check(CLI::Range(0, 65535))->capture_default_str();
    serve->add_option("--ws-port", sa.ws_port, "WebSocket bridge TCP port (0 picks one)")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    serve->add_flag("--no-ws", sa.no_ws, "Disable the WebSocket bridge");
    serve->add_option("--tick-hz", sa.tick_hz, "Simulation rate in Hz")->check(CLI::Range(1, 1000))->capture_default_str();
    serve->add_option("--snapshot-div", sa.snapshot_div, "Ticks per SNAPSHOT broadcast")
        ->check(CLI::Range(1, 255))
        ->capture_default_str();
    serve->add_option("--session", sa.session, "Session id carried in every header")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    serve->add_option("--log", sa.log, "Replay log output path (JSON lines)");
    serve->add_option("--duration", sa.duration, "Stop after this many seconds of sim time (0: run until interrupted)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    serve->add_option("--checkpoint-every", sa.checkpoint_every, "Ticks between state checkpoints in the log")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    serve->add_flag("--json", as_json, "Per-second stats as JSON lines");

    std::string log_path;
    bool no_checksums = false;
    auto* replay = app.add_subcommand("replay", "Re-run a replay log and check it for divergence");
    replay->add_option("log", log_path, "Replay log (JSON lines)")->required();
    replay->add_option("--scenario", scenario_path, "Require the log to match this scenario file");
    replay->add_flag("--no-checksums", no_checksums, "Skip per-input checksum verification");
    replay->add_flag("--json", as_json, "Machine-readable JSON output");

    std::string out_dir = "metrics_out";
    mmsim::metrics::MetricsParams mp;
    auto* metrics = app.add_subcommand("metrics", "Extract behavioral and surrogate-safety metrics from a replay log");
    metrics->add_option("log", log_path, "Replay log (JSON lines)")->required();
    metrics->add_option("--out", out_dir, "Output directory for CSV files and summary.json")->capture_default_str();
    metrics->add_option("--brake-threshold", mp.brake_threshold, "Brake pedal fraction counted as a response")->capture_default_str();
    metrics->add_option("--walk-speed", mp.walk_speed, "Crossing initiation speed in m/s")->capture_default_str();
    metrics->add_option("--walk-hold", mp.walk_hold_s, "Seconds the walk speed must be held")->capture_default_str();
    metrics->add_option("--yield-drop", mp.yield_drop, "Fractional speed drop counted as yielding")->capture_default_str();
    metrics->add_option("--yield-radius", mp.yield_radius_m, "Yielding window around the conflict point in m")->capture_default_str();
    metrics->add_option("--reversal-deg", mp.reversal_deg, "Steering reversal gap in degrees")->capture_default_str();
    metrics->add_option("--nback-window", mp.nback_window_s, "N-back response window in s")->capture_default_str();
    metrics->add_option("--accel-event", mp.accel_event, "Acceleration magnitude counted as a harsh event in m/s^2")->capture_default_str();
    metrics->add_option("--vehicle-width", mp.vehicle_width_m, "Vehicle width for lane departures in m")->capture_default_str();
    metrics->add_flag("--json", as_json, "Print the JSON summary");

    AlignArgs aa;
    auto* align = app.add_subcommand("align", "Fit sensor clocks, extract features and cut event-locked epochs");
    align->add_option("--events", aa.events, "Replay log holding the session events")->required();
    align->add_option("--streams", aa.streams, "Directory of stream CSV files")->required();
    align->add_option("--out", aa.out, "Output directory")->required();
    align->add_option("--code", aa.code, "Event code (name or number) to epoch on")->capture_default_str();
    align->add_option("--pre", aa.pre, "Seconds before each event")->check(CLI::NonNegativeNumber)->capture_default_str();
    align->add_option("--post", aa.post, "Seconds after each event")->check(CLI::NonNegativeNumber)->capture_default_str();
    align->add_option("--rate", aa.rate, "Epoch sample rate in Hz")->check(CLI::PositiveNumber)->capture_default_str();
    align->add_option("--heatmap-rows", aa.heat_rows, "Gaze heatmap rows")->check(CLI::PositiveNumber)->capture_default_str();
    align->add_option("--heatmap-cols", aa.heat_cols, "Gaze heatmap columns")->check(CLI::PositiveNumber)->capture_default_str();
    align->add_option("--heatmap-sigma", aa.heat_sigma, "Gaze heatmap smoothing in cells")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    align->add_flag("--json", as_json, "Machine-readable JSON output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*validate) return cmd_validate(scenario_path, as_json);
        if (*place) return cmd_place(scenario_path, as_json);
        if (*serve) return cmd_serve(sa, as_json);
        if (*replay) return cmd_replay(log_path, scenario_path, no_checksums, as_json);
        if (*metrics) return cmd_metrics(log_path, out_dir, mp, as_json);
        if (*align) return cmd_align(aa, as_json);
    } catch (const IoError& e) {
        std::cerr << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << e.what() << '\n';
        return kIo;
    } catch (const mmsim::ReplayIoError& e) {
        std::cerr << e.what() << '\n';
        return kIo;
    } catch (const mmsim::sensors::StreamError& e) {
        std::cerr << e.what() << '\n';
        return kValidation;
    }
    return kUsage;
}
