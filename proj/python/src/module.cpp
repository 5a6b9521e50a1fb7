#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mmsim/metrics.hpp"
#include "mmsim/net_protocol.hpp"
#include "mmsim/scenario.hpp"
#include "mmsim/sensor_sync.hpp"
#include "mmsim/sim_server.hpp"

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace mmsim;

namespace {

std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ScenarioSpec load_or_throw(const std::string& text)
{
    auto r = load_scenario(text);
    if (!r.ok()) {
        std::string msg = "invalid scenario";
        for (const auto& d : r.diagnostics) msg += "\n" + d.message;
        throw py::value_error(msg);
    }
    return *r.spec;
}

std::string_view type_name(net::MsgType t)
{
    switch (t) {
    case net::MsgType::Hello: return "HELLO";
    case net::MsgType::Welcome: return "WELCOME";
    case net::MsgType::Input: return "INPUT";
    case net::MsgType::Snapshot: return "SNAPSHOT";
    case net::MsgType::Event: return "EVENT";
    case net::MsgType::Ping: return "PING";
    case net::MsgType::Pong: return "PONG";
    case net::MsgType::QResponse: return "QRESPONSE";
    case net::MsgType::Nback: return "NBACK";
    case net::MsgType::Bye: return "BYE";
    }
    return "?";
}

net::Header make_header(std::uint16_t session, std::uint16_t agent_id, std::uint32_t seq, std::uint64_t timestamp_us)
{
    net::Header h;
    h.session = session;
    h.agent_id = agent_id;
    h.seq = seq;
    h.timestamp_us = timestamp_us;
    return h;
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v)
{
    return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Bindings for the mmsim simulation core";

    m.def(
        "validate_scenario",
        [](const std::string& text) {
            const auto r = load_scenario(text);
            py::dict out;
            out["ok"] = r.ok();
            py::list diags;
            for (const auto& d : r.diagnostics) {
                py::dict e;
                e["severity"] = d.severity == Severity::Error ? "error" : "warning";
                e["message"] = d.message;
                e["line"] = d.line;
                e["column"] = d.column;
                diags.append(e);
            }
            out["diagnostics"] = diags;
            if (r.ok()) {
                out["name"] = r.spec->name;
                out["hash"] = scenario_hash(*r.spec);
            }
            return out;
        },
        py::arg("text"), "Parse and check a scenario document given as JSON text.");

    m.def(
        "place",
        [](const std::string& text) {
            const auto spec = load_or_throw(text);
            py::list out;
            for (const auto& p : solve_tta_placement(spec)) {
                py::dict d;
                d["agent_id"] = p.agent_id;
                d["name"] = p.name;
                d["kind"] = std::string(to_string(p.kind));
                d["speed_mps"] = p.speed;
                d["distance_m"] = p.distance;
                d["arc_start_m"] = p.arc_start;
                out.append(d);
            }
            return out;
        },
        py::arg("text"), "Initial distances that equalize arrival time at the conflict point.");

    m.def("read_text", &read_text, py::arg("path"));

    m.def(
        "encode_ping",
        [](std::uint64_t t0, std::uint16_t session, std::uint16_t agent_id, std::uint32_t seq,
           std::uint64_t timestamp_us) {
            return to_bytes(net::encode(net::Message{make_header(session, agent_id, seq, timestamp_us), net::Ping{t0}}));
        },
        py::arg("t0"), py::arg("session") = 0, py::arg("agent_id") = 0, py::arg("seq") = 0,
        py::arg("timestamp_us") = 0);

    m.def(
        "encode_bye",
        [](std::uint16_t session, std::uint16_t agent_id, std::uint32_t seq, std::uint64_t timestamp_us) {
            return to_bytes(net::encode(net::Message{make_header(session, agent_id, seq, timestamp_us), net::Bye{}}));
        },
        py::arg("session") = 0, py::arg("agent_id") = 0, py::arg("seq") = 0, py::arg("timestamp_us") = 0);

    m.def(
        "decode_header",
        [](py::bytes data) {
            const std::string raw = data;
            const auto d = net::decode(
                std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
            py::dict out;
            out["ok"] = d.ok();
            if (!d.ok()) {
                out["error"] = std::string(net::to_string(d.error));
                return out;
            }
            const auto& h = d.message->header;
            out["type"] = std::string(type_name(d.message->type()));
            out["flags"] = h.flags;
            out["kind"] = h.kind;
            out["session"] = h.session;
            out["agent_id"] = h.agent_id;
            out["seq"] = h.seq;
            out["timestamp_us"] = h.timestamp_us;
            if (const auto* p = std::get_if<net::Ping>(&d.message->payload)) out["t0"] = p->t0;
            if (const auto* p = std::get_if<net::Pong>(&d.message->payload)) out["t0"] = p->t0;
            return out;
        },
        py::arg("data"), "Decode a datagram; returns the header fields or the decode error.");

    m.def(
        "estimate_offset",
        [](const std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t, std::uint64_t>>& samples,
           std::size_t window) {
            std::vector<net::ClockSample> s;
            for (const auto& [t0, t1, t2, t3] : samples) s.push_back({t0, t1, t2, t3});
            const auto e = net::estimate_offset(s, window);
            return py::make_tuple(e.offset_us, e.delay_us);
        },
        py::arg("samples"), py::arg("window") = 8, "(offset_us, delay_us) of the minimum-delay sample.");

    m.def(
        "replay",
        [](const std::string& path, bool verify_checksums) {
            const auto log = read_replay_log_file(path);
            ReplayOptions opt;
            opt.verify_checksums = verify_checksums;
            const auto r = replay(log, opt);
            py::dict out;
            out["ticks"] = r.ticks;
            out["digest"] = r.digest;
            out["events"] = r.events.size();
            out["snapshots"] = r.snapshots.size();
            return out;
        },
        py::arg("path"), py::arg("verify_checksums") = true);

    m.def(
        "metrics",
        [](const std::string& path, const std::string& out_dir) {
            const auto rec = metrics::record(read_replay_log_file(path));
            const auto report = metrics::compute_report(rec);
            return out_dir.empty() ? metrics::summary_json(report) : metrics::write_report(report, out_dir);
        },
        py::arg("path"), py::arg("out_dir") = "", "Metrics summary JSON; also writes CSV files when out_dir is given.");

    m.def(
        "fit_clock_map",
        [](const std::vector<double>& device, const std::vector<double>& sim) {
            const auto c = sensors::fit_clock_map(device, sim);
            return py::make_tuple(c.a, c.b, c.residual_rms);
        },
        py::arg("device_marks"), py::arg("sim_marks"), "(a, b, residual_rms) with t_sim = a * t_dev + b.");

    m.def(
        "fixations",
        [](const std::string& csv_text, double dispersion_deg, double min_duration_ms) {
            const auto gaze = sensors::parse_stream_csv(csv_text);
            sensors::FixationParams p;
            p.dispersion_deg = dispersion_deg;
            p.min_duration_ms = min_duration_ms;
            py::list out;
            for (const auto& f : sensors::detect_fixations(gaze, p))
                out.append(py::make_tuple(f.start, f.end, f.x, f.y));
            return out;
        },
        py::arg("csv_text"), py::arg("dispersion_deg") = 1.0, py::arg("min_duration_ms") = 100.0,
        "(start, end, x, y) for each fixation in a gaze CSV stream.");

    py::register_exception<ReplayFormatError>(m, "ReplayFormatError", PyExc_ValueError);
    py::register_exception<ReplayIoError>(m, "ReplayIoError", PyExc_OSError);
    py::register_exception<ReplayDivergence>(m, "ReplayDivergence");
    py::register_exception<HashMismatch>(m, "HashMismatch", PyExc_ValueError);
    py::register_exception<PlacementError>(m, "PlacementError", PyExc_ValueError);
    py::register_exception<sensors::StreamError>(m, "StreamError", PyExc_ValueError);
    py::register_exception<sensors::ClockFitError>(m, "ClockFitError", PyExc_ValueError);
}
