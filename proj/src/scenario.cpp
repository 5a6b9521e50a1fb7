#include "mmsim/scenario.hpp"

#include "mmsim/events.hpp"
#include "mmsim/surrogate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace mmsim {

using nlohmann::json;

std::string_view to_string(Controller c)
{
    switch (c) {
    case Controller::Human: return "human";
    case Controller::Policy: return "policy";
    case Controller::Script: return "script";
    }
    return "?";
}

std::string_view to_string(SignalPhase p)
{
    return p == SignalPhase::Green ? "green" : "red";
}

std::string_view to_string(Instrument i)
{
    switch (i) {
    case Instrument::TLX: return "tlx";
    case Instrument::PANAS: return "panas";
    case Instrument::VA: return "va";
    case Instrument::STRESS: return "stress";
    case Instrument::TIMEPERC: return "timeperc";
    }
    return "?";
}

std::optional<Instrument> instrument_from_string(std::string_view name)
{
    for (auto i : {Instrument::TLX, Instrument::PANAS, Instrument::VA, Instrument::STRESS, Instrument::TIMEPERC}) {
        if (to_string(i) == name) return i;
    }
    return std::nullopt;
}

SignalPhase signal_phase_at(const SignalPlan& plan, double t)
{
    const double cycle = plan.green_s + plan.red_s;
    if (cycle <= 0.0) {
        return SignalPhase::Green;
    }
    double local = std::fmod(t + plan.offset_s, cycle);
    if (local < 0.0) {
        local += cycle;
    }
    return local < plan.green_s ? SignalPhase::Green : SignalPhase::Red;
}

const AgentSpec* ScenarioSpec::find_agent(std::uint32_t id) const
{
    for (const auto& a : agents) {
        if (a.id == id) return &a;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string upper(std::string_view s)
{
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

class Reader {
public:
    std::vector<Diagnostic>& diags;

    void error(const std::string& where, const std::string& msg)
    {
        diags.push_back({Severity::Error, where.empty() ? msg : where + ": " + msg, 0, 0});
    }
    void warning(const std::string& where, const std::string& msg)
    {
        diags.push_back({Severity::Warning, where.empty() ? msg : where + ": " + msg, 0, 0});
    }

    std::optional<double> number(const json& obj, const char* key, const std::string& where, bool required)
    {
        if (!obj.contains(key)) {
            if (required) error(where, std::string("missing '") + key + "'");
            return std::nullopt;
        }
        const json& v = obj.at(key);
        if (!v.is_number()) {
            error(where + "." + key, "expected a number");
            return std::nullopt;
        }
        return v.get<double>();
    }

    std::optional<std::string> string(const json& obj, const char* key, const std::string& where, bool required)
    {
        if (!obj.contains(key)) {
            if (required) error(where, std::string("missing '") + key + "'");
            return std::nullopt;
        }
        const json& v = obj.at(key);
        if (!v.is_string()) {
            error(where + "." + key, "expected a string");
            return std::nullopt;
        }
        return v.get<std::string>();
    }

    std::optional<bool> boolean(const json& obj, const char* key, const std::string& where)
    {
        if (!obj.contains(key)) return std::nullopt;
        const json& v = obj.at(key);
        if (!v.is_boolean()) {
            error(where + "." + key, "expected true or false");
            return std::nullopt;
        }
        return v.get<bool>();
    }

    std::optional<std::uint32_t> uint(const json& obj, const char* key, const std::string& where, bool required)
    {
        if (!obj.contains(key)) {
            if (required) error(where, std::string("missing '") + key + "'");
            return std::nullopt;
        }
        const json& v = obj.at(key);
        if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xFFFFFFFFull) {
            error(where + "." + key, "expected an unsigned 32-bit integer");
            return std::nullopt;
        }
        return static_cast<std::uint32_t>(v.get<std::uint64_t>());
    }

    Polyline polyline(const json& v, const std::string& where)
    {
        Polyline out;
        if (!v.is_array()) {
            error(where, "expected an array of [x, y] points");
            return out;
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            const json& p = v[i];
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                error(where + "[" + std::to_string(i) + "]", "expected [x, y]");
                continue;
            }
            out.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        return out;
    }

    const json* array(const json& obj, const char* key, const std::string& where, bool required)
    {
        if (!obj.contains(key)) {
            if (required) error(where, std::string("missing '") + key + "'");
            return nullptr;
        }
        const json& v = obj.at(key);
        if (!v.is_array()) {
            error(where.empty() ? key : where + "." + key, "expected an array");
            return nullptr;
        }
        return &v;
    }
};

void read_map(Reader& r, const json& m, MapModel& map)
{
    if (!m.is_object()) {
        r.error("map", "expected an object");
        return;
    }
    if (const json* lanes = r.array(m, "lanes", "map", false)) {
        for (std::size_t i = 0; i < lanes->size(); ++i) {
            const json& l = (*lanes)[i];
            const std::string where = "map.lanes[" + std::to_string(i) + "]";
            if (!l.is_object()) {
                r.error(where, "expected an object");
                continue;
            }
            Lane lane;
            lane.id = r.string(l, "id", where, true).value_or("");
            lane.width = r.number(l, "width", where, false).value_or(3.5);
            if (l.contains("centerline")) lane.centerline = r.polyline(l.at("centerline"), where + ".centerline");
            else r.error(where, "missing 'centerline'");
            map.lanes.push_back(std::move(lane));
        }
    }
    if (const json* cws = r.array(m, "crosswalks", "map", false)) {
        for (std::size_t i = 0; i < cws->size(); ++i) {
            const json& c = (*cws)[i];
            const std::string where = "map.crosswalks[" + std::to_string(i) + "]";
            if (!c.is_object()) {
                r.error(where, "expected an object");
                continue;
            }
            Crosswalk cw;
            cw.id = r.string(c, "id", where, true).value_or("");
            if (c.contains("polygon")) cw.polygon = r.polyline(c.at("polygon"), where + ".polygon");
            map.crosswalks.push_back(std::move(cw));
        }
    }
    if (const json* cps = r.array(m, "conflict_points", "map", false)) {
        for (std::size_t i = 0; i < cps->size(); ++i) {
            const json& c = (*cps)[i];
            const std::string where = "map.conflict_points[" + std::to_string(i) + "]";
            if (!c.is_object()) {
                r.error(where, "expected an object");
                continue;
            }
            ConflictPoint cp;
            cp.id = r.string(c, "id", where, true).value_or("");
            cp.position.x = r.number(c, "x", where, true).value_or(0.0);
            cp.position.y = r.number(c, "y", where, true).value_or(0.0);
            map.conflict_points.push_back(std::move(cp));
        }
    }
    if (const json* paths = r.array(m, "paths", "map", false)) {
        for (std::size_t i = 0; i < paths->size(); ++i) {
            const json& p = (*paths)[i];
            const std::string where = "map.paths[" + std::to_string(i) + "]";
            if (!p.is_object()) {
                r.error(where, "expected an object");
                continue;
            }
            ApproachPath path;
            path.id = r.string(p, "id", where, true).value_or("");
            if (p.contains("points")) path.points = r.polyline(p.at("points"), where + ".points");
            else r.error(where, "missing 'points'");
            path.conflict_point = r.string(p, "conflict_point", where, false).value_or("");
            path.lane = r.string(p, "lane", where, false).value_or("");
            if (p.contains("grades")) {
                for (const Vec2& g : r.polyline(p.at("grades"), where + ".grades")) {
                    path.grades.push_back({g.x, g.y});
                }
            }
            map.approach_paths.push_back(std::move(path));
        }
    }
}

std::optional<std::uint16_t> read_event_code(Reader& r, const json& v, const std::string& where)
{
    if (v.is_number_unsigned() && v.get<std::uint64_t>() <= 0xFFFF) {
        return static_cast<std::uint16_t>(v.get<std::uint64_t>());
    }
    if (v.is_string()) {
        if (auto code = event_code_from_name(upper(v.get<std::string>()))) {
            return code;
        }
        r.error(where, "unknown event code " + v.get<std::string>());
        return std::nullopt;
    }
    r.error(where, "expected an event code name or number");
    return std::nullopt;
}

std::optional<Trigger> read_trigger(Reader& r, const json& t, const std::string& where)
{
    if (!t.is_object()) {
        r.error(where, "expected an object");
        return std::nullopt;
    }
    Trigger trig;
    trig.id = r.string(t, "id", where, false).value_or("");
    trig.repeating = r.boolean(t, "repeating", where).value_or(false);
    bool ok = true;

    if (!t.contains("when") || !t.at("when").is_object()) {
        r.error(where, "missing 'when' condition object");
        ok = false;
    } else {
        const json& w = t.at("when");
        const std::string ww = where + ".when";
        const std::string type = r.string(w, "type", ww, true).value_or("");
        if (type == "agent_within") {
            AgentWithin c;
            c.radius = r.number(w, "radius", ww, true).value_or(0.0);
            c.point = r.string(w, "point", ww, true).value_or("");
            c.agent = r.uint(w, "agent", ww, false);
            trig.condition = c;
        } else if (type == "time_elapsed") {
            trig.condition = TimeElapsed{r.number(w, "seconds", ww, true).value_or(0.0)};
        } else if (type == "ttc_below") {
            TtcBelow c;
            c.seconds = r.number(w, "seconds", ww, true).value_or(0.0);
            const json* pair = r.array(w, "pair", ww, true);
            if (pair && pair->size() == 2 && (*pair)[0].is_number_unsigned() && (*pair)[1].is_number_unsigned()) {
                c.a = (*pair)[0].get<std::uint32_t>();
                c.b = (*pair)[1].get<std::uint32_t>();
            } else {
                r.error(ww + ".pair", "expected two agent ids");
                ok = false;
            }
            trig.condition = c;
        } else if (type == "signal_phase") {
            const std::string phase = lower(r.string(w, "phase", ww, true).value_or(""));
            if (phase == "green") trig.condition = SignalPhaseIs{SignalPhase::Green};
            else if (phase == "red") trig.condition = SignalPhaseIs{SignalPhase::Red};
            else {
                r.error(ww + ".phase", "expected green or red");
                ok = false;
            }
        } else {
            r.error(ww + ".type", "unknown condition type '" + type + "'");
            ok = false;
        }
    }

    if (!t.contains("do") || !t.at("do").is_object()) {
        r.error(where, "missing 'do' action object");
        ok = false;
    } else {
        const json& d = t.at("do");
        const std::string dw = where + ".do";
        const std::string type = r.string(d, "type", dw, true).value_or("");
        if (type == "emit_event") {
            if (!d.contains("code")) {
                r.error(dw, "missing 'code'");
                ok = false;
            } else if (auto code = read_event_code(r, d.at("code"), dw + ".code")) {
                trig.action = EmitEvent{*code};
            } else {
                ok = false;
            }
        } else if (type == "request_takeover") {
            trig.action = RequestTakeover{r.uint(d, "agent", dw, true).value_or(0)};
        } else if (type == "start_questionnaire") {
            const std::string name = lower(r.string(d, "instrument", dw, true).value_or(""));
            if (auto inst = instrument_from_string(name)) {
                trig.action = StartQuestionnaire{*inst};
            } else {
                r.error(dw + ".instrument", "unknown instrument '" + name + "'");
                ok = false;
            }
        } else if (type == "start_nback") {
            StartNback a;
            const auto n = r.uint(d, "n", dw, true).value_or(2);
            const auto len = r.uint(d, "length", dw, true).value_or(20);
            if (n < 1 || n > 9) {
                r.error(dw + ".n", "n must be within 1..9");
                ok = false;
            }
            if (len < 1 || len > 1000) {
                r.error(dw + ".length", "length must be within 1..1000");
                ok = false;
            }
            a.n = static_cast<std::uint8_t>(std::min<std::uint32_t>(n, 9));
            a.length = static_cast<std::uint16_t>(std::min<std::uint32_t>(len, 1000));
            trig.action = a;
        } else if (type == "spawn_script") {
            trig.action = SpawnScript{r.uint(d, "agent", dw, true).value_or(0)};
        } else {
            r.error(dw + ".type", "unknown action type '" + type + "'");
            ok = false;
        }
    }
    if (!ok) {
        return std::nullopt;
    }
    return trig;
}

void read_agent(Reader& r, const json& a, const std::string& where, std::uint32_t fallback_id, AgentSpec& agent)
{
    agent.id = r.uint(a, "id", where, false).value_or(fallback_id);
    agent.name = r.string(a, "name", where, false).value_or("agent" + std::to_string(agent.id));
    const std::string kind = lower(r.string(a, "kind", where, true).value_or(""));
    if (auto k = agent_kind_from_string(kind)) {
        agent.kind = *k;
    } else if (!kind.empty()) {
        r.error(where + ".kind", "unknown agent kind '" + kind + "'");
    }
    agent.path = r.string(a, "path", where, true).value_or("");
    const auto mps = r.number(a, "target_speed", where, false);
    const auto kmh = r.number(a, "target_speed_kmh", where, false);
    if (mps && kmh) {
        r.error(where, "give target_speed or target_speed_kmh, not both");
    } else if (kmh) {
        agent.target_speed = *kmh / 3.6;
    } else if (mps) {
        agent.target_speed = *mps;
    }
    const std::string ctl = lower(r.string(a, "controlled_by", where, false).value_or("script"));
    if (ctl == "human") agent.controlled_by = Controller::Human;
    else if (ctl == "policy") agent.controlled_by = Controller::Policy;
    else if (ctl == "script") agent.controlled_by = Controller::Script;
    else r.error(where + ".controlled_by", "expected human, policy or script");
    agent.synchronized = r.boolean(a, "sync", where).value_or(true);
    agent.supervised = r.boolean(a, "supervised", where).value_or(false);
    agent.wait_for_trigger = r.boolean(a, "wait_for_trigger", where).value_or(false);
    agent.initial_speed = r.number(a, "initial_speed", where, false);
    agent.start_arc = r.number(a, "start_arc", where, false);
    agent.despawn_after_m = r.number(a, "despawn_after_m", where, false);
    if (a.contains("transit")) {
        const json& t = a.at("transit");
        const std::string tw = where + ".transit";
        if (!t.is_object()) {
            r.error(tw, "expected an object");
        } else {
            TransitSchedule sched;
            sched.cruise_speed = r.number(t, "cruise_speed", tw, false).value_or(sched.cruise_speed);
            sched.accel = r.number(t, "accel", tw, false).value_or(sched.accel);
            sched.dwell_s = r.number(t, "dwell_s", tw, false).value_or(sched.dwell_s);
            if (const json* stops = r.array(t, "stops", tw, false)) {
                for (const json& s : *stops) {
                    if (s.is_number()) sched.stops.push_back(s.get<double>());
                    else r.error(tw + ".stops", "expected numbers");
                }
            }
            agent.zone_half_length = r.number(t, "zone_half_length", tw, false).value_or(agent.zone_half_length);
            agent.zone_half_width = r.number(t, "zone_half_width", tw, false).value_or(agent.zone_half_width);
            agent.transit = sched;
        }
    }
}

void read_av_params(Reader& r, const json& p, AvParams& av)
{
    if (!p.is_object()) {
        r.error("av_params", "expected an object");
        return;
    }
    av.v_cruise = r.number(p, "v_cruise", "av_params", false).value_or(av.v_cruise);
    av.detect_radius = r.number(p, "detect_radius", "av_params", false).value_or(av.detect_radius);
    av.ttc_yield = r.number(p, "ttc_yield", "av_params", false).value_or(av.ttc_yield);
    av.stop_buffer = r.number(p, "stop_buffer", "av_params", false).value_or(av.stop_buffer);
    av.comfort_decel = r.number(p, "comfort_decel", "av_params", false).value_or(av.comfort_decel);
    av.resume_clear_time = r.number(p, "resume_clear_time", "av_params", false).value_or(av.resume_clear_time);
    av.zone_radius = r.number(p, "zone_radius", "av_params", false).value_or(av.zone_radius);
    av.lookahead = r.number(p, "lookahead", "av_params", false).value_or(av.lookahead);
    av.speed_gain = r.number(p, "speed_gain", "av_params", false).value_or(av.speed_gain);
    av.resume_accel = r.number(p, "resume_accel", "av_params", false).value_or(av.resume_accel);
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte_offset)
{
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t end = std::min(byte_offset, text.size());
    for (std::size_t i = 0; i < end; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    // nlohmann reports the offset one past the offending byte.
    return {line, col > 1 ? col - 1 : col};
}

}  // namespace

LoadResult load_scenario(std::string_view text)
{
    LoadResult result;
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte);
        std::string what = e.what();
        if (const auto pos = what.find("syntax error"); pos != std::string::npos) {
            what = what.substr(pos);
        }
        result.diagnostics.push_back({Severity::Error, "parse error: " + what, line, col});
        return result;
    }
    if (!doc.is_object()) {
        result.diagnostics.push_back({Severity::Error, "scenario must be a JSON object", 1, 1});
        return result;
    }

    ScenarioSpec spec;
    Reader r{result.diagnostics};
    spec.name = r.string(doc, "name", "", false).value_or("");
    if (doc.contains("seed")) {
        if (doc.at("seed").is_number_unsigned()) spec.seed = doc.at("seed").get<std::uint64_t>();
        else r.error("seed", "expected an unsigned integer");
    }
    spec.sync_tta_s = r.number(doc, "sync_tta_s", "", true).value_or(0.0);
    spec.conflict_point = r.string(doc, "conflict_point", "", true).value_or("");
    spec.pedestrian_ramp_correction = r.boolean(doc, "pedestrian_ramp_correction", "").value_or(false);
    if (doc.contains("map")) {
        read_map(r, doc.at("map"), spec.map);
    } else {
        r.error("", "missing 'map'");
    }
    if (const json* agents = r.array(doc, "agents", "", true)) {
        for (std::size_t i = 0; i < agents->size(); ++i) {
            const std::string where = "agents[" + std::to_string(i) + "]";
            if (!(*agents)[i].is_object()) {
                r.error(where, "expected an object");
                continue;
            }
            AgentSpec agent;
            read_agent(r, (*agents)[i], where, static_cast<std::uint32_t>(i + 1), agent);
            spec.agents.push_back(std::move(agent));
        }
    }
    if (const json* triggers = r.array(doc, "triggers", "", false)) {
        for (std::size_t i = 0; i < triggers->size(); ++i) {
            if (auto t = read_trigger(r, (*triggers)[i], "triggers[" + std::to_string(i) + "]")) {
                spec.triggers.push_back(std::move(*t));
            }
        }
    }
    if (doc.contains("ehmi_mask")) {
        const json& m = doc.at("ehmi_mask");
        if (!m.is_object()) {
            r.error("ehmi_mask", "expected an object");
        } else {
            spec.ehmi_mask.projection = r.boolean(m, "projection", "ehmi_mask").value_or(true);
            spec.ehmi_mask.light_band = r.boolean(m, "light_band", "ehmi_mask").value_or(true);
            spec.ehmi_mask.audio = r.boolean(m, "audio", "ehmi_mask").value_or(true);
            spec.ehmi_mask.phone = r.boolean(m, "phone", "ehmi_mask").value_or(true);
        }
    }
    if (doc.contains("signal_plan") && !doc.at("signal_plan").is_null()) {
        const json& s = doc.at("signal_plan");
        if (!s.is_object()) {
            r.error("signal_plan", "expected an object or null");
        } else {
            SignalPlan plan;
            plan.green_s = r.number(s, "green_s", "signal_plan", true).value_or(0.0);
            plan.red_s = r.number(s, "red_s", "signal_plan", true).value_or(0.0);
            plan.offset_s = r.number(s, "offset_s", "signal_plan", false).value_or(0.0);
            spec.signal_plan = plan;
        }
    }
    if (doc.contains("av_params")) {
        read_av_params(r, doc.at("av_params"), spec.av_params);
    }

    for (auto& d : validate(spec)) {
        result.diagnostics.push_back(std::move(d));
    }
    const bool has_error = std::any_of(result.diagnostics.begin(), result.diagnostics.end(),
                                       [](const Diagnostic& d) { return d.severity == Severity::Error; });
    if (!has_error) {
        result.spec = std::move(spec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Diagnostic> validate(const ScenarioSpec& spec)
{
    std::vector<Diagnostic> diags;
    Reader r{diags};

    std::set<std::string> ids;
    auto unique = [&](const std::string& kind, const std::string& id) {
        if (id.empty()) {
            r.error(kind, "empty id");
        } else if (!ids.insert(kind + ":" + id).second) {
            r.error(kind, "duplicate id " + id);
        }
    };
    for (const auto& l : spec.map.lanes) {
        unique("lane", l.id);
        if (!(l.width > 0.0)) r.error("lane " + l.id, "width must be positive");
        if (l.centerline.size() < 2 || polyline_length(l.centerline) == 0.0) {
            r.error("lane " + l.id, "centerline needs at least two distinct points");
        } else if (polyline_self_intersects(l.centerline)) {
            r.error("lane " + l.id, "centerline self-intersects");
        }
    }
    for (const auto& c : spec.map.crosswalks) {
        unique("crosswalk", c.id);
        if (c.polygon.size() < 3) r.error("crosswalk " + c.id, "polygon needs at least three points");
    }
    for (const auto& c : spec.map.conflict_points) {
        unique("conflict point", c.id);
    }
    for (const auto& p : spec.map.approach_paths) {
        unique("path", p.id);
        const std::string where = "path " + p.id;
        if (p.points.size() < 2 || polyline_length(p.points) == 0.0) {
            r.error(where, "needs at least two distinct points");
            continue;
        }
        if (polyline_self_intersects(p.points)) {
            r.error(where, "self-intersects");
        }
        if (!p.lane.empty() && spec.map.find_lane(p.lane) == nullptr) {
            r.error(where, "unknown lane " + p.lane);
        }
        for (const auto& g : p.grades) {
            if (!(g.grade >= -0.2 && g.grade <= 0.2)) {
                r.error(where, "grade " + std::to_string(g.grade) + " outside [-0.2, 0.2]");
            }
        }
        for (std::size_t i = 1; i < p.grades.size(); ++i) {
            if (!(p.grades[i].s > p.grades[i - 1].s)) {
                r.error(where, "grade stations must increase");
                break;
            }
        }
        if (!p.conflict_point.empty()) {
            const ConflictPoint* cp = spec.map.find_conflict_point(p.conflict_point);
            if (cp == nullptr) {
                r.error(where, "unknown conflict point " + p.conflict_point);
            } else if (distance(p.points.back(), cp->position) > 0.01) {
                r.error(where, "final vertex is more than 1 cm from conflict point " + p.conflict_point);
            }
        }
    }

    if (!(spec.sync_tta_s > 0.0)) {
        r.error("sync_tta_s", "must be positive");
    }
    if (spec.conflict_point.empty() || spec.map.find_conflict_point(spec.conflict_point) == nullptr) {
        r.error("conflict_point", "unknown conflict point " + spec.conflict_point);
    }

    std::set<std::uint32_t> agent_ids;
    for (const auto& a : spec.agents) {
        const std::string where = "agent " + a.name;
        if (!agent_ids.insert(a.id).second) {
            r.error(where, "duplicate agent id " + std::to_string(a.id));
        }
        if (a.id > 0xFFFF) {
            r.error(where, "agent id must fit in 16 bits");
        }
        const ApproachPath* path = spec.map.find_path(a.path);
        if (path == nullptr) {
            r.error(where, "unknown path " + a.path);
        }
        if (!std::isfinite(a.target_speed) || a.target_speed < 0.0) {
            r.error(where, "target_speed must be a non-negative number of m/s");
        } else if (a.target_speed > max_speed(a.kind)) {
            r.error(where, "target_speed " + std::to_string(a.target_speed) + " m/s exceeds the " +
                               std::string(to_string(a.kind)) + " limit of " + std::to_string(max_speed(a.kind)) +
                               " m/s (unit error? speeds are m/s; use target_speed_kmh for km/h)");
        }
        if (a.synchronized && !(a.target_speed > 0.0) && a.controlled_by != Controller::Human) {
            r.error(where, "synchronized agents need target_speed > 0");
        }
        if (a.controlled_by == Controller::Policy && a.kind != AgentKind::AutomatedVehicle) {
            r.error(where, "only AV agents can be policy controlled");
        }
        if (a.kind == AgentKind::AutomatedVehicle && a.controlled_by == Controller::Policy && path != nullptr &&
            (path->conflict_point.empty() || spec.map.find_conflict_point(path->conflict_point) == nullptr)) {
            r.error(where, "AV lane has no conflict-point mapping");
        }
        if (a.supervised && !(a.kind == AgentKind::AutomatedVehicle && a.controlled_by == Controller::Policy)) {
            r.error(where, "only policy AVs can be supervised");
        }
        if (a.transit) {
            if (a.kind != AgentKind::Driver || a.controlled_by != Controller::Script) {
                r.error(where, "transit vehicles must be scripted driver agents");
            }
            if (!(a.transit->cruise_speed > 0.0 && a.transit->accel > 0.0 && a.transit->dwell_s >= 0.0)) {
                r.error(where, "transit speeds and acceleration must be positive");
            }
            if (!std::is_sorted(a.transit->stops.begin(), a.transit->stops.end())) {
                r.error(where, "transit stops must be ascending");
            }
        }
        if (a.initial_speed && !(*a.initial_speed >= 0.0 && *a.initial_speed <= max_speed(a.kind))) {
            r.error(where, "initial_speed out of range");
        }
    }

    const auto need_agent = [&](std::uint32_t id, const std::string& where) {
        if (agent_ids.count(id) == 0) r.error(where, "unknown agent " + std::to_string(id));
    };
    for (std::size_t i = 0; i < spec.triggers.size(); ++i) {
        const Trigger& t = spec.triggers[i];
        const std::string where = "trigger " + (t.id.empty() ? std::to_string(i) : t.id);
        if (const auto* c = std::get_if<AgentWithin>(&t.condition)) {
            if (spec.map.find_conflict_point(c->point) == nullptr) r.error(where, "unknown point " + c->point);
            if (c->agent) need_agent(*c->agent, where);
            if (!(c->radius >= 0.0)) r.error(where, "radius must be non-negative");
        } else if (const auto* c = std::get_if<TtcBelow>(&t.condition)) {
            need_agent(c->a, where);
            need_agent(c->b, where);
        } else if (const auto* c = std::get_if<TimeElapsed>(&t.condition)) {
            if (!(c->seconds >= 0.0)) r.error(where, "seconds must be non-negative");
        } else if (std::holds_alternative<SignalPhaseIs>(t.condition) && !spec.signal_plan) {
            r.error(where, "signal_phase condition without a signal_plan");
        }
        if (const auto* a = std::get_if<RequestTakeover>(&t.action)) {
            need_agent(a->agent, where);
            if (const AgentSpec* s = spec.find_agent(a->agent); s && s->kind != AgentKind::AutomatedVehicle) {
                r.error(where, "takeover requests target AV agents");
            }
        } else if (const auto* a = std::get_if<SpawnScript>(&t.action)) {
            need_agent(a->agent, where);
        }
    }
    if (spec.signal_plan && !(spec.signal_plan->green_s > 0.0 && spec.signal_plan->red_s > 0.0)) {
        r.error("signal_plan", "green_s and red_s must be positive");
    }
    if (const std::string msg = validate(spec.av_params); !msg.empty()) {
        r.error("av_params", msg);
    }

    // Placement feasibility, reported per agent.
    if (spec.sync_tta_s > 0.0) {
        for (const auto& a : spec.agents) {
            const ApproachPath* path = spec.map.find_path(a.path);
            if (!a.synchronized || path == nullptr || !(a.target_speed > 0.0) || path->points.size() < 2) {
                continue;
            }
            const double need = a.target_speed * spec.sync_tta_s;
            const double have = polyline_length(path->points);
            if (need > have + 1e-6) {
                std::ostringstream msg;
                msg << "PlacementError: agent " << a.name << " needs " << need << " m of approach but path "
                    << a.path << " is " << have << " m";
                r.error("agent " + a.name, msg.str());
            }
        }
    }
    return diags;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json polyline_json(const Polyline& p)
{
    json arr = json::array();
    for (const Vec2& v : p) arr.push_back(json::array({v.x, v.y}));
    return arr;
}

json condition_json(const TriggerCondition& c)
{
    struct V {
        json operator()(const AgentWithin& w) const
        {
            json j{{"type", "agent_within"}, {"radius", w.radius}, {"point", w.point}};
            if (w.agent) j["agent"] = *w.agent;
            return j;
        }
        json operator()(const TimeElapsed& t) const { return {{"type", "time_elapsed"}, {"seconds", t.seconds}}; }
        json operator()(const TtcBelow& t) const
        {
            return {{"type", "ttc_below"}, {"seconds", t.seconds}, {"pair", json::array({t.a, t.b})}};
        }
        json operator()(const SignalPhaseIs& s) const
        {
            return {{"type", "signal_phase"}, {"phase", std::string(to_string(s.phase))}};
        }
    };
    return std::visit(V{}, c);
}

json action_json(const TriggerAction& a)
{
    struct V {
        json operator()(const EmitEvent& e) const
        {
            json code = event_code_name(e.code);
            if (e.code >= kUserEventBase || !event_code_from_name(code.get<std::string>())) code = e.code;
            return {{"type", "emit_event"}, {"code", code}};
        }
        json operator()(const RequestTakeover& r) const { return {{"type", "request_takeover"}, {"agent", r.agent}}; }
        json operator()(const StartQuestionnaire& q) const
        {
            return {{"type", "start_questionnaire"}, {"instrument", std::string(to_string(q.instrument))}};
        }
        json operator()(const StartNback& n) const
        {
            return {{"type", "start_nback"}, {"n", n.n}, {"length", n.length}};
        }
        json operator()(const SpawnScript& s) const { return {{"type", "spawn_script"}, {"agent", s.agent}}; }
    };
    return std::visit(V{}, a);
}

}  // namespace

std::string serialize(const ScenarioSpec& spec)
{
    json doc;
    doc["name"] = spec.name;
    doc["seed"] = spec.seed;
    doc["sync_tta_s"] = spec.sync_tta_s;
    doc["conflict_point"] = spec.conflict_point;
    doc["pedestrian_ramp_correction"] = spec.pedestrian_ramp_correction;

    json map;
    map["lanes"] = json::array();
    for (const auto& l : spec.map.lanes) {
        map["lanes"].push_back({{"id", l.id}, {"width", l.width}, {"centerline", polyline_json(l.centerline)}});
    }
    map["crosswalks"] = json::array();
    for (const auto& c : spec.map.crosswalks) {
        map["crosswalks"].push_back({{"id", c.id}, {"polygon", polyline_json(c.polygon)}});
    }
    map["conflict_points"] = json::array();
    for (const auto& c : spec.map.conflict_points) {
        map["conflict_points"].push_back({{"id", c.id}, {"x", c.position.x}, {"y", c.position.y}});
    }
    map["paths"] = json::array();
    for (const auto& p : spec.map.approach_paths) {
        json pj{{"id", p.id}, {"points", polyline_json(p.points)}};
        if (!p.conflict_point.empty()) pj["conflict_point"] = p.conflict_point;
        if (!p.lane.empty()) pj["lane"] = p.lane;
        if (!p.grades.empty()) {
            json g = json::array();
            for (const auto& gp : p.grades) g.push_back(json::array({gp.s, gp.grade}));
            pj["grades"] = g;
        }
        map["paths"].push_back(pj);
    }
    doc["map"] = map;

    doc["agents"] = json::array();
    for (const auto& a : spec.agents) {
        json aj{{"id", a.id},
                {"name", a.name},
                {"kind", std::string(to_string(a.kind))},
                {"path", a.path},
                {"target_speed", a.target_speed},
                {"controlled_by", std::string(to_string(a.controlled_by))},
                {"sync", a.synchronized}};
        if (a.supervised) aj["supervised"] = true;
        if (a.wait_for_trigger) aj["wait_for_trigger"] = true;
        if (a.initial_speed) aj["initial_speed"] = *a.initial_speed;
        if (a.start_arc) aj["start_arc"] = *a.start_arc;
        if (a.despawn_after_m) aj["despawn_after_m"] = *a.despawn_after_m;
        if (a.transit) {
            aj["transit"] = {{"cruise_speed", a.transit->cruise_speed},
                             {"accel", a.transit->accel},
                             {"dwell_s", a.transit->dwell_s},
                             {"stops", a.transit->stops},
                             {"zone_half_length", a.zone_half_length},
                             {"zone_half_width", a.zone_half_width}};
        }
        doc["agents"].push_back(aj);
    }

    doc["triggers"] = json::array();
    for (const auto& t : spec.triggers) {
        json tj{{"when", condition_json(t.condition)}, {"do", action_json(t.action)}};
        if (!t.id.empty()) tj["id"] = t.id;
        if (t.repeating) tj["repeating"] = true;
        doc["triggers"].push_back(tj);
    }
    doc["ehmi_mask"] = {{"projection", spec.ehmi_mask.projection},
                        {"light_band", spec.ehmi_mask.light_band},
                        {"audio", spec.ehmi_mask.audio},
                        {"phone", spec.ehmi_mask.phone}};
    if (spec.signal_plan) {
        doc["signal_plan"] = {{"green_s", spec.signal_plan->green_s},
                              {"red_s", spec.signal_plan->red_s},
                              {"offset_s", spec.signal_plan->offset_s}};
    } else {
        doc["signal_plan"] = nullptr;
    }
    const AvParams& av = spec.av_params;
    doc["av_params"] = {{"v_cruise", av.v_cruise},           {"detect_radius", av.detect_radius},
                        {"ttc_yield", av.ttc_yield},         {"stop_buffer", av.stop_buffer},
                        {"comfort_decel", av.comfort_decel}, {"resume_clear_time", av.resume_clear_time},
                        {"zone_radius", av.zone_radius},     {"lookahead", av.lookahead},
                        {"speed_gain", av.speed_gain},       {"resume_accel", av.resume_accel}};
    return doc.dump(2);
}

std::uint64_t scenario_hash(const ScenarioSpec& spec)
{
    const std::string text = serialize(spec);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Placement

std::vector<Placement> solve_tta_placement(const ScenarioSpec& spec)
{
    std::vector<Placement> out;
    const double T = spec.sync_tta_s;
    for (const auto& a : spec.agents) {
        if (!a.synchronized || !(a.target_speed > 0.0)) {
            continue;
        }
        const ApproachPath* path = spec.map.find_path(a.path);
        if (path == nullptr) {
            throw PlacementError(a.name, "agent " + a.name + " references unknown path " + a.path);
        }
        const double length = polyline_length(path->points);
        double d = a.target_speed * T;
        const bool walker = a.kind == AgentKind::Pedestrian || a.kind == AgentKind::TransitUser;
        const bool from_rest = a.controlled_by == Controller::Human || (a.initial_speed && *a.initial_speed == 0.0);
        if (spec.pedestrian_ramp_correction && walker && from_rest) {
            // Walkers starting from rest lag the ideal by the first-order response.
            d -= a.target_speed * kWalkResponseTau * (1.0 - std::exp(-T / kWalkResponseTau));
        }
        if (d > length + 1e-6) {
            std::ostringstream msg;
            msg << "agent " << a.name << " needs " << d << " m of approach but path " << a.path << " is "
                << length << " m";
            throw PlacementError(a.name, msg.str());
        }
        Placement p;
        p.agent_id = a.id;
        p.name = a.name;
        p.kind = a.kind;
        p.speed = a.target_speed;
        p.distance = d;
        p.arc_start = std::max(length - d, 0.0);
        out.push_back(p);
    }
    return out;
}

std::map<std::uint32_t, double> initial_arcs(const ScenarioSpec& spec)
{
    std::map<std::uint32_t, double> arcs;
    for (const auto& p : solve_tta_placement(spec)) {
        arcs[p.agent_id] = p.arc_start;
    }
    for (const auto& a : spec.agents) {
        if (arcs.count(a.id) == 0) {
            arcs[a.id] = a.start_arc.value_or(0.0);
        }
    }
    return arcs;
}

// ---------------------------------------------------------------------------
// Triggers

std::optional<double> pair_ttc(const AgentState& a, const ApproachPath* pa, const AgentState& b,
                               const ApproachPath* pb)
{
    if (pa == nullptr || pb == nullptr) {
        return std::nullopt;
    }
    if (pa == pb || pa->id == pb->id) {
        const double sa = path_progress(a.pose, pa->points);
        const double sb = path_progress(b.pose, pb->points);
        const bool a_leads = sa >= sb;
        const AgentState& lead = a_leads ? a : b;
        const AgentState& follow = a_leads ? b : a;
        const double gap = std::abs(sa - sb) - half_length(lead.kind) - half_length(follow.kind);
        return following_ttc(gap, follow.kin.speed, lead.kin.speed);
    }
    if (!pa->conflict_point.empty() && pa->conflict_point == pb->conflict_point) {
        return crossing_ttc(signed_distance_to_conflict(a, *pa), a.kin.speed, half_length(a.kind),
                            signed_distance_to_conflict(b, *pb), b.kin.speed, half_length(b.kind));
    }
    return std::nullopt;
}

namespace {

const AgentState* find_state(std::span<const AgentState> agents, std::uint32_t id)
{
    for (const auto& a : agents) {
        if (a.agent_id == id) return &a;
    }
    return nullptr;
}

const ApproachPath* path_of(const TriggerWorld& w, std::uint32_t id)
{
    if (w.paths == nullptr) return nullptr;
    const auto it = w.paths->find(id);
    return it == w.paths->end() ? nullptr : it->second;
}

bool condition_holds(const TriggerWorld& w, const TriggerCondition& cond)
{
    if (const auto* c = std::get_if<AgentWithin>(&cond)) {
        const ConflictPoint* cp = w.spec->map.find_conflict_point(c->point);
        if (cp == nullptr) return false;
        for (const auto& a : w.agents) {
            if (c->agent && a.agent_id != *c->agent) continue;
            if (distance(a.pose.position(), cp->position) <= c->radius) return true;
        }
        return false;
    }
    if (const auto* c = std::get_if<TimeElapsed>(&cond)) {
        return w.sim_time >= c->seconds;
    }
    if (const auto* c = std::get_if<TtcBelow>(&cond)) {
        const AgentState* a = find_state(w.agents, c->a);
        const AgentState* b = find_state(w.agents, c->b);
        if (a == nullptr || b == nullptr) return false;
        const auto ttc = pair_ttc(*a, path_of(w, c->a), *b, path_of(w, c->b));
        return ttc && *ttc < c->seconds;
    }
    if (const auto* c = std::get_if<SignalPhaseIs>(&cond)) {
        return w.phase && *w.phase == c->phase;
    }
    return false;
}

std::optional<std::uint32_t> action_agent(const TriggerAction& a)
{
    if (const auto* r = std::get_if<RequestTakeover>(&a)) return r->agent;
    if (const auto* s = std::get_if<SpawnScript>(&a)) return s->agent;
    return std::nullopt;
}

}  // namespace

TriggerResult evaluate_triggers(const TriggerWorld& world, std::uint64_t /*tick*/, TriggerState& state)
{
    TriggerResult result;
    const auto& triggers = world.spec->triggers;
    state.fired.resize(triggers.size(), false);
    state.was_true.resize(triggers.size(), false);
    for (std::size_t i = 0; i < triggers.size(); ++i) {
        const Trigger& t = triggers[i];
        const bool holds = condition_holds(world, t.condition);
        const bool edge = holds && !state.was_true[i];
        state.was_true[i] = holds;
        const bool fire = t.repeating ? edge : (holds && !state.fired[i]);
        if (!fire) {
            continue;
        }
        state.fired[i] = true;
        if (const auto agent = action_agent(t.action); agent && find_state(world.agents, *agent) == nullptr) {
            result.dropped.push_back({i, *agent});
            continue;
        }
        result.actions.push_back({i, t.action});
    }
    return result;
}

}  // namespace mmsim
