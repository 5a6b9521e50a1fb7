#include "mmsim/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

namespace mmsim::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Moments {
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
};

Moments moments(const std::vector<double>& v)
{
    Moments m;
    if (v.empty()) return m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size()));
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    m.min = *lo;
    m.max = *hi;
    return m;
}

AgentState as_state(const Trajectory& tr, const TrajectorySample& s)
{
    AgentState st;
    st.agent_id = tr.agent_id;
    st.kind = tr.kind;
    st.pose = s.pose;
    st.kin = s.kin;
    st.seated = s.seated;
    st.flags = s.flags;
    return st;
}

const ApproachPath* path_for(const Recording& rec, const Trajectory& tr)
{
    return tr.path_id.empty() ? nullptr : rec.scenario.map.find_path(tr.path_id);
}

bool is_vehicle(AgentKind k) { return k == AgentKind::Driver || k == AgentKind::AutomatedVehicle; }
bool is_walker_kind(AgentKind k) { return k == AgentKind::Pedestrian || k == AgentKind::TransitUser; }

// Sample at a given tick, by binary search (samples are tick-ordered).
const TrajectorySample* sample_at_tick(const Trajectory& tr, std::uint64_t tick)
{
    auto it = std::lower_bound(tr.samples.begin(), tr.samples.end(), tick,
                               [](const TrajectorySample& s, std::uint64_t t) { return s.tick < t; });
    if (it == tr.samples.end() || it->tick != tick) return nullptr;
    return &*it;
}

const TrajectorySample* sample_at_time(const Trajectory& tr, double t)
{
    for (const auto& s : tr.samples)
        if (s.t >= t - 1e-9) return &s;
    return nullptr;
}

}  // namespace

Recording record(const ReplayLog& log)
{
    Recording rec;
    rec.scenario = log.scenario;
    rec.dt = 1.0 / log.tick_rate_hz;
    ReplayOptions opt;
    opt.on_tick = [&rec](const Session& s) {
        const double t = static_cast<double>(s.sim_time_us()) * 1e-6;
        for (const auto& a : s.agents()) {
            auto [it, fresh] = rec.trajectories.try_emplace(a.agent_id);
            Trajectory& tr = it->second;
            if (fresh) {
                tr.agent_id = a.agent_id;
                tr.kind = a.kind;
                if (const AgentSpec* spec = rec.scenario.find_agent(a.agent_id)) tr.path_id = spec->path;
            }
            TrajectorySample smp{s.tick(), t, a.pose, a.kin, a.flags, a.seated, std::nullopt};
            for (const auto& ap : s.applied())
                if (ap.agent_id == a.agent_id && ap.from_human) smp.control = ap.control;
            tr.samples.push_back(std::move(smp));
        }
    };
    auto result = replay(log, opt);
    rec.events = std::move(result.events);
    return rec;
}

// ---------------------------------------------------------------------------

std::optional<double> ttc(const PairState& p)
{
    if (p.shared_path) {
        const bool a_behind = p.d_a <= p.d_b;
        const double gap = std::abs(p.d_b - p.d_a) - p.h_a - p.h_b;
        const double vf = a_behind ? p.v_a : p.v_b;
        const double vl = a_behind ? p.v_b : p.v_a;
        if (gap <= 0.0) return 0.0;  // bodies already overlap
        return following_ttc(gap, vf, vl);
    }
    return crossing_ttc(p.d_a, p.v_a, p.h_a, p.d_b, p.v_b, p.h_b);
}

DracValue drac(const PairState& p)
{
    if (p.shared_path) {
        const bool a_behind = p.d_a <= p.d_b;
        const double gap = std::abs(p.d_b - p.d_a) - p.h_a - p.h_b;
        return mmsim::drac(gap, a_behind ? p.v_a : p.v_b, a_behind ? p.v_b : p.v_a);
    }
    if (!ttc(p)) return {};
    return mmsim::drac(p.d_a - p.h_a - p.h_b, p.v_a, 0.0);
}

std::optional<double> headway(const PairState& p)
{
    if (!p.shared_path) return std::nullopt;
    const bool a_behind = p.d_a <= p.d_b;
    const double vf = a_behind ? p.v_a : p.v_b;
    if (vf <= 0.0) return std::nullopt;
    return (std::abs(p.d_b - p.d_a) - p.h_a - p.h_b) / vf;
}

std::optional<PairState> pair_state(const Recording& rec, const Trajectory& a, const TrajectorySample& sa,
                                    const Trajectory& b, const TrajectorySample& sb)
{
    const ApproachPath* pa = path_for(rec, a);
    const ApproachPath* pb = path_for(rec, b);
    if (pa == nullptr || pb == nullptr) return std::nullopt;
    PairState p;
    p.v_a = sa.kin.speed;
    p.v_b = sb.kin.speed;
    p.h_a = half_length(a.kind);
    p.h_b = half_length(b.kind);
    if (pa->id == pb->id) {
        p.shared_path = true;
        p.d_a = path_progress(sa.pose, pa->points);
        p.d_b = path_progress(sb.pose, pb->points);
        return p;
    }
    if (pa->conflict_point != pb->conflict_point) return std::nullopt;
    p.d_a = signed_distance_to_conflict(as_state(a, sa), *pa);
    p.d_b = signed_distance_to_conflict(as_state(b, sb), *pb);
    return p;
}

PairSeries ttc_series(const Recording& rec, std::uint32_t a, std::uint32_t b)
{
    PairSeries out;
    out.a = a;
    out.b = b;
    const auto ia = rec.trajectories.find(a);
    const auto ib = rec.trajectories.find(b);
    if (ia == rec.trajectories.end() || ib == rec.trajectories.end()) return out;
    const Trajectory& ta = ia->second;
    const Trajectory& tb = ib->second;
    for (const auto& sa : ta.samples) {
        // Seated passengers are not road users.
        if (sa.seated) continue;
        const TrajectorySample* sb = sample_at_tick(tb, sa.tick);
        if (sb == nullptr || sb->seated) continue;
        const auto ps = pair_state(rec, ta, sa, tb, *sb);
        if (!ps) continue;
        out.shared_path = ps->shared_path;
        PairSample smp{sa.t, ttc(*ps), drac(*ps), headway(*ps)};
        if (smp.ttc && (!out.min_ttc || *smp.ttc < *out.min_ttc)) {
            out.min_ttc = smp.ttc;
            out.min_ttc_time = sa.t;
        }
        out.max_drac = std::max(out.max_drac, smp.drac.value);
        out.samples.push_back(smp);
    }
    return out;
}

// ---------------------------------------------------------------------------

LaneMetrics lane_metrics(const std::vector<TrajectorySample>& samples, const Lane& lane, double vehicle_width)
{
    LaneMetrics m;
    if (samples.empty()) return m;
    const double limit = lane.width / 2.0 - vehicle_width / 2.0;
    double ss = 0.0;
    std::optional<double> open;
    for (const auto& s : samples) {
        const double off = project_to_path(s.pose, lane.centerline).lateral_offset;
        ss += off * off;
        m.max_offset = std::max(m.max_offset, std::abs(off));
        if (std::abs(off) > limit) {
            if (!open) open = s.t;
        } else if (open) {
            m.departures.push_back({*open, s.t});
            open.reset();
        }
    }
    if (open) m.departures.push_back({*open, samples.back().t});
    m.rms_offset = std::sqrt(ss / static_cast<double>(samples.size()));
    return m;
}

// ---------------------------------------------------------------------------

std::optional<double> sustained_motion_onset(const std::vector<TrajectorySample>& samples, double from,
                                             double threshold, double hold)
{
    std::optional<double> run;
    for (const auto& s : samples) {
        if (s.t < from - 1e-9) continue;
        if (s.kin.speed >= threshold && !s.seated) {
            if (!run) run = s.t;
            if (s.t - *run >= hold - 1e-9) return run;
        } else {
            run.reset();
        }
    }
    return std::nullopt;
}

std::vector<Reaction> reaction_times(const Recording& rec, const MetricsParams& prm)
{
    std::vector<Reaction> out;
    const auto hazard = static_cast<std::uint16_t>(EventCode::HAZARD);
    const auto cue = static_cast<std::uint16_t>(EventCode::CROSSING_CUE);
    const auto req = static_cast<std::uint16_t>(EventCode::TAKEOVER_REQUEST);
    const auto eng = static_cast<std::uint16_t>(EventCode::TAKEOVER_ENGAGE);

    // Brake reaction of every human-driven vehicle to every hazard.
    for (const auto& e : rec.events) {
        if (e.code != hazard) continue;
        for (const auto& [id, tr] : rec.trajectories) {
            if (!is_vehicle(tr.kind)) continue;
            const bool human = std::any_of(tr.samples.begin(), tr.samples.end(),
                                           [](const TrajectorySample& s) { return s.control.has_value(); });
            if (!human) continue;
            Reaction r{"brake_rt", id, e.sim_time_s(), std::nullopt, ""};
            for (const auto& s : tr.samples) {
                if (s.t < e.sim_time_s() || !s.control) continue;
                const auto* d = std::get_if<DriverInput>(&*s.control);
                if (d != nullptr && d->brake > prm.brake_threshold) {
                    r.value = s.t - e.sim_time_s();
                    break;
                }
            }
            if (!r.value) r.reason = "no brake input above threshold after hazard";
            out.push_back(r);
        }
    }

    for (std::size_t i = 0; i < rec.events.size(); ++i) {
        const auto& e = rec.events[i];
        if (e.code != req) continue;
        Reaction r{"takeover_tti", e.subject, e.sim_time_s(), std::nullopt, ""};
        for (std::size_t j = i + 1; j < rec.events.size(); ++j) {
            if (rec.events[j].code == req && rec.events[j].subject == e.subject) break;
            if (rec.events[j].code == eng && rec.events[j].subject == e.subject) {
                r.value = rec.events[j].sim_time_s() - e.sim_time_s();
                break;
            }
        }
        if (!r.value) r.reason = "no takeover engage after request";
        out.push_back(r);
    }

    // Crossing initiation and accepted gap for each walker and cue.
    std::vector<const EventRecord*> cues;
    for (const auto& e : rec.events)
        if (e.code == cue) cues.push_back(&e);
    for (const auto& [id, tr] : rec.trajectories) {
        if (!is_walker_kind(tr.kind)) continue;
        if (cues.empty()) {
            out.push_back({"crossing_initiation", id, 0.0, std::nullopt, "no crossing cue event"});
            continue;
        }
        for (const auto* c : cues) {
            const double t_cue = c->sim_time_s();
            Reaction r{"crossing_initiation", id, t_cue, std::nullopt, ""};
            const auto onset = sustained_motion_onset(tr.samples, t_cue, prm.walk_speed, prm.walk_hold_s);
            if (!onset) {
                r.reason = "walk speed never sustained";
                out.push_back(r);
                out.push_back({"gap_accepted", id, t_cue, std::nullopt, "no crossing initiation"});
                continue;
            }
            r.value = *onset - t_cue;
            out.push_back(r);

            Reaction g{"gap_accepted", id, t_cue, std::nullopt, ""};
            const ApproachPath* wp = path_for(rec, tr);
            const TrajectorySample* ws = sample_at_time(tr, *onset);
            for (const auto& [vid, vt] : rec.trajectories) {
                if (!is_vehicle(vt.kind) || ws == nullptr) continue;
                const ApproachPath* vp = path_for(rec, vt);
                if (vp == nullptr || (wp != nullptr && vp->conflict_point != wp->conflict_point)) continue;
                const TrajectorySample* vs = sample_at_tick(vt, ws->tick);
                if (vs == nullptr || vs->kin.speed <= 0.1) continue;
                const auto dc = distance_to_conflict(as_state(vt, *vs), *vp);
                if (dc.passed) continue;
                const double tta = dc.meters / vs->kin.speed;
                if (!g.value || tta < *g.value) g.value = tta;
            }
            if (!g.value) g.reason = "no approaching vehicle at initiation";
            out.push_back(g);

            // Motion reversal after initiation counts as an aborted crossing.
            if (ws != nullptr) {
                const double h0 = ws->pose.heading;
                for (const auto& s : tr.samples) {
                    if (s.t <= *onset || s.kin.speed < prm.walk_speed) continue;
                    if (std::abs(normalize_heading(s.pose.heading - h0)) > kPi / 2) {
                        out.push_back({"crossing_aborted", id, t_cue, s.t - t_cue, ""});
                        break;
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

int count_yielding(const std::vector<TrajectorySample>& samples, const std::vector<double>& dist,
                   const std::vector<bool>& vru_present, const MetricsParams& prm)
{
    int count = 0;
    bool inside = false;
    bool fired = false;
    double peak = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const bool in_radius = dist[i] <= prm.yield_radius_m;
        if (!in_radius) {
            inside = false;
            fired = false;
            continue;
        }
        if (!inside) {
            inside = true;
            peak = samples[i].kin.speed;
        }
        peak = std::max(peak, samples[i].kin.speed);
        if (!fired && vru_present[i] && peak > 0.0 && samples[i].kin.speed <= (1.0 - prm.yield_drop) * peak) {
            ++count;
            fired = true;
        }
    }
    return count;
}

int count_reversals(const std::vector<double>& angle, double gap)
{
    if (angle.empty()) return 0;
    int dir = 0;
    int count = 0;
    double lo = angle[0], hi = angle[0], ext = angle[0];
    for (double x : angle) {
        if (dir == 0) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            if (x - lo >= gap) {
                dir = 1;
                ext = x;
            } else if (hi - x >= gap) {
                dir = -1;
                ext = x;
            }
        } else if (dir > 0) {
            if (x > ext) {
                ext = x;
            } else if (ext - x >= gap) {
                ++count;
                dir = -1;
                ext = x;
            }
        } else {
            if (x < ext) {
                ext = x;
            } else if (x - ext >= gap) {
                ++count;
                dir = 1;
                ext = x;
            }
        }
    }
    return count;
}

double path_deviation_area(const std::vector<Vec2>& pts)
{
    if (pts.size() < 3) return 0.0;
    const Vec2 a = pts.front();
    const double dx = pts.back().x - a.x, dy = pts.back().y - a.y;
    const double len = std::hypot(dx, dy);
    if (len < 1e-9) return 0.0;
    const double ux = dx / len, uy = dy / len;
    double area = 0.0;
    double prev_s = 0.0, prev_o = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double rx = pts[i].x - a.x, ry = pts[i].y - a.y;
        const double s = rx * ux + ry * uy;
        const double o = std::abs(-rx * uy + ry * ux);
        if (i > 0) area += 0.5 * (prev_o + o) * std::abs(s - prev_s);
        prev_s = s;
        prev_o = o;
    }
    return area;
}

Stats mode_stats(const Recording& rec, std::uint32_t agent, const MetricsParams& prm)
{
    Stats st;
    const auto it = rec.trajectories.find(agent);
    if (it == rec.trajectories.end()) return st;
    const Trajectory& tr = it->second;
    std::vector<double> speed;
    for (const auto& s : tr.samples)
        if (!s.seated) speed.push_back(s.kin.speed);
    const auto sm = moments(speed);
    st["speed_mean_mps"] = sm.mean;
    st["speed_std_mps"] = sm.std;
    st["speed_max_mps"] = sm.max;

    // Proximity to each other agent over common ticks.
    double min_all = kInf;
    for (const auto& [oid, other] : rec.trajectories) {
        if (oid == agent) continue;
        double m = kInf;
        for (const auto& s : tr.samples) {
            const TrajectorySample* o = sample_at_tick(other, s.tick);
            if (o == nullptr) continue;
            m = std::min(m, distance(s.pose.position(), o->pose.position()));
        }
        if (std::isfinite(m)) {
            st["min_dist_m_" + std::to_string(oid)] = m;
            min_all = std::min(min_all, m);
        }
    }
    if (std::isfinite(min_all)) st["min_dist_m"] = min_all;

    const ApproachPath* path = path_for(rec, tr);
    const ConflictPoint* cp = path != nullptr ? rec.scenario.map.find_conflict_point(path->conflict_point) : nullptr;

    if (tr.kind == AgentKind::Cyclist) {
        std::vector<double> cadence;
        int harsh = 0;
        bool above = false;
        for (const auto& s : tr.samples) {
            cadence.push_back(s.kin.aux);
            const bool now = std::abs(s.kin.accel) > prm.accel_event;
            if (now && !above) ++harsh;
            above = now;
        }
        const auto cm = moments(cadence);
        st["cadence_mean_rpm"] = cm.mean;
        st["cadence_std_rpm"] = cm.std;
        st["accel_events"] = harsh;
        if (path != nullptr && cp != nullptr) {
            std::vector<double> dist;
            std::vector<bool> vru;
            for (const auto& s : tr.samples) {
                const auto dc = distance_to_conflict(as_state(tr, s), *path);
                dist.push_back(dc.passed ? kInf : dc.meters);
                bool present = false;
                for (const auto& [oid, other] : rec.trajectories) {
                    if (oid == agent || !is_vulnerable(other.kind)) continue;
                    const TrajectorySample* o = sample_at_tick(other, s.tick);
                    if (o != nullptr && !o->seated && distance(o->pose.position(), cp->position) <= prm.yield_radius_m)
                        present = true;
                }
                vru.push_back(present);
            }
            st["yielding_events"] = count_yielding(tr.samples, dist, vru, prm);
        }
    } else if (is_walker_kind(tr.kind)) {
        std::vector<Vec2> pts;
        for (const auto& s : tr.samples)
            if (!s.seated) pts.push_back(s.pose.position());
        st["path_deviation_area_m2"] = path_deviation_area(pts);
        if (tr.kind == AgentKind::TransitUser || std::any_of(tr.samples.begin(), tr.samples.end(),
                                                             [](const TrajectorySample& s) { return s.seated; })) {
            const auto open = static_cast<std::uint16_t>(EventCode::DOOR_OPEN);
            const auto close = static_cast<std::uint16_t>(EventCode::DOOR_CLOSE);
            for (const auto& e : rec.events) {
                if (e.code != open) continue;
                for (const auto& s : tr.samples)
                    if (s.seated && s.t >= e.sim_time_s()) {
                        st["board_latency_s"] = s.t - e.sim_time_s();
                        break;
                    }
                for (const auto& c : rec.events)
                    if (c.code == close && c.subject == e.subject && c.sim_time_us >= e.sim_time_us) {
                        st["dwell_s"] = c.sim_time_s() - e.sim_time_s();
                        break;
                    }
                if (st.count("board_latency_s") != 0) break;
            }
        }
    } else if (is_vehicle(tr.kind)) {
        std::vector<double> angle;
        const bool human = std::any_of(tr.samples.begin(), tr.samples.end(),
                                       [](const TrajectorySample& s) { return s.control.has_value(); });
        double last = 0.0;
        for (const auto& s : tr.samples) {
            if (human) {
                if (s.control)
                    if (const auto* d = std::get_if<DriverInput>(&*s.control)) last = d->steer_wheel;
                angle.push_back(last);
            } else {
                angle.push_back(s.pose.heading);
            }
        }
        std::vector<double> rate;
        for (std::size_t i = 1; i < angle.size(); ++i)
            rate.push_back(normalize_heading(angle[i] - angle[i - 1]) / rec.dt);
        const auto rm = moments(rate);
        st["steer_rate_mean_rad_s"] = rm.mean;
        st["steer_rate_std_rad_s"] = rm.std;
        st["steer_rate_max_abs_rad_s"] = std::max(std::abs(rm.min), std::abs(rm.max));
        st["steer_reversals"] = count_reversals(angle, prm.reversal_deg * kPi / 180.0);
    }
    return st;
}

// ---------------------------------------------------------------------------

bool panas_positive_item(int item)
{
    static constexpr int kPositive[] = {1, 3, 5, 9, 10, 12, 14, 16, 17, 19};
    return std::find(std::begin(kPositive), std::end(kPositive), item) != std::end(kPositive);
}

InstrumentScores score_instruments(const std::vector<InstrumentResponse>& responses)
{
    InstrumentScores sc;
    std::map<std::pair<Instrument, int>, InstrumentResponse> latest;
    for (const auto& r : responses) {
        bool ok = std::isfinite(r.value);
        switch (r.instrument) {
        case Instrument::TLX: ok = ok && r.item < 6 && r.value >= 0.0 && r.value <= 100.0; break;
        case Instrument::PANAS:
            ok = ok && r.item < 20 && r.value >= 1.0 && r.value <= 5.0 && r.value == std::floor(r.value);
            break;
        case Instrument::VA: ok = ok && r.item < 2 && r.value >= -1.0 && r.value <= 1.0; break;
        case Instrument::STRESS: ok = ok && r.item == 0 && r.value >= 0.0 && r.value <= 10.0; break;
        case Instrument::TIMEPERC: ok = ok && r.item == 0 && r.value > 0.0; break;
        }
        if (!ok) {
            sc.notes.push_back("invalid " + std::string(to_string(r.instrument)) + " item " + std::to_string(r.item));
            continue;
        }
        const auto key = std::make_pair(r.instrument, static_cast<int>(r.item));
        auto [it, fresh] = latest.try_emplace(key, r);
        if (!fresh && std::tie(r.sim_time, r.value) > std::tie(it->second.sim_time, it->second.value))
            it->second = r;
    }
    std::map<Instrument, std::vector<const InstrumentResponse*>> by;
    for (const auto& [key, r] : latest) by[key.first].push_back(&r);

    if (auto it = by.find(Instrument::TLX); it != by.end()) {
        if (it->second.size() == 6) {
            double sum = 0.0;
            for (const auto* r : it->second) sum += r->value;
            sc.tlx_raw = sum / 6.0;
        } else {
            sc.tlx_partial = true;
        }
    }
    if (auto it = by.find(Instrument::PANAS); it != by.end()) {
        if (it->second.size() == 20) {
            double pa = 0.0, na = 0.0;
            for (const auto* r : it->second) (panas_positive_item(r->item + 1) ? pa : na) += r->value;
            sc.panas_pa = pa;
            sc.panas_na = na;
        } else {
            sc.panas_partial = true;
        }
    }
    for (const auto& [key, r] : latest) {
        if (key.first == Instrument::VA) (key.second == 0 ? sc.valence : sc.arousal) = r.value;
        if (key.first == Instrument::STRESS) sc.stress = r.value;
        if (key.first == Instrument::TIMEPERC) {
            sc.perceived_s = r.value;
            if (r.actual_s && *r.actual_s > 0.0) sc.time_ratio = r.value / *r.actual_s;
        }
    }
    return sc;
}

std::vector<Administration> administrations(const std::vector<EventRecord>& events)
{
    std::vector<Administration> out;
    std::map<Instrument, std::vector<double>> prompts;
    for (const auto& e : events)
        if (e.code == static_cast<std::uint16_t>(EventCode::START_QUESTIONNAIRE))
            prompts[static_cast<Instrument>(e.object)].push_back(e.sim_time_s());

    std::map<std::tuple<Instrument, std::uint32_t, double>, std::size_t> index;
    for (const auto& e : events) {
        if (e.code != static_cast<std::uint16_t>(EventCode::QRESPONSE)) continue;
        const auto inst_raw = e.object >> 8;
        if (inst_raw > static_cast<std::uint32_t>(Instrument::TIMEPERC)) continue;
        const auto inst = static_cast<Instrument>(inst_raw);
        const double t = e.sim_time_s();
        double prompt = 0.0, previous = 0.0;
        for (double p : prompts[inst])
            if (p <= t) {
                previous = prompt;
                prompt = p;
            }
        const auto key = std::make_tuple(inst, e.subject, prompt);
        auto [it, fresh] = index.try_emplace(key, out.size());
        if (fresh) out.push_back({inst, e.subject, prompt, {}});
        InstrumentResponse r{inst, static_cast<std::uint8_t>(e.object & 0xFF), e.value, t, std::nullopt};
        if (inst == Instrument::TIMEPERC) r.actual_s = prompt - previous;
        out[it->second].responses.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------

NbackGrade grade_nback(const std::vector<NbackStimulus>& stimuli, const std::vector<double>& response_times, int n,
                       double window)
{
    NbackGrade g;
    std::vector<std::optional<double>> rt(stimuli.size());
    std::vector<double> resp = response_times;
    std::sort(resp.begin(), resp.end());
    for (double t : resp) {
        auto it = std::upper_bound(stimuli.begin(), stimuli.end(), t,
                                   [](double v, const NbackStimulus& s) { return v < s.onset; });
        if (it == stimuli.begin()) {
            ++g.unmatched_responses;
            continue;
        }
        const auto k = static_cast<std::size_t>(it - stimuli.begin()) - 1;
        if (t - stimuli[k].onset > window || rt[k]) {
            ++g.unmatched_responses;
            continue;
        }
        rt[k] = t - stimuli[k].onset;
    }
    double rt_sum = 0.0;
    for (std::size_t i = 0; i < stimuli.size(); ++i) {
        const bool target = i >= static_cast<std::size_t>(n) && stimuli[i].symbol == stimuli[i - n].symbol;
        if (target) {
            if (rt[i]) {
                ++g.hits;
                rt_sum += *rt[i];
            } else {
                ++g.misses;
                ++g.omissions;
            }
        } else {
            if (rt[i])
                ++g.false_alarms;
            else
                ++g.correct_rejections;
        }
    }
    if (!stimuli.empty())
        g.accuracy = static_cast<double>(g.hits + g.correct_rejections) / static_cast<double>(stimuli.size());
    if (g.hits > 0) g.mean_rt = rt_sum / g.hits;
    return g;
}

std::vector<NbackBlockLog> nback_blocks(const std::vector<EventRecord>& events, double window)
{
    std::map<std::uint32_t, NbackBlockLog> blocks;
    std::vector<double> responses;
    for (const auto& e : events) {
        if (e.code == static_cast<std::uint16_t>(EventCode::START_NBACK)) {
            auto& b = blocks[e.subject];
            b.block = e.subject;
            b.n = static_cast<int>(e.object);
        } else if (e.code == static_cast<std::uint16_t>(EventCode::NBACK_STIM)) {
            auto& b = blocks[e.subject];
            b.block = e.subject;
            b.n = static_cast<int>(e.value);
            b.stimuli.push_back({e.sim_time_s(), static_cast<std::uint8_t>(e.object)});
        } else if (e.code == static_cast<std::uint16_t>(EventCode::NBACK_RESP)) {
            responses.push_back(e.sim_time_s());
        }
    }
    std::vector<NbackBlockLog> out;
    for (auto& [id, b] : blocks) {
        if (b.stimuli.empty()) continue;
        const double lo = b.stimuli.front().onset;
        const double hi = b.stimuli.back().onset + window;
        for (double t : responses)
            if (t >= lo && t <= hi) b.responses.push_back(t);
        out.push_back(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------------------

Report compute_report(const Recording& rec, const MetricsParams& prm)
{
    Report r;
    std::vector<std::uint32_t> ids;
    for (const auto& [id, tr] : rec.trajectories) ids.push_back(id);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            auto s = ttc_series(rec, ids[i], ids[j]);
            if (!s.samples.empty()) r.pairs.push_back(std::move(s));
        }
    for (const auto& [id, tr] : rec.trajectories) {
        r.modes[id] = mode_stats(rec, id, prm);
        if (!is_vehicle(tr.kind) && tr.kind != AgentKind::Cyclist) continue;
        const ApproachPath* p = path_for(rec, tr);
        if (p == nullptr || p->lane.empty()) continue;
        const Lane* lane = rec.scenario.map.find_lane(p->lane);
        if (lane == nullptr || lane->centerline.size() < 2) continue;
        r.lanes[id] = lane_metrics(tr.samples, *lane, is_vehicle(tr.kind) ? prm.vehicle_width_m : 0.6);
    }
    r.reactions = reaction_times(rec, prm);
    for (auto& adm : administrations(rec.events)) {
        auto scores = score_instruments(adm.responses);
        r.instruments.emplace_back(std::move(adm), std::move(scores));
    }
    for (auto& b : nback_blocks(rec.events, prm.nback_window_s)) {
        auto g = grade_nback(b.stimuli, b.responses, b.n, prm.nback_window_s);
        r.nback.emplace_back(std::move(b), g);
    }
    return r;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string opt_csv(const std::optional<double>& v)
{
    if (!v) return "";
    std::ostringstream o;
    o.precision(10);
    o << *v;
    return o.str();
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

}  // namespace

std::string summary_json(const Report& r)
{
    using nlohmann::json;
    json j;
    j["pairs"] = json::array();
    for (const auto& p : r.pairs)
        j["pairs"].push_back({{"a", p.a},
                              {"b", p.b},
                              {"shared_path", p.shared_path},
                              {"min_ttc_s", opt_json(p.min_ttc)},
                              {"min_ttc_time_s", p.min_ttc ? json(p.min_ttc_time) : json(nullptr)},
                              {"max_drac_mps2", p.max_drac}});
    j["lanes"] = json::object();
    for (const auto& [id, l] : r.lanes)
        j["lanes"][std::to_string(id)] = {
            {"rms_offset_m", l.rms_offset}, {"max_offset_m", l.max_offset}, {"departures", l.departures.size()}};
    j["reactions"] = json::array();
    for (const auto& x : r.reactions) {
        json e{{"metric", x.metric}, {"agent", x.agent}, {"cue_time_s", x.cue_time}, {"value_s", opt_json(x.value)}};
        if (!x.reason.empty()) e["reason"] = x.reason;
        j["reactions"].push_back(e);
    }
    j["modes"] = json::object();
    for (const auto& [id, st] : r.modes) j["modes"][std::to_string(id)] = st;
    j["instruments"] = json::array();
    for (const auto& [adm, s] : r.instruments) {
        json e{{"instrument", std::string(to_string(adm.instrument))},
               {"agent", adm.agent},
               {"prompt_time_s", adm.prompt_time},
               {"items", adm.responses.size()}};
        switch (adm.instrument) {
        case Instrument::TLX:
            e["raw_tlx"] = opt_json(s.tlx_raw);
            e["partial"] = s.tlx_partial;
            break;
        case Instrument::PANAS:
            e["pa"] = opt_json(s.panas_pa);
            e["na"] = opt_json(s.panas_na);
            e["partial"] = s.panas_partial;
            break;
        case Instrument::VA:
            e["valence"] = opt_json(s.valence);
            e["arousal"] = opt_json(s.arousal);
            break;
        case Instrument::STRESS: e["stress"] = opt_json(s.stress); break;
        case Instrument::TIMEPERC:
            e["perceived_s"] = opt_json(s.perceived_s);
            e["ratio"] = opt_json(s.time_ratio);
            break;
        }
        if (!s.notes.empty()) e["notes"] = s.notes;
        j["instruments"].push_back(e);
    }
    j["nback"] = json::array();
    for (const auto& [b, g] : r.nback)
        j["nback"].push_back({{"block", b.block},
                              {"n", b.n},
                              {"stimuli", b.stimuli.size()},
                              {"hits", g.hits},
                              {"misses", g.misses},
                              {"false_alarms", g.false_alarms},
                              {"correct_rejections", g.correct_rejections},
                              {"omissions", g.omissions},
                              {"accuracy", g.accuracy},
                              {"mean_rt_s", opt_json(g.mean_rt)}});
    return j.dump(2);
}

std::string write_report(const Report& r, const std::string& dir)
{
    namespace fs = std::filesystem;
    const fs::path out(dir);
    fs::create_directories(out);

    std::ostringstream ttc;
    ttc.precision(10);
    ttc << "a,b,t_s,ttc_s,drac_mps2,drac_saturated,headway_s\n";
    for (const auto& p : r.pairs)
        for (const auto& s : p.samples)
            ttc << p.a << ',' << p.b << ',' << s.t << ',' << opt_csv(s.ttc) << ',' << s.drac.value << ','
                << (s.drac.saturated ? 1 : 0) << ',' << opt_csv(s.headway) << '\n';
    write_file(out / "ttc.csv", ttc.str());

    std::ostringstream lane;
    lane.precision(10);
    lane << "agent,rms_offset_m,max_offset_m,departures,departure_time_s\n";
    for (const auto& [id, l] : r.lanes) {
        double total = 0.0;
        for (const auto& d : l.departures) total += d.end - d.start;
        lane << id << ',' << l.rms_offset << ',' << l.max_offset << ',' << l.departures.size() << ',' << total << '\n';
    }
    write_file(out / "lane.csv", lane.str());

    std::ostringstream rx;
    rx.precision(10);
    rx << "metric,agent,cue_time_s,value_s,reason\n";
    for (const auto& x : r.reactions)
        rx << x.metric << ',' << x.agent << ',' << x.cue_time << ',' << opt_csv(x.value) << ',' << x.reason << '\n';
    write_file(out / "reactions.csv", rx.str());

    std::ostringstream md;
    md.precision(10);
    md << "agent,stat,value\n";
    for (const auto& [id, st] : r.modes)
        for (const auto& [k, v] : st) md << id << ',' << k << ',' << v << '\n';
    write_file(out / "modes.csv", md.str());

    std::ostringstream ins;
    ins.precision(10);
    ins << "instrument,agent,prompt_time_s,item,value,sim_time_s\n";
    for (const auto& [adm, s] : r.instruments)
        for (const auto& resp : adm.responses)
            ins << to_string(adm.instrument) << ',' << adm.agent << ',' << adm.prompt_time << ','
                << static_cast<int>(resp.item) << ',' << resp.value << ',' << resp.sim_time << '\n';
    write_file(out / "instruments.csv", ins.str());

    std::ostringstream nb;
    nb.precision(10);
    nb << "block,n,stimuli,hits,misses,false_alarms,correct_rejections,omissions,accuracy,mean_rt_s\n";
    for (const auto& [b, g] : r.nback)
        nb << b.block << ',' << b.n << ',' << b.stimuli.size() << ',' << g.hits << ',' << g.misses << ','
           << g.false_alarms << ',' << g.correct_rejections << ',' << g.omissions << ',' << g.accuracy << ','
           << opt_csv(g.mean_rt) << '\n';
    write_file(out / "nback.csv", nb.str());

    const std::string summary = summary_json(r);
    write_file(out / "summary.json", summary + "\n");
    return summary;
}

}  // namespace mmsim::metrics
