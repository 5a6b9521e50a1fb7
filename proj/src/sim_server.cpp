#include "mmsim/sim_server.hpp"

#include "mmsim/surrogate.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>

namespace mmsim {

namespace {

constexpr std::uint32_t kRejectNoSlot = 1;
constexpr std::uint32_t kRejectBadName = 2;
constexpr double kBrakeFlagThreshold = 0.05;
constexpr double kNbackIsi = 2.0;  // s between stimuli
constexpr std::uint8_t kNbackAlphabet = 8;

bool valid_utf8(std::string_view s)
{
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t n = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            if (c < 0x20 || c == 0x7F) return false;  // control characters
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            n = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            n = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            n = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + n >= s.size()) return false;
        for (std::size_t k = 1; k <= n; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000) || cp > 0x10FFFF ||
            (cp >= 0xD800 && cp <= 0xDFFF))
            return false;
        i += n + 1;
    }
    return true;
}

void put_u8(std::vector<std::uint8_t>& b, std::uint8_t v) { b.push_back(v); }
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& b, double v)
{
    const auto raw = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(raw >> (8 * i)));
}

bool joinable(const AgentSpec& spec, AgentKind role)
{
    if (spec.kind != role) return false;
    if (spec.controlled_by == Controller::Human) return true;
    return role == AgentKind::AutomatedVehicle && spec.controlled_by == Controller::Policy && spec.supervised;
}

bool is_walker(AgentKind k) { return k == AgentKind::Pedestrian || k == AgentKind::TransitUser; }

}  // namespace

std::string validate(const SessionConfig& c)
{
    if (c.tick_rate_hz < 20 || c.tick_rate_hz > 1000) return "tick_rate_hz must be in [20, 1000]";
    if (c.snapshot_div < 1) return "snapshot_div must be >= 1";
    if (c.full_snapshot_every < 1) return "full_snapshot_every must be >= 1";
    if (!(c.sync_mark_interval_s > 0.0)) return "sync_mark_interval_s must be positive";
    if (c.scenario.agents.size() > c.max_agents) return "scenario has more agents than max_agents";
    return {};
}

Session::Session(SessionConfig config) : config_(std::move(config)), rng_(config_.scenario.seed)
{
    if (auto err = validate(config_); !err.empty()) throw std::invalid_argument(err);
    for (const auto& d : mmsim::validate(config_.scenario)) {
        if (d.severity == Severity::Error) throw std::invalid_argument("scenario: " + d.message);
    }
    hash_ = mmsim::scenario_hash(config_.scenario);
    init_world();
}

std::uint64_t Session::sim_time_us_at(std::uint64_t tick) const
{
    return tick * 1'000'000ULL / config_.tick_rate_hz;
}

void Session::init_world()
{
    const ScenarioSpec& sc = config_.scenario;
    const auto arcs = initial_arcs(sc);
    std::vector<const AgentSpec*> specs;
    for (const auto& a : sc.agents) specs.push_back(&a);
    std::sort(specs.begin(), specs.end(), [](auto* a, auto* b) { return a->id < b->id; });

    for (const AgentSpec* spec : specs) {
        const ApproachPath* path = sc.map.find_path(spec->path);
        AgentRuntime rt;
        rt.spec = spec;
        rt.path = path;
        rt.path_length = polyline_length(path->points);
        rt.spawned = !spec->wait_for_trigger;

        const double arc = arcs.at(spec->id);
        AgentState s;
        s.agent_id = spec->id;
        s.kind = spec->kind;
        s.pose = point_at(path->points, arc);
        const bool policy_av = spec->kind == AgentKind::AutomatedVehicle && spec->controlled_by == Controller::Policy;
        s.control_authority = policy_av ? ControlAuthority::Policy : ControlAuthority::Human;
        double v0 = 0.0;
        if (spec->controlled_by != Controller::Human) {
            v0 = spec->target_speed > 0.0 ? spec->target_speed : (policy_av ? sc.av_params.v_cruise : 0.0);
        }
        if (spec->initial_speed) v0 = *spec->initial_speed;
        if (!rt.spawned) v0 = 0.0;
        s.kin.speed = v0;
        if (is_walker(s.kind)) s.kin.aux = v0 / kWalkStepLength;
        rt.script_s = arc;
        if (spec->transit) {
            rt.transit = TransitMotion{};
            rt.transit->s = arc;
            rt.transit->speed = v0;
        }
        if (policy_av) rt.ehmi = apply_mask(set_ehmi(AvState::Cruising), sc.ehmi_mask);
        paths_[spec->id] = path;
        runtime_.emplace(spec->id, rt);
        agents_.push_back(s);
    }
}

const AgentState* Session::find(std::uint32_t id) const
{
    auto it = std::lower_bound(agents_.begin(), agents_.end(), id,
                               [](const AgentState& a, std::uint32_t v) { return a.agent_id < v; });
    return (it != agents_.end() && it->agent_id == id) ? &*it : nullptr;
}

std::optional<AvState> Session::av_state(std::uint32_t id) const
{
    auto it = runtime_.find(id);
    if (it == runtime_.end() || it->second.spec->kind != AgentKind::AutomatedVehicle) return std::nullopt;
    return it->second.av.state;
}

std::optional<EhmiState> Session::ehmi(std::uint32_t id) const
{
    auto it = runtime_.find(id);
    if (it == runtime_.end() || it->second.spec->kind != AgentKind::AutomatedVehicle) return std::nullopt;
    return it->second.ehmi;
}

const ApproachPath* Session::path_of(std::uint32_t id) const
{
    auto it = paths_.find(id);
    return it == paths_.end() ? nullptr : it->second;
}

std::vector<ClientId> Session::joined_clients() const
{
    std::vector<ClientId> out;
    for (const auto& [id, info] : clients_)
        if (info.present && info.agent) out.push_back(id);
    return out;
}

net::Header Session::server_header(net::MsgType type, std::uint16_t agent_id)
{
    net::Header h;
    h.session = config_.session_id;
    h.agent_id = agent_id;
    h.seq = ++out_seq_[static_cast<std::uint8_t>(type)];
    h.timestamp_us = sim_time_us();
    return h;
}

void Session::emit(std::uint16_t code, std::uint32_t subject, std::uint32_t object, double value,
                   std::vector<Outbound>& out)
{
    EventRecord rec{sim_time_us(), tick_, code, subject, object, value};
    events_.push_back(rec);
    if (on_event) on_event(rec);
    net::Message m{server_header(net::MsgType::Event, 0), net::Event{code, subject, object, value}};
    out.push_back({std::nullopt, net::encode(m)});
}

std::vector<std::uint8_t> Session::welcome_bytes(std::uint32_t agent_id)
{
    net::Header h = server_header(net::MsgType::Welcome, static_cast<std::uint16_t>(agent_id));
    h.kind = static_cast<std::uint8_t>(runtime_.at(agent_id).spec->kind);
    net::Welcome w{agent_id, config_.tick_rate_hz, config_.snapshot_div, hash_};
    return net::encode(net::Message{h, w});
}

std::vector<Outbound> Session::reject(ClientId client, std::uint32_t reason)
{
    EventRecord rec{sim_time_us(), tick_, static_cast<std::uint16_t>(EventCode::JOIN_REJECTED), client, reason, 0.0};
    events_.push_back(rec);
    if (on_event) on_event(rec);
    net::Message m{server_header(net::MsgType::Event, 0),
                   net::Event{rec.code, rec.subject, rec.object, rec.value}};
    return {Outbound{client, net::encode(m)}};
}

std::vector<Outbound> Session::handle_hello(ClientId client, const net::Message& msg)
{
    const auto& hello = std::get<net::Hello>(msg.payload);
    auto& info = clients_[client];
    info.present = true;
    if (info.agent) {
        // Repeated HELLO from a joined client: answer with the same slot.
        info.hello_seq = msg.header.seq;
        return {Outbound{client, welcome_bytes(*info.agent)}};
    }
    if (hello.display_name.empty() || !valid_utf8(hello.display_name)) return reject(client, kRejectBadName);
    for (auto& [id, rt] : runtime_) {
        if (rt.client || !joinable(*rt.spec, hello.role) || find(id) == nullptr) continue;
        rt.client = client;
        rt.input.reset();
        info.agent = id;
        info.hello_seq = msg.header.seq;
        any_joined_ever_ = true;
        return {Outbound{client, welcome_bytes(id)}};
    }
    return reject(client, kRejectNoSlot);
}

std::vector<Outbound> Session::deliver(ClientId client, std::span<const std::uint8_t> datagram)
{
    if (datagram.empty()) {
        disconnect(client);
        return {};
    }
    const auto decoded = net::decode(datagram);
    if (!decoded.ok()) {
        ++counters_.decode_errors;
        return {};
    }
    const net::Message& msg = *decoded.message;
    const net::MsgType type = msg.type();

    if (type == net::MsgType::Ping) {
        const auto t = sim_time_us();
        net::Message pong{server_header(net::MsgType::Pong, msg.header.agent_id),
                          net::Pong{std::get<net::Ping>(msg.payload).t0, t, t}};
        return {Outbound{client, net::encode(pong)}};
    }
    if (type == net::MsgType::Hello) {
        if (on_input) on_input(tick_, client, datagram);
        return handle_hello(client, msg);
    }
    if (type != net::MsgType::Input && type != net::MsgType::QResponse && type != net::MsgType::Nback &&
        type != net::MsgType::Bye) {
        ++counters_.unknown_sender;
        return {};
    }
    auto cit = clients_.find(client);
    if (cit == clients_.end() || !cit->second.agent || *cit->second.agent != msg.header.agent_id ||
        msg.header.session != config_.session_id) {
        ++counters_.unknown_sender;
        return {};
    }
    if (gate_.admit(msg) == net::GateResult::Stale) {
        ++counters_.stale;
        return {};
    }
    if (on_input) on_input(tick_, client, datagram);

    const std::uint32_t agent = *cit->second.agent;
    AgentRuntime& rt = runtime_.at(agent);
    std::vector<Outbound> out;
    switch (type) {
    case net::MsgType::Input: {
        const auto& in = std::get<net::Input>(msg.payload);
        if (!validate_input(in.control).empty() || !input_matches_kind(in.control, rt.spec->kind)) {
            ++counters_.rejected_inputs;
            break;
        }
        rt.input = in.control;
        break;
    }
    case net::MsgType::QResponse: {
        const auto& q = std::get<net::QResponse>(msg.payload);
        emit(static_cast<std::uint16_t>(EventCode::QRESPONSE), agent,
             (std::uint32_t{q.instrument} << 8) | q.item, static_cast<double>(q.value), out);
        break;
    }
    case net::MsgType::Nback: {
        const auto& nb = std::get<net::Nback>(msg.payload);
        if (nb.kind == net::NbackKind::Response) {
            emit(static_cast<std::uint16_t>(EventCode::NBACK_RESP), agent, nb.symbol,
                 static_cast<double>(nb.rt_hint_us) * 1e-6, out);
        }
        break;
    }
    case net::MsgType::Bye:
        rt.client.reset();
        rt.input.reset();
        cit->second.agent.reset();
        cit->second.present = false;
        break;
    default: break;
    }
    return out;
}

void Session::disconnect(ClientId client)
{
    auto cit = clients_.find(client);
    if (cit == clients_.end() || !cit->second.present) return;
    if (on_input) on_input(tick_, client, {});
    if (cit->second.agent) {
        AgentRuntime& rt = runtime_.at(*cit->second.agent);
        rt.client.reset();
        rt.input.reset();
        cit->second.agent.reset();
    }
    cit->second.present = false;
}

void Session::step_script(AgentState& s, AgentRuntime& rt, double dt)
{
    const double v = rt.spawned ? rt.spec->target_speed : 0.0;
    rt.script_s += v * dt;
    const Pose2D p = point_at(rt.path->points, rt.script_s);
    const double prev_v = s.kin.speed;
    s.pose = p;
    s.kin.speed = v;
    s.kin.accel = (v - prev_v) / dt;
    s.kin.yaw_rate = 0.0;
    s.kin.aux = is_walker(s.kind) ? v / kWalkStepLength : 0.0;
}

void Session::step_agents(std::vector<Outbound>& out)
{
    const double dt = this->dt();
    const double now = static_cast<double>(sim_time_us()) * 1e-6;
    const ScenarioSpec& sc = config_.scenario;

    // (1) latest inputs: takeover checks for supervised AVs.
    for (auto& s : agents_) {
        AgentRuntime& rt = runtime_.at(s.agent_id);
        if (s.kind != AgentKind::AutomatedVehicle || s.control_authority != ControlAuthority::Policy || !rt.input)
            continue;
        const auto* manual = std::get_if<DriverInput>(&*rt.input);
        if (manual == nullptr) continue;
        const auto result = takeover(s, *manual, now, rt.takeover_request);
        if (result.event) {
            s = result.state;
            const auto tti = result.event->time_to_intervention();
            emit(static_cast<std::uint16_t>(EventCode::TAKEOVER_ENGAGE), s.agent_id, tti ? 1u : 0u,
                 tti.value_or(0.0), out);
        } else {
            rt.input.reset();  // sub-threshold input is discarded
        }
    }

    // (2) policy decisions on the pre-step world.
    std::map<std::uint32_t, AvDecision> decisions;
    PolicyWorld world{agents_, &sc.map, &paths_};
    for (const auto& s : agents_) {
        if (s.kind != AgentKind::AutomatedVehicle || s.control_authority != ControlAuthority::Policy) continue;
        AgentRuntime& rt = runtime_.at(s.agent_id);
        if (!rt.spawned) continue;
        auto d = av_decide(world, s.agent_id, rt.av, sc.av_params, vehicle_, dt);
        decisions.emplace(s.agent_id, d);
    }
    for (auto& [id, d] : decisions) {
        AgentRuntime& rt = runtime_.at(id);
        const EhmiState masked = apply_mask(d.ehmi, sc.ehmi_mask);
        const bool state_changed = d.memory.state != rt.av.state;
        rt.av = d.memory;
        if (state_changed || masked != rt.ehmi) {
            rt.ehmi = masked;
            emit(static_cast<std::uint16_t>(EventCode::EHMI_CHANGE), id, pack_ehmi(masked),
                 static_cast<double>(d.memory.state), out);
        }
    }

    // (3) dynamics, ascending id, all reading the pre-step world.
    const std::vector<AgentState> pre = agents_;
    std::vector<TransitContext> zones;
    for (const auto& s : pre) {
        const AgentRuntime& rt = runtime_.at(s.agent_id);
        if (rt.transit) zones.push_back({s.agent_id, s.pose, rt.spec->zone_half_length, rt.spec->zone_half_width});
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> boarded;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        AgentState& s = agents_[i];
        const AgentState& before = pre[i];
        AgentRuntime& rt = runtime_.at(s.agent_id);
        const double grade = rt.path->grade_at(path_progress(before.pose, rt.path->points));
        AppliedControl applied{s.agent_id, PolicyInput{}, false};

        if (rt.transit) {
            bool arrived = false;
            const bool was_open = rt.transit->doors_open;
            if (rt.spawned) rt.transit = step_transit(*rt.transit, *rt.spec->transit, dt, &arrived);
            s.pose = point_at(rt.path->points, rt.transit->s);
            s.kin.accel = (rt.transit->speed - before.kin.speed) / dt;
            s.kin.speed = rt.transit->speed;
            if (arrived)
                emit(static_cast<std::uint16_t>(EventCode::DOOR_OPEN), s.agent_id,
                     static_cast<std::uint32_t>(rt.transit->next_stop), rt.transit->s, out);
            if (was_open && !rt.transit->doors_open)
                emit(static_cast<std::uint16_t>(EventCode::DOOR_CLOSE), s.agent_id,
                     static_cast<std::uint32_t>(rt.transit->next_stop), rt.transit->s, out);
        } else if (rt.spec->controlled_by == Controller::Script) {
            step_script(s, rt, dt);
        } else if (s.kind == AgentKind::AutomatedVehicle && s.control_authority == ControlAuthority::Policy) {
            auto it = decisions.find(s.agent_id);
            if (it != decisions.end()) {
                s = step_vehicle(before, it->second.actuation, vehicle_, grade, dt);
                applied.control = it->second.actuation;
                s.set_flag(agent_flags::kBraking, it->second.actuation.brake > kBrakeFlagThreshold);
            }
            s.set_flag(agent_flags::kYielding,
                       rt.av.state == AvState::Yielding || rt.av.state == AvState::Stopped);
        } else if (s.kind == AgentKind::Driver || s.kind == AgentKind::AutomatedVehicle) {
            DriverInput in;
            if (rt.input) in = std::get<DriverInput>(*rt.input);
            s = step_vehicle(before, in, vehicle_, grade, dt);
            s.set_flag(agent_flags::kBraking, in.brake > kBrakeFlagThreshold);
            s.set_flag(agent_flags::kYielding, false);
            applied = {s.agent_id, in, rt.client.has_value()};
        } else if (s.kind == AgentKind::Cyclist) {
            CyclistInput in;
            if (rt.input) in = std::get<CyclistInput>(*rt.input);
            s = step_cyclist(before, in, cyclist_, grade, dt);
            s.set_flag(agent_flags::kBraking, in.brake > kBrakeFlagThreshold);
            applied = {s.agent_id, in, rt.client.has_value()};
        } else {
            PedestrianInput in{0.0f, static_cast<float>(before.pose.heading), before.seated};
            if (rt.input) in = std::get<PedestrianInput>(*rt.input);
            const auto res = step_pedestrian(before, in, dt, zones);
            s = res.state;
            if (res.boarded_vehicle) {
                rt.seated_in = *res.boarded_vehicle;
                boarded.emplace_back(s.agent_id, *res.boarded_vehicle);
                for (const auto& z : zones)
                    if (z.vehicle_id == *res.boarded_vehicle) rt.seat_offset = to_local(s.pose, z.vehicle_pose);
            }
            if (before.seated && !s.seated) {
                emit(static_cast<std::uint16_t>(EventCode::ALIGHTED), s.agent_id, rt.seated_in.value_or(0), 0.0, out);
                rt.seated_in.reset();
            }
            if (res.seat_request_ignored && !rt.last_seat_request)
                emit(static_cast<std::uint16_t>(EventCode::SEAT_WARNING), s.agent_id, 0, 0.0, out);
            rt.last_seat_request = in.seated_request;
            applied = {s.agent_id, in, rt.client.has_value()};
        }
        applied_.push_back(applied);
    }
    for (const auto& [walker, vehicle] : boarded)
        emit(static_cast<std::uint16_t>(EventCode::BOARDED), walker, vehicle, 0.0, out);

    // Seated passengers ride along with their vehicle's post-step pose.
    for (auto& s : agents_) {
        AgentRuntime& rt = runtime_.at(s.agent_id);
        if (!s.seated || !rt.seated_in) continue;
        if (const AgentState* v = find(*rt.seated_in)) s = follow_vehicle(s, v->pose, rt.seat_offset);
    }
}

void Session::despawn_passed(std::vector<Outbound>& out)
{
    std::vector<std::uint32_t> gone;
    for (const auto& s : agents_) {
        const AgentRuntime& rt = runtime_.at(s.agent_id);
        if (rt.spec->controlled_by != Controller::Script || !rt.spec->despawn_after_m) continue;
        if (signed_distance_to_conflict(s, *rt.path) < -*rt.spec->despawn_after_m) gone.push_back(s.agent_id);
    }
    for (auto id : gone) {
        agents_.erase(std::remove_if(agents_.begin(), agents_.end(),
                                     [id](const AgentState& a) { return a.agent_id == id; }),
                      agents_.end());
        emit(static_cast<std::uint16_t>(EventCode::AGENT_DESPAWN), id, 0, 0.0, out);
    }
}

void Session::update_zone_flags(std::vector<Outbound>& out)
{
    const double radius = config_.scenario.av_params.zone_radius;
    for (auto& s : agents_) {
        AgentRuntime& rt = runtime_.at(s.agent_id);
        const ConflictPoint* cp = config_.scenario.map.find_conflict_point(rt.path->conflict_point);
        const bool inside = cp != nullptr && !s.seated && distance(s.pose.position(), cp->position) <= radius;
        s.set_flag(agent_flags::kInConflictZone, inside);
        if (inside != rt.in_zone) {
            rt.in_zone = inside;
            emit(static_cast<std::uint16_t>(inside ? EventCode::CONFLICT_ENTER : EventCode::CONFLICT_EXIT),
                 s.agent_id, 0, s.kin.speed, out);
        }
    }
}

void Session::apply_action(std::size_t trigger, const TriggerAction& action, std::vector<Outbound>& out)
{
    const auto t_idx = static_cast<std::uint32_t>(trigger);
    emit(static_cast<std::uint16_t>(EventCode::TRIGGER_FIRED), t_idx, static_cast<std::uint32_t>(action.index()),
         0.0, out);
    if (const auto* a = std::get_if<EmitEvent>(&action)) {
        emit(a->code, t_idx, 0, 0.0, out);
    } else if (const auto* a = std::get_if<RequestTakeover>(&action)) {
        AgentRuntime& rt = runtime_.at(a->agent);
        rt.takeover_request = static_cast<double>(sim_time_us()) * 1e-6;
        emit(static_cast<std::uint16_t>(EventCode::TAKEOVER_REQUEST), a->agent, t_idx, 0.0, out);
    } else if (const auto* a = std::get_if<StartQuestionnaire>(&action)) {
        emit(static_cast<std::uint16_t>(EventCode::START_QUESTIONNAIRE), t_idx,
             static_cast<std::uint32_t>(a->instrument), 0.0, out);
    } else if (const auto* a = std::get_if<StartNback>(&action)) {
        NbackBlock block;
        block.block = next_nback_block_++;
        block.n = a->n;
        block.start_tick = tick_;
        for (std::uint16_t i = 0; i < a->length; ++i) {
            const bool can_match = i >= a->n;
            const bool target = can_match && rng_() % 10 < 3;
            std::uint8_t sym = 0;
            if (target) {
                sym = block.symbols[i - a->n];
            } else {
                sym = static_cast<std::uint8_t>(rng_() % kNbackAlphabet);
                if (can_match && sym == block.symbols[i - a->n]) sym = static_cast<std::uint8_t>((sym + 1) % kNbackAlphabet);
            }
            block.symbols.push_back(sym);
        }
        emit(static_cast<std::uint16_t>(EventCode::START_NBACK), block.block, a->n, a->length, out);
        nback_.push_back(std::move(block));
    } else if (const auto* a = std::get_if<SpawnScript>(&action)) {
        runtime_.at(a->agent).spawned = true;
        emit(static_cast<std::uint16_t>(EventCode::AGENT_SPAWN), a->agent, t_idx, 0.0, out);
    }
}

void Session::run_nback(std::vector<Outbound>& out)
{
    const auto isi_ticks = static_cast<std::uint64_t>(std::llround(kNbackIsi * config_.tick_rate_hz));
    for (auto& b : nback_) {
        while (b.next < b.symbols.size() && tick_ >= b.start_tick + b.next * isi_ticks) {
            emit(static_cast<std::uint16_t>(EventCode::NBACK_STIM), b.block, b.symbols[b.next], b.n, out);
            ++b.next;
        }
    }
}

std::vector<Outbound> Session::run_tick()
{
    std::vector<Outbound> out;
    applied_.clear();
    ++tick_;

    step_agents(out);
    despawn_passed(out);

    if (config_.scenario.signal_plan) {
        const double t = static_cast<double>(sim_time_us()) * 1e-6;
        const SignalPhase p = signal_phase_at(*config_.scenario.signal_plan, t);
        if (!phase_ || *phase_ != p) {
            phase_ = p;
            emit(static_cast<std::uint16_t>(EventCode::SIGNAL_PHASE), 0, static_cast<std::uint32_t>(p), t, out);
        }
    }

    TriggerWorld tw{agents_, &config_.scenario, &paths_, static_cast<double>(sim_time_us()) * 1e-6, phase_};
    const auto fired = evaluate_triggers(tw, tick_, triggers_);
    for (const auto& f : fired.actions) apply_action(f.trigger, f.action, out);
    for (const auto& d : fired.dropped)
        emit(static_cast<std::uint16_t>(EventCode::ACTION_DROPPED), static_cast<std::uint32_t>(d.trigger),
             d.missing_agent, 0.0, out);

    update_zone_flags(out);
    run_nback(out);

    const std::uint64_t mark_us =
        static_cast<std::uint64_t>(std::llround(config_.sync_mark_interval_s * 1e6)) * sync_index_;
    if (sim_time_us() >= mark_us) {
        emit(static_cast<std::uint16_t>(EventCode::SYNC_MARK), sync_index_, 0, static_cast<double>(sync_index_), out);
        ++sync_index_;
    }

    if (tick_ % config_.snapshot_div == 0) {
        auto snap = snapshot_messages();
        out.insert(out.end(), std::make_move_iterator(snap.begin()), std::make_move_iterator(snap.end()));
    }
    return out;
}

std::vector<Outbound> Session::snapshot_messages()
{
    net::Snapshot snap{tick_, sim_time_us(), {}};
    for (const auto& s : agents_) {
        const auto st = av_state(s.agent_id);
        snap.agents.push_back(net::to_record(s, st ? static_cast<std::uint8_t>(*st) : 0));
    }
    auto& seq = out_seq_[static_cast<std::uint8_t>(net::MsgType::Snapshot)];
    net::Header h;
    h.session = config_.session_id;
    h.seq = seq + 1;
    h.timestamp_us = sim_time_us();
    auto parts = net::fragment_snapshot(snap, h);
    seq += static_cast<std::uint32_t>(parts.size());
    std::vector<Outbound> out;
    for (const auto& m : parts) out.push_back({std::nullopt, net::encode(m)});
    return out;
}

std::vector<std::uint8_t> Session::state_blob() const
{
    std::vector<std::uint8_t> b;
    put_u32(b, static_cast<std::uint32_t>(agents_.size()));
    for (const auto& s : agents_) {
        const AgentRuntime& rt = runtime_.at(s.agent_id);
        put_u32(b, s.agent_id);
        put_u8(b, static_cast<std::uint8_t>(s.kind));
        put_u8(b, s.flags);
        put_u8(b, s.seated ? 1 : 0);
        put_u8(b, static_cast<std::uint8_t>(s.control_authority));
        for (double v : {s.pose.x, s.pose.y, s.pose.heading, s.kin.speed, s.kin.accel, s.kin.yaw_rate, s.kin.aux})
            put_f64(b, v);
        put_u8(b, static_cast<std::uint8_t>(rt.av.state));
        put_f64(b, rt.av.clear_time);
        put_f64(b, rt.script_s);
    }
    return b;
}

// ---------------------------------------------------------------------------
// Pacing

std::int64_t monotonic_us()
{
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Pacer::Pacer(std::uint16_t tick_rate_hz, NowFn now) : rate_(tick_rate_hz), now_(std::move(now)), start_(now_()) {}

std::uint64_t Pacer::due()
{
    const std::int64_t elapsed = std::max<std::int64_t>(now_() - start_, 0);
    const auto target = static_cast<std::uint64_t>(elapsed) * rate_ / 1'000'000ULL;
    return target > done_ ? target - done_ : 0;
}

std::int64_t Pacer::until_next() const
{
    const std::int64_t elapsed = now_() - start_;
    const auto next_us = static_cast<std::int64_t>(((done_ + 1) * 1'000'000ULL + rate_ - 1) / rate_);
    return std::max<std::int64_t>(next_us - elapsed, 0);
}

}  // namespace mmsim
