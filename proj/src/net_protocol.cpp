#include "mmsim/net_protocol.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <stdexcept>

namespace mmsim::net {
namespace {

class Writer {
public:
    explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n)
    {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> out_;
};

// Bounds-checked little-endian reader. Every getter returns false instead of
// reading past the end.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    bool u8(std::uint8_t& v)
    {
        if (remaining() < 1) return false;
        v = data_[pos_++];
        return true;
    }
    bool u16(std::uint16_t& v) { return get(v); }
    bool u32(std::uint32_t& v) { return get(v); }
    bool u64(std::uint64_t& v) { return get(v); }
    bool f32(float& v)
    {
        std::uint32_t raw = 0;
        if (!u32(raw)) return false;
        v = std::bit_cast<float>(raw);
        return true;
    }
    bool f64(double& v)
    {
        std::uint64_t raw = 0;
        if (!u64(raw)) return false;
        v = std::bit_cast<double>(raw);
        return true;
    }
    bool str(std::size_t n, std::string& s)
    {
        if (remaining() < n) return false;
        s.assign(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return true;
    }

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    template <typename T>
    bool get(T& v)
    {
        if (remaining() < sizeof(T)) return false;
        std::uint64_t acc = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) acc |= std::uint64_t{data_[pos_ + i]} << (8 * i);
        v = static_cast<T>(acc);
        pos_ += sizeof(T);
        return true;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

enum class InputTag : std::uint8_t { Driver = 0, Cyclist = 1, Pedestrian = 2, Policy = 3 };

void write_input(Writer& w, const Input& in)
{
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, DriverInput>) {
                w.u8(static_cast<std::uint8_t>(InputTag::Driver));
                w.f32(c.steer_wheel);
                w.f32(c.throttle);
                w.f32(c.brake);
                w.u8(static_cast<std::uint8_t>(c.gear));
            } else if constexpr (std::is_same_v<T, CyclistInput>) {
                w.u8(static_cast<std::uint8_t>(InputTag::Cyclist));
                w.f32(c.power);
                w.f32(c.cadence);
                w.f32(c.steer);
                w.f32(c.brake);
                w.u8(static_cast<std::uint8_t>(c.assist));
            } else if constexpr (std::is_same_v<T, PedestrianInput>) {
                w.u8(static_cast<std::uint8_t>(InputTag::Pedestrian));
                w.f32(c.walk_speed);
                w.f32(c.walk_heading);
                w.u8(c.seated_request ? 1 : 0);
            } else {
                w.u8(static_cast<std::uint8_t>(InputTag::Policy));
            }
        },
        in.control);
    w.u64(in.client_tick_hint);
}

void write_record(Writer& w, const AgentRecord& r)
{
    w.u32(r.id);
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.u8(r.flags);
    w.f64(r.x);
    w.f64(r.y);
    w.f32(r.heading);
    w.f32(r.speed);
    w.f32(r.accel);
    w.f32(r.aux);
}

bool valid_kind(std::uint8_t k) { return k <= static_cast<std::uint8_t>(AgentKind::TransitUser); }
bool valid_bool(std::uint8_t b) { return b <= 1; }

// Payload decoders return nullopt on success, else the error.
using Fail = std::optional<DecodeError>;

Fail read_hello(Reader& r, Hello& out)
{
    std::uint8_t role = 0, len = 0;
    if (!r.u8(role) || !r.u8(len)) return DecodeError::Truncated;
    if (!valid_kind(role)) return DecodeError::BadEnum;
    if (len > kMaxNameBytes) return DecodeError::BadLength;
    out.role = static_cast<AgentKind>(role);
    if (!r.str(len, out.display_name)) return DecodeError::Truncated;
    return std::nullopt;
}

Fail read_input(Reader& r, Input& out)
{
    std::uint8_t tag = 0;
    if (!r.u8(tag)) return DecodeError::Truncated;
    switch (static_cast<InputTag>(tag)) {
    case InputTag::Driver: {
        DriverInput d;
        std::uint8_t gear = 0;
        if (!r.f32(d.steer_wheel) || !r.f32(d.throttle) || !r.f32(d.brake) || !r.u8(gear))
            return DecodeError::Truncated;
        d.gear = static_cast<std::int8_t>(gear);
        out.control = d;
        break;
    }
    case InputTag::Cyclist: {
        CyclistInput c;
        std::uint8_t assist = 0;
        if (!r.f32(c.power) || !r.f32(c.cadence) || !r.f32(c.steer) || !r.f32(c.brake) || !r.u8(assist))
            return DecodeError::Truncated;
        if (assist > static_cast<std::uint8_t>(AssistLevel::Turbo)) return DecodeError::BadEnum;
        c.assist = static_cast<AssistLevel>(assist);
        out.control = c;
        break;
    }
    case InputTag::Pedestrian: {
        PedestrianInput p;
        std::uint8_t seated = 0;
        if (!r.f32(p.walk_speed) || !r.f32(p.walk_heading) || !r.u8(seated)) return DecodeError::Truncated;
        if (!valid_bool(seated)) return DecodeError::BadEnum;
        p.seated_request = seated == 1;
        out.control = p;
        break;
    }
    case InputTag::Policy:
        out.control = PolicyInput{};
        break;
    default:
        return DecodeError::BadEnum;
    }
    if (!r.u64(out.client_tick_hint)) return DecodeError::Truncated;
    return std::nullopt;
}

Fail read_snapshot(Reader& r, Snapshot& out)
{
    std::uint16_t n = 0;
    if (!r.u64(out.tick) || !r.u64(out.sim_time_us) || !r.u16(n)) return DecodeError::Truncated;
    if (n > kMaxSnapshotAgents) return DecodeError::BadLength;
    if (r.remaining() < std::size_t{n} * kAgentRecordSize) return DecodeError::Truncated;
    out.agents.resize(n);
    for (auto& a : out.agents) {
        std::uint8_t kind = 0;
        r.u32(a.id);
        r.u8(kind);
        if (!valid_kind(kind)) return DecodeError::BadEnum;
        a.kind = static_cast<AgentKind>(kind);
        r.u8(a.flags);
        r.f64(a.x);
        r.f64(a.y);
        r.f32(a.heading);
        r.f32(a.speed);
        r.f32(a.accel);
        r.f32(a.aux);
    }
    return std::nullopt;
}

Fail read_payload(MsgType type, Reader& r, Payload& out)
{
    switch (type) {
    case MsgType::Hello: {
        Hello h;
        if (auto e = read_hello(r, h)) return e;
        out = std::move(h);
        return std::nullopt;
    }
    case MsgType::Welcome: {
        Welcome w;
        if (!r.u32(w.assigned_agent_id) || !r.u16(w.tick_rate_hz) || !r.u8(w.snapshot_div) ||
            !r.u64(w.scenario_hash))
            return DecodeError::Truncated;
        out = w;
        return std::nullopt;
    }
    case MsgType::Input: {
        Input in;
        if (auto e = read_input(r, in)) return e;
        out = in;
        return std::nullopt;
    }
    case MsgType::Snapshot: {
        Snapshot s;
        if (auto e = read_snapshot(r, s)) return e;
        out = std::move(s);
        return std::nullopt;
    }
    case MsgType::Event: {
        Event e;
        if (!r.u16(e.code) || !r.u32(e.subject) || !r.u32(e.object) || !r.f64(e.value))
            return DecodeError::Truncated;
        out = e;
        return std::nullopt;
    }
    case MsgType::Ping: {
        Ping p;
        if (!r.u64(p.t0)) return DecodeError::Truncated;
        out = p;
        return std::nullopt;
    }
    case MsgType::Pong: {
        Pong p;
        if (!r.u64(p.t0) || !r.u64(p.t1) || !r.u64(p.t2)) return DecodeError::Truncated;
        out = p;
        return std::nullopt;
    }
    case MsgType::QResponse: {
        QResponse q;
        if (!r.u8(q.instrument) || !r.u8(q.item) || !r.f32(q.value)) return DecodeError::Truncated;
        if (q.instrument > 4) return DecodeError::BadEnum;
        out = q;
        return std::nullopt;
    }
    case MsgType::Nback: {
        Nback nb;
        std::uint8_t kind = 0;
        if (!r.u8(kind) || !r.u8(nb.symbol) || !r.u32(nb.rt_hint_us)) return DecodeError::Truncated;
        if (!valid_bool(kind)) return DecodeError::BadEnum;
        nb.kind = static_cast<NbackKind>(kind);
        out = nb;
        return std::nullopt;
    }
    case MsgType::Bye:
        out = Bye{};
        return std::nullopt;
    }
    return DecodeError::UnknownType;
}

bool known_type(std::uint8_t t)
{
    return (t >= 0x01 && t <= 0x09) || t == 0x0F;
}

}  // namespace

MsgType type_of(const Payload& payload)
{
    static constexpr MsgType kTypes[] = {MsgType::Hello, MsgType::Welcome,   MsgType::Input,
                                         MsgType::Snapshot, MsgType::Event,  MsgType::Ping,
                                         MsgType::Pong,  MsgType::QResponse, MsgType::Nback,
                                         MsgType::Bye};
    return kTypes[payload.index()];
}

MsgType Message::type() const { return type_of(payload); }

std::string_view to_string(DecodeError e)
{
    switch (e) {
    case DecodeError::BadMagic: return "bad_magic";
    case DecodeError::BadVersion: return "bad_version";
    case DecodeError::Truncated: return "truncated";
    case DecodeError::UnknownType: return "unknown_type";
    case DecodeError::BadEnum: return "bad_enum";
    case DecodeError::BadLength: return "bad_length";
    case DecodeError::TrailingBytes: return "trailing_bytes";
    case DecodeError::Oversize: return "oversize";
    }
    return "?";
}

std::vector<std::uint8_t> encode(const Message& msg)
{
    Writer w(64);
    w.u32(kMagic);
    w.u8(kVersion);
    w.u8(static_cast<std::uint8_t>(msg.type()));
    w.u8(msg.header.flags);
    w.u8(msg.header.kind);
    w.u16(msg.header.session);
    w.u16(msg.header.agent_id);
    w.u32(msg.header.seq);
    w.u64(msg.header.timestamp_us);

    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Hello>) {
                if (p.display_name.size() > kMaxNameBytes)
                    throw std::length_error("HELLO display name longer than 32 bytes");
                w.u8(static_cast<std::uint8_t>(p.role));
                w.u8(static_cast<std::uint8_t>(p.display_name.size()));
                w.bytes(p.display_name);
            } else if constexpr (std::is_same_v<T, Welcome>) {
                w.u32(p.assigned_agent_id);
                w.u16(p.tick_rate_hz);
                w.u8(p.snapshot_div);
                w.u64(p.scenario_hash);
            } else if constexpr (std::is_same_v<T, Input>) {
                write_input(w, p);
            } else if constexpr (std::is_same_v<T, Snapshot>) {
                if (p.agents.size() > kMaxSnapshotAgents)
                    throw std::length_error("SNAPSHOT exceeds one datagram; use fragment_snapshot");
                w.u64(p.tick);
                w.u64(p.sim_time_us);
                w.u16(static_cast<std::uint16_t>(p.agents.size()));
                for (const auto& a : p.agents) write_record(w, a);
            } else if constexpr (std::is_same_v<T, Event>) {
                w.u16(p.code);
                w.u32(p.subject);
                w.u32(p.object);
                w.f64(p.value);
            } else if constexpr (std::is_same_v<T, Ping>) {
                w.u64(p.t0);
            } else if constexpr (std::is_same_v<T, Pong>) {
                w.u64(p.t0);
                w.u64(p.t1);
                w.u64(p.t2);
            } else if constexpr (std::is_same_v<T, QResponse>) {
                w.u8(p.instrument);
                w.u8(p.item);
                w.f32(p.value);
            } else if constexpr (std::is_same_v<T, Nback>) {
                w.u8(static_cast<std::uint8_t>(p.kind));
                w.u8(p.symbol);
                w.u32(p.rt_hint_us);
            }
        },
        msg.payload);
    return w.take();
}

Decoded decode(std::span<const std::uint8_t> bytes)
{
    Decoded result;
    if (bytes.size() > kMaxDatagram) {
        result.error = DecodeError::Oversize;
        return result;
    }
    Reader r(bytes);
    std::uint32_t magic = 0;
    std::uint8_t version = 0, type = 0;
    Message msg;
    if (!r.u32(magic)) return result;
    if (magic != kMagic) {
        result.error = DecodeError::BadMagic;
        return result;
    }
    if (!r.u8(version)) return result;
    if (version != kVersion) {
        result.error = DecodeError::BadVersion;
        return result;
    }
    if (!r.u8(type) || !r.u8(msg.header.flags) || !r.u8(msg.header.kind) || !r.u16(msg.header.session) ||
        !r.u16(msg.header.agent_id) || !r.u32(msg.header.seq) || !r.u64(msg.header.timestamp_us))
        return result;
    if (!known_type(type)) {
        result.error = DecodeError::UnknownType;
        return result;
    }
    if (msg.header.kind != kNoKind && !valid_kind(msg.header.kind)) {
        result.error = DecodeError::BadEnum;
        return result;
    }
    if (auto err = read_payload(static_cast<MsgType>(type), r, msg.payload)) {
        result.error = *err;
        return result;
    }
    if (r.remaining() != 0) {
        result.error = DecodeError::TrailingBytes;
        return result;
    }
    result.message = std::move(msg);
    return result;
}

std::vector<Message> fragment_snapshot(const Snapshot& snapshot, const Header& first)
{
    std::vector<Message> out;
    std::size_t i = 0;
    Header h = first;
    do {
        std::size_t n = std::min(kMaxSnapshotAgents, snapshot.agents.size() - i);
        Snapshot part{snapshot.tick, snapshot.sim_time_us, {}};
        part.agents.assign(snapshot.agents.begin() + static_cast<std::ptrdiff_t>(i),
                           snapshot.agents.begin() + static_cast<std::ptrdiff_t>(i + n));
        i += n;
        h.flags = static_cast<std::uint8_t>(first.flags & ~header_flags::kMoreFragments);
        if (i < snapshot.agents.size()) h.flags |= header_flags::kMoreFragments;
        out.push_back(Message{h, std::move(part)});
        ++h.seq;
    } while (i < snapshot.agents.size());
    return out;
}

std::optional<Snapshot> SnapshotAssembler::push(const Message& fragment)
{
    const auto* part = std::get_if<Snapshot>(&fragment.payload);
    if (part == nullptr) return std::nullopt;
    if (partial_ && partial_->tick != part->tick) partial_.reset();
    if (partial_ && part->tick < partial_->tick) return std::nullopt;
    if (!partial_) partial_ = Snapshot{part->tick, part->sim_time_us, {}};
    partial_->agents.insert(partial_->agents.end(), part->agents.begin(), part->agents.end());
    if (fragment.header.flags & header_flags::kMoreFragments) return std::nullopt;
    auto done = std::move(*partial_);
    partial_.reset();
    return done;
}

std::int64_t sample_offset(const ClockSample& s)
{
    // Differences of u64 stamps reinterpreted as signed; division truncates
    // toward zero.
    auto fwd = static_cast<std::int64_t>(s.t1 - s.t0);
    auto rev = static_cast<std::int64_t>(s.t2 - s.t3);
    return (fwd + rev) / 2;
}

std::uint64_t sample_delay(const ClockSample& s)
{
    auto rtt = static_cast<std::int64_t>(s.t3 - s.t0);
    auto hold = static_cast<std::int64_t>(s.t2 - s.t1);
    auto d = rtt - hold;
    return d > 0 ? static_cast<std::uint64_t>(d) : 0;
}

OffsetEstimate estimate_offset(std::span<const ClockSample> samples, std::size_t window)
{
    if (samples.empty()) throw std::invalid_argument("estimate_offset: no samples");
    if (window == 0) throw std::invalid_argument("estimate_offset: window must be >= 1");
    std::size_t begin = samples.size() > window ? samples.size() - window : 0;
    OffsetEstimate best{sample_offset(samples[begin]), sample_delay(samples[begin])};
    for (std::size_t i = begin + 1; i < samples.size(); ++i) {
        auto d = sample_delay(samples[i]);
        if (d < best.delay_us) best = {sample_offset(samples[i]), d};
    }
    return best;
}

GateResult sequence_gate(std::uint32_t last_seq, std::uint32_t incoming_seq)
{
    return incoming_seq > last_seq ? GateResult::Accept : GateResult::Stale;
}

GateResult SequenceTracker::admit(const Message& msg)
{
    auto key = std::make_tuple(msg.header.session, msg.header.agent_id, static_cast<std::uint8_t>(msg.type()));
    auto it = last_.find(key);
    if (it != last_.end() && sequence_gate(it->second, msg.header.seq) == GateResult::Stale)
        return GateResult::Stale;
    last_[key] = msg.header.seq;
    return GateResult::Accept;
}

AgentRecord to_record(const AgentState& state, std::uint8_t av_state)
{
    AgentRecord r;
    r.id = state.agent_id;
    r.kind = state.kind;
    std::uint8_t f = state.flags & (agent_flags::kYielding | agent_flags::kBraking | agent_flags::kInConflictZone);
    if (state.seated) f |= record_flags::kSeated;
    if (state.control_authority == ControlAuthority::Human) f |= record_flags::kHumanControl;
    if (state.kind == AgentKind::AutomatedVehicle) f |= static_cast<std::uint8_t>((av_state & 0x7) << record_flags::kAvStateShift);
    r.flags = f;
    r.x = state.pose.x;
    r.y = state.pose.y;
    r.heading = static_cast<float>(state.pose.heading);
    r.speed = static_cast<float>(state.kin.speed);
    r.accel = static_cast<float>(state.kin.accel);
    r.aux = static_cast<float>(state.kin.aux);
    return r;
}

}  // namespace mmsim::net
