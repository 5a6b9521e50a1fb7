#include "mmsim/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmsim {

std::string_view to_string(AgentKind kind)
{
    switch (kind) {
    case AgentKind::Driver: return "driver";
    case AgentKind::AutomatedVehicle: return "av";
    case AgentKind::Cyclist: return "cyclist";
    case AgentKind::Pedestrian: return "pedestrian";
    case AgentKind::TransitUser: return "transit_user";
    }
    return "unknown";
}

std::optional<AgentKind> agent_kind_from_string(std::string_view name)
{
    for (AgentKind k : kAllAgentKinds) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

bool is_vulnerable(AgentKind kind)
{
    return kind == AgentKind::Cyclist || kind == AgentKind::Pedestrian ||
           kind == AgentKind::TransitUser;
}

double max_speed(AgentKind kind)
{
    switch (kind) {
    case AgentKind::Driver:
    case AgentKind::AutomatedVehicle: return 60.0;
    case AgentKind::Cyclist: return 20.0;
    case AgentKind::Pedestrian:
    case AgentKind::TransitUser: return 4.0;
    }
    return 0.0;
}

double half_length(AgentKind kind)
{
    switch (kind) {
    case AgentKind::Driver:
    case AgentKind::AutomatedVehicle: return 2.25;
    case AgentKind::Cyclist: return 0.9;
    case AgentKind::Pedestrian:
    case AgentKind::TransitUser: return 0.3;
    }
    return 0.0;
}

double normalize_heading(double radians)
{
    double r = std::remainder(radians, 2.0 * kPi);
    if (r <= -kPi) {
        r += 2.0 * kPi;
    }
    if (r > kPi) {
        r -= 2.0 * kPi;
    }
    return r;
}

namespace {

bool finite_in(float v, float lo, float hi)
{
    return std::isfinite(v) && v >= lo && v <= hi;
}

}  // namespace

std::string validate_input(const ControlInput& input)
{
    using namespace input_limits;
    struct Visitor {
        std::string operator()(const DriverInput& in) const
        {
            if (!finite_in(in.steer_wheel, -kMaxSteerWheel, kMaxSteerWheel)) return "steer_wheel out of range";
            if (!finite_in(in.throttle, 0.0f, 1.0f)) return "throttle out of range";
            if (!finite_in(in.brake, 0.0f, 1.0f)) return "brake out of range";
            if (in.gear < -1 || in.gear > 6) return "gear out of range";
            return {};
        }
        std::string operator()(const CyclistInput& in) const
        {
            if (!finite_in(in.power, 0.0f, kMaxPower)) return "power out of range";
            if (!finite_in(in.cadence, 0.0f, kMaxCadence)) return "cadence out of range";
            if (!finite_in(in.steer, -kMaxBikeSteer, kMaxBikeSteer)) return "steer out of range";
            if (!finite_in(in.brake, 0.0f, 1.0f)) return "brake out of range";
            if (static_cast<std::uint8_t>(in.assist) > 3) return "assist level out of range";
            return {};
        }
        std::string operator()(const PedestrianInput& in) const
        {
            if (!finite_in(in.walk_speed, 0.0f, kMaxWalkSpeed)) return "walk_speed out of range";
            if (!finite_in(in.walk_heading, -kMaxWalkHeading, kMaxWalkHeading)) return "walk_heading out of range";
            return {};
        }
        std::string operator()(const PolicyInput&) const { return {}; }
    };
    return std::visit(Visitor{}, input);
}

bool input_matches_kind(const ControlInput& input, AgentKind kind)
{
    switch (kind) {
    case AgentKind::Driver: return std::holds_alternative<DriverInput>(input);
    case AgentKind::AutomatedVehicle:
        return std::holds_alternative<DriverInput>(input) || std::holds_alternative<PolicyInput>(input);
    case AgentKind::Cyclist: return std::holds_alternative<CyclistInput>(input);
    case AgentKind::Pedestrian:
    case AgentKind::TransitUser: return std::holds_alternative<PedestrianInput>(input);
    }
    return false;
}

double ApproachPath::grade_at(double s) const
{
    if (grades.empty()) {
        return 0.0;
    }
    if (s <= grades.front().s) {
        return grades.front().grade;
    }
    if (s >= grades.back().s) {
        return grades.back().grade;
    }
    for (std::size_t i = 1; i < grades.size(); ++i) {
        if (s <= grades[i].s) {
            const GradePoint& a = grades[i - 1];
            const GradePoint& b = grades[i];
            const double span = b.s - a.s;
            if (span <= 0.0) {
                return b.grade;
            }
            return a.grade + (b.grade - a.grade) * (s - a.s) / span;
        }
    }
    return grades.back().grade;
}

const Lane* MapModel::find_lane(std::string_view id) const
{
    for (const auto& l : lanes) {
        if (l.id == id) return &l;
    }
    return nullptr;
}

const ConflictPoint* MapModel::find_conflict_point(std::string_view id) const
{
    for (const auto& c : conflict_points) {
        if (c.id == id) return &c;
    }
    return nullptr;
}

const ApproachPath* MapModel::find_path(std::string_view id) const
{
    for (const auto& p : approach_paths) {
        if (p.id == id) return &p;
    }
    return nullptr;
}

double distance(Vec2 a, Vec2 b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

double polyline_length(const Polyline& path)
{
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        total += distance(path[i - 1], path[i]);
    }
    return total;
}

Pose2D point_at(const Polyline& path, double s)
{
    if (path.size() < 2) {
        throw GeometryError("path needs at least two vertices");
    }
    // Find the first and last non-degenerate segments for extrapolation.
    std::size_t first = 0;
    while (first + 1 < path.size() && distance(path[first], path[first + 1]) == 0.0) {
        ++first;
    }
    if (first + 1 >= path.size()) {
        throw GeometryError("degenerate path");
    }
    if (s <= 0.0) {
        const Vec2 a = path[first];
        const Vec2 b = path[first + 1];
        const double len = distance(a, b);
        const double ux = (b.x - a.x) / len;
        const double uy = (b.y - a.y) / len;
        return {a.x + ux * s, a.y + uy * s, std::atan2(uy, ux)};
    }
    double acc = 0.0;
    std::size_t last = first;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const Vec2 a = path[i - 1];
        const Vec2 b = path[i];
        const double len = distance(a, b);
        if (len == 0.0) {
            continue;
        }
        last = i - 1;
        if (s <= acc + len) {
            const double t = (s - acc) / len;
            return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, std::atan2(b.y - a.y, b.x - a.x)};
        }
        acc += len;
    }
    const Vec2 a = path[last];
    const Vec2 b = path[last + 1];
    const double len = distance(a, b);
    const double ux = (b.x - a.x) / len;
    const double uy = (b.y - a.y) / len;
    const double over = s - acc;
    return {b.x + ux * over, b.y + uy * over, std::atan2(uy, ux)};
}

namespace {

double cross(double ax, double ay, double bx, double by)
{
    return ax * by - ay * bx;
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2)
{
    auto orient = [](Vec2 a, Vec2 b, Vec2 c) {
        const double v = cross(b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
        return (v > 0.0) - (v < 0.0);
    };
    auto on_segment = [](Vec2 a, Vec2 b, Vec2 c) {
        return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) &&
               std::min(a.y, b.y) <= c.y && c.y <= std::max(a.y, b.y);
    };
    const int o1 = orient(p1, p2, q1);
    const int o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1);
    const int o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

struct NearestHit {
    double arc = 0.0;
    double dist2 = std::numeric_limits<double>::infinity();
    double lateral = 0.0;
    bool at_start = false;  // clamped to the first vertex of the first segment
    bool at_end = false;    // clamped to the last vertex of the last segment
    Vec2 first_dir;
    Vec2 last_dir;
    double total = 0.0;
};

NearestHit nearest_on_path(const Pose2D& pose, const Polyline& path)
{
    if (path.size() < 2) {
        throw GeometryError("path needs at least two vertices");
    }
    NearestHit hit;
    double acc = 0.0;
    bool seen_segment = false;
    std::size_t last_seg = 0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const Vec2 a = path[i - 1];
        const Vec2 b = path[i];
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        if (len2 == 0.0) {
            continue;
        }
        const double len = std::sqrt(len2);
        if (!seen_segment) {
            hit.first_dir = {dx / len, dy / len};
        }
        hit.last_dir = {dx / len, dy / len};
        last_seg = i;
        const double rx = pose.x - a.x;
        const double ry = pose.y - a.y;
        const double t = std::clamp((rx * dx + ry * dy) / len2, 0.0, 1.0);
        const double qx = a.x + dx * t;
        const double qy = a.y + dy * t;
        const double ex = pose.x - qx;
        const double ey = pose.y - qy;
        const double d2 = ex * ex + ey * ey;
        // Strict comparison keeps the earliest (smallest arc) candidate on ties.
        if (d2 < hit.dist2) {
            hit.dist2 = d2;
            hit.arc = acc + len * t;
            const double side = cross(dx, dy, ex, ey);
            const double d = std::sqrt(d2);
            hit.lateral = side > 0.0 ? d : (side < 0.0 ? -d : 0.0);
            hit.at_start = !seen_segment && t == 0.0;
            hit.at_end = false;
        }
        seen_segment = true;
        acc += len;
    }
    if (!seen_segment || acc == 0.0) {
        throw GeometryError("degenerate (zero-length) path");
    }
    // Recheck whether the winner lies on the final vertex.
    hit.total = acc;
    hit.at_end = hit.arc == acc && last_seg > 0;
    return hit;
}

}  // namespace

bool polyline_self_intersects(const Polyline& path)
{
    const std::size_t n = path.size();
    if (n < 4) {
        return false;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 2; j + 1 < n; ++j) {
            if (segments_intersect(path[i], path[i + 1], path[j], path[j + 1])) {
                return true;
            }
        }
    }
    return false;
}

PathProjection project_to_path(const Pose2D& pose, const Polyline& path)
{
    const NearestHit hit = nearest_on_path(pose, path);
    return {hit.arc, hit.lateral};
}

double path_progress(const Pose2D& pose, const Polyline& path)
{
    const NearestHit hit = nearest_on_path(pose, path);
    if (hit.at_end) {
        const Vec2 end = path.back();
        const double along = (pose.x - end.x) * hit.last_dir.x + (pose.y - end.y) * hit.last_dir.y;
        if (along > 0.0) {
            return hit.total + along;
        }
    }
    if (hit.at_start) {
        const Vec2 start = path.front();
        const double along = (pose.x - start.x) * hit.first_dir.x + (pose.y - start.y) * hit.first_dir.y;
        if (along < 0.0) {
            return along;
        }
    }
    return hit.arc;
}

double signed_distance_to_conflict(const AgentState& state, const ApproachPath& path)
{
    return polyline_length(path.points) - path_progress(state.pose, path.points);
}

ConflictDistance distance_to_conflict(const AgentState& state, const ApproachPath& path)
{
    const double remaining = signed_distance_to_conflict(state, path);
    if (remaining <= 0.0) {
        return {0.0, remaining < 0.0};
    }
    return {remaining, false};
}

}  // namespace mmsim
