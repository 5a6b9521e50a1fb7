#pragma once

// Shared domain types: agents, kinematics, control inputs and map geometry.
//
// World frame is right-handed, meters, +x east, +y north; heading 0 points
// along +x and increases counter-clockwise.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mmsim {

inline constexpr double kPi = 3.14159265358979323846;

enum class AgentKind : std::uint8_t {
    Driver = 0,
    AutomatedVehicle = 1,
    Cyclist = 2,
    Pedestrian = 3,
    TransitUser = 4,
};

inline constexpr std::array<AgentKind, 5> kAllAgentKinds = {
    AgentKind::Driver, AgentKind::AutomatedVehicle, AgentKind::Cyclist,
    AgentKind::Pedestrian, AgentKind::TransitUser};

std::string_view to_string(AgentKind kind);
std::optional<AgentKind> agent_kind_from_string(std::string_view name);

/// True for pedestrians, transit users and cyclists.
bool is_vulnerable(AgentKind kind);

/// Speed cap per kind (m/s): vehicles 60, cyclists 20, walkers 4.
double max_speed(AgentKind kind);

/// Half the body length along the direction of travel, used by occupancy TTC.
double half_length(AgentKind kind);

/// Wraps an angle into (-pi, pi].
double normalize_heading(double radians);

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;

    Vec2 position() const { return {x, y}; }
    friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

struct KinematicState {
    double speed = 0.0;     // m/s, signed for vehicles in reverse
    double accel = 0.0;     // m/s^2
    double yaw_rate = 0.0;  // rad/s
    double aux = 0.0;       // cadence rpm (cyclist), step rate Hz (walkers)

    friend bool operator==(const KinematicState&, const KinematicState&) = default;
};

enum class ControlAuthority : std::uint8_t { Human = 0, Policy = 1 };

namespace agent_flags {
inline constexpr std::uint8_t kYielding = 1u << 0;
inline constexpr std::uint8_t kBraking = 1u << 1;
inline constexpr std::uint8_t kInConflictZone = 1u << 2;
}  // namespace agent_flags

struct AgentState {
    std::uint32_t agent_id = 0;
    AgentKind kind = AgentKind::Driver;
    Pose2D pose;
    KinematicState kin;
    bool seated = false;
    ControlAuthority control_authority = ControlAuthority::Human;
    std::uint8_t flags = 0;

    bool has_flag(std::uint8_t f) const { return (flags & f) != 0; }
    void set_flag(std::uint8_t f, bool on) { flags = on ? (flags | f) : (flags & ~f); }

    friend bool operator==(const AgentState&, const AgentState&) = default;
};

// ---------------------------------------------------------------------------
// Control inputs. Scalars are float because that is their wire width; keeping
// the in-memory type identical makes encode/decode an exact round trip.

struct DriverInput {
    float steer_wheel = 0.0f;  // rad at the hand wheel
    float throttle = 0.0f;     // [0, 1]
    float brake = 0.0f;        // [0, 1]
    std::int8_t gear = 1;      // -1 reverse, 0 neutral, 1..6

    friend bool operator==(const DriverInput&, const DriverInput&) = default;
};

enum class AssistLevel : std::uint8_t { Off = 0, Eco = 1, Tour = 2, Turbo = 3 };

struct CyclistInput {
    float power = 0.0f;    // W
    float cadence = 0.0f;  // rpm
    float steer = 0.0f;    // rad at the bars
    float brake = 0.0f;    // [0, 1]
    AssistLevel assist = AssistLevel::Off;

    friend bool operator==(const CyclistInput&, const CyclistInput&) = default;
};

struct PedestrianInput {
    float walk_speed = 0.0f;    // m/s
    float walk_heading = 0.0f;  // rad
    bool seated_request = false;

    friend bool operator==(const PedestrianInput&, const PedestrianInput&) = default;
};

/// The AV policy generates its own actuation; the input carries nothing.
struct PolicyInput {
    friend bool operator==(const PolicyInput&, const PolicyInput&) = default;
};

using ControlInput = std::variant<DriverInput, CyclistInput, PedestrianInput, PolicyInput>;

/// Declared input ranges. Anything outside is rejected, never clamped.
namespace input_limits {
inline constexpr float kMaxSteerWheel = 8.0f;  // ~460 deg either way
inline constexpr float kMaxBikeSteer = 1.0f;
inline constexpr float kMaxPower = 2500.0f;
inline constexpr float kMaxCadence = 250.0f;
inline constexpr float kMaxWalkSpeed = 10.0f;
inline constexpr float kMaxWalkHeading = 4.0f * static_cast<float>(kPi);
}  // namespace input_limits

/// Returns an empty string when the input is valid, else the first violation.
std::string validate_input(const ControlInput& input);

/// Whether a given input alternative may drive an agent of this kind.
bool input_matches_kind(const ControlInput& input, AgentKind kind);

// ---------------------------------------------------------------------------
// Map geometry.

using Polyline = std::vector<Vec2>;

struct GradePoint {
    double s = 0.0;      // arc length, m
    double grade = 0.0;  // rise over run

    friend bool operator==(const GradePoint&, const GradePoint&) = default;
};

struct Lane {
    std::string id;
    double width = 3.5;
    Polyline centerline;

    friend bool operator==(const Lane&, const Lane&) = default;
};

struct Crosswalk {
    std::string id;
    std::vector<Vec2> polygon;

    friend bool operator==(const Crosswalk&, const Crosswalk&) = default;
};

struct ConflictPoint {
    std::string id;
    Vec2 position;

    friend bool operator==(const ConflictPoint&, const ConflictPoint&) = default;
};

struct ApproachPath {
    std::string id;
    Polyline points;
    std::string conflict_point;  // id; the last vertex sits on it
    std::string lane;            // optional lane id for width lookup
    std::vector<GradePoint> grades;

    double grade_at(double s) const;
    friend bool operator==(const ApproachPath&, const ApproachPath&) = default;
};

struct MapModel {
    std::vector<Lane> lanes;
    std::vector<Crosswalk> crosswalks;
    std::vector<ConflictPoint> conflict_points;
    std::vector<ApproachPath> approach_paths;

    const Lane* find_lane(std::string_view id) const;
    const ConflictPoint* find_conflict_point(std::string_view id) const;
    const ApproachPath* find_path(std::string_view id) const;
    friend bool operator==(const MapModel&, const MapModel&) = default;
};

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double polyline_length(const Polyline& path);

/// Point on the polyline at arc length `s`. Values outside [0, length]
/// extrapolate along the first/last segment.
Pose2D point_at(const Polyline& path, double s);

bool polyline_self_intersects(const Polyline& path);

struct PathProjection {
    double arc_length = 0.0;
    double lateral_offset = 0.0;  // positive to the left of travel
};

/// Global nearest point on the polyline; ties go to the smallest arc length.
/// Throws GeometryError for fewer than two vertices or zero total length.
PathProjection project_to_path(const Pose2D& pose, const Polyline& path);

/// Like project_to_path, but a pose past the final vertex (in the direction of
/// the last segment) reports arc length beyond the path end, and likewise a
/// pose before the first vertex reports a negative arc length.
double path_progress(const Pose2D& pose, const Polyline& path);

struct ConflictDistance {
    double meters = 0.0;
    bool passed = false;
};

/// Remaining distance along the approach path to its conflict point.
ConflictDistance distance_to_conflict(const AgentState& state, const ApproachPath& path);

/// Same as distance_to_conflict but signed: negative once past the point.
double signed_distance_to_conflict(const AgentState& state, const ApproachPath& path);

double distance(Vec2 a, Vec2 b);

}  // namespace mmsim
