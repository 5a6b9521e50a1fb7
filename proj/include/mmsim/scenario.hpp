#pragma once

// Scenario files: the declarative description of a session, its validation,
// time-to-arrival equalized placement and the runtime trigger system.

#include "mmsim/av_policy.hpp"
#include "mmsim/dynamics.hpp"
#include "mmsim/world_model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mmsim {

enum class Controller : std::uint8_t { Human = 0, Policy = 1, Script = 2 };

std::string_view to_string(Controller c);

struct AgentSpec {
    std::uint32_t id = 0;
    std::string name;
    AgentKind kind = AgentKind::Pedestrian;
    std::string path;  // approach path id
    double target_speed = 0.0;  // m/s
    Controller controlled_by = Controller::Script;
    bool synchronized = true;   // placed by the TTA solver
    bool supervised = false;    // a Policy AV that a human may join and take over
    bool wait_for_trigger = false;  // scripts hold still until a SpawnScript action
    std::optional<double> initial_speed;   // default: target speed for scripts/policy, 0 for humans
    std::optional<double> start_arc;       // explicit start for unsynchronized agents
    std::optional<double> despawn_after_m;  // scripts leave the world this far past the conflict point
    std::optional<TransitSchedule> transit;  // scripted transit vehicle (Driver kind)
    double zone_half_length = 6.0;
    double zone_half_width = 1.5;

    friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

// -- triggers ---------------------------------------------------------------

enum class SignalPhase : std::uint8_t { Green = 0, Red = 1 };
std::string_view to_string(SignalPhase p);

struct AgentWithin {
    double radius = 0.0;
    std::string point;                   // conflict point id
    std::optional<std::uint32_t> agent;  // any agent when absent
    friend bool operator==(const AgentWithin&, const AgentWithin&) = default;
};
struct TimeElapsed {
    double seconds = 0.0;
    friend bool operator==(const TimeElapsed&, const TimeElapsed&) = default;
};
struct TtcBelow {
    double seconds = 0.0;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    friend bool operator==(const TtcBelow&, const TtcBelow&) = default;
};
struct SignalPhaseIs {
    SignalPhase phase = SignalPhase::Green;
    friend bool operator==(const SignalPhaseIs&, const SignalPhaseIs&) = default;
};
using TriggerCondition = std::variant<AgentWithin, TimeElapsed, TtcBelow, SignalPhaseIs>;

struct EmitEvent {
    std::uint16_t code = 0;
    friend bool operator==(const EmitEvent&, const EmitEvent&) = default;
};
struct RequestTakeover {
    std::uint32_t agent = 0;
    friend bool operator==(const RequestTakeover&, const RequestTakeover&) = default;
};
enum class Instrument : std::uint8_t { TLX = 0, PANAS = 1, VA = 2, STRESS = 3, TIMEPERC = 4 };
std::string_view to_string(Instrument i);
std::optional<Instrument> instrument_from_string(std::string_view name);

struct StartQuestionnaire {
    Instrument instrument = Instrument::TLX;
    friend bool operator==(const StartQuestionnaire&, const StartQuestionnaire&) = default;
};
struct StartNback {
    std::uint8_t n = 2;
    std::uint16_t length = 20;
    friend bool operator==(const StartNback&, const StartNback&) = default;
};
struct SpawnScript {
    std::uint32_t agent = 0;
    friend bool operator==(const SpawnScript&, const SpawnScript&) = default;
};
using TriggerAction = std::variant<EmitEvent, RequestTakeover, StartQuestionnaire, StartNback, SpawnScript>;

struct Trigger {
    std::string id;
    TriggerCondition condition;
    TriggerAction action;
    bool repeating = false;  // fires on every false -> true edge instead of once

    friend bool operator==(const Trigger&, const Trigger&) = default;
};

struct SignalPlan {
    double green_s = 30.0;
    double red_s = 30.0;
    double offset_s = 0.0;

    friend bool operator==(const SignalPlan&, const SignalPlan&) = default;
};

/// Vehicle phase at sim time t (the crossing sees the complement).
SignalPhase signal_phase_at(const SignalPlan& plan, double t);

struct ScenarioSpec {
    std::string name;
    MapModel map;
    std::vector<AgentSpec> agents;
    std::string conflict_point;
    double sync_tta_s = 12.0;
    std::vector<Trigger> triggers;
    EhmiMask ehmi_mask;
    std::optional<SignalPlan> signal_plan;
    std::uint64_t seed = 0;
    bool pedestrian_ramp_correction = false;
    AvParams av_params;

    const AgentSpec* find_agent(std::uint32_t id) const;
    friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

// -- diagnostics --------------------------------------------------------------

enum class Severity : std::uint8_t { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
    std::size_t line = 0;    // 1-based, 0 when not applicable
    std::size_t column = 0;
};

struct LoadResult {
    std::optional<ScenarioSpec> spec;  // present only when there are no errors
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return spec.has_value(); }
};

/// Parses and validates a scenario document. Syntax errors stop with a
/// line/column diagnostic; semantic errors are all collected.
LoadResult load_scenario(std::string_view text);

/// Semantic checks on an in-memory spec.
std::vector<Diagnostic> validate(const ScenarioSpec& spec);

std::string serialize(const ScenarioSpec& spec);

/// FNV-1a 64 over the canonical serialization.
std::uint64_t scenario_hash(const ScenarioSpec& spec);

// -- placement ----------------------------------------------------------------

class PlacementError : public std::runtime_error {
public:
    PlacementError(std::string agent, const std::string& what)
        : std::runtime_error(what), agent_(std::move(agent)) {}
    const std::string& agent() const { return agent_; }

private:
    std::string agent_;
};

struct Placement {
    std::uint32_t agent_id = 0;
    std::string name;
    AgentKind kind = AgentKind::Pedestrian;
    double speed = 0.0;
    double distance = 0.0;   // distance to the conflict point
    double arc_start = 0.0;  // start position along the approach path
};

/// Initial distance d_i = v_i * T for each synchronized agent. Throws
/// PlacementError naming the first agent whose path is too short.
std::vector<Placement> solve_tta_placement(const ScenarioSpec& spec);

/// Start arc for every agent (synchronized or not), keyed by agent id.
std::map<std::uint32_t, double> initial_arcs(const ScenarioSpec& spec);

// -- runtime triggers -------------------------------------------------------------

struct TriggerWorld {
    std::span<const AgentState> agents;
    const ScenarioSpec* spec = nullptr;
    const std::map<std::uint32_t, const ApproachPath*>* paths = nullptr;
    double sim_time = 0.0;
    std::optional<SignalPhase> phase;
};

struct TriggerState {
    std::vector<bool> fired;
    std::vector<bool> was_true;

    friend bool operator==(const TriggerState&, const TriggerState&) = default;
};

struct FiredAction {
    std::size_t trigger = 0;
    TriggerAction action;
};

struct DroppedAction {
    std::size_t trigger = 0;
    std::uint32_t missing_agent = 0;
};

struct TriggerResult {
    std::vector<FiredAction> actions;
    std::vector<DroppedAction> dropped;
};

/// Evaluates every trigger in declaration order against the post-step world.
TriggerResult evaluate_triggers(const TriggerWorld& world, std::uint64_t tick, TriggerState& state);

/// Time-to-collision between two agents using their approach paths: crossing
/// occupancy when their paths share a conflict point, car following when they
/// share a path, otherwise none.
std::optional<double> pair_ttc(const AgentState& a, const ApproachPath* pa, const AgentState& b,
                               const ApproachPath* pb);

}  // namespace mmsim
