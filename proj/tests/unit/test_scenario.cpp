#include <doctest.h>

#include "../support/fixtures.hpp"
#include "mmsim/scenario.hpp"

#include <json.hpp>

#include <cmath>

using namespace mmsim;
using nlohmann::json;

namespace {

json minimal()
{
    return json::parse(R"({
      "name": "one_walker",
      "conflict_point": "cp",
      "sync_tta_s": 12.0,
      "map": {
        "conflict_points": [{"id": "cp", "x": 0, "y": 0}],
        "paths": [{"id": "ped_path", "points": [[0, -30], [0, 0]], "conflict_point": "cp"}]
      },
      "agents": [
        {"id": 3, "name": "pedestrian", "kind": "pedestrian", "path": "ped_path",
         "target_speed": 1.5, "controlled_by": "script"}
      ]
    })");
}

bool has_message(const LoadResult& r, const std::string& needle)
{
    for (const auto& d : r.diagnostics) {
        if (d.message.find(needle) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("minimal scenario loads cleanly")
{
    const auto r = load_scenario(minimal().dump());
    CHECK(r.ok());
    CHECK(r.diagnostics.empty());
}

TEST_CASE("unknown path is diagnosed")
{
    auto j = minimal();
    j["agents"][0]["path"] = "p9";
    const auto r = load_scenario(j.dump());
    CHECK_FALSE(r.ok());
    CHECK(has_message(r, "unknown path p9"));
}

TEST_CASE("placement beyond the path surfaces as a diagnostic")
{
    auto j = minimal();
    j["map"]["paths"].push_back({{"id", "short"}, {"points", {{-50, 0}, {0, 0}}}, {"conflict_point", "cp"}});
    j["agents"].push_back({{"id", 1}, {"name", "car"}, {"kind", "driver"}, {"path", "short"},
                           {"target_speed", 8.333}, {"controlled_by", "script"}});
    const auto r = load_scenario(j.dump());
    CHECK_FALSE(r.ok());
    CHECK(has_message(r, "PlacementError"));
    CHECK(has_message(r, "car"));
}

TEST_CASE("syntax errors carry a line and column")
{
    const auto r = load_scenario("{\n  \"name\": \"x\",\n  oops\n}");
    REQUIRE_FALSE(r.ok());
    REQUIRE_FALSE(r.diagnostics.empty());
    CHECK(r.diagnostics[0].line == 3);
    CHECK(r.diagnostics[0].column > 0);
}

TEST_CASE("semantic errors are all collected")
{
    auto j = minimal();
    j["agents"][0]["path"] = "p9";
    j["agents"][0]["kind"] = "hovercraft";
    j["conflict_point"] = "nowhere";
    const auto r = load_scenario(j.dump());
    CHECK(r.diagnostics.size() >= 3);
}

TEST_CASE("three-mode crossing placement table")
{
    const auto spec = fixtures::scenario("crossing.json");
    const auto pl = solve_tta_placement(spec);
    REQUIRE(pl.size() == 3);
    CHECK(pl[0].distance == 100.0);
    CHECK(pl[1].distance == 50.0);
    CHECK(pl[2].distance == 18.0);
    CHECK(pl[0].arc_start == doctest::Approx(30.0));
}

TEST_CASE("doubling the synchronization time doubles every distance")
{
    auto spec = fixtures::scenario("crossing.json");
    spec.sync_tta_s = 5.0;
    const auto a = solve_tta_placement(spec);
    spec.sync_tta_s = 10.0;
    const auto b = solve_tta_placement(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i].distance == 2.0 * a[i].distance);
}

TEST_CASE("placement error names the agent")
{
    auto spec = fixtures::scenario("crossing.json");
    spec.sync_tta_s = 30.0;
    try {
        solve_tta_placement(spec);
        FAIL("expected PlacementError");
    } catch (const PlacementError& e) {
        CHECK(e.agent() == "car");
    }
}

TEST_CASE("serialize round trip")
{
    for (const char* name : {"crossing.json", "crossing_av.json", "crossing_human_car.json", "cycling_signalized.json",
                             "cycling_bike_lane.json"}) {
        const auto spec = fixtures::scenario(name);
        const auto again = load_scenario(serialize(spec));
        REQUIRE(again.ok());
        CHECK(*again.spec == spec);
        CHECK(scenario_hash(*again.spec) == scenario_hash(spec));
    }
}

TEST_CASE("hash changes with content")
{
    auto spec = fixtures::scenario("crossing.json");
    const auto h = scenario_hash(spec);
    spec.agents[0].target_speed += 0.001;
    CHECK(scenario_hash(spec) != h);
}

namespace {

struct TriggerHarness {
    ScenarioSpec spec;
    std::map<std::uint32_t, const ApproachPath*> paths;
    std::vector<AgentState> agents;
    TriggerState state;

    explicit TriggerHarness(ScenarioSpec s) : spec(std::move(s))
    {
        const auto arcs = initial_arcs(spec);
        for (const auto& a : spec.agents) {
            const ApproachPath* p = spec.map.find_path(a.path);
            paths[a.id] = p;
            AgentState st;
            st.agent_id = a.id;
            st.kind = a.kind;
            st.pose = point_at(p->points, arcs.at(a.id));
            st.kin.speed = a.target_speed;
            agents.push_back(st);
        }
    }

    TriggerResult eval(std::uint64_t tick, double t)
    {
        TriggerWorld w{agents, &spec, &paths, t, std::nullopt};
        return evaluate_triggers(w, tick, state);
    }
};

}  // namespace

TEST_CASE("time_elapsed 0 fires on the first tick, once")
{
    auto spec = fixtures::scenario("crossing.json");
    spec.triggers = {Trigger{"t0", TimeElapsed{0.0}, EmitEvent{0x1000}, false}};
    TriggerHarness h(spec);
    CHECK(h.eval(0, 0.0).actions.size() == 1);
    CHECK(h.eval(1, 0.01).actions.empty());
}

TEST_CASE("agent_within 35 m fires at tick 0 for the 18 m pedestrian")
{
    auto spec = fixtures::scenario("crossing.json");
    spec.triggers = {Trigger{"near", AgentWithin{35.0, "cp", 3u}, EmitEvent{0x1000}, false}};
    TriggerHarness h(spec);
    CHECK(h.eval(0, 0.0).actions.size() == 1);
}

TEST_CASE("repeating triggers fire on each rising edge")
{
    auto spec = fixtures::scenario("crossing.json");
    spec.triggers = {Trigger{"near", AgentWithin{5.0, "cp", 3u}, EmitEvent{0x1000}, true}};
    TriggerHarness h(spec);
    int fired = 0;
    const double ys[] = {-18, -4, -3, -10, -2, -20};
    for (std::uint64_t i = 0; i < 6; ++i) {
        h.agents[2].pose = {0, ys[i], kPi / 2};
        fired += static_cast<int>(h.eval(i, i * 0.01).actions.size());
    }
    CHECK(fired == 2);
}

TEST_CASE("actions naming a missing agent are dropped")
{
    auto spec = fixtures::scenario("crossing.json");
    spec.triggers = {Trigger{"tk", TimeElapsed{0.0}, RequestTakeover{1}, false}};
    TriggerHarness h(spec);
    h.agents.erase(h.agents.begin());
    const auto r = h.eval(0, 0.0);
    CHECK(r.actions.empty());
    REQUIRE(r.dropped.size() == 1);
    CHECK(r.dropped[0].missing_agent == 1u);
}

TEST_CASE("pair ttc of the crossing car and pedestrian")
{
    TriggerHarness h(fixtures::scenario("crossing.json"));
    const auto ttc = pair_ttc(h.agents[0], h.paths[1], h.agents[2], h.paths[3]);
    REQUIRE(ttc);
    CHECK(*ttc < 12.0);
    CHECK(*ttc > 11.0);
}

TEST_CASE("signal plan cycles")
{
    SignalPlan p{25.0, 20.0, 0.0};
    CHECK(signal_phase_at(p, 0.0) == SignalPhase::Green);
    CHECK(signal_phase_at(p, 24.99) == SignalPhase::Green);
    CHECK(signal_phase_at(p, 25.0) == SignalPhase::Red);
    CHECK(signal_phase_at(p, 45.0) == SignalPhase::Green);
}
