#include <doctest.h>

#include "../support/fixtures.hpp"
#include "mmsim/av_policy.hpp"
#include "mmsim/sim_server.hpp"

#include <cmath>
#include <random>

using namespace mmsim;

TEST_CASE("eHMI channel table")
{
    CHECK(set_ehmi(AvState::Cruising) == EhmiState{false, LightBand::Off, AudioCue::None, false});
    CHECK(set_ehmi(AvState::Approaching) == EhmiState{false, LightBand::Aware, AudioCue::None, true});
    CHECK(set_ehmi(AvState::Yielding) == EhmiState{true, LightBand::Yielding, AudioCue::Chime, true});
    CHECK(set_ehmi(AvState::Stopped) == EhmiState{true, LightBand::Yielding, AudioCue::None, false});
    CHECK(set_ehmi(AvState::Resuming) == EhmiState{false, LightBand::Aware, AudioCue::None, false});
}

TEST_CASE("eHMI pack round trip and masking")
{
    for (auto s : kAllAvStates) {
        const auto e = set_ehmi(s);
        CHECK(unpack_ehmi(pack_ehmi(e)) == e);
    }
    EhmiMask audio_off;
    audio_off.audio = false;
    const auto masked = apply_mask(set_ehmi(AvState::Yielding), audio_off);
    CHECK(masked.audio_cue == AudioCue::None);
    CHECK(masked.projection_on);
    CHECK(apply_mask(set_ehmi(AvState::Yielding), EhmiMask{false, false, false, false}) == EhmiState{});
}

TEST_CASE("takeover examples")
{
    AgentState av;
    av.agent_id = 1;
    av.kind = AgentKind::AutomatedVehicle;
    av.control_authority = ControlAuthority::Policy;

    DriverInput brake;
    brake.brake = 0.5f;
    const auto r = takeover(av, brake, 10.0, 8.2);
    REQUIRE(r.event);
    CHECK(r.state.control_authority == ControlAuthority::Human);
    CHECK(*r.event->time_to_intervention() == doctest::Approx(1.8));

    DriverInput light;
    light.brake = 0.04f;
    CHECK_FALSE(takeover(av, light, 10.0, 8.2).event);

    DriverInput steer;
    steer.steer_wheel = 0.2f;
    const auto spont = takeover(av, steer, 3.0, std::nullopt);
    REQUIRE(spont.event);
    CHECK_FALSE(spont.event->request_time);
    CHECK_FALSE(spont.event->time_to_intervention());
}

TEST_CASE("takeover latches under fuzzed input")
{
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<float> u(0.0f, 0.2f), st(-0.3f, 0.3f);
    for (int run = 0; run < 50; ++run) {
        AgentState av;
        av.kind = AgentKind::AutomatedVehicle;
        av.control_authority = ControlAuthority::Policy;
        bool human = false;
        int events = 0;
        for (int i = 0; i < 200; ++i) {
            DriverInput in;
            in.brake = u(rng);
            in.throttle = u(rng);
            in.steer_wheel = st(rng);
            const auto r = takeover(av, in, i * 0.01, std::nullopt);
            if (r.event) ++events;
            if (human) CHECK(r.state.control_authority == ControlAuthority::Human);
            av = r.state;
            human = av.control_authority == ControlAuthority::Human;
        }
        CHECK(events <= 1);
    }
}

namespace {

struct AvWorld {
    MapModel map;
    std::map<std::uint32_t, const ApproachPath*> paths;
    std::vector<AgentState> agents;

    AvWorld()
    {
        map.conflict_points = {{"cp", {0, 0}}};
        map.approach_paths = {{"car", {{-130, 0}, {0, 0}}, "cp", "", {}}, {"ped", {{0, -30}, {0, 0}}, "cp", "", {}}};
    }

    PolicyWorld view()
    {
        paths.clear();
        paths[1] = &map.approach_paths[0];
        for (const auto& a : agents) {
            if (a.agent_id != 1) paths[a.agent_id] = &map.approach_paths[1];
        }
        return {agents, &map, &paths};
    }
};

}  // namespace

TEST_CASE("no VRU in range keeps the AV cruising")
{
    AvWorld w;
    AgentState av;
    av.agent_id = 1;
    av.kind = AgentKind::AutomatedVehicle;
    av.pose = {-100, 0, 0};
    av.kin.speed = AvParams{}.v_cruise;
    AgentState ped;
    ped.agent_id = 3;
    ped.kind = AgentKind::Pedestrian;
    ped.pose = {0, -60, kPi / 2};  // beyond the detection radius
    w.agents = {av, ped};
    AvMemory mem;
    const VehicleParams vp;
    for (int i = 0; i < 500; ++i) {
        const auto d = av_decide(w.view(), 1, mem, AvParams{}, vp, 0.01);
        mem = d.memory;
        w.agents[0] = step_vehicle(w.agents[0], d.actuation, vp, 0.0, 0.01);
        CHECK(mem.state == AvState::Cruising);
    }
    CHECK(std::abs(w.agents[0].kin.speed - AvParams{}.v_cruise) < 0.1);
}

TEST_CASE("state machine is total")
{
    AvWorld w;
    AgentState av;
    av.agent_id = 1;
    av.kind = AgentKind::AutomatedVehicle;
    AgentState ped;
    ped.agent_id = 3;
    ped.kind = AgentKind::Pedestrian;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> x(-120, 10), y(-30, 5), v(0, 10);
    for (auto s : kAllAvStates) {
        for (int i = 0; i < 100; ++i) {
            av.pose = {x(rng), 0, 0};
            av.kin.speed = v(rng);
            ped.pose = {0, y(rng), kPi / 2};
            ped.kin.speed = v(rng) / 5;
            w.agents = {av, ped};
            AvMemory mem{s, 0.0};
            CHECK_NOTHROW(av_decide(w.view(), 1, mem, AvParams{}, VehicleParams{}, 0.01));
        }
    }
    w.agents = {ped};
    CHECK_THROWS_AS(av_decide(w.view(), 1, AvMemory{}, AvParams{}, VehicleParams{}, 0.01), std::invalid_argument);
}

TEST_CASE("AV yields to the crossing pedestrian and stops short, then resumes")
{
    auto spec = fixtures::scenario("crossing_av.json");
    spec.triggers.clear();
    SessionConfig cfg;
    cfg.scenario = spec;
    Session s(cfg);
    bool yielded_early = false;
    bool saw_yield = false;
    bool saw_resume = false;
    double min_stop_gap = 1e9;
    const auto& path = *s.path_of(1);
    for (int i = 0; i < 3000; ++i) {
        s.run_tick();
        const auto st = s.av_state(1);
        REQUIRE(st);
        const AgentState* av = s.find(1);
        const double d = signed_distance_to_conflict(*av, path);
        if (*st == AvState::Yielding && !saw_yield) {
            saw_yield = true;
            yielded_early = d - half_length(AgentKind::AutomatedVehicle) > spec.av_params.stop_buffer;
        }
        if (saw_yield && *st == AvState::Resuming) saw_resume = true;
        if (std::abs(av->kin.speed) < 0.05 && d > 0) {
            min_stop_gap = std::min(min_stop_gap, d - half_length(AgentKind::AutomatedVehicle));
        }
    }
    CHECK(saw_yield);
    CHECK(yielded_early);
    CHECK(saw_resume);
    CHECK(min_stop_gap >= 2.0);
    CHECK(s.av_state(1) == AvState::Cruising);
}

TEST_CASE("pedals invert the longitudinal model")
{
    const VehicleParams vp;
    for (double a : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
        AgentState st;
        st.kin.speed = 8.0;
        const auto n = step_vehicle(st, pedals_for_accel(a, 8.0, 0.0, vp), vp, 0.0, 0.01);
        CHECK(n.kin.accel == doctest::Approx(a).epsilon(1e-5));
    }
}
