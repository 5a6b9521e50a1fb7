#pragma once

// Post-hoc behavioral and surrogate-safety metrics computed from replay logs,
// plus instrument scoring and N-back grading.
//
// Everything here is a pure function of its arguments. A Recording is built
// by re-running a replay log, so metrics on an original log and on its replay
// agree exactly.

#include "mmsim/events.hpp"
#include "mmsim/scenario.hpp"
#include "mmsim/sim_server.hpp"
#include "mmsim/surrogate.hpp"
#include "mmsim/world_model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmsim::metrics {

/// Default thresholds. Every value can be overridden on the metrics command.
struct MetricsParams {
    double brake_threshold = 0.05;     // pedal fraction counting as a brake response
    double walk_speed = 0.3;           // m/s, crossing initiation speed
    double walk_hold_s = 0.2;          // s the walk speed must be held
    double yield_drop = 0.3;           // fractional speed drop counted as yielding
    double yield_radius_m = 20.0;      // m from the conflict point
    double reversal_deg = 2.0;         // steering reversal gap
    double accel_event = 1.0;          // m/s^2, |a| above this is a harsh event
    double nback_window_s = 2.5;
    double vehicle_width_m = 1.8;
};

struct TrajectorySample {
    std::uint64_t tick = 0;
    double t = 0.0;  // sim seconds
    Pose2D pose;
    KinematicState kin;
    std::uint8_t flags = 0;
    bool seated = false;
    std::optional<ControlInput> control;  // human input applied this tick
};

struct Trajectory {
    std::uint32_t agent_id = 0;
    AgentKind kind = AgentKind::Driver;
    std::string path_id;
    std::vector<TrajectorySample> samples;
};

struct Recording {
    ScenarioSpec scenario;
    double dt = 0.01;
    std::map<std::uint32_t, Trajectory> trajectories;
    std::vector<EventRecord> events;
};

/// Replays `log` and captures per-tick agent state. Propagates replay errors.
Recording record(const ReplayLog& log);

// -- time to collision --------------------------------------------------------------

struct PairState {
    double d_a = 0.0;  // remaining distance to conflict (crossing) or arc position (shared path)
    double v_a = 0.0;
    double h_a = 0.0;
    double d_b = 0.0;
    double v_b = 0.0;
    double h_b = 0.0;
    bool shared_path = false;
};

/// Shared path: follower is the agent with the smaller arc position and
/// TTC = gap / closing speed with gap = |s_a - s_b| - h_a - h_b. Crossing
/// paths: occupancy-overlap TTC. nullopt means infinite.
std::optional<double> ttc(const PairState& p);

/// Shared path: closing^2 / (2 gap). Crossing paths: the deceleration agent
/// a needs to stop before the other body's occupancy starts, zero when the
/// pair never overlaps.
DracValue drac(const PairState& p);

/// Time headway gap / v_follower on a shared path, nullopt otherwise.
std::optional<double> headway(const PairState& p);

struct PairSample {
    double t = 0.0;
    std::optional<double> ttc;
    DracValue drac;
    std::optional<double> headway;
};

struct PairSeries {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    bool shared_path = false;
    std::vector<PairSample> samples;
    std::optional<double> min_ttc;
    double min_ttc_time = 0.0;
    double max_drac = 0.0;
};

/// Pair state at a sample index common to both trajectories (matched by tick).
/// nullopt when the paths share no conflict point.
std::optional<PairState> pair_state(const Recording& rec, const Trajectory& a, const TrajectorySample& sa,
                                    const Trajectory& b, const TrajectorySample& sb);

PairSeries ttc_series(const Recording& rec, std::uint32_t a, std::uint32_t b);

// -- lane keeping -------------------------------------------------------------------

struct Interval {
    double start = 0.0;
    double end = 0.0;
};

struct LaneMetrics {
    double rms_offset = 0.0;
    double max_offset = 0.0;  // largest |offset|
    std::vector<Interval> departures;
};

/// Offsets from project_to_path against the lane centerline. A departure is a
/// maximal run with |offset| > width/2 - vehicle_width/2.
LaneMetrics lane_metrics(const std::vector<TrajectorySample>& samples, const Lane& lane,
                         double vehicle_width = 1.8);

// -- reactions ------------------------------------------------------------------------

struct Reaction {
    std::string metric;  // brake_rt, takeover_tti, crossing_initiation, gap_accepted, crossing_aborted
    std::uint32_t agent = 0;
    double cue_time = 0.0;
    std::optional<double> value;  // seconds
    std::string reason;           // set when value is absent
};

std::vector<Reaction> reaction_times(const Recording& rec, const MetricsParams& params = {});

/// First time at or after `from` where speed stays >= threshold for `hold`
/// seconds; returns the start of that run.
std::optional<double> sustained_motion_onset(const std::vector<TrajectorySample>& samples, double from,
                                             double threshold, double hold);

// -- per-mode summaries -------------------------------------------------------------

using Stats = std::map<std::string, double>;

Stats mode_stats(const Recording& rec, std::uint32_t agent, const MetricsParams& params = {});

/// Count of yielding episodes: inside yield_radius of the conflict point with
/// another VRU present, speed falling to (1 - yield_drop) of the peak seen in
/// that approach.
int count_yielding(const std::vector<TrajectorySample>& samples, const std::vector<double>& dist_to_conflict,
                   const std::vector<bool>& vru_present, const MetricsParams& params = {});

/// Steering reversals: direction changes of at least `gap_rad` between extremes.
int count_reversals(const std::vector<double>& angle, double gap_rad);

/// Area between a walked path and the straight line from its first to its
/// last position.
double path_deviation_area(const std::vector<Vec2>& points);

// -- instruments ----------------------------------------------------------------------

struct InstrumentResponse {
    Instrument instrument = Instrument::TLX;
    std::uint8_t item = 0;  // 0-based
    double value = 0.0;
    double sim_time = 0.0;
    std::optional<double> actual_s;  // TIMEPERC: the true interval length
};

struct InstrumentScores {
    std::optional<double> tlx_raw;
    bool tlx_partial = false;
    std::optional<double> panas_pa;
    std::optional<double> panas_na;
    bool panas_partial = false;
    std::optional<double> valence;
    std::optional<double> arousal;
    std::optional<double> stress;
    std::optional<double> time_ratio;
    std::optional<double> perceived_s;
    std::vector<std::string> notes;  // invalid or duplicate items
};

/// 1-based PANAS item numbers of the positive affect scale.
bool panas_positive_item(int item_1based);

/// Scores one administration. Duplicate items: the latest sim_time wins,
/// ties broken by the larger value, so arrival order never matters.
InstrumentScores score_instruments(const std::vector<InstrumentResponse>& responses);

struct Administration {
    Instrument instrument = Instrument::TLX;
    std::uint32_t agent = 0;
    double prompt_time = 0.0;
    std::vector<InstrumentResponse> responses;
};

/// Groups QRESPONSE events by the questionnaire prompt that preceded them.
std::vector<Administration> administrations(const std::vector<EventRecord>& events);

// -- N-back ---------------------------------------------------------------------------

struct NbackStimulus {
    double onset = 0.0;
    std::uint8_t symbol = 0;
};

struct NbackGrade {
    int hits = 0;
    int misses = 0;
    int false_alarms = 0;
    int correct_rejections = 0;
    int omissions = 0;
    int unmatched_responses = 0;
    double accuracy = 0.0;
    std::optional<double> mean_rt;
    friend bool operator==(const NbackGrade&, const NbackGrade&) = default;
};

/// Each response (sorted by time) is matched to the latest stimulus with onset
/// at or before it, if within `window` and that stimulus has no response yet.
NbackGrade grade_nback(const std::vector<NbackStimulus>& stimuli, const std::vector<double>& response_times,
                       int n, double window = 2.5);

struct NbackBlockLog {
    std::uint32_t block = 0;
    int n = 2;
    std::vector<NbackStimulus> stimuli;
    std::vector<double> responses;
};

std::vector<NbackBlockLog> nback_blocks(const std::vector<EventRecord>& events, double window = 2.5);

// -- report -----------------------------------------------------------------------------

struct Report {
    std::vector<PairSeries> pairs;
    std::map<std::uint32_t, LaneMetrics> lanes;
    std::vector<Reaction> reactions;
    std::map<std::uint32_t, Stats> modes;
    std::vector<std::pair<Administration, InstrumentScores>> instruments;
    std::vector<std::pair<NbackBlockLog, NbackGrade>> nback;
};

Report compute_report(const Recording& rec, const MetricsParams& params = {});

/// Writes ttc.csv, lane.csv, reactions.csv, modes.csv, instruments.csv,
/// nback.csv and summary.json into `dir`. Returns the summary text.
std::string write_report(const Report& report, const std::string& dir);

/// JSON summary only.
std::string summary_json(const Report& report);

}  // namespace mmsim::metrics
