#pragma once

// Post-hoc physiological and gaze stream handling: CSV ingest, device clock
// to simulator clock mapping, feature extraction and event-locked epochs.

#include "mmsim/events.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmsim::sensors {

enum class Modality : std::uint8_t { EDA, BVP, TEMP, ACC, FNIRS, GAZE, MARK };

std::string_view to_string(Modality m);
std::optional<Modality> modality_from_string(std::string_view s);

/// Expected channel count per modality (0: variable, FNIRS is 3 per optode).
std::size_t expected_channels(Modality m);

/// Samples stored column-wise: `t[i]` with `channels[c][i]`.
struct SensorStream {
    std::string stream_id;
    Modality modality = Modality::EDA;
    double rate_hz = 0.0;
    std::string clock_id;
    std::vector<double> t;  // device seconds, strictly increasing
    std::vector<std::vector<double>> channels;
    bool hbt_derived = false;  // FNIRS: HbT computed as HbO + HbR on load

    std::size_t size() const { return t.size(); }
};

class StreamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses the stream CSV format:
///   # stream_id=...   # modality=...   # rate_hz=...   # clock_id=...
///   t_dev,ch0[,ch1,...]
/// An optional `# hbt=absent` on FNIRS streams means the file carries only
/// HbO/HbR pairs; HbT is then derived. Throws StreamError with a line number.
SensorStream parse_stream_csv(std::string_view text);
SensorStream read_stream_csv(const std::string& path);
std::string format_stream_csv(const SensorStream& s);

/// Checks monotone time and constant channel counts. Throws StreamError.
void check_stream(const SensorStream& s);

// -- clock maps ----------------------------------------------------------------------

struct ClockMap {
    double a = 1.0;  // t_sim = a * t_dev + b
    double b = 0.0;
    double residual_rms = 0.0;
    std::size_t marks = 0;

    double to_sim(double t_dev) const { return a * t_dev + b; }
    double to_device(double t_sim) const { return (t_sim - b) / a; }
    bool in_sanity_band() const { return a >= 0.99 && a <= 1.01; }
};

class ClockFitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Least-squares line through (device, sim) mark pairs. Throws ClockFitError
/// for fewer than two marks, mismatched lengths or non-increasing marks.
ClockMap fit_clock_map(std::span<const double> device_marks, std::span<const double> sim_marks);

/// Pairs a MARK stream (one column: mark index) with SYNC_MARK events by index.
/// Returns (device times, sim times).
std::pair<std::vector<double>, std::vector<double>> pair_sync_marks(const SensorStream& marks,
                                                                    std::span<const EventRecord> events);

// -- cardiac -------------------------------------------------------------------------

struct HrParams {
    double window_s = 10.0;      // rolling median / IQR window
    double iqr_gain = 0.5;
    double refractory_s = 0.3;
};

struct HrResult {
    std::vector<double> peak_times;  // device s, sub-sample (parabolic) peak positions
    std::vector<double> ibi_s;
    std::vector<double> hr_time;     // time of the second peak of each interval
    std::vector<double> hr_bpm;
    double mean_hr_bpm = 0.0;
    double rmssd_ms = 0.0;
    double sdnn_ms = 0.0;
    bool flagged = false;  // fewer than two peaks
    std::string reason;
};

/// Throws StreamError when the stream rate is below 32 Hz.
HrResult hr_from_bvp(const SensorStream& bvp, const HrParams& params = {});

/// RMSSD and SDNN (ms) of an IBI series in seconds.
double rmssd_ms(std::span<const double> ibi_s);
double sdnn_ms(std::span<const double> ibi_s);

// -- electrodermal --------------------------------------------------------------------

struct EdaParams {
    double median_window_s = 8.0;
    double scr_threshold = 0.05;  // uS
    double max_rise_s = 5.0;
};

struct Scr {
    double onset = 0.0;      // device s at the trough
    double peak_time = 0.0;  // device s at the peak
    double amplitude = 0.0;  // uS
};

struct EdaResult {
    std::vector<double> tonic;
    std::vector<double> phasic;
    std::vector<Scr> scrs;
};

EdaResult eda_decompose(const SensorStream& eda, const EdaParams& params = {});

/// Centered moving median with a window that shrinks at the edges.
std::vector<double> moving_median(std::span<const double> t, std::span<const double> x, double window_s);

// -- gaze ------------------------------------------------------------------------------

struct FixationParams {
    double dispersion_deg = 1.0;
    double min_duration_ms = 100.0;
    double fov_h_deg = 100.0;  // degrees spanned by x_norm in [0, 1]
    double fov_v_deg = 100.0;
};

struct Fixation {
    double start = 0.0;  // device s
    double end = 0.0;    // last sample time + one sample period
    double x = 0.0;      // centroid, normalized
    double y = 0.0;
    std::size_t first = 0;  // sample index range [first, last]
    std::size_t last = 0;

    double duration() const { return end - start; }
};

/// Gaze channels: x_norm, y_norm, pupil_mm, validity (0/1).
std::vector<Fixation> detect_fixations(const SensorStream& gaze, const FixationParams& params = {});

/// Dispersion in degrees of samples [first, last].
double dispersion_deg(const SensorStream& gaze, std::size_t first, std::size_t last, const FixationParams& params);

/// Row-major rows x cols matrix; row 0 is y_norm in [0, 1/rows).
struct Heatmap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> cells;

    double at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
};

/// Histogram of valid samples. With `normalize` the Gaussian-smoothed result
/// is scaled so the maximum is 1; sigma 0 means no smoothing.
Heatmap gaze_heatmap(const SensorStream& gaze, std::size_t rows, std::size_t cols, double sigma_cells,
                     bool normalize = true);

// -- epochs ----------------------------------------------------------------------------

struct EpochStream {
    std::string stream_id;
    Modality modality = Modality::EDA;
    std::vector<std::vector<double>> channels;  // [channel][grid index], NaN where missing
    std::vector<bool> valid;                    // per grid index
};

struct Epoch {
    std::uint16_t code = 0;
    double t0 = 0.0;  // sim s of the event
    double pre_s = 0.0;
    double post_s = 0.0;
    double rate_hz = 0.0;
    std::vector<double> grid;  // seconds relative to t0
    std::vector<EpochStream> streams;
};

struct EpochWarning {
    double t0 = 0.0;
    std::string stream_id;
    std::string message;
};

struct EpochResult {
    std::vector<Epoch> epochs;
    std::vector<EpochWarning> warnings;
};

inline constexpr double kMaxInterpolationGap = 0.5;  // s

/// Cuts one epoch per event of `code`. Streams are mapped with the clock map
/// of their clock_id. Throws StreamError when a clock map is missing.
EpochResult cut_epochs(std::span<const SensorStream> streams, const std::map<std::string, ClockMap>& clocks,
                       std::span<const EventRecord> events, std::uint16_t code, double pre_s, double post_s,
                       double out_rate_hz);

}  // namespace mmsim::sensors
