#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskcast/tensor.hpp"
#include "riskcast/time_utils.hpp"

namespace riskcast {

// Multichannel scalp-EEG recording. Samples are stored per channel,
// channel-major in memory; the on-disk raw file is frame-major interleaved
// float32 (see save_recording).
struct EEGRecording {
    std::string patient_id;
    double sampling_rate_hz = 256.0;
    int n_channels = 19;
    UnixTime start_time = 0;
    std::vector<std::string> channel_names;       // optional; defaults ch01..
    std::vector<float> samples;                   // [n_channels * n_samples], channel-major
    std::vector<UnixTime> seizure_onsets;         // strictly increasing, inside the recording

    std::int64_t n_samples() const {
        return n_channels > 0 ? static_cast<std::int64_t>(samples.size()) / n_channels : 0;
    }
    double duration_sec() const { return static_cast<double>(n_samples()) / sampling_rate_hz; }
    UnixTime end_time() const { return start_time + duration_sec(); }
    const float* channel(int c) const { return samples.data() + static_cast<std::size_t>(c) * n_samples(); }
    float* channel(int c) { return samples.data() + static_cast<std::size_t>(c) * n_samples(); }
    void validate() const;
};

// SPH 5 min + SOP 30 min: preictal windows live in [onset-35, onset-5] min.
struct LabelingConfig {
    double sph_min = 5.0;
    double sop_min = 30.0;
    double interictal_gap_hours = 4.0;
    double leading_merge_min = 30.0;
    double window_sec = 30.0;
    double window_step_sec = 15.0;
    void validate() const;
};

enum class WindowLabel : int { Interictal = 0, Preictal = 1 };

struct WindowRef {
    std::int64_t start_sample = 0;
    UnixTime start_time = 0;
    WindowLabel label = WindowLabel::Interictal;
};

struct LabeledWindow {
    Tensor features;  // [channels, freq_bins, time_frames]
    WindowLabel label = WindowLabel::Interictal;
    UnixTime window_start = 0;
    std::string patient_id;
};

// Greedy left-to-right cluster merge: an onset within merge_min minutes of
// the current cluster's end joins it; the first onset of each cluster is
// the leading one.
std::vector<UnixTime> leading_seizures(const std::vector<UnixTime>& onsets, double merge_min = 30.0);

// Window grid at window_step from the recording start. A window is preictal
// when fully inside the [onset-sph-sop, onset-sph] interval of a leading
// seizure, interictal when every sample is >= interictal_gap_hours from
// every (unmerged) onset, and discarded otherwise.
std::vector<WindowRef> label_window_refs(const EEGRecording& rec, const LabelingConfig& cfg);

struct SpectrogramConfig {
    int fft_size = 0;      // 0: next power of two >= one second of samples
    int hop = 0;           // 0: fft_size / 2
    double fmin_hz = 0.5;  // bins with center frequency in [fmin, fmax] kept
    double fmax_hz = 64.0;
    bool log_compress = true;  // log(1 + |X|)
    int resolved_fft(double sampling_rate_hz) const;
    int resolved_hop(double sampling_rate_hz) const;
};

// Per-channel Hann-tapered magnitude STFT, [channels x freq x frames].
Tensor spectrogram(const std::vector<std::vector<double>>& channels, double sampling_rate_hz,
                   const SpectrogramConfig& cfg);
Tensor spectrogram(const EEGRecording& rec, std::int64_t start_sample, std::int64_t n_samples,
                   const SpectrogramConfig& cfg);

// Kept-bin center frequencies for a given config and sampling rate.
std::vector<double> spectrogram_bin_frequencies(double sampling_rate_hz, const SpectrogramConfig& cfg);

std::vector<LabeledWindow> label_windows(const EEGRecording& rec, const LabelingConfig& cfg,
                                         const SpectrogramConfig& spec_cfg);
LabeledWindow extract_window(const EEGRecording& rec, const WindowRef& ref, const LabelingConfig& cfg,
                             const SpectrogramConfig& spec_cfg);

// Synthetic stand-in for a restricted clinical dataset: pink-noise channels
// with a ramping 4-8 Hz band-power signature ahead of each planted onset.
struct SyntheticSpec {
    int n_patients = 10;
    double hours_per_patient = 24.0;
    double sampling_rate_hz = 32.0;
    int n_channels = 19;
    double seizures_per_day = 3.0;
    double circadian_peak_hour = 8.0;
    double circadian_std_hours = 1.25;  // wrapped-normal concentration of onsets
    double min_onset_separation_min = 50.0;
    double first_onset_margin_hours = 5.5;  // guarantees an interictal stretch before the first onset
    double preictal_lead_min = 40.0;        // signature ramp starts this far before onset
    double band_low_hz = 4.0;
    double band_high_hz = 8.0;
    double separability = 1.0;  // 0: no signature; 1: strong band-power shift
    std::string base_start_time = "2015-01-05T00:00:00Z";  // a Monday
    double start_stagger_hours = 27.0;  // per-patient offset, walks the week

    nlohmann::json to_json() const;
    static SyntheticSpec from_json(const nlohmann::json& j);
    void validate() const;
};

std::vector<EEGRecording> synthesize_dataset(const SyntheticSpec& spec, std::uint64_t seed);
EEGRecording synthesize_recording(const SyntheticSpec& spec, int patient_index, std::uint64_t seed);

// Recording container: <base>.json metadata + <base>.f32 raw little-endian
// float32, frame-major channel-interleaved. Returns the metadata path.
std::string save_recording(const EEGRecording& rec, const std::string& dir);
EEGRecording load_recording(const std::string& meta_path);
std::vector<std::string> list_recordings(const std::string& dir);  // metadata paths, sorted

}  // namespace riskcast
