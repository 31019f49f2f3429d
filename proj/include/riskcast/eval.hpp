#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskcast/bayes.hpp"
#include "riskcast/data.hpp"
#include "riskcast/priors.hpp"
#include "riskcast/uncertainty.hpp"

namespace riskcast {

// Mann-Whitney AUC: probability a random positive outranks a random
// negative, ties counted one half. Equals the trapezoidal ROC area.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Leave-last-k-leading-seizures-out. The split point is the preictal start
// of the first held-out seizure; windows at or after it are test.
struct PatientRefSplit {
    std::string patient_id;
    std::vector<WindowRef> train_refs;
    std::vector<WindowRef> test_refs;
    std::vector<UnixTime> train_leading_onsets;
    UnixTime split_time = 0;
};

PatientRefSplit split_refs(const EEGRecording& rec, const LabelingConfig& cfg, int test_seizures);

// Deterministic per-class subsample; 0 = keep everything.
std::vector<WindowRef> cap_refs_per_class(const std::vector<WindowRef>& refs, int max_per_class,
                                          Rng& rng);

// Fixed arm order, matching the four report arms.
inline constexpr const char* kArmNames[4] = {"CNN", "EEG-only", "EEG_ToD", "EEG_ToD_DoW"};

struct EvalConfig {
    int mc_samples = kDefaultMcSamples;
    int threads = 1;
    std::uint64_t seed = 0;
    FusionMode fusion_mode = FusionMode::Probability;
    int max_test_windows_per_class = 0;  // per patient; 0 = unlimited
    nlohmann::json to_json() const;
};

struct PatientEval {
    std::string patient_id;
    std::map<std::string, double> auc_by_arm;
    std::int64_t n_test_preictal = 0;
    std::int64_t n_test_interictal = 0;
};

struct EvalReport {
    std::vector<PatientEval> patients;                // patient-id order
    std::map<std::string, double> macro_auc;          // unweighted per-patient mean (headline)
    std::map<std::string, double> window_weighted_auc;
    nlohmann::json config_echo;
    std::uint64_t seed = 0;
    nlohmann::json to_json() const;
};

// Test windows of one patient, features extracted.
struct PatientTestSet {
    std::string patient_id;
    std::vector<LabeledWindow> windows;
};

// Scores the four arms on each patient's test windows. The CNN arm runs the
// deterministic checkpoint once per window; the BCNN arms share one set of
// mc_samples weight draws per window, with the ToD / ToD+DoW arms applying
// the fusion factor per window timestamp.
EvalReport evaluate_arms(const std::vector<PatientTestSet>& patients, const BayesNet& cnn,
                         const BayesNet& bcnn, const PriorDensity& tod, const PriorDensity& dow,
                         const EvalConfig& cfg);

struct TimelineConfig {
    double window_sec = 30.0;
    double window_step_sec = 15.0;
    int mc_samples = kDefaultMcSamples;
    int threads = 1;
    std::uint64_t seed = 0;
    bool fused = false;
    FusionMode fusion_mode = FusionMode::Probability;
};

// Sliding-window MC inference across the whole recording, discarded zones
// included.
std::vector<TimelinePoint> timeline(const EEGRecording& rec, const BayesNet& net,
                                    const SpectrogramConfig& spec_cfg,
                                    const std::optional<PriorDensity>& tod,
                                    const std::optional<PriorDensity>& dow,
                                    const TimelineConfig& cfg);

void write_timeline_csv(const std::vector<TimelinePoint>& points, const std::string& path);

// Every CLI run records what produced what; no timestamps, so reruns are
// byte-identical.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::string code_version;
    std::map<std::string, std::string> input_digests;  // path -> sha256
    std::vector<std::string> outputs;
    nlohmann::json to_json() const;
};

std::string sha256_file(const std::string& path);
void write_json_atomic(const nlohmann::json& j, const std::string& path);
void write_text_atomic(const std::string& text, const std::string& path);

inline constexpr const char* kCodeVersion = "0.1.0";

}  // namespace riskcast
