#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskcast/tensor.hpp"
#include "riskcast/time_utils.hpp"

namespace riskcast {

// Seizure occurrence coordinates derived from an absolute onset timestamp.
struct EventTimeSample {
    double tod_hours;  // [0, 24)
    double dow_days;   // [0, 7), 0 = Monday 00:00 UTC
};

EventTimeSample event_time_from_unix(UnixTime t);

enum class PriorVariable { TimeOfDay, DayOfWeek };
enum class KdeMode {
    Circular,  // kernels replicated at {-period, 0, +period}
    Plain,     // no replication; boundary mass leaks and is renormalized away
};

// Gaussian KDE over a periodic event-time variable, renormalized so the
// density integrates to 1 over [0, period).
class PriorDensity {
  public:
    static PriorDensity fit(std::vector<double> samples, PriorVariable variable,
                            std::optional<double> bandwidth = std::nullopt,
                            KdeMode mode = KdeMode::Circular);
    // Exactly 1/period everywhere; fusion against it is a no-op.
    static PriorDensity uniform(PriorVariable variable);

    double evaluate(double t) const;  // t wrapped into [0, period)
    double period() const { return period_; }
    double uniform_base() const { return 1.0 / period_; }
    PriorVariable variable() const { return variable_; }
    double bandwidth() const { return bandwidth_; }
    KdeMode mode() const { return mode_; }
    bool is_uniform() const { return uniform_; }
    // True when zero sample variance forced the period/20 fallback width.
    bool bandwidth_fallback() const { return bandwidth_fallback_; }
    const std::vector<double>& samples() const { return samples_; }

    // Exported with a 1024-point tabulated curve for plotting.
    nlohmann::json to_json() const;
    static PriorDensity from_json(const nlohmann::json& j);

  private:
    PriorDensity() = default;
    double raw_density(double t) const;

    PriorVariable variable_ = PriorVariable::TimeOfDay;
    double period_ = 24.0;
    std::vector<double> samples_;
    double bandwidth_ = 0.0;
    KdeMode mode_ = KdeMode::Circular;
    bool uniform_ = false;
    bool bandwidth_fallback_ = false;
    double norm_ = 1.0;  // integral of the raw mixture over [0, period)
};

// The Eq.-style evidence ratio p(d1|z')p(d2|z') / (p(d1)p(d2)).
struct FusionFactor {
    double value = 1.0;
};

// Ratio arithmetic from raw density values (each divided by its uniform base).
FusionFactor fusion_factor_values(double tod_density, double dow_density);
FusionFactor fusion_factor(const PriorDensity& tod, const PriorDensity& dow, UnixTime t);
// Single-signal variant (the other signal treated as uniform).
FusionFactor fusion_factor(const PriorDensity& density, UnixTime t);

// Multiplies the preictal logit (index 1) of a 2-unit pre-softmax output by
// factor.value; the interictal unit is untouched. This is the default,
// logit-space fusion semantics.
Tensor apply_fusion(const Tensor& pre_softmax, const FusionFactor& factor);

// Probability-space alternative: p' = p*f / (p*f + (1-p)). Used for
// post-processing scores that are already probabilities.
double apply_fusion_probability(double preictal_prob, const FusionFactor& factor);

enum class FusionMode { Logit, Probability };
FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode mode);

}  // namespace riskcast
