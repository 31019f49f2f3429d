#include "riskcast/priors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace riskcast {

using nlohmann::json;

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kSqrt2 = 1.4142135623730951;

double period_of(PriorVariable v) { return v == PriorVariable::TimeOfDay ? 24.0 : 7.0; }

const char* name_of(PriorVariable v) { return v == PriorVariable::TimeOfDay ? "ToD" : "DoW"; }

double wrap(double t, double period) {
    double r = std::fmod(t, period);
    if (r < 0) r += period;
    return r;
}

// Gaussian CDF via erf; used for the closed-form normalization integral.
double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

}  // namespace

EventTimeSample event_time_from_unix(UnixTime t) {
    return {time_of_day_hours(t), day_of_week_days(t)};
}

PriorDensity PriorDensity::fit(std::vector<double> samples, PriorVariable variable,
                               std::optional<double> bandwidth, KdeMode mode) {
    if (samples.empty()) {
        throw std::invalid_argument(std::string("PriorDensity::fit: no ") + name_of(variable) +
                                    " samples");
    }
    PriorDensity d;
    d.variable_ = variable;
    d.period_ = period_of(variable);
    d.mode_ = mode;
    for (double& s : samples) s = wrap(s, d.period_);
    d.samples_ = std::move(samples);

    if (bandwidth) {
        if (!(*bandwidth > 0.0)) throw std::invalid_argument("PriorDensity::fit: bandwidth must be > 0");
        d.bandwidth_ = *bandwidth;
    } else {
        // Scott's rule n^(-1/5) * sample std.
        std::size_t n = d.samples_.size();
        double mean = std::accumulate(d.samples_.begin(), d.samples_.end(), 0.0) / n;
        double ss = 0.0;
        for (double s : d.samples_) ss += (s - mean) * (s - mean);
        double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        if (sd > 0.0) {
            d.bandwidth_ = sd * std::pow(static_cast<double>(n), -0.2);
        } else {
            d.bandwidth_ = d.period_ / 20.0;
            d.bandwidth_fallback_ = true;
            std::cerr << "warning: " << name_of(variable)
                      << " samples have zero variance; falling back to bandwidth "
                      << d.bandwidth_ << "\n";
        }
    }

    // Closed-form integral of the raw mixture over [0, period).
    double h = d.bandwidth_;
    double mass = 0.0;
    for (double s : d.samples_) {
        if (d.mode_ == KdeMode::Circular) {
            for (double off : {-d.period_, 0.0, d.period_}) {
                double c = s + off;
                mass += normal_cdf((d.period_ - c) / h) - normal_cdf(-c / h);
            }
        } else {
            mass += normal_cdf((d.period_ - s) / h) - normal_cdf(-s / h);
        }
    }
    d.norm_ = mass / static_cast<double>(d.samples_.size());
    if (!(d.norm_ > 0.0)) throw std::runtime_error("PriorDensity::fit: degenerate normalization");
    return d;
}

PriorDensity PriorDensity::uniform(PriorVariable variable) {
    PriorDensity d;
    d.variable_ = variable;
    d.period_ = period_of(variable);
    d.uniform_ = true;
    d.bandwidth_ = 0.0;
    d.norm_ = 1.0;
    return d;
}

double PriorDensity::raw_density(double t) const {
    double h = bandwidth_;
    double acc = 0.0;
    for (double s : samples_) {
        if (mode_ == KdeMode::Circular) {
            for (double off : {-period_, 0.0, period_}) {
                double z = (t - s - off) / h;
                acc += std::exp(-0.5 * z * z);
            }
        } else {
            double z = (t - s) / h;
            acc += std::exp(-0.5 * z * z);
        }
    }
    return acc * kInvSqrt2Pi / (h * static_cast<double>(samples_.size()));
}

double PriorDensity::evaluate(double t) const {
    if (uniform_) return 1.0 / period_;
    return raw_density(wrap(t, period_)) / norm_;
}

json PriorDensity::to_json() const {
    json j = {{"variable", name_of(variable_)},
              {"period", period_},
              {"uniform", uniform_},
              {"mode", mode_ == KdeMode::Circular ? "circular" : "plain"},
              {"bandwidth", bandwidth_},
              {"bandwidth_fallback", bandwidth_fallback_},
              {"samples", samples_}};
    constexpr int kCurvePoints = 1024;
    std::vector<double> curve(kCurvePoints);
    for (int i = 0; i < kCurvePoints; ++i) {
        curve[i] = evaluate(period_ * i / kCurvePoints);
    }
    j["density_curve"] = curve;
    return j;
}

PriorDensity PriorDensity::from_json(const json& j) {
    PriorVariable var =
        j.at("variable").get<std::string>() == "ToD" ? PriorVariable::TimeOfDay : PriorVariable::DayOfWeek;
    if (j.at("uniform").get<bool>()) return uniform(var);
    KdeMode mode = j.at("mode").get<std::string>() == "plain" ? KdeMode::Plain : KdeMode::Circular;
    return fit(j.at("samples").get<std::vector<double>>(), var, j.at("bandwidth").get<double>(), mode);
}

FusionFactor fusion_factor_values(double tod_density, double dow_density) {
    double value = (tod_density / (1.0 / 24.0)) * (dow_density / (1.0 / 7.0));
    if (!(value > 0.0)) throw std::runtime_error("fusion factor must be > 0");
    return {value};
}

FusionFactor fusion_factor(const PriorDensity& tod, const PriorDensity& dow, UnixTime t) {
    if (tod.variable() != PriorVariable::TimeOfDay || dow.variable() != PriorVariable::DayOfWeek) {
        throw std::invalid_argument("fusion_factor: densities must be (ToD, DoW)");
    }
    EventTimeSample e = event_time_from_unix(t);
    double num = tod.evaluate(e.tod_hours) / tod.uniform_base();
    double den = dow.evaluate(e.dow_days) / dow.uniform_base();
    double value = num * den;
    if (!(value > 0.0)) throw std::runtime_error("fusion factor must be > 0");
    return {value};
}

FusionFactor fusion_factor(const PriorDensity& density, UnixTime t) {
    EventTimeSample e = event_time_from_unix(t);
    double x = density.variable() == PriorVariable::TimeOfDay ? e.tod_hours : e.dow_days;
    double value = density.evaluate(x) / density.uniform_base();
    if (!(value > 0.0)) throw std::runtime_error("fusion factor must be > 0");
    return {value};
}

Tensor apply_fusion(const Tensor& pre_softmax, const FusionFactor& factor) {
    if (!(factor.value > 0.0)) {
        throw std::invalid_argument("apply_fusion: factor must be > 0, got " +
                                    std::to_string(factor.value));
    }
    if (pre_softmax.ndim() != 1 || pre_softmax.shape()[0] != 2) {
        throw std::invalid_argument("apply_fusion: expects the 2-unit pre-softmax output, got " +
                                    shape_str(pre_softmax.shape()));
    }
    return mul(pre_softmax, Tensor::from_data({1.0, factor.value}, {2}));
}

double apply_fusion_probability(double preictal_prob, const FusionFactor& factor) {
    if (!(factor.value > 0.0)) {
        throw std::invalid_argument("apply_fusion_probability: factor must be > 0");
    }
    if (factor.value == 1.0) return preictal_prob;  // exact neutrality
    double num = preictal_prob * factor.value;
    return num / (num + (1.0 - preictal_prob));
}

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "logit") return FusionMode::Logit;
    if (s == "probability") return FusionMode::Probability;
    throw std::invalid_argument("unknown fusion mode '" + s + "' (use logit|probability)");
}

std::string to_string(FusionMode mode) {
    return mode == FusionMode::Logit ? "logit" : "probability";
}

}  // namespace riskcast
