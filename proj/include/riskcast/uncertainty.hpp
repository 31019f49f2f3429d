#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "riskcast/bayes.hpp"
#include "riskcast/priors.hpp"
#include "riskcast/tensor.hpp"
#include "riskcast/time_utils.hpp"

namespace riskcast {

// Monte-Carlo output distribution of preictal scores. The uncertainty level
// is std / |mean - 0.5|, with +inf kept internally when the mean sits at 0.5
// exactly; clipping to 10 happens only at export.
struct PredictionDistribution {
    std::vector<double> samples;
    double mean = 0.0;
    double std_dev = 0.0;  // population (1/N)
    double uncertainty = 0.0;

    static PredictionDistribution from_samples(std::vector<double> samples);
};

double uncertainty_level(double mean, double std_dev);
double clip_uncertainty(double u, double cap = 10.0);

// Output-sampling count used throughout when none is configured.
inline constexpr int kDefaultMcSamples = 500;

enum class PredictionClass { ConfidentPositive, ConfidentNegative, Uncertain };

PredictionClass classify_distribution(const PredictionDistribution& dist,
                                      double score_threshold = 0.5,
                                      double uncertainty_threshold = 2.0);

struct TimelinePoint {
    UnixTime timestamp = 0;
    double score_mean = 0.0;
    double score_std = 0.0;
    double uncertainty = 0.0;
    double uncertainty_clipped = 0.0;
    bool fused = false;
};

// n stochastic forward passes with fresh weight draws. Draw i uses RNG
// stream (root_seed, i), so the result is a pure function of
// (model, input, n, root_seed) no matter how many workers run the draws.
// An optional fusion factor is applied per draw (logit or probability mode).
PredictionDistribution sample_predictions(const BayesNet& model, const Tensor& input, int n,
                                          std::uint64_t root_seed, int threads = 1,
                                          std::optional<FusionFactor> factor = std::nullopt,
                                          FusionMode mode = FusionMode::Logit);

}  // namespace riskcast
