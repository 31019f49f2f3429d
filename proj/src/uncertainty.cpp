#include "riskcast/uncertainty.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace riskcast {

PredictionDistribution PredictionDistribution::from_samples(std::vector<double> samples) {
    if (samples.size() < 2) {
        throw std::invalid_argument("PredictionDistribution: need at least 2 samples");
    }
    PredictionDistribution d;
    d.samples = std::move(samples);
    bool degenerate = true;
    for (double s : d.samples) {
        if (s != d.samples.front()) {
            degenerate = false;
            break;
        }
    }
    if (degenerate) {
        // all draws identical (sigma = 0): the mean is that value and the
        // spread is exactly zero, with no summation rounding
        d.mean = d.samples.front();
        d.std_dev = 0.0;
    } else {
        double sum = 0.0;
        for (double s : d.samples) sum += s;
        d.mean = sum / static_cast<double>(d.samples.size());
        double ss = 0.0;
        for (double s : d.samples) ss += (s - d.mean) * (s - d.mean);
        d.std_dev = std::sqrt(ss / static_cast<double>(d.samples.size()));
    }
    d.uncertainty = uncertainty_level(d.mean, d.std_dev);
    return d;
}

double uncertainty_level(double mean, double std_dev) {
    if (std_dev < 0.0) throw std::invalid_argument("uncertainty_level: std must be >= 0");
    if (mean == 0.5) return std::numeric_limits<double>::infinity();
    return std_dev / std::abs(mean - 0.5);
}

double clip_uncertainty(double u, double cap) { return u > cap ? cap : u; }

PredictionClass classify_distribution(const PredictionDistribution& dist, double score_threshold,
                                      double uncertainty_threshold) {
    if (!(score_threshold > 0.0) || !(uncertainty_threshold > 0.0)) {
        throw std::invalid_argument("classify_distribution: thresholds must be > 0");
    }
    if (dist.uncertainty >= uncertainty_threshold) return PredictionClass::Uncertain;
    return dist.mean >= score_threshold ? PredictionClass::ConfidentPositive
                                        : PredictionClass::ConfidentNegative;
}

PredictionDistribution sample_predictions(const BayesNet& model, const Tensor& input, int n,
                                          std::uint64_t root_seed, int threads,
                                          std::optional<FusionFactor> factor, FusionMode mode) {
    if (n < 2) throw std::invalid_argument("sample_predictions: n must be >= 2 (std undefined)");
    if (model.architecture().n_classes != 2) {
        throw std::invalid_argument("sample_predictions: model must have a 2-class head");
    }

    std::vector<double> samples(static_cast<std::size_t>(n));
    std::vector<double> logit_factor;
    if (factor && mode == FusionMode::Logit) logit_factor = {factor->value};

    auto run_draw = [&](int i) {
        NoGradGuard no_grad;
        Rng rng(root_seed, static_cast<std::uint64_t>(i));
        Tensor logits = model.forward_sampled(input, rng,
                                              logit_factor.empty() ? nullptr : &logit_factor);
        double p = softmax(logits).data()[1];
        if (factor && mode == FusionMode::Probability) {
            p = apply_fusion_probability(p, *factor);
        }
        samples[static_cast<std::size_t>(i)] = p;
    };

    if (threads <= 1 || n < 4) {
        for (int i = 0; i < n; ++i) run_draw(i);
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_draw(i);
        };
        std::vector<std::thread> pool;
        int nw = std::min(threads, n);
        pool.reserve(static_cast<std::size_t>(nw));
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return PredictionDistribution::from_samples(std::move(samples));
}

}  // namespace riskcast
