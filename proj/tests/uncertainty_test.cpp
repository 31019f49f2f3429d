#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "riskcast/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "riskcast/rng.hpp"
#include "test_helpers.hpp"

using namespace riskcast;
using riskcast::testing::random_tensor;

namespace {

BayesNet small_net(std::uint64_t seed, bool deterministic = false) {
    Architecture arch;
    arch.input_shape = {2, 5, 5};
    arch.conv = {{3, 3, 1, 0, false}};
    arch.dense_hidden = {4};
    return BayesNet(arch, PriorSpec{}, seed, deterministic);
}

}  // namespace

TEST_CASE("uncertainty level direct evaluations") {
    CHECK(uncertainty_level(0.9, 0.1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(uncertainty_level(1.0, 0.0) == 0.0);
    CHECK(std::isinf(uncertainty_level(0.5, 0.2)));
    CHECK(clip_uncertainty(uncertainty_level(0.5, 0.2)) == 10.0);
    CHECK(clip_uncertainty(3.7) == 3.7);
    CHECK_THROWS_AS(uncertainty_level(0.5, -0.1), std::invalid_argument);
}

TEST_CASE("uncertainty symmetry and monotonicity on a grid") {
    // dyadic grid: 1 - m is exactly representable, so symmetry is bitwise
    for (int mi = 0; mi <= 128; ++mi) {
        double m = mi / 128.0;
        for (int si = 1; si <= 100; ++si) {
            double s = si / 256.0;
            CHECK(uncertainty_level(m, s) == uncertainty_level(1.0 - m, s));
        }
    }
    // increasing in std for fixed mean != 0.5
    double prev = -1;
    for (int si = 0; si <= 50; ++si) {
        double u = uncertainty_level(0.7, si / 100.0);
        CHECK(u > prev);
        prev = u;
    }
    // diverges as the mean approaches one half
    prev = -1;
    for (double m : {0.9, 0.8, 0.7, 0.6, 0.55, 0.51, 0.501}) {
        double u = uncertainty_level(m, 0.1);
        CHECK(u > prev);
        prev = u;
    }
}

TEST_CASE("distribution statistics match a reference pass regardless of order") {
    Rng rng(1);
    std::vector<double> samples(501);
    for (double& s : samples) s = rng.uniform(0.0, 1.0);

    double mean = 0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double var = 0;
    for (double s : samples) var += (s - mean) * (s - mean);
    double ref_std = std::sqrt(var / static_cast<double>(samples.size()));  // population

    PredictionDistribution d1 = PredictionDistribution::from_samples(samples);
    std::reverse(samples.begin(), samples.end());
    rng.shuffle(samples);
    PredictionDistribution d2 = PredictionDistribution::from_samples(samples);

    CHECK(std::abs(d1.mean - mean) < 1e-12);
    CHECK(std::abs(d1.std_dev - ref_std) < 1e-12);
    CHECK(std::abs(d2.mean - d1.mean) < 1e-12);
    CHECK(std::abs(d2.std_dev - d1.std_dev) < 1e-12);
    CHECK_THROWS_AS(PredictionDistribution::from_samples({0.5}), std::invalid_argument);
}

TEST_CASE("classification taxonomy") {
    PredictionDistribution d;
    d.mean = 0.95;
    d.std_dev = 0.045;
    d.uncertainty = uncertainty_level(d.mean, d.std_dev);  // 0.1
    CHECK(classify_distribution(d, 0.5, 2.0) == PredictionClass::ConfidentPositive);

    d.mean = 0.52;
    d.std_dev = 0.3;
    d.uncertainty = uncertainty_level(d.mean, d.std_dev);  // = 15
    CHECK(d.uncertainty == doctest::Approx(15.0));
    CHECK(classify_distribution(d, 0.5, 2.0) == PredictionClass::Uncertain);

    // near-0.5 mean but tiny spread: still a confident call
    d.mean = 0.55;
    d.std_dev = 0.01;
    d.uncertainty = uncertainty_level(d.mean, d.std_dev);
    CHECK(d.uncertainty == doctest::Approx(0.2));
    CHECK(classify_distribution(d, 0.5, 2.0) == PredictionClass::ConfidentPositive);

    d.mean = 0.1;
    d.std_dev = 0.02;
    d.uncertainty = uncertainty_level(d.mean, d.std_dev);
    CHECK(classify_distribution(d, 0.5, 2.0) == PredictionClass::ConfidentNegative);
    CHECK_THROWS_AS(classify_distribution(d, 0.0, 2.0), std::invalid_argument);
}

TEST_CASE("default sampling count matches the 500-draw protocol") {
    CHECK(kDefaultMcSamples == 500);
    CHECK(PredictionDistribution::from_samples(std::vector<double>(kDefaultMcSamples, 0.3)).samples.size()
          == 500);
}

TEST_CASE("sample_predictions contract") {
    BayesNet net = small_net(11);
    Rng in_rng(13);
    Tensor input = random_tensor({2, 5, 5}, in_rng, false);
    CHECK_THROWS_AS(sample_predictions(net, input, 1, 7), std::invalid_argument);

    PredictionDistribution d = sample_predictions(net, input, 64, 7);
    CHECK(d.samples.size() == 64);
    for (double s : d.samples) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("sample_predictions is deterministic across worker counts") {
    BayesNet net = small_net(17);
    for (BayesLayer& layer : net.layers()) {
        for (double& r : layer.weight.rho.data()) r = -1.0;
    }
    Rng in_rng(19);
    Tensor input = random_tensor({2, 5, 5}, in_rng, false);
    PredictionDistribution d1 = sample_predictions(net, input, 100, 999, 1);
    PredictionDistribution d8 = sample_predictions(net, input, 100, 999, 8);
    CHECK(d1.samples == d8.samples);
    PredictionDistribution other = sample_predictions(net, input, 100, 1000, 4);
    CHECK(d1.samples != other.samples);
}

TEST_CASE("sigma=0 checkpoints give zero spread and zero uncertainty") {
    BayesNet net = small_net(23);
    for (BayesLayer& layer : net.layers()) {
        for (double& r : layer.weight.rho.data()) r = -1000.0;
        for (double& r : layer.bias.rho.data()) r = -1000.0;
    }
    Rng in_rng(29);
    Tensor input = random_tensor({2, 5, 5}, in_rng, false);
    PredictionDistribution d = sample_predictions(net, input, 50, 31, 4);
    CHECK(d.std_dev == 0.0);
    for (double s : d.samples) CHECK(s == d.samples[0]);
    if (d.mean != 0.5) CHECK(d.uncertainty == 0.0);

    BayesNet det = small_net(37, true);
    PredictionDistribution dd = sample_predictions(det, input, 50, 41, 2);
    CHECK(dd.std_dev == 0.0);
}

TEST_CASE("fusion factor shifts sampled scores in the expected direction") {
    BayesNet net = small_net(43);
    Rng in_rng(47);
    Tensor input = random_tensor({2, 5, 5}, in_rng, false);
    PredictionDistribution base = sample_predictions(net, input, 64, 51);
    PredictionDistribution boosted =
        sample_predictions(net, input, 64, 51, 1, FusionFactor{3.0}, FusionMode::Probability);
    CHECK(boosted.mean > base.mean);
    PredictionDistribution neutral =
        sample_predictions(net, input, 64, 51, 1, FusionFactor{1.0}, FusionMode::Probability);
    CHECK(neutral.samples == base.samples);
}
