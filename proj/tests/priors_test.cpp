#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "riskcast/priors.hpp"

#include <cmath>

#include "doctest.h"
#include "riskcast/bayes.hpp"
#include "riskcast/rng.hpp"
#include "test_helpers.hpp"

using namespace riskcast;
using riskcast::testing::random_tensor;
using riskcast::testing::simpson;

namespace {

double integrate_density(const PriorDensity& d, int panels = 4096) {
    return simpson([&](double t) { return d.evaluate(t); }, 0.0, d.period() - 1e-9, panels);
}

}  // namespace

TEST_CASE("single sample evaluates to the kernel peak") {
    const double h = 0.5, t0 = 10.0;
    PriorDensity d = PriorDensity::fit({t0}, PriorVariable::TimeOfDay, h);
    double expected = 1.0 / (h * std::sqrt(2.0 * 3.14159265358979323846));
    CHECK(d.evaluate(t0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("1e5 uniform samples recover the uniform base within 5 percent") {
    Rng rng(1);
    std::vector<double> samples(100000);
    for (double& s : samples) s = rng.uniform(0.0, 24.0);
    PriorDensity d = PriorDensity::fit(samples, PriorVariable::TimeOfDay);
    const double base = 1.0 / 24.0;
    for (double t = 0.0; t < 24.0; t += 0.25) {
        CHECK(std::abs(d.evaluate(t) - base) / base < 0.05);
    }
}

TEST_CASE("clustered samples put the mode at the cluster") {
    Rng rng(2);
    std::vector<double> samples(50);
    for (double& s : samples) {
        s = std::fmod(rng.normal(8.0, 0.5) + 24.0, 24.0);
    }
    PriorDensity d = PriorDensity::fit(samples, PriorVariable::TimeOfDay);
    double best_t = 0, best_v = -1;
    for (double t = 0; t < 24.0; t += 0.01) {
        double v = d.evaluate(t);
        if (v > best_v) {
            best_v = v;
            best_t = t;
        }
    }
    CHECK(std::abs(best_t - 8.0) <= d.bandwidth() + 0.5);
}

TEST_CASE("fit errors") {
    CHECK_THROWS_AS(PriorDensity::fit({}, PriorVariable::TimeOfDay), std::invalid_argument);
    CHECK_THROWS_AS(PriorDensity::fit({1.0}, PriorVariable::TimeOfDay, -0.5), std::invalid_argument);
}

TEST_CASE("zero sample variance falls back to period/20 bandwidth") {
    PriorDensity d = PriorDensity::fit({5.0, 5.0, 5.0}, PriorVariable::TimeOfDay);
    CHECK(d.bandwidth_fallback());
    CHECK(d.bandwidth() == doctest::Approx(24.0 / 20.0));
    PriorDensity w = PriorDensity::fit({2.0, 2.0}, PriorVariable::DayOfWeek);
    CHECK(w.bandwidth() == doctest::Approx(7.0 / 20.0));
}

TEST_CASE("density integrates to one over its period") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        PriorVariable var = trial % 2 ? PriorVariable::TimeOfDay : PriorVariable::DayOfWeek;
        double period = var == PriorVariable::TimeOfDay ? 24.0 : 7.0;
        KdeMode mode = trial % 3 ? KdeMode::Circular : KdeMode::Plain;
        int n = static_cast<int>(rng.uniform_int(1, 40));
        std::vector<double> samples(static_cast<std::size_t>(n));
        for (double& s : samples) s = rng.uniform(0.0, period);
        std::optional<double> bw;
        if (trial % 4 == 0) bw = rng.uniform(period / 40.0, period / 4.0);
        PriorDensity d = PriorDensity::fit(samples, var, bw, mode);
        CHECK(std::abs(integrate_density(d) - 1.0) <= 1e-3);
        for (double t = 0; t < period; t += period / 17.0) CHECK(d.evaluate(t) > 0.0);
    }
}

TEST_CASE("circular mode is periodic at the seam, plain mode leaks") {
    std::vector<double> samples = {0.2, 23.9, 11.0};
    PriorDensity circ = PriorDensity::fit(samples, PriorVariable::TimeOfDay, 0.8, KdeMode::Circular);
    // density just left and right of the wrap point should roughly agree
    CHECK(circ.evaluate(23.999) == doctest::Approx(circ.evaluate(0.001)).epsilon(0.01));
    PriorDensity plain = PriorDensity::fit(samples, PriorVariable::TimeOfDay, 0.8, KdeMode::Plain);
    CHECK(std::abs(integrate_density(plain) - 1.0) <= 1e-3);  // renormalized despite the leak
}

TEST_CASE("uniform density is exactly the base everywhere") {
    PriorDensity u = PriorDensity::uniform(PriorVariable::TimeOfDay);
    CHECK(u.evaluate(0.0) == 1.0 / 24.0);
    CHECK(u.evaluate(13.37) == 1.0 / 24.0);
    CHECK(u.is_uniform());
}

TEST_CASE("fusion factor arithmetic") {
    CHECK(fusion_factor_values(1.0 / 24.0, 1.0 / 7.0).value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fusion_factor_values(1.0 / 12.0, 1.0 / 7.0).value == doctest::Approx(2.0).epsilon(1e-12));
    PriorDensity ut = PriorDensity::uniform(PriorVariable::TimeOfDay);
    PriorDensity ud = PriorDensity::uniform(PriorVariable::DayOfWeek);
    CHECK(fusion_factor(ut, ud, 1.7e9).value == 1.0);
    CHECK_THROWS_AS(fusion_factor(ud, ut, 1.7e9), std::invalid_argument);
}

TEST_CASE("Bayes posterior via the fusion factor matches exhaustive enumeration") {
    // Discrete toy world: z binary, d1 over 24 cells, d2 over 7 cells.
    // p(d|z=0) is uniform, matching the evidence-ratio denominator.
    Rng rng(4);
    std::vector<double> g1(24), g2(7);
    double s1 = 0, s2 = 0;
    for (double& v : g1) {
        v = rng.uniform(0.05, 1.0);
        s1 += v;
    }
    for (double& v : g2) {
        v = rng.uniform(0.05, 1.0);
        s2 += v;
    }
    for (double& v : g1) v /= s1;
    for (double& v : g2) v /= s2;
    const double pz1 = 0.31;

    for (int d1 = 0; d1 < 24; ++d1) {
        for (int d2 = 0; d2 < 7; ++d2) {
            // exhaustive enumeration over the joint table
            double joint1 = pz1 * g1[d1] * g2[d2];
            double joint0 = (1.0 - pz1) * (1.0 / 24.0) * (1.0 / 7.0);
            double brute = joint1 / (joint1 + joint0);

            FusionFactor f = fusion_factor_values(g1[d1], g2[d2]);
            double fused = apply_fusion_probability(pz1, f);
            CHECK(std::abs(fused - brute) < 1e-12);
        }
    }
}

TEST_CASE("two-signal fusion equals applying the single-signal rule twice") {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        double p = rng.uniform(0.01, 0.99);
        double f1 = rng.uniform(0.1, 10.0);
        double f2 = rng.uniform(0.1, 10.0);
        double once = apply_fusion_probability(p, {f1 * f2});
        double twice = apply_fusion_probability(apply_fusion_probability(p, {f2}), {f1});
        CHECK(std::abs(once - twice) < 1e-12);
    }
}

TEST_CASE("apply_fusion with factor one is a bitwise no-op") {
    Tensor pre = Tensor::from_data({0.123456789, -1.987654321}, {2});
    Tensor out = apply_fusion(pre, {1.0});
    CHECK(out.data() == pre.data());
    CHECK(apply_fusion_probability(0.7312, {1.0}) == 0.7312);
}

TEST_CASE("logit scaling semantics on [a, a]") {
    const double a = 0.8;
    Tensor fused = apply_fusion(Tensor::from_data({a, a}, {2}), {2.0});
    Tensor probs = softmax(fused);
    // logit convention: preictal prob = e^{2a} / (e^a + e^{2a})
    double expected = std::exp(2 * a) / (std::exp(a) + std::exp(2 * a));
    CHECK(probs.data()[1] == doctest::Approx(expected).epsilon(1e-12));
    // the probability convention gives a different number by design
    double prob_mode = apply_fusion_probability(0.5, {2.0});
    CHECK(prob_mode == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(prob_mode != doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("fused preictal probability increases with the factor for positive logits") {
    Tensor pre = Tensor::from_data({0.3, 0.9}, {2});
    double last = 0.0;
    for (double f : {1.0, 1.5, 2.0, 4.0, 8.0}) {
        double p = softmax(apply_fusion(pre, {f})).data()[1];
        CHECK(p > last);
        last = p;
    }
    CHECK_THROWS_AS(apply_fusion(pre, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(apply_fusion(pre, {-2.0}), std::invalid_argument);
}

TEST_CASE("probability-mode fusion is monotone in p and in the factor") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        double p = rng.uniform(0.01, 0.99);
        double f = rng.uniform(0.05, 20.0);
        double fused = apply_fusion_probability(p, {f});
        CHECK(fused > 0.0);
        CHECK(fused < 1.0);
        CHECK(apply_fusion_probability(p + 0.005, {f}) > fused);
        CHECK(apply_fusion_probability(p, {f * 1.1}) > fused);
    }
}

TEST_CASE("uniform priors leave network outputs bitwise unchanged") {
    PriorDensity ut = PriorDensity::uniform(PriorVariable::TimeOfDay);
    PriorDensity ud = PriorDensity::uniform(PriorVariable::DayOfWeek);
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Architecture arch;
        arch.input_shape = {1, 4, 4};
        arch.conv = {{2, 3, 1, 0, false}};
        arch.dense_hidden = {3};
        BayesNet net(arch, PriorSpec{}, rng.next_u64());
        Tensor input = random_tensor({1, 4, 4}, rng, false);
        double f = fusion_factor(ut, ud, rng.uniform(0, 4e9)).value;
        CHECK(f == 1.0);
        Tensor base = softmax(net.forward(input));
        Tensor fused = softmax(apply_fusion(net.forward(input), {f}));
        CHECK(base.data() == fused.data());
    }
}

TEST_CASE("prior JSON export round trip preserves the density") {
    Rng rng(8);
    std::vector<double> samples(25);
    for (double& s : samples) s = rng.uniform(0.0, 7.0);
    PriorDensity d = PriorDensity::fit(samples, PriorVariable::DayOfWeek);
    nlohmann::json j = d.to_json();
    CHECK(j.at("density_curve").size() == 1024);
    CHECK(j.at("period").get<double>() == 7.0);
    PriorDensity back = PriorDensity::from_json(j);
    for (double t = 0; t < 7.0; t += 0.37) {
        CHECK(back.evaluate(t) == d.evaluate(t));
    }
    PriorDensity u = PriorDensity::from_json(PriorDensity::uniform(PriorVariable::TimeOfDay).to_json());
    CHECK(u.is_uniform());
}

TEST_CASE("event time conversion") {
    // 2015-01-05 is a Monday
    UnixTime t = parse_iso8601("2015-01-05T08:30:00Z");
    EventTimeSample e = event_time_from_unix(t);
    CHECK(e.tod_hours == doctest::Approx(8.5));
    CHECK(e.dow_days == doctest::Approx(8.5 / 24.0));
    EventTimeSample sun = event_time_from_unix(parse_iso8601("2015-01-11T12:00:00Z"));
    CHECK(sun.dow_days == doctest::Approx(6.5));
    CHECK(iso8601_utc(t) == "2015-01-05T08:30:00Z");
}
