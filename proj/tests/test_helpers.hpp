#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "riskcast/rng.hpp"
#include "riskcast/tensor.hpp"

namespace riskcast::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
    std::vector<double> d(static_cast<std::size_t>(shape_size(shape)));
    for (double& v : d) v = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(d), std::move(shape), requires_grad);
}

// Central finite differences of a scalar rebuild function w.r.t. one leaf.
template <typename F>
void check_gradients(Tensor& leaf, F rebuild, double rel_tol, double h = 1e-5) {
    Tensor loss = rebuild();
    leaf.zero_grad();
    loss.backward();
    std::vector<double> analytic = leaf.grad();
    for (std::size_t i = 0; i < leaf.data().size(); ++i) {
        double saved = leaf.data()[i];
        leaf.data()[i] = saved + h;
        double up = rebuild().item();
        leaf.data()[i] = saved - h;
        double down = rebuild().item();
        leaf.data()[i] = saved;
        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        CAPTURE(i);
        CHECK(std::abs(fd - analytic[i]) / denom < rel_tol);
    }
}

// Simpson's rule on a lambda; n panels (even).
template <typename F>
double simpson(F f, double a, double b, int n) {
    if (n % 2) ++n;
    double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// KL(N(mq,sq) || N(mp,sp)) by quadrature over the support of q.
inline double kl_gaussians_quadrature(double mq, double sq, double mp, double sp) {
    auto integrand = [&](double x) {
        double zq = (x - mq) / sq, zp = (x - mp) / sp;
        double log_q = -0.5 * zq * zq - std::log(sq) - 0.918938533204672742;  // ln sqrt(2pi)
        double log_p = -0.5 * zp * zp - std::log(sp) - 0.918938533204672742;
        return std::exp(log_q) * (log_q - log_p);
    };
    double lo = mq - 14.0 * sq, hi = mq + 14.0 * sq;
    return simpson(integrand, lo, hi, 40000);
}

}  // namespace riskcast::testing
