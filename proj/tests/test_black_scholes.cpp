#include "volsmooth/black_scholes.hpp"
#include "volsmooth/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace volsmooth;

namespace {

// Maclaurin series of erf, summed until terms vanish; accurate for |x| < 3.
double erf_series(double x) {
    double term = x;
    double sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        const double add = term / (2 * n + 1);
        sum += add;
        if (std::abs(add) < 1e-18) break;
    }
    return 2.0 / std::sqrt(std::acos(-1.0)) * sum;
}

double cdf_series(double x) { return 0.5 * (1.0 + erf_series(x / std::sqrt(2.0))); }

// E[(e^X - e^k)^+] with X ~ N(-v^2 tau / 2, v^2 tau), composite Simpson over +-12 sd.
double call_by_quadrature(double tau, double k, double v) {
    const double s = v * std::sqrt(tau);
    const double mu = -0.5 * s * s;
    const int n = 20000;
    const double lo = std::max(mu - 12 * s, k);
    const double hi = mu + 12 * s;
    const double h = (hi - lo) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = lo + i * h;
        const double payoff = std::max(std::exp(x) - std::exp(k), 0.0);
        const double dens = std::exp(-0.5 * (x - mu) * (x - mu) / (s * s)) / (s * std::sqrt(2 * std::acos(-1.0)));
        const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        sum += w * payoff * dens;
    }
    return sum * h / 3.0;
}

}  // namespace

TEST_CASE("normal cdf agrees with the erf series") {
    for (double x = -4.0; x <= 4.0; x += 0.25) CHECK(bs::norm_cdf(x) == doctest::Approx(cdf_series(x)).epsilon(1e-13));
}

TEST_CASE("zero vol gives intrinsic value") {
    CHECK(bs::bs_call(1.0, 0.0, 0.0) == 0.0);
    CHECK(bs::bs_call(0.25, -0.1, 0.0) == doctest::Approx(1.0 - std::exp(-0.1)).epsilon(1e-15));
    CHECK(bs::bs_otm(0.5, -0.5, 0.0) == 0.0);
}

TEST_CASE("at-the-money call equals 2 Phi(v sqrt(tau) / 2) - 1") {
    const double expected = 2.0 * cdf_series(0.1) - 1.0;
    CHECK(bs::bs_call(1.0, 0.0, 0.2) == doctest::Approx(expected).epsilon(1e-13));
    CHECK(expected == doctest::Approx(0.0796557).epsilon(1e-6));
    CHECK(bs::bs_otm(1.0, 0.0, 0.2) == doctest::Approx(bs::bs_call(1.0, 0.0, 0.2)).epsilon(1e-15));
}

TEST_CASE("out-of-the-money call matches lognormal quadrature") {
    CHECK(bs::bs_otm(1.0, 0.1, 0.2) == doctest::Approx(call_by_quadrature(1.0, 0.1, 0.2)).epsilon(1e-9));
    CHECK(bs::bs_otm(0.3, 0.05, 0.45) == doctest::Approx(call_by_quadrature(0.3, 0.05, 0.45)).epsilon(1e-9));
}

TEST_CASE("put and call satisfy parity in forward units") {
    for (double k : {-0.4, -0.1, 0.0, 0.2}) {
        CHECK(bs::bs_call(0.7, k, 0.3) - bs::bs_put(0.7, k, 0.3) == doctest::Approx(1.0 - std::exp(k)).epsilon(1e-14));
    }
}

TEST_CASE("vega") {
    CHECK(bs::vega(1.0, 0.0, 0.2) == doctest::Approx(std::exp(-0.005) / std::sqrt(2 * std::acos(-1.0))).epsilon(1e-14));
    CHECK(bs::vega(1.0, 0.0, 0.2) == doctest::Approx(0.3969525).epsilon(1e-7));
    CHECK(bs::vega(0.01, -0.2, 0.3) > 0.0);
    const double h = 1e-6;
    const double fd = (bs::bs_otm(0.4, -0.2, 0.25 + h) - bs::bs_otm(0.4, -0.2, 0.25 - h)) / (2 * h);
    CHECK(bs::vega(0.4, -0.2, 0.25) == doctest::Approx(fd).epsilon(1e-8));
}

TEST_CASE("implied vol inverts the price") {
    CHECK(bs::implied_vol(1.0, 0.0, 0.0796557) == doctest::Approx(0.2).epsilon(1e-6));
    const double p = bs::bs_otm(1.0, 0.0, 0.2);
    CHECK(std::abs(bs::implied_vol(1.0, 0.0, p) - 0.2) < 1e-8);

    // bisection oracle
    double lo = 1e-4;
    double hi = 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (bs::bs_otm(0.5, -0.3, mid) < 0.01 ? lo : hi) = mid;
    }
    CHECK(bs::implied_vol(0.5, -0.3, 0.01) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-10));

    for (double tau : {0.0001, 0.01, 0.25, 1.0}) {
        for (double z : {-1.5, -0.5, 0.0, 0.3, 0.5}) {
            for (double v : {0.05, 0.2, 0.6, 1.0}) {
                const double k = z * std::sqrt(tau);
                CHECK(std::abs(bs::implied_vol(tau, k, bs::bs_otm(tau, k, v)) - v) < 1e-8);
            }
        }
    }
}

TEST_CASE("implied vol errors") {
    auto code = [](auto&& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    CHECK(code([] { bs::implied_vol(1.0, 0.0, 0.0); }) == ErrorCode::BelowIntrinsic);
    CHECK(code([] { bs::implied_vol(1.0, 0.0, 1.0); }) == ErrorCode::AboveBound);
    CHECK(code([] { bs::bs_call(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.2); }) == ErrorCode::Domain);
    CHECK(code([] { bs::bs_call(1.0, 0.0, std::numeric_limits<double>::infinity()); }) == ErrorCode::Domain);
}
