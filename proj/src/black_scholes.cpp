#include "volsmooth/black_scholes.hpp"

#include "volsmooth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace volsmooth::bs {

namespace {

void require_finite(double tau, double k, double v) {
    if (!std::isfinite(tau) || !std::isfinite(k) || !std::isfinite(v)) {
        throw Error(ErrorCode::Domain, "non-finite Black-Scholes input");
    }
    if (tau <= 0.0) throw Error(ErrorCode::Domain, "tau must be positive, got " + std::to_string(tau));
    if (v < 0.0) throw Error(ErrorCode::Domain, "volatility must be nonnegative");
}

constexpr double kMinVol = 1e-12;
constexpr double kMaxVol = 1e3;
constexpr int kMaxIterations = 300;

}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

double d1(double tau, double k, double v) {
    const double s = v * std::sqrt(tau);
    return -k / s + 0.5 * s;
}

double d2(double tau, double k, double v) {
    const double s = v * std::sqrt(tau);
    return -k / s - 0.5 * s;
}

double bs_call(double tau, double k, double v) {
    require_finite(tau, k, v);
    if (v == 0.0) return std::max(1.0 - std::exp(k), 0.0);
    return norm_cdf(d1(tau, k, v)) - std::exp(k) * norm_cdf(d2(tau, k, v));
}

double bs_put(double tau, double k, double v) {
    require_finite(tau, k, v);
    if (v == 0.0) return std::max(std::exp(k) - 1.0, 0.0);
    return std::exp(k) * norm_cdf(-d2(tau, k, v)) - norm_cdf(-d1(tau, k, v));
}

double bs_otm(double tau, double k, double v) { return k > 0.0 ? bs_call(tau, k, v) : bs_put(tau, k, v); }

double vega(double tau, double k, double v) {
    require_finite(tau, k, v);
    if (v <= 0.0) throw Error(ErrorCode::Domain, "vega requires v > 0");
    return norm_pdf(d1(tau, k, v)) * std::sqrt(tau);
}

double otm_upper_bound(double k) { return k > 0.0 ? 1.0 : std::exp(k); }

double implied_vol(double tau, double k, double price) {
    require_finite(tau, k, 0.0);
    if (!std::isfinite(price)) throw Error(ErrorCode::Domain, "non-finite price");
    if (price <= 0.0) throw Error(ErrorCode::BelowIntrinsic, "OTM price must be positive");
    if (price >= otm_upper_bound(k)) throw Error(ErrorCode::AboveBound, "price at or above upper bound");

    // Bracket: bs_otm is strictly increasing in v.
    double lo = 1e-4;
    double hi = 5.0;
    while (bs_otm(tau, k, lo) > price) {
        lo *= 0.1;
        if (lo < kMinVol) throw Error(ErrorCode::NoConvergence, "price below lowest bracketable vol");
    }
    while (bs_otm(tau, k, hi) < price) {
        hi *= 2.0;
        if (hi > kMaxVol) throw Error(ErrorCode::NoConvergence, "price above highest bracketable vol");
    }

    const double log_target = std::log(price);
    double v = std::clamp(0.3, lo, hi);
    for (int it = 0; it < kMaxIterations; ++it) {
        const double p = bs_otm(tau, k, v);
        if (p == price) return v;
        if (p < price) lo = v; else hi = v;

        double next = 0.0;
        bool newton_ok = false;
        if (p > 0.0) {
            // Newton on log-price: g = log p - log target, g' = vega / p.
            const double g = std::log(p) - log_target;
            const double dg = norm_pdf(d1(tau, k, v)) * std::sqrt(tau) / p;
            if (dg > 0.0 && std::isfinite(dg)) {
                next = v - g / dg;
                newton_ok = next > lo && next < hi;
            }
        }
        if (!newton_ok) next = (hi / lo > 2.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);

        if (std::abs(next - v) <= 1e-15 * v || hi - lo <= 4e-16 * hi) return next;
        v = next;
    }
    throw Error(ErrorCode::NoConvergence, "implied vol iteration cap reached");
}

}  // namespace volsmooth::bs
