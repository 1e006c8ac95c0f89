#pragma once

// Black-Scholes in forward units: prices are undiscounted and divided by the
// forward, strikes enter only through log-moneyness k = log(K / F).

namespace volsmooth::bs {

struct PricingPoint {
    double tau;  // years to expiry, > 0
    double k;    // log-moneyness
    double v;    // annualized implied volatility, > 0
};

double norm_cdf(double x);
double norm_pdf(double x);

double d1(double tau, double k, double v);
double d2(double tau, double k, double v);

/// Call price Phi(d1) - e^k Phi(d2). v == 0 returns the intrinsic (1 - e^k)^+.
double bs_call(double tau, double k, double v);

/// Put price e^k Phi(-d2) - Phi(-d1). v == 0 returns (e^k - 1)^+.
double bs_put(double tau, double k, double v);

/// Out-of-the-money price: call for k > 0, put for k <= 0.
double bs_otm(double tau, double k, double v);

/// dBS/dv = phi(d1) sqrt(tau); identical for calls and puts.
double vega(double tau, double k, double v);

inline double bs_call(const PricingPoint& p) { return bs_call(p.tau, p.k, p.v); }
inline double bs_otm(const PricingPoint& p) { return bs_otm(p.tau, p.k, p.v); }
inline double vega(const PricingPoint& p) { return vega(p.tau, p.k, p.v); }

/// Upper no-arbitrage bound of the OTM price at k: 1 for calls, e^k for puts.
double otm_upper_bound(double k);

/// Inverts bs_otm for v with a bracketed Newton iteration on log-price, falling back
/// to bisection whenever a Newton step leaves the bracket.
///
/// Throws Error(BelowIntrinsic) for price <= 0 (the OTM intrinsic value),
/// Error(AboveBound) for price >= otm_upper_bound(k) and Error(NoConvergence) if the
/// iteration cap is hit.
double implied_vol(double tau, double k, double price);

}  // namespace volsmooth::bs
