#include "volsmooth/black_scholes.hpp"
#include "volsmooth/errors.hpp"
#include "volsmooth/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace volsmooth;
using namespace volsmooth::metrics;

namespace {

/// Type-7 quantile computed from scratch: h = (n-1) p, interpolate floor/ceil.
double quantile_oracle(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = static_cast<std::size_t>(std::ceil(h));
    return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("delta_abs examples") {
    CHECK(delta_abs(0.2, 0.2) == 0.0);
    CHECK(delta_abs(0.22, 0.2) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(delta_abs(0.18, 0.2) == doctest::Approx(0.1).epsilon(1e-14));
    for (double c : {0.5, 3.0, 17.0}) CHECK(delta_abs(0.31 * c, 0.27 * c) == doctest::Approx(delta_abs(0.31, 0.27)));
    CHECK_THROWS_AS(delta_abs(0.2, 0.0), Error);
}

TEST_CASE("delta_spr examples") {
    CHECK(delta_spr(0.5, -0.1, 0.2, 0.2, 0.19, 0.21) == 0.0);

    const double tau = 0.5;
    const double k = -0.1;
    const double v = 0.2;
    const double p = bs::bs_otm(tau, k, v);
    const double v_bid = bs::implied_vol(tau, k, p - 0.002);
    const double v_ask = bs::implied_vol(tau, k, p + 0.002);
    CHECK(spread(tau, k, v_bid, v_ask) == doctest::Approx(0.004).epsilon(1e-9));
    const double v_edge = bs::implied_vol(tau, k, p + 0.002);
    CHECK(delta_spr(tau, k, v_edge, v, v_bid, v_ask) == doctest::Approx(1.0).epsilon(1e-8));

    const double wide_bid = bs::implied_vol(tau, k, p - 0.004);
    const double wide_ask = bs::implied_vol(tau, k, p + 0.004);
    const double vh = 0.205;
    CHECK(delta_spr(tau, k, vh, v, wide_bid, wide_ask) ==
          doctest::Approx(0.5 * delta_spr(tau, k, vh, v, v_bid, v_ask)).epsilon(1e-8));

    CHECK_THROWS_AS(delta_spr(tau, k, 0.21, 0.2, 0.2, 0.2), Error);
}

TEST_CASE("delta_spr <= 1 iff the model price is inside a centred band") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ut(0.02, 1.0), uk(-0.8, 0.3), uv(0.1, 0.5), uh(0.0005, 0.01),
        ushift(-2.0, 2.0);
    int checked = 0;
    for (int t = 0; t < 300; ++t) {
        const double tau = ut(rng);
        const double k = uk(rng);
        const double v = uv(rng);
        const double p = bs::bs_otm(tau, k, v);
        const double half = std::min(uh(rng), 0.4 * p);
        const double target = p + ushift(rng) * half;
        if (target <= 0.0 || target >= bs::otm_upper_bound(k)) continue;
        double v_bid = 0.0;
        double v_ask = 0.0;
        double vh = 0.0;
        try {
            v_bid = bs::implied_vol(tau, k, p - half);
            v_ask = bs::implied_vol(tau, k, p + half);
            vh = bs::implied_vol(tau, k, target);
        } catch (const Error&) {
            continue;
        }
        const double price = bs::bs_otm(tau, k, vh);
        const double lo = bs::bs_otm(tau, k, v_bid);
        const double hi = bs::bs_otm(tau, k, v_ask);
        if (std::abs(price - lo) < 1e-9 || std::abs(price - hi) < 1e-9) continue;
        const bool inside = price >= lo && price <= hi;
        CHECK((delta_spr(tau, k, vh, v, v_bid, v_ask) <= 1.0) == inside);
        ++checked;
    }
    CHECK(checked > 200);
}

TEST_CASE("quantiles agree with a sort-based reference") {
    std::mt19937_64 rng(1);
    std::lognormal_distribution<double> d(0.0, 1.0);
    for (std::size_t n : {1u, 2u, 7u, 100u, 1001u}) {
        std::vector<double> v(n);
        for (auto& x : v) x = d(rng);
        const auto s = describe(v);
        CHECK(s.count == n);
        double prev = -1.0;
        for (std::size_t q = 0; q < kQuantileLevels.size(); ++q) {
            CHECK(s.quantiles[q] == doctest::Approx(quantile_oracle(v, kQuantileLevels[q])).epsilon(1e-14));
            CHECK(s.quantiles[q] >= prev);
            prev = s.quantiles[q];
        }
    }
}

TEST_CASE("describe on small and constant lists") {
    const auto one = describe({0.3});
    CHECK(one.mean == 0.3);
    CHECK(one.std == 0.0);
    for (double q : one.quantiles) CHECK(q == 0.3);

    const auto c = describe({0.1, 0.1, 0.1, 0.1});
    CHECK(c.std == 0.0);

    const auto two = describe({1.0, 3.0});
    CHECK(two.mean == 2.0);
    CHECK(two.std == doctest::Approx(std::sqrt(2.0)));

    CHECK_THROWS_AS(describe({}), Error);
    CHECK_THROWS_AS(quantile_sorted({}, 0.5), Error);
}

TEST_CASE("point metrics skip missing bounds") {
    SurfaceSnapshot s;
    auto a = OptionRecord::from_rho_z(0.5, -0.2, 0.2);
    a.iv_bid = 0.19;
    a.iv_ask = 0.21;
    s.records = {a, OptionRecord::from_rho_z(0.6, 0.1, 0.25)};
    const auto pm = point_metrics(s, {0.2, 0.275});
    REQUIRE(pm.size() == 2);
    CHECK(pm[0].delta_spr);
    CHECK(!pm[1].delta_spr);
    const auto agg = aggregate(pm);
    CHECK(agg.mean_delta_abs == doctest::Approx(0.05));
    CHECK(agg.mean_delta_spr);
    CHECK(*agg.mean_delta_spr == 0.0);
}

TEST_CASE("benchmark summary and bins") {
    CHECK_THROWS_AS(benchmark_summary({}, {}), Error);

    std::vector<SurfaceAggregate> per = {{0.01, 0.5, 0.002}, {0.03, std::nullopt, std::nullopt}};
    std::vector<SpatialPoint> pts = {{0.05, -1.45, 0.02, {}, {}, {}}, {0.06, -1.44, 0.04, {}, 1.0, {}}};
    BinSpec spec;
    const auto sum = benchmark_summary(per, pts, spec);
    CHECK(sum.delta_abs.mean == doctest::Approx(0.02));
    REQUIRE(sum.delta_spr);
    CHECK(sum.delta_spr->count == 1);
    REQUIRE(sum.bins.size() == 100);
    REQUIRE(sum.bins[0].mean_delta_abs);
    CHECK(*sum.bins[0].mean_delta_abs == doctest::Approx(0.03));
    CHECK(*sum.bins[0].mean_but == 1.0);
    CHECK(!sum.bins[1].mean_delta_abs);

    const auto csv = bins_csv(sum);
    CHECK(csv.rfind("rho_bin,z_bin,mean_delta_abs,mean_delta_spr,mean_but,mean_cal_increment\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);
    CHECK(csv.find("\n0,1,,,,\n") != std::string::npos);
    const auto j = to_json(sum);
    CHECK(j.contains("delta_abs"));
}
