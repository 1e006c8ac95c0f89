#include "volsmooth/adamw.hpp"
#include "volsmooth/arbitrage.hpp"
#include "volsmooth/errors.hpp"
#include "volsmooth/losses.hpp"
#include "volsmooth/svi.hpp"
#include "volsmooth/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace volsmooth;
using namespace volsmooth::train;

namespace {

RectGrid grid_of(std::vector<double> rho, std::vector<double> z) {
    RectGrid g;
    g.rho = std::move(rho);
    g.z = std::move(z);
    return g;
}

std::vector<double> sample(const RectGrid& g, const std::function<double(double, double)>& f) {
    std::vector<double> v;
    for (const auto& p : g.points()) v.push_back(f(p.rho, p.z));
    return v;
}

double second_diff(double fm, double f0, double fp, double hm, double hp) {
    return 2.0 * (fm / (hm * (hm + hp)) - f0 / (hm * hp) + fp / (hp * (hm + hp)));
}

gno::GnoConfig small_config() {
    gno::GnoConfig c;
    c.layers = 2;
    c.channels = 4;
    c.K = 5;
    c.lift_hidden = 8;
    c.kernel_hidden = 8;
    return c;
}

SurfaceSnapshot small_snapshot(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ur(0.2, 1.0), uz(-1.2, 0.4);
    SurfaceSnapshot s;
    const svi::SsviParams p;
    for (std::size_t i = 0; i < n; ++i) {
        const double rho = ur(rng);
        const double z = uz(rng);
        s.records.push_back(OptionRecord::from_rho_z(rho, z, svi::ssvi_vol(p, rho * rho, z * rho)));
    }
    return s;
}

}  // namespace

TEST_CASE("fit loss examples") {
    CHECK(fit_loss({0.2, 0.3}, {0.2, 0.3}, {1.0, 1.0}).value == 0.0);
    const auto one = fit_loss({0.22}, {0.2}, {1.0});
    CHECK(one.value == doctest::Approx(0.1).epsilon(1e-14));

    SurfaceSnapshot s;
    s.records.push_back(OptionRecord::from_rho_z(0.5, 0.0, 0.2));
    CHECK(vega_weights(s) == std::vector<double>{1.0});
    CHECK(fit_loss({0.22}, s).value == doctest::Approx(0.1).epsilon(1e-14));

    const std::vector<double> vh = {0.21, 0.33, 0.18};
    const std::vector<double> v = {0.2, 0.3, 0.2};
    double rms = 0.0;
    for (std::size_t i = 0; i < 3; ++i) rms += std::pow((vh[i] - v[i]) / v[i], 2);
    CHECK(fit_loss(vh, v, {1.0, 1.0, 1.0}).value == doctest::Approx(std::sqrt(rms / 3.0)).epsilon(1e-14));
    CHECK_THROWS_AS(fit_loss({0.2}, {0.2, 0.3}, {1.0, 1.0}), Error);

    const auto lv = fit_loss(vh, v, {1.0, 2.0, 1.5});
    const double h = 1e-7;
    for (std::size_t i = 0; i < 3; ++i) {
        auto p = vh;
        auto m = vh;
        p[i] += h;
        m[i] -= h;
        const double fd = (fit_loss(p, v, {1.0, 2.0, 1.5}).value - fit_loss(m, v, {1.0, 2.0, 1.5}).value) / (2 * h);
        CHECK(lv.grad[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("vega weights are at least one") {
    const auto s = small_snapshot(3, 40);
    const auto w = vega_weights(s);
    for (double x : w) CHECK(x >= 1.0);
}

TEST_CASE("calendar loss examples") {
    const auto g = grid_of({0.5, 0.6}, {-0.1, 0.0, 0.1});
    const std::vector<double> values = {0.2, 0.2, 0.2, 0.15, 0.15, 0.15};
    const std::vector<double> cross = {0.2, 0.2, 0.2};
    const double expected = 0.5 / 0.6 + 1e-3 - 0.75;
    CHECK(expected == doctest::Approx(0.0843).epsilon(1e-3));
    CHECK(calendar_loss(g, values, cross).value == doctest::Approx(expected).epsilon(1e-12));

    std::vector<double> scaled = values;
    std::vector<double> scaled_cross = cross;
    for (auto& x : scaled) x *= 3.7;
    for (auto& x : scaled_cross) x *= 3.7;
    CHECK(calendar_loss(g, scaled, scaled_cross).value == doctest::Approx(expected).epsilon(1e-12));

    const auto flat = [](const std::vector<Coord>& p) { return std::vector<double>(p.size(), 0.2); };
    CHECK(calendar_loss(flat, RectGrid::uniform(Domain{}, 20, 20), Domain{}) == 0.0);
    CHECK(calendar_loss(batched(svi::ssvi_surface({})), RectGrid::uniform(Domain{}, 30, 30), Domain{}) == 0.0);
}

TEST_CASE("butterfly loss against grid butterfly terms") {
    const auto flat = [](const std::vector<Coord>& p) { return std::vector<double>(p.size(), 0.2); };
    const auto g = RectGrid::uniform(Domain{}, 20, 20);
    CHECK(butterfly_loss(flat, g) == 0.0);
    CHECK(butterfly_loss(batched(svi::ssvi_surface({})), g) == 0.0);

    auto bumped = [](double rho, double z) {
        const double d = (rho - 0.4) * (rho - 0.4) / 0.01 + (z + 0.3) * (z + 0.3) / 0.02;
        return 0.2 + 0.08 * std::exp(-d);
    };
    const auto vals = sample(g, bumped);
    const auto rep = arb::validate_surface(batched(bumped), Domain{}, g);
    auto sorted = rep.butterfly_values;
    std::sort(sorted.begin(), sorted.end());
    const double eps = sorted[0] < sorted[1] ? 0.5 * (sorted[0] + sorted[1]) : sorted[0] + 1e-3;
    double oracle = 0.0;
    for (double b : rep.butterfly_values) oracle += std::max(eps - b, 0.0);
    oracle /= static_cast<double>(g.size());
    CHECK(butterfly_loss(g, vals, eps).value == doctest::Approx(oracle).epsilon(1e-12));
    if (sorted[0] < sorted[1] && 2.0 * sorted[0] < sorted[1] && sorted[0] > 0.0) {
        CHECK(butterfly_loss(g, vals, 2.0 * sorted[0]).value ==
              doctest::Approx(sorted[0] / static_cast<double>(g.size())).epsilon(1e-12));
    }
}

TEST_CASE("regularization losses") {
    const auto unit = grid_of({1.0, 2.0, 3.0, 4.0}, {0.0, 1.0, 2.0, 3.0, 4.0});
    const auto quad = reg_losses(unit, sample(unit, [](double, double z) { return z * z; }));
    CHECK(quad.z.value == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(quad.rho.value == doctest::Approx(0.0));
    const auto affine = reg_losses(unit, sample(unit, [](double r, double z) { return 0.1 + 0.3 * r - 0.2 * z; }));
    CHECK(affine.z.value < 1e-12);
    CHECK(affine.rho.value < 1e-12);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.1, 0.4), step(0.05, 0.3);
    for (int t = 0; t < 5; ++t) {
        RectGrid g;
        double r = 0.05;
        double z = -1.5;
        for (int i = 0; i < 7; ++i) g.rho.push_back(r += step(rng));
        for (int j = 0; j < 9; ++j) g.z.push_back(z += step(rng));
        std::vector<double> v(g.size());
        for (auto& x : v) x = u(rng);
        double srho = 0.0;
        double sz = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 1; i + 1 < g.m(); ++i) {
            for (std::size_t j = 1; j + 1 < g.n(); ++j) {
                srho += std::pow(second_diff(v[g.index(i - 1, j)], v[g.index(i, j)], v[g.index(i + 1, j)],
                                             g.rho[i] - g.rho[i - 1], g.rho[i + 1] - g.rho[i]),
                                 2);
                sz += std::pow(second_diff(v[g.index(i, j - 1)], v[g.index(i, j)], v[g.index(i, j + 1)],
                                           g.z[j] - g.z[j - 1], g.z[j + 1] - g.z[j]),
                               2);
                ++count;
            }
        }
        const auto r2 = reg_losses(g, v);
        CHECK(std::abs(r2.rho.value - std::sqrt(srho / count)) < 1e-12 * std::max(1.0, r2.rho.value));
        CHECK(std::abs(r2.z.value - std::sqrt(sz / count)) < 1e-12 * std::max(1.0, r2.z.value));
    }
}

TEST_CASE("total loss weights and gradient") {
    auto cfg = small_config();
    cfg.epsilon_arb = 1.0;
    auto model = gno::GnoModel::initialized(cfg, 5);
    const auto snap = small_snapshot(6, 30);
    LossProblem problem;
    problem.snapshot = &snap;
    problem.input_indices = {0, 2, 4, 5, 7, 9, 11, 13, 15, 17, 20, 22, 25, 28};
    problem.arb_grid = RectGrid::uniform(Domain{}, 5, 6);

    LossWeights zero{0, 0, 0, 0, 0};
    const auto z = total_loss(model, problem, zero);
    CHECK(z.parts.total == 0.0);
    CHECK(std::all_of(z.grad.values.begin(), z.grad.values.end(), [](double g) { return g == 0.0; }));

    LossWeights fit_only{1, 0, 0, 0, 0};
    const auto f = total_loss(model, problem, fit_only, false);
    auto input = gno::OperatorInput::from_snapshot(snap).subset(problem.input_indices);
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < snap.size(); ++i) {
        if (std::find(problem.input_indices.begin(), problem.input_indices.end(), i) == problem.input_indices.end()) {
            rest.push_back(i);
        }
    }
    std::vector<Coord> extra;
    for (auto i : rest) extra.push_back({snap.records[i].rho, snap.records[i].z});
    const auto out = gno::smooth(model, input, extra);
    std::vector<double> pred(snap.size());
    for (std::size_t p = 0; p < problem.input_indices.size(); ++p) pred[problem.input_indices[p]] = out[p];
    for (std::size_t p = 0; p < rest.size(); ++p) pred[rest[p]] = out[problem.input_indices.size() + p];
    CHECK(f.parts.total == doctest::Approx(fit_loss(pred, snap).value).epsilon(1e-12));

    const LossWeights w{1.0, 10.0, 10.0, 0.01, 0.01};
    const auto full = total_loss(model, problem, w);
    CHECK(full.parts.but > 0.0);
    CHECK(full.parts.total ==
          doctest::Approx(full.parts.fit + 10 * full.parts.cal + 10 * full.parts.but + 0.01 * full.parts.reg_rho +
                          0.01 * full.parts.reg_z));
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> pick(0, model.parameter_count() - 1);
    auto params = model.params();
    const double h = 1e-5;
    std::size_t bad = 0;
    for (int t = 0; t < 150; ++t) {
        const auto i = pick(rng);
        const double keep = params[i];
        params[i] = keep + h;
        const double fp = total_loss(model, problem, w, false).parts.total;
        params[i] = keep - h;
        const double fm = total_loss(model, problem, w, false).parts.total;
        params[i] = keep;
        const double fd = (fp - fm) / (2 * h);
        const double a = full.grad.values[i];
        if (std::abs(a - fd) > 1e-4 * std::max({std::abs(a), std::abs(fd), 1e-4})) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("AdamW steps") {
    std::vector<double> p = {1.0, -2.0};
    AdamWState st;
    adamw_step(p, std::vector<double>{0.0, 0.0}, st, 0.1, 0.0);
    CHECK(p == std::vector<double>{1.0, -2.0});

    AdamWState s2;
    std::vector<double> q = {1.0, -2.0, 0.5};
    adamw_step(q, std::vector<double>{3.0, -0.5, 100.0}, s2, 0.01, 0.0);
    CHECK(q[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(q[1] == doctest::Approx(-1.99).epsilon(1e-9));
    CHECK(q[2] == doctest::Approx(0.49).epsilon(1e-9));
    CHECK(s2.step == 1);

    std::vector<double> d = {2.0};
    AdamWState s3;
    adamw_step(d, std::vector<double>{0.0}, s3, 0.1, 0.5);
    CHECK(d[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));

    // f = theta^2 from 1 at lr 0.1: compare with a hand-written recursion. Momentum makes
    // theta overshoot zero after 11 steps, so |theta| only decreases monotonically until then.
    std::vector<double> theta = {1.0};
    AdamWState s4;
    double t = 1.0;
    double m = 0.0;
    double v = 0.0;
    double prev = 1.0;
    for (int i = 1; i <= 50; ++i) {
        adamw_step(theta, std::vector<double>{2.0 * theta[0]}, s4, 0.1, 0.0);
        const double g = 2.0 * t;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        t -= 0.1 * (m / (1.0 - std::pow(0.9, i))) / (std::sqrt(v / (1.0 - std::pow(0.999, i))) + 1e-8);
        CHECK(theta[0] == doctest::Approx(t).epsilon(1e-12));
        if (i <= 11) CHECK(std::abs(theta[0]) < prev);
        prev = std::abs(theta[0]);
    }
    CHECK(std::abs(theta[0]) < 0.01);

    std::vector<double> r = {1.0, 2.0};
    AdamWState s5;
    try {
        adamw_step(r, std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}, s5, 0.1, 0.0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteGradient);
    }
    CHECK(r == std::vector<double>{1.0, 2.0});
    CHECK(s5.step == 0);
}

TEST_CASE("training is reproducible and independent of thread count") {
    std::vector<SurfaceSnapshot> data = {small_snapshot(1, 60), small_snapshot(2, 60), small_snapshot(3, 60)};
    TrainConfig tc;
    tc.epochs = 2;
    tc.pseudo_batch = 2;
    tc.learning_rate = 1e-3;
    tc.arb_m = 8;
    tc.arb_n = 8;
    tc.seed = 77;
    auto m1 = gno::GnoModel::initialized(small_config(), 1);
    auto m2 = gno::GnoModel::initialized(small_config(), 1);
    const auto r1 = train::train(m1, data, tc, {});
    tc.jobs = 2;
    const auto r2 = train::train(m2, data, tc, {});
    CHECK(loss_log_csv(r1.log) == loss_log_csv(r2.log));
    const auto p1 = m1.params();
    const auto p2 = m2.params();
    CHECK(std::vector<double>(p1.begin(), p1.end()) == std::vector<double>(p2.begin(), p2.end()));
    CHECK(r1.log.size() == 2);
    CHECK(r1.optimizer.step == 4);
    CHECK(loss_log_csv(r1.log).rfind("epoch,loss,fit,but,cal,reg_rho,reg_z\n", 0) == 0);

    auto m3 = gno::GnoModel::initialized(small_config(), 1);
    tc.pseudo_batch = 1;
    tc.epochs = 3;
    const auto r3 = train::train(m3, {data[0]}, tc, {});
    CHECK(r3.optimizer.step == 3);
}

TEST_CASE("finetune with zero epochs leaves the model unchanged") {
    std::vector<SurfaceSnapshot> data = {small_snapshot(1, 40)};
    auto m = gno::GnoModel::initialized(small_config(), 2);
    const std::vector<double> before(m.params().begin(), m.params().end());
    TrainConfig tc;
    tc.epochs = 0;
    const auto r = finetune(m, data, data, tc, {});
    CHECK(r.log.empty());
    CHECK(std::equal(before.begin(), before.end(), m.params().begin()));
}

TEST_CASE("train config parsing") {
    const auto j = to_json(TrainConfig{});
    CHECK(train_config_from_json(j).learning_rate == 1e-4);
    auto bad = j;
    bad["mystery"] = 1;
    CHECK_THROWS_AS(train_config_from_json(bad), Error);
    CHECK(loss_weights_from_json(to_json(LossWeights{})).cal == 10.0);
}
