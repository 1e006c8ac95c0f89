#include "volsmooth/errors.hpp"
#include "volsmooth/ffn.hpp"
#include "volsmooth/gno.hpp"
#include "volsmooth/graph.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

using namespace volsmooth;
using namespace volsmooth::gno;

namespace {

GnoConfig tiny_config() {
    GnoConfig c;
    c.layers = 2;
    c.channels = 4;
    c.K = 3;
    c.rho_bar = 1.0;
    return c;
}

OperatorInput random_input(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ur(0.1, 1.0), uz(-1.5, 0.5), uv(0.12, 0.4);
    OperatorInput in;
    for (std::size_t i = 0; i < n; ++i) {
        in.coords.push_back({ur(rng), uz(rng)});
        in.values.push_back(uv(rng));
    }
    return in;
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("stride selection") {
    CHECK(stride_selection(12, 5) == std::vector<std::size_t>{0, 3, 6, 9});
    CHECK(stride_selection(4, 5) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(stride_selection(5, 5) == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(stride_selection(11, 5) == std::vector<std::size_t>{0, 3, 6, 9});
    for (std::size_t n = 1; n < 200; ++n) {
        for (std::size_t K : {1u, 3u, 20u, 50u}) {
            const auto sel = stride_selection(n, K);
            CHECK(sel.size() <= K);
            CHECK(sel.front() == 0);
            const std::size_t s = (n + K - 1) / K;
            if (s > 1) CHECK((n + s - 2) / (s - 1) > K);
        }
    }
}

TEST_CASE("graph respects truncation radius and nearest-first ordering") {
    const auto in = random_input(200, 4);
    const auto g = build_operator_graph(in.coords, {{0.5, 0.0}}, 0.2, 10);
    REQUIRE(g.n_out() == 201);
    CHECK(g.offsets.size() == 202);
    for (std::size_t y = 0; y < g.n_out(); ++y) {
        const auto nb = g.neighbors_of(y);
        CHECK(!nb.empty());
        CHECK(nb.size() <= 10);
        double prev = -1.0;
        for (auto x : nb) {
            const double dr = in.coords[x].rho - g.out_coords[y].rho;
            const double dz = in.coords[x].z - g.out_coords[y].z;
            CHECK(std::abs(dr) <= 0.2);
            const double d = std::hypot(dr, dz);
            CHECK(d >= prev);
            prev = d;
        }
        if (y < 200) CHECK(nb.front() == y);
    }
    CHECK(code_of([&] { build_graph(in.coords, {{0.01, 0.0}}, 0.01, 5); }) == ErrorCode::NoNeighbors);
}

TEST_CASE("feed-forward network edge cases") {
    FeedForwardNet zero({3, 8, 2});
    const auto y = ffn_eval(zero, Eigen::Vector3d(1.0, -2.0, 0.5));
    CHECK(y.size() == 2);
    CHECK(y.norm() == 0.0);

    FeedForwardNet id({3, 3});
    auto p = id.params();
    for (int i = 0; i < 3; ++i) p[id.shape().weight_offset(0) + static_cast<std::size_t>(i * 3 + i)] = 1.0;
    const Eigen::Vector3d x(0.3, -1.2, 4.0);
    CHECK((ffn_eval(id, x) - x).norm() == 0.0);
    CHECK_THROWS_AS(ffn_eval(id, Eigen::Vector2d(1.0, 2.0)), Error);
}

TEST_CASE("feed-forward backward matches finite differences") {
    FeedForwardNet net({3, 6, 5, 2});
    std::mt19937_64 rng(5);
    net.initialize(rng);
    MatrixRM<double> x(4, 3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    MatrixRM<double> dy(4, 2);
    for (Eigen::Index i = 0; i < dy.size(); ++i) dy.data()[i] = u(rng);

    FfnCache<double> cache;
    MatrixRM<double> y;
    ffn_forward<double>(net.shape(), net.params().data(), x, y, &cache);
    std::vector<double> grad(net.params().size(), 0.0);
    MatrixRM<double> dx;
    ffn_backward(net.shape(), net.params().data(), cache, dy, grad.data(), &dx);

    auto objective = [&](const MatrixRM<double>& in) {
        MatrixRM<double> out;
        ffn_forward<double>(net.shape(), net.params().data(), in, out, nullptr);
        return (out.array() * dy.array()).sum();
    };
    const double h = 1e-6;
    auto params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double fp = objective(x);
        params[i] = keep - h;
        const double fm = objective(x);
        params[i] = keep;
        CHECK(std::abs((fp - fm) / (2 * h) - grad[i]) < 1e-7);
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        MatrixRM<double> xp = x;
        MatrixRM<double> xm = x;
        xp.data()[i] += h;
        xm.data()[i] -= h;
        CHECK(std::abs((objective(xp) - objective(xm)) / (2 * h) - dx.data()[i]) < 1e-7);
    }
}

TEST_CASE("zero parameters give softplus(0) everywhere") {
    const GnoModel model(tiny_config());
    const auto out = smooth(model, random_input(7, 1), {{0.5, 0.0}, {0.9, -1.0}});
    REQUIRE(out.size() == 9);
    for (double v : out) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("parameter counts") {
    CHECK(GnoModel(GnoConfig{}).parameter_count() == 102529);
    CHECK(ParameterLayout::make(GnoConfig{}).total == 102529);
    CHECK(GnoModel(tiny_config()).parameter_count() == ParameterLayout::make(tiny_config()).total);
    const auto layout = ParameterLayout::make(GnoConfig{});
    CHECK(!layout.layers[0].local_offset);
    CHECK(layout.layers[1].local_offset);
    CHECK(layout.layers[0].lift.in_dim() == 1);
    CHECK(layout.layers[0].kernel.in_dim() == 21);
    CHECK(layout.layers[0].kernel.out_dim() == 16 * 16 + 16);
}

TEST_CASE("backward matches finite differences for every parameter") {
    auto model = GnoModel::initialized(tiny_config(), 3);
    const auto in = random_input(5, 9);
    const std::vector<Coord> extra = {{0.3, -0.4}, {0.8, 0.2}};
    const auto graph = build_operator_graph(in.coords, extra, model.config().rho_bar, model.config().K);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> up(graph.n_out());
    for (auto& x : up) x = u(rng);

    ForwardTape tape;
    const auto y = gno_forward(model, in, graph, &tape);
    const auto grad = gno_backward(model, in, graph, tape, up);
    REQUIRE(grad.values.size() == model.parameter_count());

    auto objective = [&] {
        const auto out = gno_forward(model, in, graph);
        return std::inner_product(out.begin(), out.end(), up.begin(), 0.0);
    };
    const double h = 1e-4;
    auto params = model.params();
    std::size_t bad = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double fp = objective();
        params[i] = keep - h;
        const double fm = objective();
        params[i] = keep;
        const double fd = (fp - fm) / (2 * h);
        const double a = grad.values[i];
        if (std::abs(a - fd) > 1e-4 * std::max({std::abs(a), std::abs(fd), 1e-4})) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("zero upstream gives a zero gradient") {
    const auto model = GnoModel::initialized(tiny_config(), 3);
    const auto in = random_input(5, 9);
    const auto graph = build_operator_graph(in.coords, {}, 1.0, 3);
    ForwardTape tape;
    gno_forward(model, in, graph, &tape);
    const std::vector<double> up(graph.n_out(), 0.0);
    const auto g = gno_backward(model, in, graph, tape, up);
    CHECK(std::all_of(g.values.begin(), g.values.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("stale tapes and mismatched graphs are rejected") {
    auto model = GnoModel::initialized(tiny_config(), 3);
    const auto in = random_input(5, 9);
    const auto graph = build_operator_graph(in.coords, {}, 1.0, 3);
    ForwardTape tape;
    gno_forward(model, in, graph, &tape);
    model.params()[0] += 1.0;
    const std::vector<double> up(graph.n_out(), 1.0);
    CHECK(code_of([&] { gno_backward(model, in, graph, tape, up); }) == ErrorCode::StaleTape);

    const auto other = build_graph(in.coords, {{0.5, 0.0}}, 1.0, 3);
    CHECK(code_of([&] { gno_forward(model, in, other); }) == ErrorCode::GraphMismatch);
}

TEST_CASE("outputs are invariant under input permutation") {
    GnoConfig cfg = tiny_config();
    cfg.K = 50;
    const auto model = GnoModel::initialized(cfg, 11);
    const auto in = random_input(20, 6);
    const std::vector<Coord> extra = {{0.4, -0.3}, {0.7, 0.1}};
    const auto base = smooth(model, in, extra);

    std::vector<std::size_t> perm(in.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto shuffled = smooth(model, in.subset(perm), extra);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(shuffled[i] == doctest::Approx(base[perm[i]]).epsilon(1e-12));
    for (std::size_t e = 0; e < extra.size(); ++e) {
        CHECK(shuffled[in.size() + e] == doctest::Approx(base[in.size() + e]).epsilon(1e-12));
    }
}

TEST_CASE("duplicating every input leaves neighbour means unchanged") {
    GnoConfig cfg = tiny_config();
    cfg.K = 100;
    const auto model = GnoModel::initialized(cfg, 12);
    const auto in = random_input(15, 7);
    const std::vector<Coord> extra = {{0.5, -0.5}};
    const auto base = smooth(model, in, extra);
    std::vector<std::size_t> twice;
    for (std::size_t i = 0; i < in.size(); ++i) {
        twice.push_back(i);
        twice.push_back(i);
    }
    const auto doubled = smooth(model, in.subset(twice), extra);
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(doubled[2 * i] == doctest::Approx(base[i]).epsilon(1e-12));
    CHECK(doubled.back() == doctest::Approx(base.back()).epsilon(1e-12));
}

TEST_CASE("removing an input outside every other neighbourhood") {
    GnoConfig cfg = tiny_config();
    cfg.rho_bar = 0.2;
    cfg.K = 4;
    const auto model = GnoModel::initialized(cfg, 13);
    auto in = random_input(12, 8);
    for (auto& c : in.coords) c.rho = 0.1 + 0.2 * (c.rho - 0.1);
    in.coords.push_back({0.95, 0.0});
    in.values.push_back(0.2);
    const std::vector<Coord> extra = {{0.15, -0.2}};
    const auto full = smooth(model, in, extra);
    std::vector<std::size_t> keep(12);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    const auto reduced = smooth(model, in.subset(keep), extra);
    for (std::size_t i = 0; i < 12; ++i) CHECK(reduced[i] == full[i]);
    CHECK(reduced.back() == full.back());
}

TEST_CASE("kernel evaluations equal edge counts") {
    GnoConfig cfg = tiny_config();
    cfg.rho_bar = 0.3;
    const auto in = random_input(60, 3);
    for (std::size_t K : {2u, 5u, 10u}) {
        cfg.K = K;
        const GnoModel model(cfg);
        std::vector<Coord> extra;
        for (int i = 0; i < 30; ++i) extra.push_back({0.1 + 0.03 * i, -0.5});
        const auto graph = build_operator_graph(in.coords, extra, cfg.rho_bar, K);
        ForwardStats stats;
        gno_forward(model, in, graph, nullptr, &stats);
        REQUIRE(stats.kernel_evals_per_layer.size() == 2);
        for (auto e : stats.kernel_evals_per_layer) CHECK(e == graph.edge_count());
        CHECK(graph.edge_count() <= K * graph.n_out());
    }
}

TEST_CASE("single precision path tracks double precision") {
    const auto model = GnoModel::initialized(GnoConfig{}, 21);
    const auto in = random_input(100, 4);
    const auto graph = build_operator_graph(in.coords, {{0.5, 0.0}}, 0.3, 50);
    const auto d = gno_forward(model, in, graph);
    const auto f = gno_forward_f32(model, in, graph);
    REQUIRE(d.size() == f.size());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - f[i]) < 1e-4 * std::max(1.0, d[i]));
}

TEST_CASE("checkpoint round trip") {
    const auto model = GnoModel::initialized(tiny_config(), 31);
    const auto path = std::filesystem::temp_directory_path() / "volsmooth_ckpt_roundtrip.json";
    save_checkpoint(path, model);
    const auto back = load_checkpoint(path);
    std::filesystem::remove(path);
    REQUIRE(back.parameter_count() == model.parameter_count());
    CHECK(std::equal(back.params().begin(), back.params().end(), model.params().begin()));
    const auto in = random_input(5, 2);
    CHECK(smooth(back, in, {}) == smooth(model, in, {}));

    auto j = checkpoint_to_json(model);
    CHECK(j["format_version"] == 1);
    CHECK(j["layers"][0]["local_w"].is_null());
    j["config"]["channels"] = 5;
    CHECK_THROWS_AS(checkpoint_from_json(j), Error);
}

TEST_CASE("config validation") {
    GnoConfig c;
    c.K = 0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::Config);
    auto j = to_json(GnoConfig{});
    j["unknown"] = 1;
    CHECK(code_of([&] { config_from_json(j); }) == ErrorCode::Config);
    CHECK(config_from_json(to_json(tiny_config())).K == 3);
}
