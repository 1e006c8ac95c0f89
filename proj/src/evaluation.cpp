#include "volsmooth/evaluation.hpp"

#include "volsmooth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace volsmooth::eval {

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(jobs, 1u), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

BatchSurfaceFn model_surface(const gno::GnoModel& model, gno::OperatorInput input) {
    return [&model, input = std::move(input)](const std::vector<Coord>& pts) {
        auto all = gno::smooth(model, input, pts);
        return std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(input.size()), all.end());
    };
}

std::vector<double> smooth_at_inputs(const gno::GnoModel& model, const SurfaceSnapshot& snapshot) {
    return gno::smooth(model, gno::OperatorInput::from_snapshot(snapshot), {});
}

double mape(const SurfaceSnapshot& snapshot, const std::vector<double>& predicted,
            const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw Error(ErrorCode::EmptyInput, "MAPE over no records");
    double sum = 0.0;
    for (std::size_t i : indices) sum += metrics::delta_abs(predicted.at(i), snapshot.records.at(i).iv_mid);
    return sum / static_cast<double>(indices.size());
}

std::string to_string(HoldoutMode mode) { return mode == HoldoutMode::Interpolate ? "interpolate" : "extrapolate"; }

Split holdout_split(const SurfaceSnapshot& snapshot, HoldoutMode mode, std::mt19937_64& rng, double fraction) {
    const std::size_t n = snapshot.size();
    if (n < 2) throw Error(ErrorCode::EmptySnapshot, "holdout needs at least two records");
    std::vector<bool> dropped(n, false);
    if (mode == HoldoutMode::Interpolate) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto drop = std::min<std::size_t>(static_cast<std::size_t>(std::lround(fraction * n)), n - 1);
        for (std::size_t d = 0; d < drop; ++d) dropped[idx[d]] = true;
    } else {
        std::map<double, std::vector<std::size_t>> slices;
        for (std::size_t i = 0; i < n; ++i) slices[snapshot.records[i].tau].push_back(i);
        for (auto& [tau, members] : slices) {
            std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
                return std::abs(snapshot.records[a].z) > std::abs(snapshot.records[b].z);
            });
            const std::size_t m = members.size();
            const auto drop = std::min<std::size_t>(static_cast<std::size_t>(std::lround(fraction * m)), m - 1);
            for (std::size_t d = 0; d < drop; ++d) dropped[members[d]] = true;
        }
    }
    Split s;
    for (std::size_t i = 0; i < n; ++i) (dropped[i] ? s.test : s.train).push_back(i);
    return s;
}

namespace {

/// vhat at every record when the operator only sees `keep`.
std::vector<double> smooth_from_subset(const gno::GnoModel& model, const SurfaceSnapshot& snap,
                                       const std::vector<std::size_t>& keep, const std::vector<std::size_t>& rest) {
    const auto full = gno::OperatorInput::from_snapshot(snap);
    const auto input = full.subset(keep);
    std::vector<Coord> extra;
    extra.reserve(rest.size());
    for (std::size_t i : rest) extra.push_back(full.coords[i]);
    const auto out = gno::smooth(model, input, extra);
    std::vector<double> pred(snap.size());
    for (std::size_t p = 0; p < keep.size(); ++p) pred[keep[p]] = out[p];
    for (std::size_t p = 0; p < rest.size(); ++p) pred[rest[p]] = out[keep.size() + p];
    return pred;
}

void run_mode(const gno::GnoModel& model, const std::vector<SurfaceSnapshot>& snapshots, HoldoutMode mode,
              std::uint64_t seed, unsigned jobs, double fraction, BacktestCell& cell) {
    cell.train_mape.assign(snapshots.size(), 0.0);
    cell.test_mape.assign(snapshots.size(), 0.0);
    parallel_for(snapshots.size(), jobs, [&](std::size_t s) {
        std::seed_seq seq{seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(mode)};
        std::mt19937_64 rng(seq);
        const auto split = holdout_split(snapshots[s], mode, rng, fraction);
        const auto pred = smooth_from_subset(model, snapshots[s], split.train, split.test);
        cell.train_mape[s] = mape(snapshots[s], pred, split.train);
        cell.test_mape[s] = mape(snapshots[s], pred, split.test);
    });
}

std::array<double, 3> q05_50_95(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return {metrics::quantile_sorted(v, 0.05), metrics::quantile_sorted(v, 0.5), metrics::quantile_sorted(v, 0.95)};
}

}  // namespace

BacktestResult backtest(const gno::GnoModel& model, const std::vector<SurfaceSnapshot>& snapshots, std::uint64_t seed,
                        unsigned jobs, double fraction) {
    if (snapshots.empty()) throw Error(ErrorCode::EmptyInput, "backtest needs at least one surface");
    BacktestResult r;
    run_mode(model, snapshots, HoldoutMode::Interpolate, seed, jobs, fraction, r.interpolate);
    run_mode(model, snapshots, HoldoutMode::Extrapolate, seed, jobs, fraction, r.extrapolate);
    return r;
}

nlohmann::json backtest_to_json(const BacktestResult& r) {
    auto cell = [](const BacktestCell& c) {
        const auto tr = q05_50_95(c.train_mape);
        const auto te = q05_50_95(c.test_mape);
        return nlohmann::json{{"train", {{"q05", tr[0]}, {"q50", tr[1]}, {"q95", tr[2]}}},
                              {"test", {{"q05", te[0]}, {"q50", te[1]}, {"q95", te[2]}}},
                              {"surfaces", c.train_mape.size()}};
    };
    return {{"interpolate", cell(r.interpolate)}, {"extrapolate", cell(r.extrapolate)}};
}

std::string backtest_table_csv(const BacktestResult& r) {
    std::ostringstream out;
    out << "mode,set,q05,q50,q95\n";
    char buf[256];
    auto row = [&](const char* mode, const char* set, const std::vector<double>& v) {
        const auto q = q05_50_95(v);
        std::snprintf(buf, sizeof buf, "%s,%s,%.8g,%.8g,%.8g\n", mode, set, q[0], q[1], q[2]);
        out << buf;
    };
    row("interpolate", "train", r.interpolate.train_mape);
    row("interpolate", "test", r.interpolate.test_mape);
    row("extrapolate", "train", r.extrapolate.train_mape);
    row("extrapolate", "test", r.extrapolate.test_mape);
    return out.str();
}

BenchmarkInputs benchmark_inputs(const gno::GnoModel& model, const std::vector<SurfaceSnapshot>& snapshots,
                                 const Domain& domain, std::size_t m, std::size_t n, unsigned jobs) {
    if (snapshots.empty()) throw Error(ErrorCode::EmptyInput, "benchmark needs at least one surface");
    const std::size_t count = snapshots.size();
    std::vector<std::vector<metrics::PointMetrics>> points(count);
    std::vector<arb::ArbitrageReport> reports(count);
    const RectGrid grid = RectGrid::uniform(domain, m, n);
    parallel_for(count, jobs, [&](std::size_t s) {
        const auto input = gno::OperatorInput::from_snapshot(snapshots[s]);
        const auto pred = gno::smooth(model, input, {});
        points[s] = metrics::point_metrics(snapshots[s], pred);
        reports[s] = arb::validate_surface(model_surface(model, input), domain, grid);
    });

    BenchmarkInputs out;
    for (std::size_t s = 0; s < count; ++s) {
        out.per_surface.push_back(metrics::aggregate(points[s]));
        for (std::size_t i = 0; i < points[s].size(); ++i) {
            const auto& rec = snapshots[s].records[i];
            out.spatial.push_back({rec.rho, rec.z, points[s][i].delta_abs, points[s][i].delta_spr, {}, {}});
        }
        const auto& rep = reports[s];
        for (std::size_t i = 0; i < grid.m(); ++i) {
            for (std::size_t j = 0; j < grid.n(); ++j) {
                metrics::SpatialPoint p{grid.rho[i], grid.z[j], {}, {}, rep.butterfly_values[grid.index(i, j)], {}};
                if (i > 0) p.cal_increment = rep.calendar_values[(i - 1) * grid.n() + j];
                out.spatial.push_back(p);
            }
        }
    }
    out.reports = std::move(reports);
    return out;
}

}  // namespace volsmooth::eval
