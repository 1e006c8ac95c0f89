#pragma once

#include "volsmooth/arbitrage.hpp"
#include "volsmooth/gno.hpp"
#include "volsmooth/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <vector>

namespace volsmooth::eval {

/// Runs fn(0..n-1) on up to `jobs` threads; results must be written to disjoint slots.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

/// The smoothed surface of `input` as a batch function of (rho, z).
BatchSurfaceFn model_surface(const gno::GnoModel& model, gno::OperatorInput input);

/// Smoothed vols at the snapshot's own coordinates.
std::vector<double> smooth_at_inputs(const gno::GnoModel& model, const SurfaceSnapshot& snapshot);

/// Mean of |vhat - v| / v over the given records of `snapshot`.
double mape(const SurfaceSnapshot& snapshot, const std::vector<double>& predicted,
            const std::vector<std::size_t>& indices);

enum class HoldoutMode { Interpolate, Extrapolate };

std::string to_string(HoldoutMode mode);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Interpolate drops a uniformly random `fraction` of the records; extrapolate drops,
/// per slice, the `fraction` of records with the largest |z|. Both outputs sorted.
Split holdout_split(const SurfaceSnapshot& snapshot, HoldoutMode mode, std::mt19937_64& rng, double fraction = 0.5);

struct BacktestCell {
    std::vector<double> train_mape;  // one per surface
    std::vector<double> test_mape;
};

struct BacktestResult {
    BacktestCell interpolate;
    BacktestCell extrapolate;
};

/// Smooths every surface from its retained points and scores retained (train) and
/// dropped (test) records. Deterministic in `seed`.
BacktestResult backtest(const gno::GnoModel& model, const std::vector<SurfaceSnapshot>& snapshots, std::uint64_t seed,
                        unsigned jobs = 1, double fraction = 0.5);

/// Quantiles q05/q50/q95 per (mode, set).
nlohmann::json backtest_to_json(const BacktestResult& r);
std::string backtest_table_csv(const BacktestResult& r);

struct BenchmarkInputs {
    std::vector<metrics::SurfaceAggregate> per_surface;
    std::vector<metrics::SpatialPoint> spatial;
    std::vector<arb::ArbitrageReport> reports;
};

/// Point metrics at every record plus butterfly terms and calendar increments of the
/// smoothed surface on an m x n grid.
BenchmarkInputs benchmark_inputs(const gno::GnoModel& model, const std::vector<SurfaceSnapshot>& snapshots,
                                 const Domain& domain = {}, std::size_t m = 50, std::size_t n = 50,
                                 unsigned jobs = 1);

}  // namespace volsmooth::eval
