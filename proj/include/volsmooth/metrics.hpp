#pragma once

#include "volsmooth/surface.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

namespace volsmooth::metrics {

struct PointMetrics {
    double delta_abs = 0.0;
    std::optional<double> delta_spr;
    std::optional<double> spread;
};

/// |vhat - v| / v. Throws Domain for v <= 0.
double delta_abs(double v_hat, double v);

/// bs_otm(x, v_ask) - bs_otm(x, v_bid).
double spread(double tau, double k, double v_bid, double v_ask);

/// 2 |bs_otm(x, vhat) - bs_otm(x, v)| / spread. Throws DegenerateSpread for spread <= 0.
double delta_spr(double tau, double k, double v_hat, double v, double v_bid, double v_ask);

/// Surface-level averages; delta_spr and spread only over records with both bounds.
struct SurfaceAggregate {
    double mean_delta_abs = 0.0;
    std::optional<double> mean_delta_spr;
    std::optional<double> mean_spread;
};

/// `predicted` aligned with snapshot.records.
std::vector<PointMetrics> point_metrics(const SurfaceSnapshot& snapshot, const std::vector<double>& predicted);
SurfaceAggregate aggregate(const std::vector<PointMetrics>& points);

/// Linear-interpolation quantile of sorted data (type 7). Throws EmptyInput.
double quantile_sorted(const std::vector<double>& sorted, double p);

inline constexpr std::array<double, 7> kQuantileLevels = {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99};

struct Stats {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
    std::array<double, 7> quantiles{};
};

/// Throws EmptyInput for an empty list.
Stats describe(std::vector<double> values);

/// One spatial observation; absent fields do not contribute to their bin mean.
struct SpatialPoint {
    double rho = 0.0;
    double z = 0.0;
    std::optional<double> delta_abs;
    std::optional<double> delta_spr;
    std::optional<double> but;
    std::optional<double> cal_increment;
};

struct SpatialBin {
    std::size_t rho_bin = 0;
    std::size_t z_bin = 0;
    std::optional<double> mean_delta_abs;
    std::optional<double> mean_delta_spr;
    std::optional<double> mean_but;
    std::optional<double> mean_cal_increment;
};

struct BinSpec {
    std::size_t rho_bins = 10;
    std::size_t z_bins = 10;
    Domain domain;
};

struct BenchmarkSummary {
    Stats delta_abs;
    std::optional<Stats> delta_spr;
    std::optional<Stats> spread;
    std::vector<SpatialBin> bins;  // row-major in (rho_bin, z_bin)
    BinSpec bin_spec;
};

/// Throws EmptyInput when `per_surface` is empty.
BenchmarkSummary benchmark_summary(const std::vector<SurfaceAggregate>& per_surface,
                                   const std::vector<SpatialPoint>& spatial_points, const BinSpec& bins = {});

nlohmann::json to_json(const Stats& s);
nlohmann::json to_json(const BenchmarkSummary& s);

/// CSV header rho_bin,z_bin,mean_delta_abs,mean_delta_spr,mean_but,mean_cal_increment;
/// empty bins leave their fields blank.
std::string bins_csv(const BenchmarkSummary& s);
void write_bins_csv(const std::filesystem::path& path, const BenchmarkSummary& s);

}  // namespace volsmooth::metrics
