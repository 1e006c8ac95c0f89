#include "volsmooth/metrics.hpp"

#include "volsmooth/black_scholes.hpp"
#include "volsmooth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace volsmooth::metrics {

double delta_abs(double v_hat, double v) {
    if (!(v > 0.0)) throw Error(ErrorCode::Domain, "reference vol must be positive");
    return std::abs(v_hat - v) / v;
}

double spread(double tau, double k, double v_bid, double v_ask) {
    return bs::bs_otm(tau, k, v_ask) - bs::bs_otm(tau, k, v_bid);
}

double delta_spr(double tau, double k, double v_hat, double v, double v_bid, double v_ask) {
    const double s = spread(tau, k, v_bid, v_ask);
    if (!(s > 0.0)) throw Error(ErrorCode::DegenerateSpread, "bid-ask spread is not positive");
    return 2.0 * std::abs(bs::bs_otm(tau, k, v_hat) - bs::bs_otm(tau, k, v)) / s;
}

std::vector<PointMetrics> point_metrics(const SurfaceSnapshot& snapshot, const std::vector<double>& predicted) {
    if (predicted.size() != snapshot.size()) throw Error(ErrorCode::Shape, "prediction count differs from records");
    std::vector<PointMetrics> out;
    out.reserve(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto& r = snapshot.records[i];
        PointMetrics p;
        p.delta_abs = delta_abs(predicted[i], r.iv_mid);
        if (r.iv_bid && r.iv_ask) {
            const double s = spread(r.tau, r.k, *r.iv_bid, *r.iv_ask);
            if (s > 0.0) {
                p.spread = s;
                p.delta_spr = 2.0 * std::abs(bs::bs_otm(r.tau, r.k, predicted[i]) - bs::bs_otm(r.tau, r.k, r.iv_mid)) / s;
            }
        }
        out.push_back(p);
    }
    return out;
}

SurfaceAggregate aggregate(const std::vector<PointMetrics>& points) {
    if (points.empty()) throw Error(ErrorCode::EmptyInput, "no points to aggregate");
    SurfaceAggregate a;
    double spr = 0.0;
    double s = 0.0;
    std::size_t n_spr = 0;
    for (const auto& p : points) {
        a.mean_delta_abs += p.delta_abs;
        if (p.delta_spr) {
            spr += *p.delta_spr;
            s += *p.spread;
            ++n_spr;
        }
    }
    a.mean_delta_abs /= static_cast<double>(points.size());
    if (n_spr > 0) {
        a.mean_delta_spr = spr / static_cast<double>(n_spr);
        a.mean_spread = s / static_cast<double>(n_spr);
    }
    return a;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "quantile of empty data");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Stats describe(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "no values to describe");
    std::sort(values.begin(), values.end());
    Stats s;
    s.count = values.size();
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    for (std::size_t q = 0; q < kQuantileLevels.size(); ++q) s.quantiles[q] = quantile_sorted(values, kQuantileLevels[q]);
    return s;
}

namespace {

struct Mean {
    double sum = 0.0;
    std::size_t n = 0;

    void add(const std::optional<double>& v) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    std::optional<double> get() const {
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    }
};

std::size_t bin_of(double x, double lo, double hi, std::size_t bins) {
    const double t = (x - lo) / (hi - lo) * static_cast<double>(bins);
    if (!(t > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(t), bins - 1);
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

BenchmarkSummary benchmark_summary(const std::vector<SurfaceAggregate>& per_surface,
                                   const std::vector<SpatialPoint>& spatial_points, const BinSpec& spec) {
    if (per_surface.empty()) throw Error(ErrorCode::EmptyInput, "benchmark needs at least one surface");
    if (spec.rho_bins < 1 || spec.z_bins < 1) throw Error(ErrorCode::Config, "bin counts must be positive");
    BenchmarkSummary out;
    out.bin_spec = spec;
    std::vector<double> abs_vals;
    std::vector<double> spr_vals;
    std::vector<double> spread_vals;
    for (const auto& s : per_surface) {
        abs_vals.push_back(s.mean_delta_abs);
        if (s.mean_delta_spr) spr_vals.push_back(*s.mean_delta_spr);
        if (s.mean_spread) spread_vals.push_back(*s.mean_spread);
    }
    out.delta_abs = describe(abs_vals);
    if (!spr_vals.empty()) out.delta_spr = describe(spr_vals);
    if (!spread_vals.empty()) out.spread = describe(spread_vals);

    const std::size_t nb = spec.rho_bins * spec.z_bins;
    std::vector<std::array<Mean, 4>> acc(nb);
    const auto& d = spec.domain;
    for (const auto& p : spatial_points) {
        const std::size_t b = bin_of(p.rho, d.rho_min, d.rho_max, spec.rho_bins) * spec.z_bins +
                              bin_of(p.z, d.z_min, d.z_max, spec.z_bins);
        acc[b][0].add(p.delta_abs);
        acc[b][1].add(p.delta_spr);
        acc[b][2].add(p.but);
        acc[b][3].add(p.cal_increment);
    }
    out.bins.reserve(nb);
    for (std::size_t i = 0; i < spec.rho_bins; ++i) {
        for (std::size_t j = 0; j < spec.z_bins; ++j) {
            const auto& a = acc[i * spec.z_bins + j];
            out.bins.push_back({i, j, a[0].get(), a[1].get(), a[2].get(), a[3].get()});
        }
    }
    return out;
}

nlohmann::json to_json(const Stats& s) {
    nlohmann::json q;
    for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) {
        q[std::to_string(static_cast<int>(std::lround(kQuantileLevels[i] * 100))) + "%"] = s.quantiles[i];
    }
    return {{"count", s.count}, {"mean", s.mean}, {"std", s.std}, {"quantiles", q}};
}

nlohmann::json to_json(const BenchmarkSummary& s) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : s.bins) {
        bins.push_back({{"rho_bin", b.rho_bin},
                        {"z_bin", b.z_bin},
                        {"mean_delta_abs", opt_json(b.mean_delta_abs)},
                        {"mean_delta_spr", opt_json(b.mean_delta_spr)},
                        {"mean_but", opt_json(b.mean_but)},
                        {"mean_cal_increment", opt_json(b.mean_cal_increment)}});
    }
    return {{"delta_abs", to_json(s.delta_abs)},
            {"delta_spr", s.delta_spr ? to_json(*s.delta_spr) : nlohmann::json(nullptr)},
            {"spread", s.spread ? to_json(*s.spread) : nlohmann::json(nullptr)},
            {"bin_grid", {s.bin_spec.rho_bins, s.bin_spec.z_bins}},
            {"bins", std::move(bins)}};
}

std::string bins_csv(const BenchmarkSummary& s) {
    std::ostringstream out;
    out << "rho_bin,z_bin,mean_delta_abs,mean_delta_spr,mean_but,mean_cal_increment\n";
    auto field = [&](const std::optional<double>& v) {
        out << ',';
        if (v) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.12g", *v);
            out << buf;
        }
    };
    for (const auto& b : s.bins) {
        out << b.rho_bin << ',' << b.z_bin;
        field(b.mean_delta_abs);
        field(b.mean_delta_spr);
        field(b.mean_but);
        field(b.mean_cal_increment);
        out << '\n';
    }
    return out.str();
}

void write_bins_csv(const std::filesystem::path& path, const BenchmarkSummary& s) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << bins_csv(s);
}

}  // namespace volsmooth::metrics
