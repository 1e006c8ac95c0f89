#pragma once

#include "volsmooth/surface.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace volsmooth::market {

using Instant = std::chrono::sys_seconds;

/// One line of the quotes CSV. Prices are nominal; absent quotes are empty cells.
struct RawQuoteRow {
    std::string timestamp;
    std::string expiry;  // YYYY-MM-DD
    double strike = 0.0;
    std::optional<double> call_bid;
    std::optional<double> call_ask;
    std::optional<double> put_bid;
    std::optional<double> put_ask;
    double underlying_mid = 0.0;

    std::optional<double> call_mid() const;
    std::optional<double> put_mid() const;
};

struct ForwardCurvePoint {
    std::string expiry;
    double discount_factor = 1.0;
    double forward = 0.0;
};

/// Parses "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS]" or with a trailing 'Z'. Times are
/// interpreted as exchange-local wall clock.
Instant parse_instant(const std::string& text);

/// Year fraction (ACT/365.25) from `now` to 16:00 on the expiry date.
double year_fraction(Instant now, const std::string& expiry_date);

/// OLS regression of (call_mid - put_mid) on strike for one expiry.
/// Throws Underdetermined with fewer than two distinct two-sided strikes and
/// DegenerateParity when the fitted discount factor is not positive.
ForwardCurvePoint fit_forward(const std::vector<RawQuoteRow>& expiry_rows);

/// Builds an OTM-only snapshot of implied vols inside `domain`.
SurfaceSnapshot build_snapshot(const std::vector<RawQuoteRow>& rows, Instant now,
                               const Domain& domain = {});

/// Groups rows by timestamp and builds one snapshot per group (in timestamp order).
/// Groups that yield no records are skipped with a warning.
std::vector<SurfaceSnapshot> ingest(const std::vector<RawQuoteRow>& rows, const Domain& domain = {});

std::vector<RawQuoteRow> load_quotes_csv(const std::filesystem::path& path);
std::vector<RawQuoteRow> parse_quotes_csv(const std::string& text);

/// Writes quotes with 12 significant digits.
void write_quotes_csv(const std::filesystem::path& path, const std::vector<RawQuoteRow>& rows);

nlohmann::json snapshot_to_json(const SurfaceSnapshot& snapshot);
SurfaceSnapshot snapshot_from_json(const nlohmann::json& j);

void save_snapshot(const std::filesystem::path& path, const SurfaceSnapshot& snapshot);
SurfaceSnapshot load_snapshot(const std::filesystem::path& path);

/// A JSON file holding either one snapshot object or an array of them.
std::vector<SurfaceSnapshot> load_snapshots(const std::filesystem::path& path);
void save_snapshots(const std::filesystem::path& path, const std::vector<SurfaceSnapshot>& snapshots);

}  // namespace volsmooth::market
