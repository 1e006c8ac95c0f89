#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace volsmooth {

/// Rectangular region in transformed coordinates rho = sqrt(tau), z = k / rho.
struct Domain {
    double rho_min = 0.01;
    double rho_max = 1.0;
    double z_min = -1.5;
    double z_max = 0.5;

    bool contains(double rho, double z) const {
        return rho >= rho_min && rho <= rho_max && z >= z_min && z <= z_max;
    }
    double clamp_z(double z) const { return z < z_min ? z_min : (z > z_max ? z_max : z); }
};

enum class OptionSide { Call, Put };

/// Put for k <= 0, call for k > 0.
inline OptionSide otm_side(double k) { return k > 0.0 ? OptionSide::Call : OptionSide::Put; }

struct OptionRecord {
    double tau = 0.0;
    double k = 0.0;
    double rho = 0.0;
    double z = 0.0;
    double iv_mid = 0.0;
    std::optional<double> iv_bid;
    std::optional<double> iv_ask;
    OptionSide side = OptionSide::Put;

    static OptionRecord from_rho_z(double rho, double z, double iv) {
        OptionRecord r;
        r.rho = rho;
        r.z = z;
        r.tau = rho * rho;
        r.k = z * rho;
        r.iv_mid = iv;
        r.side = otm_side(r.k);
        return r;
    }
};

/// One timestamped discrete surface: the operator's input.
struct SurfaceSnapshot {
    std::string timestamp;
    std::vector<OptionRecord> records;

    std::size_t size() const { return records.size(); }
};

/// A volatility surface evaluable at arbitrary (rho, z).
using SurfaceFn = std::function<double(double rho, double z)>;

/// Point in transformed coordinates.
struct Coord {
    double rho;
    double z;
};

/// Evaluates a surface at a batch of points; used where per-point calls are expensive.
using BatchSurfaceFn = std::function<std::vector<double>(const std::vector<Coord>&)>;

inline BatchSurfaceFn batched(SurfaceFn f) {
    return [f = std::move(f)](const std::vector<Coord>& pts) {
        std::vector<double> out;
        out.reserve(pts.size());
        for (const auto& p : pts) out.push_back(f(p.rho, p.z));
        return out;
    };
}

}  // namespace volsmooth
