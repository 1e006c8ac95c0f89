#include "volsmooth/svi.hpp"

#include "volsmooth/errors.hpp"
#include "volsmooth/log.hpp"
#include "volsmooth/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace volsmooth::svi {

double SviSlice::total_variance(double k) const {
    const double d = k - m;
    return a + b * (rho * d + std::sqrt(d * d + sigma * sigma));
}

double SviSlice::dw(double k) const {
    const double d = k - m;
    return b * (rho + d / std::sqrt(d * d + sigma * sigma));
}

double SviSlice::d2w(double k) const {
    const double d = k - m;
    const double s2 = d * d + sigma * sigma;
    return b * sigma * sigma / (s2 * std::sqrt(s2));
}

double svi_vol(const SviSlice& slice, double k) {
    const double w = slice.total_variance(k);
    if (!(w > 0.0)) throw Error(ErrorCode::NegativeVariance, "SVI total variance is not positive");
    return std::sqrt(w / slice.tau);
}

arb::SliceJet svi_jet(const SviSlice& slice, double k) {
    const double tau = slice.tau;
    const double v0 = svi_vol(slice, k);
    const double w1 = slice.dw(k);
    const double w2 = slice.d2w(k);
    // v = sqrt(w / tau): v' = w' / (2 tau v), v'' = (w'' v - w' v') / (2 tau v^2).
    const double v1 = w1 / (2.0 * tau * v0);
    const double v2 = (w2 * v0 - w1 * v1) / (2.0 * tau * v0 * v0);
    return {tau, k, v0, v1, v2};
}

std::vector<double> constraint_grid(const std::vector<CalibrationPoint>& points) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
        lo = std::min(lo, p.k);
        hi = std::max(hi, p.k);
    }
    lo -= 0.1;
    hi += 0.1;
    std::vector<double> grid(101);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = lo + (hi - lo) * static_cast<double>(i) / 100.0;
    return grid;
}

namespace {

SviSlice from_vector(const std::vector<double>& x, double tau) { return {tau, x[0], x[1], x[2], x[3], x[4]}; }

constexpr double kVarianceFloor = 1e-10;
constexpr double kButterflyMargin = 1e-9;

double butterfly_or_penalty(const SviSlice& s, double k) {
    const double w = s.total_variance(k);
    if (!(w > 0.0)) return w - 1.0;
    return arb::butterfly_term(svi_jet(s, k));
}

}  // namespace

SviFit svi_calibrate(const std::vector<CalibrationPoint>& points, double tau, const SviBounds& bounds) {
    if (points.size() < 5) throw Error(ErrorCode::Underdetermined, "SVI calibration needs at least 5 points");
    if (!(tau > 0.0)) throw Error(ErrorCode::Domain, "tau must be positive");

    const auto kgrid = constraint_grid(points);
    const std::vector<double> lower = {bounds.a_min, bounds.b_min, bounds.rho_min, bounds.m_min, bounds.sigma_min};
    const std::vector<double> upper = {bounds.a_max, bounds.b_max, bounds.rho_max, bounds.m_max, bounds.sigma_max};

    opt::ConstrainedProblem problem;
    problem.lower = lower;
    problem.upper = upper;
    problem.objective = [&](const std::vector<double>& x) {
        const auto s = from_vector(x, tau);
        double acc = 0.0;
        for (const auto& p : points) {
            const double v = std::sqrt(std::max(s.total_variance(p.k), 1e-16) / tau);
            acc += p.weight * (v - p.vol) * (v - p.vol);
        }
        return acc;
    };
    problem.constraints = [&](const std::vector<double>& x) {
        const auto s = from_vector(x, tau);
        std::vector<double> c;
        c.reserve(2 * kgrid.size());
        for (double k : kgrid) {
            c.push_back(s.total_variance(k) - kVarianceFloor);
            c.push_back(butterfly_or_penalty(s, k) - kButterflyMargin);
        }
        return c;
    };

    // Deterministic starts around the observed smile minimum.
    double w_min = std::numeric_limits<double>::infinity();
    double k_at_min = 0.0;
    double k_mean = 0.0;
    for (const auto& p : points) {
        const double w = p.vol * p.vol * tau;
        if (w < w_min) {
            w_min = w;
            k_at_min = p.k;
        }
        k_mean += p.k;
    }
    k_mean /= static_cast<double>(points.size());

    std::vector<std::vector<double>> starts;
    for (double m0 : {k_at_min, k_mean}) {
        for (double sigma0 : {0.05, 0.3}) {
            for (double rho0 : {-0.7, 0.0}) {
                const double b0 = 0.1;
                const double a0 = w_min - b0 * sigma0 * std::sqrt(1.0 - rho0 * rho0);
                starts.push_back({a0, b0, rho0, std::clamp(m0, bounds.m_min, bounds.m_max), sigma0});
            }
        }
    }

    std::optional<SviFit> best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (const auto& x0 : starts) {
        const auto res = opt::minimize_auglag(problem, x0);
        const auto s = from_vector(res.x, tau);
        double min_but = std::numeric_limits<double>::infinity();
        bool feasible = true;
        for (double k : kgrid) {
            if (!(s.total_variance(k) > 0.0)) {
                feasible = false;
                break;
            }
            min_but = std::min(min_but, arb::butterfly_term(svi_jet(s, k)));
        }
        if (!feasible || min_but < 0.0) continue;
        if (res.objective < best_obj) {
            best_obj = res.objective;
            best = SviFit{s, 0.0, 0.0, min_but};
        }
    }
    if (!best) throw Error(ErrorCode::Infeasible, "no feasible SVI parameters found");

    double abs_rel = 0.0;
    double sq = 0.0;
    for (const auto& p : points) {
        const double v = svi_vol(best->slice, p.k);
        abs_rel += std::abs(v - p.vol) / p.vol;
        sq += (v - p.vol) * (v - p.vol);
    }
    best->mape = abs_rel / static_cast<double>(points.size());
    best->rmse = std::sqrt(sq / static_cast<double>(points.size()));
    return *best;
}

double ssvi_theta(const SsviParams& p, double tau) {
    const double e1 = (1.0 - std::exp(-p.kappa1 * tau)) / p.kappa1;
    const double e2 = (1.0 - std::exp(-p.kappa2 * tau)) / p.kappa2;
    return p.theta * tau + (p.V - p.theta) * e1 + (p.V_prime - p.theta) * p.kappa1 / (p.kappa1 - p.kappa2) * (e2 - e1);
}

double ssvi_vol(const SsviParams& p, double tau, double k) {
    if (!(tau > 0.0)) throw Error(ErrorCode::Domain, "tau must be positive");
    const double theta = ssvi_theta(p, tau);
    if (!(theta > 0.0)) throw Error(ErrorCode::DegenerateTheta, "theta_tau is not positive");
    const double phi = p.eta * std::pow(theta, p.gamma);
    const double x = phi * k + p.rho;
    const double w = 0.5 * theta * (1.0 + p.rho * phi * k + std::sqrt(x * x + 1.0 - p.rho * p.rho));
    return std::sqrt(w / tau);
}

SurfaceFn ssvi_surface(const SsviParams& params) {
    return [params](double rho, double z) { return ssvi_vol(params, rho * rho, z * rho); };
}

RectGrid GridSpec::grid() const {
    RectGrid g;
    g.rho = rho;
    if (z.empty()) {
        for (int j = 0; j <= 50; ++j) g.z.push_back(-1.5 + 0.04 * j);
        g.z.back() = 0.5;
    } else {
        g.z = z;
    }
    return g;
}

SurfaceSnapshot snapshot_from_surface(const SurfaceFn& surface, const RectGrid& grid, const std::string& timestamp) {
    SurfaceSnapshot snap;
    snap.timestamp = timestamp;
    snap.records.reserve(grid.size());
    for (double r : grid.rho) {
        for (double zz : grid.z) snap.records.push_back(OptionRecord::from_rho_z(r, zz, surface(r, zz)));
    }
    return snap;
}

std::vector<GeneratedSurface> gen_ssvi_dataset(const SsviParams& base, std::size_t n_surfaces,
                                               const PerturbationSpec& perturbation, const GridSpec& grid_spec,
                                               std::uint64_t seed, const Domain& domain) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mult(1.0 - perturbation.multiplicative, 1.0 + perturbation.multiplicative);
    std::uniform_real_distribution<double> shift(-perturbation.rho_additive, perturbation.rho_additive);
    const auto grid = grid_spec.grid();

    std::vector<GeneratedSurface> out;
    out.reserve(n_surfaces);
    for (std::size_t s = 0; s < n_surfaces; ++s) {
        bool accepted = false;
        for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
            SsviParams p = base;
            p.V *= mult(rng);
            p.V_prime *= mult(rng);
            p.theta *= mult(rng);
            p.eta *= mult(rng);
            p.rho = std::clamp(p.rho + shift(rng), -0.99, 0.99);
            if (perturbation.multiplicative == 0.0 && perturbation.rho_additive == 0.0) p = base;

            const auto surface = ssvi_surface(p);
            try {
                const auto report = arb::validate_surface(batched(surface), domain, 50, 50);
                if (!report.arbitrage_free()) continue;
                auto snap = snapshot_from_surface(surface, grid, "ssvi-" + std::to_string(seed) + "-" + std::to_string(s));
                out.push_back({p, std::move(snap)});
                accepted = true;
            } catch (const Error& e) {
                log_warn(std::string("discarding SSVI draw: ") + e.what());
            }
        }
        if (!accepted) throw Error(ErrorCode::GenerationFailed, "retry cap exceeded for surface " + std::to_string(s));
    }
    return out;
}

nlohmann::json to_json(const SviSlice& s) {
    return {{"tau", s.tau}, {"a", s.a}, {"b", s.b}, {"rho", s.rho}, {"m", s.m}, {"sigma", s.sigma}};
}

SviSlice slice_from_json(const nlohmann::json& j) {
    return {j.at("tau").get<double>(), j.at("a").get<double>(), j.at("b").get<double>(),
            j.at("rho").get<double>(), j.at("m").get<double>(), j.at("sigma").get<double>()};
}

nlohmann::json to_json(const SsviParams& p) {
    return {{"V", p.V},     {"V_prime", p.V_prime}, {"theta", p.theta},   {"rho", p.rho},       {"p", p.p},
            {"eta", p.eta}, {"gamma", p.gamma},     {"kappa1", p.kappa1}, {"kappa2", p.kappa2}};
}

SsviParams ssvi_from_json(const nlohmann::json& j) {
    SsviParams p;
    auto get = [&](const char* key, double& dst) {
        if (j.contains(key)) dst = j.at(key).get<double>();
    };
    get("V", p.V);
    get("V_prime", p.V_prime);
    get("theta", p.theta);
    get("rho", p.rho);
    get("p", p.p);
    get("eta", p.eta);
    get("gamma", p.gamma);
    get("kappa1", p.kappa1);
    get("kappa2", p.kappa2);
    for (const auto& [key, value] : j.items()) {
        static const char* known[] = {"V", "V_prime", "theta", "rho", "p", "eta", "gamma", "kappa1", "kappa2"};
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
            throw Error(ErrorCode::Config, "unknown SSVI parameter '" + key + "'");
        }
    }
    return p;
}

}  // namespace volsmooth::svi
