#include "volsmooth/losses.hpp"

#include "volsmooth/arbitrage.hpp"
#include "volsmooth/black_scholes.hpp"
#include "volsmooth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace volsmooth::train {

void LossWeights::validate() const {
    for (double w : {fit, cal, but, reg_rho, reg_z}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::Config, "loss weights must be finite and >= 0");
    }
}

std::vector<double> vega_weights(const SurfaceSnapshot& snapshot) {
    std::vector<double> vegas;
    vegas.reserve(snapshot.size());
    for (const auto& r : snapshot.records) vegas.push_back(bs::vega(r.tau, r.k, r.iv_mid));
    const double mean = vegas.empty() ? 0.0 : std::accumulate(vegas.begin(), vegas.end(), 0.0) / vegas.size();
    std::vector<double> w(vegas.size(), 1.0);
    if (mean > 0.0) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::max(vegas[i] / mean, 1.0);
    }
    return w;
}

LossValue fit_loss(const std::vector<double>& predicted, const std::vector<double>& market,
                   const std::vector<double>& weights) {
    if (predicted.size() != market.size() || weights.size() != market.size()) {
        throw Error(ErrorCode::Shape, "fit loss inputs differ in length");
    }
    LossValue out;
    out.grad.assign(predicted.size(), 0.0);
    if (market.empty()) return out;
    const double n = static_cast<double>(market.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < market.size(); ++i) {
        const double e = (predicted[i] - market[i]) / market[i];
        acc += weights[i] * e * e;
    }
    out.value = std::sqrt(acc / n);
    if (out.value > 0.0) {
        for (std::size_t i = 0; i < market.size(); ++i) {
            const double e = (predicted[i] - market[i]) / market[i];
            out.grad[i] = weights[i] * e / (market[i] * n * out.value);
        }
    }
    return out;
}

LossValue fit_loss(const std::vector<double>& predicted, const SurfaceSnapshot& snapshot) {
    std::vector<double> market;
    market.reserve(snapshot.size());
    for (const auto& r : snapshot.records) market.push_back(r.iv_mid);
    return fit_loss(predicted, market, vega_weights(snapshot));
}

LossValue butterfly_loss(const RectGrid& grid, const std::vector<double>& values, double epsilon) {
    if (grid.n() < 3) throw Error(ErrorCode::Shape, "butterfly loss needs at least three z nodes");
    if (values.size() != grid.size()) throw Error(ErrorCode::Shape, "grid values have wrong length");
    LossValue out;
    out.grad.assign(values.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(grid.size());
    for (std::size_t i = 0; i < grid.m(); ++i) {
        const double rho = grid.rho[i];
        const double tau = rho * rho;
        for (std::size_t j = 0; j < grid.n(); ++j) {
            const auto st = stencil3(grid.z, j);
            double dz = 0.0;
            double dzz = 0.0;
            for (int t = 0; t < 3; ++t) {
                const double v = values[grid.index(i, st.idx[t])];
                dz += st.d1[t] * v;
                dzz += st.d2[t] * v;
            }
            const double v0 = values[grid.index(i, j)];
            const auto jet = arb::jet_from_z_derivatives(rho, grid.z[j], v0, dz, dzz);
            const double but = arb::butterfly_term(jet);
            if (but >= epsilon) continue;
            out.value += (epsilon - but) * inv_n;

            const double d1 = bs::d1(tau, jet.k, v0);
            const double d2 = d1 - v0 * rho;
            const double a = 1.0 + d1 * jet.v1 * rho;
            const double b = 1.0 + d2 * jet.v1 * rho;
            const double dd1_dv0 = jet.k / (v0 * v0 * rho) + 0.5 * rho;
            const double dd2_dv0 = dd1_dv0 - rho;
            const double dbut_dv0 = dd1_dv0 * jet.v1 * rho * b + a * dd2_dv0 * jet.v1 * rho + jet.v2 * tau;
            const double dbut_dv1 = d1 * rho * b + a * d2 * rho;
            const double dbut_dv2 = v0 * tau;
            out.grad[grid.index(i, j)] -= dbut_dv0 * inv_n;
            for (int t = 0; t < 3; ++t) {
                const double g = dbut_dv1 * st.d1[t] / rho + dbut_dv2 * st.d2[t] / tau;
                out.grad[grid.index(i, st.idx[t])] -= g * inv_n;
            }
        }
    }
    return out;
}

double butterfly_loss(const BatchSurfaceFn& surface, const RectGrid& grid, double epsilon) {
    return butterfly_loss(grid, surface(grid.points()), epsilon).value;
}

LossValue calendar_loss(const RectGrid& grid, const std::vector<double>& values, const std::vector<double>& cross,
                        double epsilon) {
    if (grid.m() < 2) throw Error(ErrorCode::Shape, "calendar loss needs at least two rho nodes");
    if (values.size() != grid.size() || cross.size() != (grid.m() - 1) * grid.n()) {
        throw Error(ErrorCode::Shape, "calendar loss inputs have wrong length");
    }
    LossValue out;
    out.grad.assign(values.size() + cross.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(cross.size());
    for (std::size_t i = 0; i + 1 < grid.m(); ++i) {
        const double floor = grid.rho[i] / grid.rho[i + 1] + epsilon;
        for (std::size_t j = 0; j < grid.n(); ++j) {
            const std::size_t later = grid.index(i + 1, j);
            const std::size_t earlier = i * grid.n() + j;
            const double ratio = values[later] / cross[earlier];
            const double gap = ratio - floor;
            if (gap >= 0.0) continue;
            out.value -= gap * inv_n;
            out.grad[later] -= inv_n / cross[earlier];
            out.grad[values.size() + earlier] += inv_n * ratio / cross[earlier];
        }
    }
    return out;
}

double calendar_loss(const BatchSurfaceFn& surface, const RectGrid& grid, const Domain& domain, double epsilon) {
    return calendar_loss(grid, surface(grid.points()), surface(arb::calendar_cross_points(grid, domain)), epsilon)
        .value;
}

namespace {

LossValue rms_second_derivative(const RectGrid& grid, const std::vector<double>& values, bool along_rho) {
    LossValue out;
    out.grad.assign(values.size(), 0.0);
    if (grid.m() < 3 || grid.n() < 3) return out;
    struct Term {
        double s;
        Stencil3 st;
        std::size_t i;
        std::size_t j;
    };
    std::vector<Term> terms;
    terms.reserve((grid.m() - 2) * (grid.n() - 2));
    double acc = 0.0;
    for (std::size_t i = 1; i + 1 < grid.m(); ++i) {
        for (std::size_t j = 1; j + 1 < grid.n(); ++j) {
            const auto st = along_rho ? central3(grid.rho, i) : central3(grid.z, j);
            double s = 0.0;
            for (int t = 0; t < 3; ++t) {
                s += st.d2[t] * values[along_rho ? grid.index(st.idx[t], j) : grid.index(i, st.idx[t])];
            }
            acc += s * s;
            terms.push_back({s, st, i, j});
        }
    }
    const double n = static_cast<double>(terms.size());
    out.value = std::sqrt(acc / n);
    if (out.value > 0.0) {
        for (const auto& term : terms) {
            const double g = term.s / (n * out.value);
            for (int t = 0; t < 3; ++t) {
                const std::size_t idx = along_rho ? grid.index(term.st.idx[t], term.j) : grid.index(term.i, term.st.idx[t]);
                out.grad[idx] += g * term.st.d2[t];
            }
        }
    }
    return out;
}

}  // namespace

RegLosses reg_losses(const RectGrid& grid, const std::vector<double>& values) {
    if (values.size() != grid.size()) throw Error(ErrorCode::Shape, "grid values have wrong length");
    return {rms_second_derivative(grid, values, true), rms_second_derivative(grid, values, false)};
}

TotalLoss total_loss(const gno::GnoModel& model, const LossProblem& problem, const LossWeights& weights,
                     bool with_gradient) {
    if (!problem.snapshot) throw Error(ErrorCode::Shape, "loss problem without snapshot");
    const SurfaceSnapshot& snap = *problem.snapshot;
    const auto full = gno::OperatorInput::from_snapshot(snap);

    std::vector<std::size_t> in_idx = problem.input_indices;
    if (in_idx.empty()) {
        in_idx.resize(snap.size());
        std::iota(in_idx.begin(), in_idx.end(), std::size_t{0});
    }
    const auto input = full.subset(in_idx);

    // Output layout: inputs, remaining records, grid points, cross points.
    std::vector<std::size_t> fit_pos(snap.size(), 0);
    std::vector<bool> used(snap.size(), false);
    for (std::size_t p = 0; p < in_idx.size(); ++p) {
        fit_pos[in_idx[p]] = p;
        used[in_idx[p]] = true;
    }
    std::vector<Coord> extra;
    for (std::size_t r = 0; r < snap.size(); ++r) {
        if (used[r]) continue;
        fit_pos[r] = input.size() + extra.size();
        extra.push_back(full.coords[r]);
    }
    const RectGrid& grid = problem.arb_grid;
    const std::size_t grid_base = input.size() + extra.size();
    const auto grid_pts = grid.points();
    extra.insert(extra.end(), grid_pts.begin(), grid_pts.end());
    const std::size_t cross_base = input.size() + extra.size();
    const auto cross_pts = arb::calendar_cross_points(grid, problem.domain);
    extra.insert(extra.end(), cross_pts.begin(), cross_pts.end());

    const auto& cfg = model.config();
    const auto graph = gno::build_operator_graph(input.coords, extra, cfg.rho_bar, cfg.K);
    gno::ForwardTape tape;
    const auto vhat = gno::gno_forward(model, input, graph, with_gradient ? &tape : nullptr);

    std::vector<double> pred(snap.size());
    for (std::size_t r = 0; r < snap.size(); ++r) pred[r] = vhat[fit_pos[r]];
    const std::vector<double> grid_vals(vhat.begin() + static_cast<std::ptrdiff_t>(grid_base),
                                        vhat.begin() + static_cast<std::ptrdiff_t>(cross_base));
    const std::vector<double> cross_vals(vhat.begin() + static_cast<std::ptrdiff_t>(cross_base), vhat.end());

    const auto fit = fit_loss(pred, snap);
    const auto but = butterfly_loss(grid, grid_vals, cfg.epsilon_arb);
    const auto cal = calendar_loss(grid, grid_vals, cross_vals, cfg.epsilon_arb);
    const auto reg = reg_losses(grid, grid_vals);

    TotalLoss out;
    out.parts.fit = fit.value;
    out.parts.but = but.value;
    out.parts.cal = cal.value;
    out.parts.reg_rho = reg.rho.value;
    out.parts.reg_z = reg.z.value;
    out.parts.total = weights.fit * fit.value + weights.but * but.value + weights.cal * cal.value +
                      weights.reg_rho * reg.rho.value + weights.reg_z * reg.z.value;
    out.grad = gno::GradientRecord::zeros_like(model);
    if (!with_gradient) return out;

    std::vector<double> upstream(vhat.size(), 0.0);
    for (std::size_t r = 0; r < snap.size(); ++r) upstream[fit_pos[r]] += weights.fit * fit.grad[r];
    for (std::size_t g = 0; g < grid.size(); ++g) {
        upstream[grid_base + g] += weights.but * but.grad[g] + weights.cal * cal.grad[g] +
                                   weights.reg_rho * reg.rho.grad[g] + weights.reg_z * reg.z.grad[g];
    }
    for (std::size_t c = 0; c < cross_vals.size(); ++c) upstream[cross_base + c] += weights.cal * cal.grad[grid.size() + c];

    if (std::any_of(upstream.begin(), upstream.end(), [](double u) { return u != 0.0; })) {
        out.grad = gno::gno_backward(model, input, graph, tape, upstream);
    }
    return out;
}

}  // namespace volsmooth::train
