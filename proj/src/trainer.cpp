#include "volsmooth/trainer.hpp"

#include "volsmooth/errors.hpp"
#include "volsmooth/log.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace volsmooth::train {

void TrainConfig::validate() const {
    if (epochs < 0) throw Error(ErrorCode::Config, "epochs must be >= 0");
    if (pseudo_batch < 1) throw Error(ErrorCode::Config, "pseudo_batch must be >= 1");
    if (!(subsample_min > 0.0 && subsample_min <= subsample_max && subsample_max <= 1.0)) {
        throw Error(ErrorCode::Config, "subsample range must lie in (0, 1]");
    }
    if (arb_m < 3 || arb_n < 3) throw Error(ErrorCode::Config, "arbitrage grid must be at least 3x3");
    if (!(learning_rate > 0.0) || !(weight_decay >= 0.0)) throw Error(ErrorCode::Config, "invalid optimizer settings");
    if (jobs < 1) throw Error(ErrorCode::Config, "jobs must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"pseudo_batch", c.pseudo_batch},
            {"subsample_range", {c.subsample_min, c.subsample_max}},
            {"arb_grid", {c.arb_m, c.arb_n}},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "epochs") c.epochs = value.get<int>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "weight_decay") c.weight_decay = value.get<double>();
            else if (key == "pseudo_batch") c.pseudo_batch = value.get<std::size_t>();
            else if (key == "subsample_range") {
                c.subsample_min = value.at(0).get<double>();
                c.subsample_max = value.at(1).get<double>();
            } else if (key == "arb_grid") {
                c.arb_m = value.at(0).get<std::size_t>();
                c.arb_n = value.at(1).get<std::size_t>();
            } else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw Error(ErrorCode::Config, "unknown training config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const LossWeights& w) {
    return {{"lambda_fit", w.fit}, {"lambda_cal", w.cal}, {"lambda_but", w.but}, {"lambda_reg_rho", w.reg_rho},
            {"lambda_reg_z", w.reg_z}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "lambda_fit") w.fit = value.get<double>();
            else if (key == "lambda_cal") w.cal = value.get<double>();
            else if (key == "lambda_but") w.but = value.get<double>();
            else if (key == "lambda_reg_rho") w.reg_rho = value.get<double>();
            else if (key == "lambda_reg_z") w.reg_z = value.get<double>();
            else throw Error(ErrorCode::Config, "unknown loss weight key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("loss weights: ") + e.what());
    }
    w.validate();
    return w;
}

namespace {

constexpr int kMaxResample = 10;

/// True if every output lies within rho_bar (in rho) of some input.
bool covered(const std::vector<double>& input_rhos, const std::vector<Coord>& outputs, double rho_bar) {
    for (const auto& y : outputs) {
        auto it = std::lower_bound(input_rhos.begin(), input_rhos.end(), y.rho - rho_bar);
        if (it == input_rhos.end() || *it > y.rho + rho_bar) return false;
    }
    return true;
}

/// Draws the subsample and grid for one surface. Returns nullopt once retries run out.
std::optional<LossProblem> draw_problem(const SurfaceSnapshot& snap, const TrainConfig& cfg, double rho_bar,
                                        std::mt19937_64& rng) {
    std::uniform_real_distribution<double> frac(cfg.subsample_min, cfg.subsample_max);
    const std::size_t n = snap.size();
    for (int attempt = 0; attempt < kMaxResample; ++attempt) {
        const double f = frac(rng);
        const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(f * static_cast<double>(n))),
                                                  std::size_t{1}, n);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());

        LossProblem p;
        p.snapshot = &snap;
        p.input_indices = std::move(idx);
        p.arb_grid = RectGrid::jittered(cfg.domain, cfg.arb_m, cfg.arb_n, rng);
        p.domain = cfg.domain;

        std::vector<double> rhos;
        rhos.reserve(keep);
        for (std::size_t i : p.input_indices) rhos.push_back(snap.records[i].rho);
        std::sort(rhos.begin(), rhos.end());
        std::vector<Coord> outputs;
        outputs.reserve(n);
        for (const auto& r : snap.records) outputs.push_back({r.rho, r.z});
        const auto grid_pts = p.arb_grid.points();
        outputs.insert(outputs.end(), grid_pts.begin(), grid_pts.end());
        if (covered(rhos, outputs, rho_bar)) return p;
    }
    return std::nullopt;
}

struct Accumulator {
    LossBreakdown sum;
    std::size_t surfaces = 0;
    std::size_t skipped = 0;

    void add(const LossBreakdown& b) {
        sum.total += b.total;
        sum.fit += b.fit;
        sum.but += b.but;
        sum.cal += b.cal;
        sum.reg_rho += b.reg_rho;
        sum.reg_z += b.reg_z;
        ++surfaces;
    }

    EpochLog finish(int epoch) const {
        EpochLog log;
        log.epoch = epoch;
        log.surfaces = surfaces;
        log.skipped = skipped;
        if (surfaces > 0) {
            const double inv = 1.0 / static_cast<double>(surfaces);
            log.mean = {sum.total * inv, sum.fit * inv, sum.but * inv, sum.cal * inv, sum.reg_rho * inv, sum.reg_z * inv};
        }
        return log;
    }
};

/// Evaluates the batch (possibly on several threads) and applies one optimizer step
/// with the gradients averaged in batch order.
void batch_step(gno::GnoModel& model, const std::vector<LossProblem>& batch, const TrainConfig& cfg,
                const LossWeights& weights, AdamWState& opt, Accumulator& acc) {
    if (batch.empty()) return;
    std::vector<TotalLoss> results(batch.size());
    const unsigned workers = std::min<unsigned>(cfg.jobs, static_cast<unsigned>(batch.size()));
    if (workers <= 1) {
        for (std::size_t b = 0; b < batch.size(); ++b) results[b] = total_loss(model, batch[b], weights);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(workers);
        for (unsigned w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    for (std::size_t b = w; b < batch.size(); b += workers) {
                        results[b] = total_loss(model, batch[b], weights);
                    }
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
    auto grad = gno::GradientRecord::zeros_like(model);
    for (const auto& r : results) {
        grad += r.grad;
        acc.add(r.parts);
    }
    grad *= 1.0 / static_cast<double>(results.size());
    adamw_step(model.params(), grad.values, opt, cfg.learning_rate, cfg.weight_decay);
}

}  // namespace

TrainResult train(gno::GnoModel& model, const std::vector<SurfaceSnapshot>& dataset, const TrainConfig& config,
                  const LossWeights& weights, const EpochCallback& on_epoch) {
    config.validate();
    weights.validate();
    if (dataset.empty()) throw Error(ErrorCode::EmptyInput, "training dataset is empty");

    TrainResult result;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        Accumulator acc;
        std::vector<LossProblem> batch;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            auto problem = draw_problem(dataset[order[pos]], config, model.config().rho_bar, rng);
            if (!problem) {
                log_warn("skipping surface " + dataset[order[pos]].timestamp + ": no valid subsample");
                ++acc.skipped;
            } else {
                batch.push_back(std::move(*problem));
            }
            if (batch.size() == config.pseudo_batch || pos + 1 == order.size()) {
                batch_step(model, batch, config, weights, result.optimizer, acc);
                batch.clear();
            }
        }
        result.log.push_back(acc.finish(epoch));
        if (on_epoch) on_epoch(result.log.back());
    }
    return result;
}

TrainResult finetune(gno::GnoModel& model, const std::vector<SurfaceSnapshot>& new_data,
                     const std::vector<SurfaceSnapshot>& base_data, const TrainConfig& config,
                     const LossWeights& weights, const EpochCallback& on_epoch) {
    config.validate();
    weights.validate();
    if (new_data.empty() || base_data.empty()) throw Error(ErrorCode::EmptyInput, "finetuning needs both datasets");

    TrainResult result;
    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick_base(0, base_data.size() - 1);
    std::vector<std::size_t> order(new_data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t per_side = (config.pseudo_batch + 1) / 2;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        Accumulator acc;
        for (std::size_t start = 0; start < order.size(); start += per_side) {
            const std::size_t end = std::min(order.size(), start + per_side);
            std::vector<LossProblem> batch;
            auto push = [&](const SurfaceSnapshot& snap) {
                auto problem = draw_problem(snap, config, model.config().rho_bar, rng);
                if (problem) {
                    batch.push_back(std::move(*problem));
                } else {
                    log_warn("skipping surface " + snap.timestamp + ": no valid subsample");
                    ++acc.skipped;
                }
            };
            for (std::size_t pos = start; pos < end; ++pos) push(new_data[order[pos]]);
            for (std::size_t b = start; b < end; ++b) push(base_data[pick_base(rng)]);
            batch_step(model, batch, config, weights, result.optimizer, acc);
        }
        result.log.push_back(acc.finish(epoch));
        if (on_epoch) on_epoch(result.log.back());
    }
    return result;
}

std::string loss_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out << "epoch,loss,fit,but,cal,reg_rho,reg_z\n";
    char buf[512];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.mean.total, e.mean.fit,
                      e.mean.but, e.mean.cal, e.mean.reg_rho, e.mean.reg_z);
        out << buf;
    }
    return out.str();
}

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << loss_log_csv(log);
}

}  // namespace volsmooth::train
