#pragma once

#include "volsmooth/adamw.hpp"
#include "volsmooth/gno.hpp"
#include "volsmooth/losses.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace volsmooth::train {

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    std::size_t pseudo_batch = 64;
    double subsample_min = 0.5;
    double subsample_max = 1.0;
    std::size_t arb_m = 40;
    std::size_t arb_n = 40;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    Domain domain;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

/// Per-epoch means of every loss component over the surfaces seen.
struct EpochLog {
    int epoch = 0;
    LossBreakdown mean;
    std::size_t surfaces = 0;
    std::size_t skipped = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    AdamWState optimizer;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains in place. Each surface gets a random input subsample and a jittered
/// arbitrage grid; gradients are averaged over `pseudo_batch` surfaces per AdamW step.
/// Bit-reproducible for a fixed seed, independent of `jobs`.
TrainResult train(gno::GnoModel& model, const std::vector<SurfaceSnapshot>& dataset, const TrainConfig& config,
                  const LossWeights& weights, const EpochCallback& on_epoch = {});

/// Like train, but every pseudo-batch pairs surfaces from `new_data` with an equal
/// number drawn from `base_data`. Epochs run over `new_data`.
TrainResult finetune(gno::GnoModel& model, const std::vector<SurfaceSnapshot>& new_data,
                     const std::vector<SurfaceSnapshot>& base_data, const TrainConfig& config,
                     const LossWeights& weights, const EpochCallback& on_epoch = {});

/// CSV header epoch,loss,fit,but,cal,reg_rho,reg_z.
void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);
std::string loss_log_csv(const std::vector<EpochLog>& log);

}  // namespace volsmooth::train
