#include "volsmooth/cli.hpp"

#include "volsmooth/errors.hpp"
#include "volsmooth/evaluation.hpp"
#include "volsmooth/log.hpp"
#include "volsmooth/market_data.hpp"
#include "volsmooth/svi.hpp"
#include "volsmooth/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace volsmooth::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_hash(const json& config) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : config.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    std::string out = ".";
    bool quiet = false;
};

/// Accumulates what a run read and wrote for its manifest.
struct Run {
    std::string command;
    json config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, path + ": " + e.what());
    }
}

json load_config(const Common& common, const std::set<std::string>& allowed) {
    if (common.config_path.empty()) return json::object();
    json cfg = load_json_file(common.config_path);
    if (!cfg.is_object()) throw Error(ErrorCode::Config, "config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
        if (!allowed.count(key)) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    }
    return cfg;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    try {
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, std::string(key) + ": " + e.what());
    }
}

Domain domain_from_json(const json& j) {
    Domain d;
    for (const auto& [key, value] : j.items()) {
        if (key == "rho_min") d.rho_min = value.get<double>();
        else if (key == "rho_max") d.rho_max = value.get<double>();
        else if (key == "z_min") d.z_min = value.get<double>();
        else if (key == "z_max") d.z_max = value.get<double>();
        else throw Error(ErrorCode::Config, "unknown domain key '" + key + "'");
    }
    if (!(d.rho_min > 0.0 && d.rho_min < d.rho_max && d.z_min < d.z_max)) {
        throw Error(ErrorCode::Config, "domain bounds are inconsistent");
    }
    return d;
}

json to_json(const Domain& d) {
    return {{"rho_min", d.rho_min}, {"rho_max", d.rho_max}, {"z_min", d.z_min}, {"z_max", d.z_max}};
}

fs::path out_path(const Common& common, Run& run, const std::string& name) {
    fs::create_directories(common.out);
    const fs::path p = fs::path(common.out) / name;
    run.outputs.push_back(p.string());
    return p;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void finish(const Common& common, Run& run) {
    const fs::path manifest = fs::path(common.out) / "manifest.json";
    fs::create_directories(common.out);
    write_json(manifest, {{"command", run.command},
                          {"inputs", run.inputs},
                          {"config", run.config},
                          {"config_hash", config_hash(run.config)},
                          {"outputs", run.outputs}});
}

void announce(const Run& run) { log_info("resolved config for " + run.command + ": " + run.config.dump()); }

std::vector<SurfaceSnapshot> read_snapshots(const std::string& path, Run& run) {
    run.inputs.push_back(path);
    return market::load_snapshots(path);
}

gno::GnoModel read_checkpoint(const std::string& path, Run& run) {
    run.inputs.push_back(path);
    return gno::load_checkpoint(path);
}

std::string csv_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Common& common, const std::string& quotes) {
    Run run{"ingest", load_config(common, {"domain"}), {quotes}, {}};
    const Domain domain = domain_from_json(get_or(run.config, "domain", json::object()));
    run.config["domain"] = to_json(domain);
    announce(run);
    const auto snapshots = market::ingest(market::load_quotes_csv(quotes), domain);
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        market::save_snapshot(out_path(common, run, "snapshot_" + std::to_string(i) + ".json"), snapshots[i]);
    }
    market::save_snapshots(out_path(common, run, "snapshots.json"), snapshots);
    finish(common, run);
    return kOk;
}

int cmd_gen_ssvi(const Common& common, std::optional<std::size_t> n_override) {
    Run run{"gen-ssvi", load_config(common, {"ssvi", "perturbation", "grid", "n_surfaces", "seed", "domain"}), {}, {}};
    const auto& cfg = run.config;
    const svi::SsviParams base = svi::ssvi_from_json(get_or(cfg, "ssvi", json::object()));
    svi::PerturbationSpec pert;
    const json pj = get_or(cfg, "perturbation", json::object());
    for (const auto& [key, value] : pj.items()) {
        if (key == "multiplicative") pert.multiplicative = value.get<double>();
        else if (key == "rho_additive") pert.rho_additive = value.get<double>();
        else throw Error(ErrorCode::Config, "unknown perturbation key '" + key + "'");
    }
    svi::GridSpec grid;
    const json gj = get_or(cfg, "grid", json::object());
    for (const auto& [key, value] : gj.items()) {
        if (key == "rho") grid.rho = value.get<std::vector<double>>();
        else if (key == "z") grid.z = value.get<std::vector<double>>();
        else throw Error(ErrorCode::Config, "unknown grid key '" + key + "'");
    }
    const auto n = n_override.value_or(get_or<std::size_t>(cfg, "n_surfaces", 64));
    const auto seed = common.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 0));
    const Domain domain = domain_from_json(get_or(cfg, "domain", json::object()));
    const auto g = grid.grid();
    run.config = {{"ssvi", svi::to_json(base)},
                  {"perturbation", {{"multiplicative", pert.multiplicative}, {"rho_additive", pert.rho_additive}}},
                  {"grid", {{"rho", g.rho}, {"z", g.z}}},
                  {"n_surfaces", n},
                  {"seed", seed},
                  {"domain", to_json(domain)}};
    announce(run);

    const auto surfaces = svi::gen_ssvi_dataset(base, n, pert, grid, seed, domain);
    std::vector<SurfaceSnapshot> snaps;
    json params = json::array();
    for (const auto& s : surfaces) {
        snaps.push_back(s.snapshot);
        params.push_back(svi::to_json(s.params));
    }
    market::save_snapshots(out_path(common, run, "surfaces.json"), snaps);
    write_json(out_path(common, run, "params.json"), params);
    finish(common, run);
    return kOk;
}

int cmd_fit_svi(const Common& common, const std::string& data) {
    Run run{"fit-svi", load_config(common, {}), {}, {}};
    announce(run);
    const auto snapshots = read_snapshots(data, run);
    json out = json::array();
    for (const auto& snap : snapshots) {
        std::map<double, std::vector<svi::CalibrationPoint>> slices;
        for (const auto& r : snap.records) slices[r.tau].push_back({r.k, r.iv_mid, 1.0});
        json fits = json::array();
        for (const auto& [tau, pts] : slices) {
            json entry{{"tau", tau}, {"points", pts.size()}};
            try {
                const auto fit = svi::svi_calibrate(pts, tau);
                entry["params"] = svi::to_json(fit.slice);
                entry["mape"] = fit.mape;
                entry["rmse"] = fit.rmse;
                entry["min_butterfly"] = fit.min_butterfly;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::Underdetermined && e.code() != ErrorCode::Infeasible) throw;
                log_warn("slice tau=" + csv_number(tau) + " of " + snap.timestamp + " skipped: " + e.what());
                entry["error"] = e.what();
            }
            fits.push_back(std::move(entry));
        }
        out.push_back({{"timestamp", snap.timestamp}, {"slices", std::move(fits)}});
    }
    write_json(out_path(common, run, "svi_fits.json"), out);
    finish(common, run);
    return kOk;
}

void write_training_outputs(const Common& common, Run& run, const gno::GnoModel& model,
                            const train::TrainResult& result) {
    gno::save_checkpoint(out_path(common, run, "checkpoint.json"), model);
    train::write_loss_log(out_path(common, run, "loss_log.csv"), result.log);
}

train::EpochCallback progress() {
    return [](const train::EpochLog& e) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "epoch %d loss %.6g fit %.6g but %.3g cal %.3g", e.epoch, e.mean.total,
                      e.mean.fit, e.mean.but, e.mean.cal);
        log_info(buf);
    };
}

train::TrainConfig training_config(const json& cfg, const Common& common, std::optional<int> epochs) {
    auto tc = train::train_config_from_json(get_or(cfg, "training", json::object()));
    if (common.seed) tc.seed = *common.seed;
    if (epochs) tc.epochs = *epochs;
    tc.jobs = common.jobs;
    tc.domain = domain_from_json(get_or(cfg, "domain", json::object()));
    tc.validate();
    return tc;
}

int cmd_train(const Common& common, const std::string& data, std::optional<int> epochs) {
    Run run{"train", load_config(common, {"model", "training", "weights", "domain"}), {}, {}};
    const auto model_cfg = gno::config_from_json(get_or(run.config, "model", json::object()));
    const auto tc = training_config(run.config, common, epochs);
    const auto weights = train::loss_weights_from_json(get_or(run.config, "weights", json::object()));
    run.config = {{"model", gno::to_json(model_cfg)},
                  {"training", train::to_json(tc)},
                  {"weights", train::to_json(weights)},
                  {"domain", to_json(tc.domain)}};
    announce(run);
    const auto dataset = read_snapshots(data, run);
    auto model = gno::GnoModel::initialized(model_cfg, tc.seed);
    const auto result = train::train(model, dataset, tc, weights, progress());
    write_training_outputs(common, run, model, result);
    finish(common, run);
    return kOk;
}

int cmd_finetune(const Common& common, const std::string& checkpoint, const std::string& new_data,
                 const std::string& base_data, int epochs) {
    Run run{"finetune", load_config(common, {"training", "weights", "domain"}), {}, {}};
    auto tc = training_config(run.config, common, epochs);
    const auto weights = train::loss_weights_from_json(get_or(run.config, "weights", json::object()));
    run.config = {{"training", train::to_json(tc)}, {"weights", train::to_json(weights)}, {"domain", to_json(tc.domain)}};
    announce(run);
    auto model = read_checkpoint(checkpoint, run);
    const auto fresh = read_snapshots(new_data, run);
    const auto base = read_snapshots(base_data, run);
    const auto result = train::finetune(model, fresh, base, tc, weights, progress());
    write_training_outputs(common, run, model, result);
    finish(common, run);
    return kOk;
}

int cmd_smooth(const Common& common, const std::string& checkpoint, const std::string& data, std::size_t m,
               std::size_t n, bool single_precision) {
    Run run{"smooth", load_config(common, {"domain"}), {}, {}};
    const Domain domain = domain_from_json(get_or(run.config, "domain", json::object()));
    run.config = {{"grid", {m, n}}, {"domain", to_json(domain)}, {"float32", single_precision}};
    announce(run);
    const auto model = read_checkpoint(checkpoint, run);
    const auto snapshots = read_snapshots(data, run);
    const auto grid = RectGrid::uniform(domain, m, n);
    const auto pts = grid.points();
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        const auto input = gno::OperatorInput::from_snapshot(snapshots[s]);
        const auto& cfg = model.config();
        const auto graph = gno::build_operator_graph(input.coords, pts, cfg.rho_bar, cfg.K);
        std::vector<double> vols;
        if (single_precision) {
            const auto f = gno::gno_forward_f32(model, input, graph);
            vols.assign(f.begin(), f.end());
        } else {
            vols = gno::gno_forward(model, input, graph);
        }
        const std::string name = snapshots.size() == 1 ? "smoothed.csv" : "smoothed_" + std::to_string(s) + ".csv";
        std::ofstream out(out_path(common, run, name));
        out << "rho,z,tau,k,vol\n";
        for (std::size_t p = 0; p < pts.size(); ++p) {
            const double rho = pts[p].rho;
            const double z = pts[p].z;
            out << csv_number(rho) << ',' << csv_number(z) << ',' << csv_number(rho * rho) << ',' << csv_number(z * rho)
                << ',' << csv_number(vols[input.size() + p]) << '\n';
        }
    }
    finish(common, run);
    return kOk;
}

int cmd_validate(const Common& common, const std::string& ssvi_path, const std::string& checkpoint,
                 const std::string& data, std::size_t m, std::size_t n, double threshold) {
    Run run{"validate", load_config(common, {"domain"}), {}, {}};
    const Domain domain = domain_from_json(get_or(run.config, "domain", json::object()));
    run.config = {{"grid", {m, n}}, {"domain", to_json(domain)}, {"threshold", threshold}};
    announce(run);
    const auto grid = RectGrid::uniform(domain, m, n);
    std::vector<arb::ArbitrageReport> reports;
    if (!ssvi_path.empty()) {
        run.inputs.push_back(ssvi_path);
        const json j = load_json_file(ssvi_path);
        const json items = j.is_array() ? j : json::array({j});
        for (const auto& item : items) {
            reports.push_back(arb::validate_surface(batched(svi::ssvi_surface(svi::ssvi_from_json(item))), domain, grid,
                                                    threshold));
        }
    } else {
        if (checkpoint.empty() || data.empty()) {
            throw Error(ErrorCode::Config, "validate needs --ssvi or both --checkpoint and --data");
        }
        const auto model = read_checkpoint(checkpoint, run);
        const auto snapshots = read_snapshots(data, run);
        reports.resize(snapshots.size());
        eval::parallel_for(snapshots.size(), common.jobs, [&](std::size_t s) {
            reports[s] = arb::validate_surface(
                eval::model_surface(model, gno::OperatorInput::from_snapshot(snapshots[s])), domain, grid, threshold);
        });
    }
    json out = json::array();
    bool clean = true;
    for (const auto& r : reports) {
        out.push_back(arb::report_to_json(r));
        clean = clean && r.arbitrage_free();
    }
    write_json(out_path(common, run, "validation.json"), out);
    finish(common, run);
    if (!clean) log_warn("arbitrage violations found");
    return clean ? kOk : kValidationFailed;
}

int cmd_benchmark(const Common& common, const std::string& checkpoint, const std::string& data, std::size_t m,
                  std::size_t n, std::size_t bins) {
    Run run{"benchmark", load_config(common, {"domain"}), {}, {}};
    const Domain domain = domain_from_json(get_or(run.config, "domain", json::object()));
    run.config = {{"grid", {m, n}}, {"bins", bins}, {"domain", to_json(domain)}};
    announce(run);
    const auto model = read_checkpoint(checkpoint, run);
    const auto snapshots = read_snapshots(data, run);
    const auto inputs = eval::benchmark_inputs(model, snapshots, domain, m, n, common.jobs);
    const auto summary = metrics::benchmark_summary(inputs.per_surface, inputs.spatial, {bins, bins, domain});
    write_json(out_path(common, run, "summary.json"), metrics::to_json(summary));
    metrics::write_bins_csv(out_path(common, run, "bins.csv"), summary);
    finish(common, run);
    return kOk;
}

int cmd_backtest(const Common& common, const std::string& checkpoint, const std::string& data, double fraction) {
    Run run{"backtest", load_config(common, {}), {}, {}};
    const auto seed = common.seed.value_or(0);
    run.config = {{"seed", seed}, {"fraction", fraction}};
    announce(run);
    const auto model = read_checkpoint(checkpoint, run);
    const auto snapshots = read_snapshots(data, run);
    const auto result = eval::backtest(model, snapshots, seed, common.jobs, fraction);
    write_json(out_path(common, run, "backtest.json"), eval::backtest_to_json(result));
    {
        std::ofstream out(out_path(common, run, "backtest.csv"));
        out << eval::backtest_table_csv(result);
    }
    std::fputs(eval::backtest_table_csv(result).c_str(), stdout);
    finish(common, run);
    return kOk;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config:
            return kConfigError;
        case ErrorCode::Schema:
        case ErrorCode::Parse:
        case ErrorCode::Io:
        case ErrorCode::EmptySnapshot:
        case ErrorCode::EmptyInput:
        case ErrorCode::DegenerateParity:
        case ErrorCode::Underdetermined:
        case ErrorCode::NoNeighbors:
        case ErrorCode::GraphMismatch:
        case ErrorCode::Shape:
            return kDataError;
        default:
            return kNumericError;
    }
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Arbitrage-penalized volatility surface smoothing with graph neural operators"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "JSON config file");
    app.add_option("--seed", common.seed, "Random seed (overrides config)");
    app.add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", common.out, "Output directory");
    app.add_flag("-q,--quiet", common.quiet, "Only print warnings");

    std::string quotes, data, checkpoint, new_data, base_data, ssvi_path;
    std::optional<std::size_t> n_surfaces;
    std::optional<int> epochs;
    int ft_epochs = 10;
    std::size_t m = 50, n = 50, bins = 10;
    bool f32 = false;
    double threshold = 0.0, fraction = 0.5;

    auto* ingest = app.add_subcommand("ingest", "Quotes CSV to snapshot JSON");
    ingest->add_option("--quotes", quotes, "Quotes CSV")->required();

    auto* gen = app.add_subcommand("gen-ssvi", "Generate perturbed SSVI surfaces");
    gen->add_option("-n,--surfaces", n_surfaces, "Number of surfaces");

    auto* fit = app.add_subcommand("fit-svi", "Calibrate raw SVI per slice");
    fit->add_option("--data", data, "Snapshot JSON")->required();

    auto* tr = app.add_subcommand("train", "Train an operator");
    tr->add_option("--data", data, "Training snapshots JSON")->required();
    tr->add_option("--epochs", epochs, "Epochs (overrides config)");

    auto* ft = app.add_subcommand("finetune", "Finetune a checkpoint on new data");
    ft->add_option("--checkpoint", checkpoint)->required();
    ft->add_option("--new-data", new_data)->required();
    ft->add_option("--base-data", base_data)->required();
    ft->add_option("--epochs", ft_epochs, "Epochs")->capture_default_str();

    auto* sm = app.add_subcommand("smooth", "Evaluate a checkpoint on a uniform grid");
    sm->add_option("--checkpoint", checkpoint)->required();
    sm->add_option("--data", data, "Snapshot JSON")->required();
    sm->add_option("--m", m, "rho nodes")->capture_default_str();
    sm->add_option("--n", n, "z nodes")->capture_default_str();
    sm->add_flag("--float32", f32, "Single-precision inference");

    auto* va = app.add_subcommand("validate", "Check a surface for static arbitrage");
    va->add_option("--ssvi", ssvi_path, "SSVI parameter JSON (object or array)");
    va->add_option("--checkpoint", checkpoint);
    va->add_option("--data", data, "Snapshot JSON");
    va->add_option("--m", m)->capture_default_str();
    va->add_option("--n", n)->capture_default_str();
    va->add_option("--threshold", threshold)->capture_default_str();

    auto* be = app.add_subcommand("benchmark", "Error statistics and spatial bins");
    be->add_option("--checkpoint", checkpoint)->required();
    be->add_option("--data", data)->required();
    be->add_option("--m", m)->capture_default_str();
    be->add_option("--n", n)->capture_default_str();
    be->add_option("--bins", bins)->capture_default_str();

    auto* bt = app.add_subcommand("backtest", "Drop half the points and score train/test MAPE");
    bt->add_option("--checkpoint", checkpoint)->required();
    bt->add_option("--data", data)->required();
    bt->add_option("--fraction", fraction)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }
    set_log_level(common.quiet ? LogLevel::Warn : LogLevel::Info);

    try {
        if (*ingest) return cmd_ingest(common, quotes);
        if (*gen) return cmd_gen_ssvi(common, n_surfaces);
        if (*fit) return cmd_fit_svi(common, data);
        if (*tr) return cmd_train(common, data, epochs);
        if (*ft) return cmd_finetune(common, checkpoint, new_data, base_data, ft_epochs);
        if (*sm) return cmd_smooth(common, checkpoint, data, m, n, f32);
        if (*va) return cmd_validate(common, ssvi_path, checkpoint, data, m, n, threshold);
        if (*be) return cmd_benchmark(common, checkpoint, data, m, n, bins);
        if (*bt) return cmd_backtest(common, checkpoint, data, fraction);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.code());
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    }
    return kConfigError;
}

}  // namespace volsmooth::cli
