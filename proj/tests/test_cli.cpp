#include "volsmooth/cli.hpp"
#include "volsmooth/gno.hpp"
#include "volsmooth/market_data.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace volsmooth;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("volsmooth_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args, const fs::path& capture = {}) {
    const char* exe = std::getenv("VOLSMOOTH_CLI");
    REQUIRE(exe != nullptr);
    std::string cmd = std::string("\"") + exe + "\" -q " + args;
    cmd += capture.empty() ? " > /dev/null 2>&1" : " > \"" + capture.string() + "\" 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("generated SSVI surfaces validate cleanly") {
    const auto dir = scratch("gen");
    CHECK(run("--seed 3 --out " + dir.string() + " gen-ssvi -n 2") == 0);
    CHECK(fs::exists(dir / "surfaces.json"));
    CHECK(fs::exists(dir / "params.json"));
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(run("--out " + (dir / "v").string() + " validate --ssvi " + (dir / "params.json").string()) == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "v" / "validation.json"));
    CHECK(rep.dump().find("min_butterfly") != std::string::npos);
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["command"] == "gen-ssvi");
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);
}

TEST_CASE("smoothing with an all-zero checkpoint yields ln 2") {
    const auto dir = scratch("smooth");
    REQUIRE(run("--seed 1 --out " + dir.string() + " gen-ssvi -n 1") == 0);
    gno::GnoConfig cfg;
    cfg.layers = 2;
    cfg.channels = 4;
    cfg.K = 5;
    gno::save_checkpoint(dir / "zero.json", gno::GnoModel(cfg));
    CHECK(run("--out " + (dir / "s").string() + " smooth --checkpoint " + (dir / "zero.json").string() + " --data " +
              (dir / "surfaces.json").string() + " --m 4 --n 5") == 0);
    const auto csv = slurp(dir / "s" / "smoothed.csv");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "rho,z,tau,k,vol");
    int rows = 0;
    while (std::getline(lines, line)) {
        const double vol = std::stod(line.substr(line.rfind(',') + 1));
        CHECK(vol == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        ++rows;
    }
    CHECK(rows == 20);
}

TEST_CASE("configuration errors exit with code 2") {
    const auto dir = scratch("config");
    {
        std::ofstream cfg(dir / "bad.json");
        cfg << R"({"n_surfaces": 2, "nonsense": true})";
    }
    CHECK(run("--config " + (dir / "bad.json").string() + " --out " + dir.string() + " gen-ssvi") == 2);
    CHECK(run("gen-ssvi --no-such-flag") == 2);
    CHECK(run("") == 2);
}

TEST_CASE("missing inputs exit with code 3") {
    const auto dir = scratch("missing");
    CHECK(run("--out " + dir.string() + " fit-svi --data " + (dir / "absent.json").string()) == 3);
}

TEST_CASE("validation failures exit with code 5") {
    const auto dir = scratch("violate");
    {
        std::ofstream p(dir / "p.json");
        p << R"({"V":0.04,"V_prime":0.04,"theta":0.11,"rho":-0.99,"p":0.01,"eta":40.0,"gamma":0.49,"kappa1":5.5,"kappa2":0.1})";
    }
    CHECK(run("--out " + dir.string() + " validate --ssvi " + (dir / "p.json").string()) == 5);
}

TEST_CASE("backtest prints the quantile table") {
    const auto dir = scratch("backtest");
    REQUIRE(run("--seed 2 --out " + dir.string() + " gen-ssvi -n 3") == 0);
    gno::GnoConfig cfg;
    cfg.layers = 2;
    cfg.channels = 4;
    cfg.K = 5;
    gno::save_checkpoint(dir / "m.json", gno::GnoModel::initialized(cfg, 4));
    const auto out = dir / "stdout.txt";
    CHECK(run("--seed 5 --out " + (dir / "b").string() + " backtest --checkpoint " + (dir / "m.json").string() +
                  " --data " + (dir / "surfaces.json").string(),
              out) == 0);
    const auto table = slurp(out);
    std::istringstream lines(table);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "mode,set,q05,q50,q95");
    int rows = 0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
        ++rows;
    }
    CHECK(rows == 4);
    const auto j = nlohmann::json::parse(slurp(dir / "b" / "backtest.json"));
    CHECK(j["interpolate"]["test"].contains("q50"));
}

TEST_CASE("ingest writes snapshots") {
    const auto dir = scratch("ingest");
    {
        std::ofstream q(dir / "q.csv");
        q << "timestamp,expiry,strike,call_bid,call_ask,put_bid,put_ask,underlying_mid\n"
             "2024-01-02T16:00:00,2024-07-02,90,11.2,11.4,1.2,1.3,100\n"
             "2024-01-02T16:00:00,2024-07-02,100,4.7,4.9,4.5,4.7,100\n"
             "2024-01-02T16:00:00,2024-07-02,110,1.4,1.5,10.9,11.1,100\n";
    }
    CHECK(run("--out " + dir.string() + " ingest --quotes " + (dir / "q.csv").string()) == 0);
    CHECK(fs::exists(dir / "snapshots.json"));
}

TEST_CASE("config hash is stable") {
    const auto a = cli::config_hash(nlohmann::json{{"a", 1}, {"b", 2}});
    CHECK(a == cli::config_hash(nlohmann::json{{"b", 2}, {"a", 1}}));
    CHECK(a != cli::config_hash(nlohmann::json{{"a", 2}, {"b", 2}}));
}
