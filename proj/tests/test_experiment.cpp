#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "rie/experiment.hpp"

using namespace rie;
using Catch::Detail::Approx;

namespace {

const char* kTinyConfig = R"(
# tiny grid for harness tests
n = 60
x_prior = shifted_wigner:2
y_prior = gaussian
kappas = 0.5, 1
alphas = 0.5
seeds = 1, 2
estimators = rie_x, rie_y, oracle_x, oracle_y
)";

} // namespace

TEST_CASE("config parsing") {
    SECTION("round trip through canonical text") {
        const ExperimentConfig cfg = ExperimentConfig::from_text(kTinyConfig);
        REQUIRE(cfg.n == 60);
        REQUIRE(cfg.kappas == std::vector<double>{0.5, 1.0});
        REQUIRE(cfg.seeds == std::vector<uint64_t>{1, 2});
        REQUIRE(cfg.estimators.size() == 4);
        const ExperimentConfig again = ExperimentConfig::from_text(cfg.canonical_text());
        REQUIRE(again.canonical_text() == cfg.canonical_text());
    }

    SECTION("unknown estimator rejected") {
        REQUIRE_THROWS_AS(ExperimentConfig::from_text("n=60\nestimators=frobnicate\n"),
                          std::invalid_argument);
    }

    SECTION("unknown key rejected") {
        REQUIRE_THROWS_AS(ExperimentConfig::from_text("bogus=1\n"), std::invalid_argument);
    }

    SECTION("presets parse and validate") {
        for (const auto& name : ExperimentConfig::preset_names()) {
            REQUIRE_NOTHROW(ExperimentConfig::preset(name).validate());
        }
        REQUIRE_THROWS_AS(ExperimentConfig::preset("nope"), std::invalid_argument);
    }
}

TEST_CASE("instance seeding is injective across cells") {
    std::set<uint64_t> seen;
    for (uint64_t seed : {1ull, 2ull, 3ull})
        for (size_t ik = 0; ik < 6; ++ik)
            for (size_t ia = 0; ia < 4; ++ia) REQUIRE(seen.insert(instance_seed(seed, ik, ia)).second);
}

TEST_CASE("run_experiment") {
    ExperimentConfig cfg = ExperimentConfig::from_text(kTinyConfig);

    SECTION("deterministic and worker-count independent") {
        const RunOutput serial = run_experiment(cfg, 1);
        const RunOutput parallel = run_experiment(cfg, 3);
        const RunOutput again = run_experiment(cfg, 1);
        REQUIRE(serial.results_csv == parallel.results_csv);
        REQUIRE(serial.results_csv == again.results_csv);
        REQUIRE(serial.aggregate_csv == parallel.aggregate_csv);
        REQUIRE(serial.rows.size() == 2 * 1 * 2 * 4);
        for (const auto& row : serial.rows) REQUIRE(row.status == "ok");
    }

    SECTION("seed offset changes the draws") {
        const RunOutput a = run_experiment(cfg, 1, 0);
        const RunOutput b = run_experiment(cfg, 1, 1000);
        REQUIRE(a.results_csv != b.results_csv);
    }

    SECTION("files are written with schema headers") {
        const RunOutput out = run_experiment(cfg, 2);
        const std::string dir = "/tmp/rie_run_test";
        std::filesystem::remove_all(dir);
        write_run_output(out, dir);
        for (const char* name : {"results.csv", "aggregate.csv", "timings.csv"}) {
            std::ifstream f(std::filesystem::path(dir) / name);
            REQUIRE(f.good());
            std::string first;
            std::getline(f, first);
            REQUIRE(first.rfind("# rie-", 0) == 0);
        }
        std::filesystem::remove_all(dir);
    }

    SECTION("zero snr with a symmetric prior scores unit mse") {
        ExperimentConfig zero = ExperimentConfig::from_text(
            "n=60\nx_prior=wigner\ny_prior=gaussian\nkappas=0\nalphas=0.5\nseeds=1,2\n"
            "estimators=rie_y\n");
        const RunOutput out = run_experiment(zero, 1);
        for (const auto& row : out.rows) {
            REQUIRE(row.status == "ok");
            REQUIRE(row.normalized_mse == Approx(1.0).margin(1e-6));
        }
    }

    SECTION("solver failures are recorded, not fatal") {
        ExperimentConfig bad = ExperimentConfig::from_text(
            "n=60\nx_prior=wishart:0.25\ny_prior=gaussian\nkappas=0\nalphas=0.5\nseeds=1\n"
            "estimators=rie_x,oracle_x\n");  // kappa = 0 is invalid for rie_x
        const RunOutput out = run_experiment(bad, 1);
        REQUIRE(out.rows.size() == 2);
        bool saw_error = false, saw_ok = false;
        for (const auto& row : out.rows) {
            saw_error |= row.estimator == "rie_x" && row.status != "ok";
            saw_ok |= row.estimator == "oracle_x" && row.status == "ok";
        }
        REQUIRE(saw_error);
        REQUIRE(saw_ok);
    }
}

TEST_CASE("overlap figure reduction") {
    ExperimentConfig cfg = ExperimentConfig::from_text(
        "n=80\nx_prior=wigner\ny_prior=gaussian\nkappas=1\nalphas=0.5\n"
        "seeds=1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20,21,22,23,24,25,26,27,28,29,30\n"
        "estimators=oracle_x\n");

    const OverlapFigure fig = emit_overlap_figure(cfg, {0, 40}, 2);

    SECTION("csv layout") {
        REQUIRE(fig.csv.rfind("# rie-overlap v1", 0) == 0);
        REQUIRE(fig.csv.find("mode,gamma_bar,lambda,theory,mc_mean,mc_stderr") != std::string::npos);
    }

    SECTION("distinct modes peak at distinct eigenvalues") {
        const auto argmax = [&](const std::vector<double>& v) {
            return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
        };
        REQUIRE(fig.gamma_bar[0] != fig.gamma_bar[1]);
        REQUIRE(argmax(fig.theory[0]) != argmax(fig.theory[1]));
    }

    SECTION("deterministic under worker count") {
        const OverlapFigure again = emit_overlap_figure(cfg, {0, 40}, 1);
        REQUIRE(again.csv == fig.csv);
    }
}
