#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rie/experiment.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_modes(const std::string& text) {
    std::vector<int> out;
    for (const auto& part : rie::detail::split(text, ',')) out.push_back(std::stoi(part));
    return out;
}

void probe_spectrum(const std::string& path, const std::string& out_dir, double eta, int n_rows) {
    const std::vector<double> values = rie::load_spectrum_file(path);
    const int k = static_cast<int>(values.size());
    const int n = n_rows > 0 ? n_rows : k;
    Eigen::VectorXd g(k);
    for (int i = 0; i < k; ++i) g(i) = values[i];
    rie::SpectralEvaluator ev(rie::SingularSpectrum(g, n, std::max(n, k)), eta);

    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "spectrum_probe.csv");
    out << "# rie-spectrum-probe v1\n# eta " << ev.eta() << "\ngamma,density,hilbert,edge\n";
    for (int i = 0; i < k; ++i) {
        const auto dh = ev.density_and_hilbert(ev.spectrum().gammas(i));
        out << rie::detail::format_double(ev.spectrum().gammas(i)) << ','
            << rie::detail::format_double(dh.density) << ',' << rie::detail::format_double(dh.hilbert)
            << ',' << (dh.edge ? 1 : 0) << "\n";
    }
    std::printf("wrote %s\n", (fs::path(out_dir) / "spectrum_probe.csv").c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rotation invariant estimators for extensive-rank matrix factorization"};

    std::string config_path, figure, out_dir, overlap_modes, spectrum_path, dump_path;
    int workers = 2;
    uint64_t seed_offset = 0;
    double eta = 0.0;
    int spectrum_rows = 0;

    app.add_option("--config", config_path, "experiment config file (key=value lines)");
    app.add_option("--figure", figure,
                   "named preset; one of: " + [] {
                       std::string s;
                       for (const auto& n : rie::ExperimentConfig::preset_names()) s += n + " ";
                       return s;
                   }());
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed-offset", seed_offset, "offset added to every configured seed");
    app.add_option("--overlap-modes", overlap_modes,
                   "comma-separated singular-vector indices; runs the overlap reduction");
    app.add_option("--probe-spectrum", spectrum_path,
                   "one-column singular value file; writes density/Hilbert estimates");
    app.add_option("--eta", eta, "imaginary offset override");
    app.add_option("--dump-instance", dump_path,
                   "synthesize the first grid cell and write (X,Y,W,S) to this file");
    app.add_option("--spectrum-rows", spectrum_rows, "row count N for --probe-spectrum");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!spectrum_path.empty()) {
            probe_spectrum(spectrum_path, out_dir, eta, spectrum_rows);
            return 0;
        }
        if (config_path.empty() == figure.empty()) {
            std::cerr << "need exactly one of --config or --figure\n";
            return 2;
        }
        rie::ExperimentConfig cfg = config_path.empty()
                                        ? rie::ExperimentConfig::preset(figure)
                                        : rie::ExperimentConfig::from_file(config_path);
        if (eta > 0.0) cfg.eta_override = eta;

        if (!dump_path.empty()) {
            rie::EnsembleSpec spec;
            spec.x_prior = cfg.x_prior;
            spec.y_prior = cfg.y_prior;
            spec.n = cfg.n;
            spec.m = std::max(1, static_cast<int>(std::lround(cfg.n / cfg.alphas.front())));
            spec.kappa = cfg.kappas.front();
            spec.seed = rie::instance_seed(cfg.seeds.front() + seed_offset, 0, 0);
            rie::save_instance(rie::synthesize(spec), dump_path);
            std::printf("wrote %s\n", dump_path.c_str());
            return 0;
        }

        if (!overlap_modes.empty()) {
            const auto fig = rie::emit_overlap_figure(cfg, parse_modes(overlap_modes), workers, seed_offset);
            fs::create_directories(out_dir);
            std::ofstream out(fs::path(out_dir) / "overlap.csv", std::ios::binary);
            out << fig.csv;
            std::printf("wrote %s\n", (fs::path(out_dir) / "overlap.csv").c_str());
            return 0;
        }

        const auto t0 = std::chrono::steady_clock::now();
        const rie::RunOutput out = rie::run_experiment(cfg, workers, seed_offset);
        rie::write_run_output(out, out_dir);
        const auto t1 = std::chrono::steady_clock::now();
        int failures = 0;
        for (const auto& row : out.rows) failures += row.status != "ok";
        std::printf("%zu rows (%d failed) in %.1f s -> %s/{results,aggregate,timings}.csv\n",
                    out.rows.size(), failures, std::chrono::duration<double>(t1 - t0).count(),
                    out_dir.c_str());
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
