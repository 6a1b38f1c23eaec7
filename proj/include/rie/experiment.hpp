#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "rie/ensembles.hpp"
#include "rie/evaluate.hpp"
#include "rie/rie_x.hpp"
#include "rie/rie_y.hpp"
#include "rie/spectrum.hpp"

namespace rie {

// ---- small worker pool ------------------------------------------------------

/// Runs fn(0..total-1) on `workers` threads. Work items must be independent;
/// callers store results by index so the output is order-independent.
inline void parallel_for(int total, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, total));
    if (workers == 1) {
        for (int i = 0; i < total; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    std::mutex error_mutex;
    std::exception_ptr first_error;
    threads.reserve(workers);
    for (int t = 0; t < workers; ++t)
        threads.emplace_back([&] {
            for (int i = next.fetch_add(1); i < total; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- configuration ----------------------------------------------------------

struct ExperimentConfig {
    int n = 1000;
    XPrior x_prior = WignerSymPrior{};
    YPrior y_prior = GaussianIIDPrior{};
    std::vector<double> kappas{1.0};
    std::vector<double> alphas{0.5};
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<std::string> estimators{"rie_x", "oracle_x"};
    double eta_override = 0.0;
    double eta_spacing_factor = 0.0;  // >0: eta = factor * mean level spacing

    void validate() const;
    std::string canonical_text() const;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_text(const std::string& text);
    static ExperimentConfig preset(const std::string& name);
    static std::vector<std::string> preset_names();
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline XPrior parse_x_prior(const std::string& text) {
    const auto sep = text.find(':');
    const std::string name = text.substr(0, sep);
    const std::string arg = sep == std::string::npos ? "" : text.substr(sep + 1);
    if (name == "wigner") return WignerSymPrior{};
    if (name == "shifted_wigner") return ShiftedWignerPrior{std::stod(arg)};
    if (name == "wishart") return WishartPrior{std::stod(arg)};
    if (name == "sqrt_wishart") return SqrtWishartPrior{std::stod(arg)};
    if (name == "bernoulli_haar") return BernoulliSpectralHaarPrior{std::stod(arg)};
    throw std::invalid_argument("unknown x_prior: " + text);
}

inline std::string x_prior_text(const XPrior& p) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            std::ostringstream ss;
            if constexpr (std::is_same_v<T, WignerSymPrior>) ss << "wigner";
            else if constexpr (std::is_same_v<T, ShiftedWignerPrior>) ss << "shifted_wigner:" << v.c;
            else if constexpr (std::is_same_v<T, WishartPrior>) ss << "wishart:" << v.aspect;
            else if constexpr (std::is_same_v<T, SqrtWishartPrior>) ss << "sqrt_wishart:" << v.aspect;
            else ss << "bernoulli_haar:" << v.p;
            return ss.str();
        },
        p);
}

inline YPrior parse_y_prior(const std::string& text) {
    const auto sep = text.find(':');
    const std::string name = text.substr(0, sep);
    const std::string arg = sep == std::string::npos ? "" : text.substr(sep + 1);
    if (name == "gaussian") return GaussianIIDPrior{};
    if (name == "haar_uniform") {
        const auto parts = split(arg, ',');
        if (parts.size() != 2) throw std::invalid_argument("haar_uniform needs a,b");
        return HaarWithSingularsPrior{Measure::uniform_singular(std::stod(parts[0]), std::stod(parts[1]))};
    }
    if (name == "bernoulli_rademacher") return BernoulliRademacherPrior{std::stod(arg)};
    throw std::invalid_argument("unknown y_prior: " + text);
}

inline std::string y_prior_text(const YPrior& p) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            std::ostringstream ss;
            if constexpr (std::is_same_v<T, GaussianIIDPrior>) ss << "gaussian";
            else if constexpr (std::is_same_v<T, HaarWithSingularsPrior>) {
                auto [a, b] = v.law.support();
                ss << "haar_uniform:" << a << "," << b;
            } else ss << "bernoulli_rademacher:" << v.p;
            return ss.str();
        },
        p);
}

inline const std::vector<std::string>& known_estimators() {
    static const std::vector<std::string> names = {
        "rie_x",    "rie_x2",   "sqrt_x2",   "rie_y",      "denoise_xy",
        "oracle_x", "oracle_y", "oracle_xy", "product_xy", "threshold_y"};
    return names;
}

inline bool estimator_known(const std::string& name) {
    const std::string head = name.substr(0, name.find(':'));
    for (const auto& k : known_estimators())
        if (k == head) return true;
    return false;
}

} // namespace detail

inline void ExperimentConfig::validate() const {
    if (n < 4) throw std::invalid_argument("config: n too small");
    if (kappas.empty() || alphas.empty() || seeds.empty() || estimators.empty())
        throw std::invalid_argument("config: empty sweep list");
    for (const auto& e : estimators)
        if (!detail::estimator_known(e)) throw std::invalid_argument("config: unknown estimator " + e);
    for (double a : alphas)
        if (!(a > 0.0)) throw std::invalid_argument("config: alpha must be positive");
}

inline std::string ExperimentConfig::canonical_text() const {
    std::ostringstream ss;
    ss << "n=" << n << "\n";
    ss << "x_prior=" << detail::x_prior_text(x_prior) << "\n";
    ss << "y_prior=" << detail::y_prior_text(y_prior) << "\n";
    auto join = [&ss](const char* key, const auto& values) {
        ss << key << "=";
        for (size_t i = 0; i < values.size(); ++i) ss << (i ? "," : "") << values[i];
        ss << "\n";
    };
    join("kappas", kappas);
    join("alphas", alphas);
    join("seeds", seeds);
    ss << "estimators=";
    for (size_t i = 0; i < estimators.size(); ++i) ss << (i ? "," : "") << estimators[i];
    ss << "\n";
    if (eta_override > 0.0) ss << "eta=" << eta_override << "\n";
    if (eta_spacing_factor > 0.0) ss << "eta_spacing_factor=" << eta_spacing_factor << "\n";
    return ss.str();
}

inline ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    ExperimentConfig cfg;
    cfg.kappas.clear();
    cfg.alphas.clear();
    cfg.seeds.clear();
    cfg.estimators.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value: " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key == "n") cfg.n = std::stoi(value);
        else if (key == "x_prior") cfg.x_prior = detail::parse_x_prior(value);
        else if (key == "y_prior") cfg.y_prior = detail::parse_y_prior(value);
        else if (key == "kappas")
            for (const auto& v : detail::split(value, ',')) cfg.kappas.push_back(std::stod(v));
        else if (key == "alphas")
            for (const auto& v : detail::split(value, ',')) cfg.alphas.push_back(std::stod(v));
        else if (key == "seeds")
            for (const auto& v : detail::split(value, ',')) cfg.seeds.push_back(std::stoull(v));
        else if (key == "estimators")
            for (const auto& v : detail::split(value, ',')) cfg.estimators.push_back(detail::trim(v));
        else if (key == "eta") cfg.eta_override = std::stod(value);
        else if (key == "eta_spacing_factor") cfg.eta_spacing_factor = std::stod(value);
        else throw std::invalid_argument("config: unknown key " + key);
    }
    if (cfg.kappas.empty()) cfg.kappas = {1.0};
    if (cfg.alphas.empty()) cfg.alphas = {0.5};
    if (cfg.seeds.empty()) cfg.seeds = {1, 2, 3, 4, 5};
    cfg.validate();
    return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

inline std::vector<std::string> ExperimentConfig::preset_names() {
    return {"x-wishart", "y-uniform", "mf-c1", "x2-wishart", "x-wishart-alpha2",
            "y-gaussian-alpha2", "x-overlap-wigner", "sparse-y"};
}

/// Desk-scale presets mirroring the benchmark experiment grids.
inline ExperimentConfig ExperimentConfig::preset(const std::string& name) {
    auto seeds_upto = [](uint64_t k) {
        std::vector<uint64_t> s(k);
        for (uint64_t i = 0; i < k; ++i) s[i] = i + 1;
        return s;
    };
    ExperimentConfig cfg;
    cfg.n = 1000;
    cfg.alphas = {0.5};
    cfg.seeds = seeds_upto(5);
    cfg.eta_spacing_factor = 16.0;
    if (name == "x-wishart") {
        cfg.x_prior = WishartPrior{0.25};
        cfg.kappas = {0.3, 1.0, 5.0};
        cfg.estimators = {"rie_x", "sqrt_x2", "oracle_x"};
    } else if (name == "y-uniform") {
        cfg.x_prior = ShiftedWignerPrior{3.0};
        cfg.y_prior = HaarWithSingularsPrior{Measure::uniform_singular(1.0, 3.0)};
        cfg.kappas = {0.3, 1.0, 5.0};
        cfg.estimators = {"rie_y", "oracle_y"};
    } else if (name == "mf-c1") {
        cfg.x_prior = ShiftedWignerPrior{1.0};
        cfg.kappas = {1.0};
        cfg.seeds = seeds_upto(10);
        cfg.estimators = {"rie_x", "rie_y", "denoise_xy", "product_xy", "oracle_xy"};
    } else if (name == "x2-wishart") {
        cfg.x_prior = WishartPrior{0.25};
        cfg.kappas = {0.3, 1.0, 5.0};
        cfg.estimators = {"rie_x2"};
    } else if (name == "x-wishart-alpha2") {
        cfg.x_prior = WishartPrior{0.25};
        cfg.alphas = {2.0};
        cfg.kappas = {1.0};
        cfg.estimators = {"rie_x", "oracle_x"};
        cfg.eta_spacing_factor = 4.0;  // the lower bulk edge is steep here
    } else if (name == "y-gaussian-alpha2") {
        cfg.x_prior = ShiftedWignerPrior{3.0};
        cfg.alphas = {2.0};
        cfg.kappas = {1.0};
        cfg.estimators = {"rie_y", "oracle_y"};
    } else if (name == "x-overlap-wigner") {
        cfg.x_prior = WignerSymPrior{};
        cfg.kappas = {1.0};
        cfg.seeds = seeds_upto(200);
        cfg.estimators = {"oracle_x"};
        cfg.eta_spacing_factor = 0.0;
    } else if (name == "sparse-y") {
        cfg.x_prior = ShiftedWignerPrior{3.0};
        cfg.y_prior = BernoulliRademacherPrior{0.5};
        cfg.kappas = {0.6, 1.0, 2.0, 5.0};
        cfg.estimators = {"rie_y", "oracle_y", "threshold_y:0.5"};
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return cfg;
}

// ---- run --------------------------------------------------------------------

/// Cell seeding: distinct (kappa, alpha) cells never share an instance seed.
inline uint64_t instance_seed(uint64_t seed, size_t kappa_idx, size_t alpha_idx) {
    return detail::mix64(detail::mix64(seed) ^
                         (0x100000001B3ull * (kappa_idx + 1) + 0x9E3779B9ull * (alpha_idx + 1)));
}

struct ResultRow {
    std::string estimator;
    double kappa = 0.0;
    double alpha = 0.0;
    uint64_t seed = 0;
    double normalized_mse = 0.0;
    double raw_mse = 0.0;
    int edge_modes = 0;
    double max_residual = 0.0;
    std::string status = "ok";
    double wall_ms = 0.0;  // written to timings.csv only
};

namespace detail {

struct InstanceComputation {
    ObservationInstance inst;
    ObservationSVD svd;
    SpectralEvaluator ev;
    Measure rho_x;
    Measure mu_y;
    Measure mu_w;
    double kappa;
    double alpha;

    // Lazily shared across estimators on the same instance.
    std::optional<Eigen::VectorXd> oracle_x_vals, oracle_y_vals, oracle_xy_vals, oracle_x2_vals;
    std::optional<double> x_norm2, y_norm2, xy_norm2, x2_norm2;
    std::optional<XEstimate> rie_x_est;
    std::optional<XEstimate> rie_x2_est;
    std::optional<YEstimate> rie_y_est;
    std::optional<Eigen::MatrixXd> xy, x2;

    InstanceComputation(const ExperimentConfig& cfg, double kap, double alp, uint64_t seed)
        : inst(make_instance(cfg, kap, alp, seed)),
          svd(observation_svd(inst.s)),
          ev(svd.spectrum(), cfg.eta_override > 0.0
                                 ? cfg.eta_override
                                 : SpectralEvaluator::spacing_bandwidth(svd.spectrum(),
                                                                        cfg.eta_spacing_factor)),
          rho_x(x_prior_measure(cfg.x_prior)),
          mu_y(y_prior_measure(cfg.y_prior, alp)),
          mu_w(w_prior_measure(alp)),
          kappa(kap),
          alpha(alp) {}

    static ObservationInstance make_instance(const ExperimentConfig& cfg, double kap, double alp,
                                             uint64_t seed) {
        EnsembleSpec spec;
        spec.x_prior = cfg.x_prior;
        spec.y_prior = cfg.y_prior;
        spec.n = cfg.n;
        spec.m = std::max(1, static_cast<int>(std::lround(cfg.n / alp)));
        spec.kappa = kap;
        spec.seed = seed;
        return synthesize(spec);
    }

    const Eigen::MatrixXd& product_xy_truth() {
        if (!xy) xy = inst.x * inst.y;
        return *xy;
    }
    const Eigen::MatrixXd& x_squared_truth() {
        if (!x2) x2 = inst.x * inst.x;
        return *x2;
    }
    const Eigen::VectorXd& ox() {
        if (!oracle_x_vals) oracle_x_vals = oracle_x(svd, inst.x).xi;
        return *oracle_x_vals;
    }
    const Eigen::VectorXd& oy() {
        if (!oracle_y_vals) oracle_y_vals = oracle_y(svd, inst.y).xi;
        return *oracle_y_vals;
    }
    const Eigen::VectorXd& oxy() {
        if (!oracle_xy_vals) oracle_xy_vals = oracle_y(svd, product_xy_truth()).xi;
        return *oracle_xy_vals;
    }
    const Eigen::VectorXd& ox2() {
        if (!oracle_x2_vals) oracle_x2_vals = oracle_x(svd, x_squared_truth()).xi;
        return *oracle_x2_vals;
    }
    double xn2() { return x_norm2 ? *x_norm2 : *(x_norm2 = inst.x.squaredNorm()); }
    double yn2() { return y_norm2 ? *y_norm2 : *(y_norm2 = inst.y.squaredNorm()); }
    double xyn2() { return xy_norm2 ? *xy_norm2 : *(xy_norm2 = product_xy_truth().squaredNorm()); }
    double x2n2() { return x2_norm2 ? *x2_norm2 : *(x2_norm2 = x_squared_truth().squaredNorm()); }

    const XEstimate& rx() {
        if (!rie_x_est) rie_x_est = estimate_x(ev, rho_x, mu_y, mu_w, kappa, alpha);
        return *rie_x_est;
    }
    const XEstimate& rx2() {
        if (!rie_x2_est) rie_x2_est = estimate_x2(ev, mu_y, mu_w, kappa, alpha);
        return *rie_x2_est;
    }
    const YEstimate& ry() {
        if (!rie_y_est) rie_y_est = estimate_y(ev, rho_x, mu_w, kappa, alpha);
        return *rie_y_est;
    }
};

inline int count_edges(const std::vector<bool>& flags) {
    int c = 0;
    for (bool f : flags) c += f;
    return c;
}

/// Evaluates one named estimator on a prepared instance.
inline ResultRow evaluate_estimator(InstanceComputation& c, const std::string& name) {
    ResultRow row;
    row.estimator = name;
    const auto fill = [&row](double raw, double norm2, int edges, double resid) {
        row.raw_mse = std::max(0.0, raw);
        row.normalized_mse = row.raw_mse / norm2;
        row.edge_modes = edges;
        row.max_residual = resid;
    };
    const std::string head = name.substr(0, name.find(':'));
    if (head == "oracle_x") {
        fill(mse_from_modes(c.ox(), c.ox(), c.xn2()), c.xn2(), 0, 0.0);
    } else if (head == "oracle_y") {
        fill(mse_from_modes(c.oy(), c.oy(), c.yn2()), c.yn2(), 0, 0.0);
    } else if (head == "oracle_xy") {
        fill(mse_from_modes(c.oxy(), c.oxy(), c.xyn2()), c.xyn2(), 0, 0.0);
    } else if (head == "rie_x") {
        const auto& est = c.rx();
        fill(mse_from_modes(est.xi, c.ox(), c.xn2()), c.xn2(), count_edges(est.edge_flags),
             est.max_residual);
    } else if (head == "rie_x2") {
        const auto& est = c.rx2();
        fill(mse_from_modes(*est.xi2, c.ox2(), c.x2n2()), c.x2n2(), count_edges(est.edge_flags),
             est.max_residual);
    } else if (head == "sqrt_x2") {
        const XEstimate est = sqrt_psd_estimate(c.rx2());
        fill(mse_from_modes(est.xi, c.ox(), c.xn2()), c.xn2(), count_edges(est.edge_flags),
             est.max_residual);
    } else if (head == "rie_y") {
        const auto& est = c.ry();
        fill(mse_from_modes(est.xi, c.oy(), c.yn2()), c.yn2(), count_edges(est.edge_flags),
             est.max_residual);
    } else if (head == "denoise_xy") {
        const YEstimate est = denoise_xy(c.ev, c.mu_w, c.kappa, c.alpha);
        fill(mse_from_modes(est.xi, c.oxy(), c.xyn2()), c.xyn2(), count_edges(est.edge_flags),
             est.max_residual);
    } else if (head == "product_xy") {
        const int k = c.svd.modes();
        const Eigen::VectorXd prod =
            c.rx().xi.head(k).cwiseProduct(c.ry().xi);
        fill(mse_from_modes(prod, c.oxy(), c.xyn2()), c.xyn2(),
             count_edges(c.rx().edge_flags) + count_edges(c.ry().edge_flags),
             std::max(c.rx().max_residual, c.ry().max_residual));
    } else if (head == "threshold_y") {
        const double h = std::stod(name.substr(name.find(':') + 1));
        const Eigen::MatrixXd assembled = assemble_y(c.svd.u, c.svd.v, c.ry().xi);
        const Eigen::MatrixXd cut = threshold_sparse(assembled, h, c.inst.spec.n);
        const MseReport rep = normalized_mse(cut, c.inst.y);
        fill(rep.raw_mse, c.yn2(), count_edges(c.ry().edge_flags), c.ry().max_residual);
    } else {
        throw std::invalid_argument("unknown estimator: " + name);
    }
    return row;
}

inline std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(12);
    ss << v;
    return ss.str();
}

} // namespace detail

struct RunOutput {
    std::vector<ResultRow> rows;  // deterministic order
    std::string results_csv;
    std::string aggregate_csv;
    std::string timings_csv;
};

/// Executes the full (kappa, alpha, seed) grid. Estimator failures are
/// recorded per row and never abort the sweep. Row order (and therefore CSV
/// content) is independent of the worker count.
inline RunOutput run_experiment(const ExperimentConfig& cfg, int workers = 1,
                                uint64_t seed_offset = 0) {
    cfg.validate();
    struct Item {
        size_t ik, ia, is;
    };
    std::vector<Item> items;
    for (size_t ik = 0; ik < cfg.kappas.size(); ++ik)
        for (size_t ia = 0; ia < cfg.alphas.size(); ++ia)
            for (size_t is = 0; is < cfg.seeds.size(); ++is) items.push_back({ik, ia, is});

    std::vector<std::vector<ResultRow>> per_item(items.size());
    parallel_for(static_cast<int>(items.size()), workers, [&](int idx) {
        const Item& it = items[idx];
        const double kappa = cfg.kappas[it.ik];
        const double alpha = cfg.alphas[it.ia];
        const uint64_t seed = instance_seed(cfg.seeds[it.is] + seed_offset, it.ik, it.ia);
        std::vector<ResultRow>& rows = per_item[idx];
        try {
            detail::InstanceComputation comp(cfg, kappa, alpha, seed);
            for (const auto& est : cfg.estimators) {
                const auto t0 = std::chrono::steady_clock::now();
                ResultRow row;
                try {
                    row = detail::evaluate_estimator(comp, est);
                } catch (const std::exception& e) {
                    row.estimator = est;
                    row.status = std::string("error: ") + e.what();
                }
                const auto t1 = std::chrono::steady_clock::now();
                row.kappa = kappa;
                row.alpha = alpha;
                row.seed = cfg.seeds[it.is];
                row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                rows.push_back(std::move(row));
            }
        } catch (const std::exception& e) {
            for (const auto& est : cfg.estimators) {
                ResultRow row;
                row.estimator = est;
                row.kappa = kappa;
                row.alpha = alpha;
                row.seed = cfg.seeds[it.is];
                row.status = std::string("error: ") + e.what();
                rows.push_back(std::move(row));
            }
        }
    });

    RunOutput out;
    // Deterministic order: estimator as listed, then kappa, alpha, seed index.
    for (size_t e = 0; e < cfg.estimators.size(); ++e)
        for (size_t i = 0; i < items.size(); ++i) out.rows.push_back(per_item[i][e]);
    std::stable_sort(out.rows.begin(), out.rows.end(), [&](const ResultRow& a, const ResultRow& b) {
        auto pos = [&](const std::string& n) {
            for (size_t i = 0; i < cfg.estimators.size(); ++i)
                if (cfg.estimators[i] == n) return i;
            return cfg.estimators.size();
        };
        return std::tie(a.kappa, a.alpha, a.seed) != std::tie(b.kappa, b.alpha, b.seed)
                   ? std::tie(a.kappa, a.alpha, a.seed) < std::tie(b.kappa, b.alpha, b.seed)
                   : pos(a.estimator) < pos(b.estimator);
    });

    std::ostringstream res, agg, tim;
    const std::string meta = [&] {
        std::ostringstream m;
        m << "# rie-results v1\n";
        std::istringstream cfg_lines(cfg.canonical_text());
        std::string line;
        while (std::getline(cfg_lines, line)) m << "# config " << line << "\n";
        return m.str();
    }();
    res << meta << "estimator,kappa,alpha,seed,normalized_mse,raw_mse,edge_modes,max_residual,status\n";
    tim << "# rie-timings v1 (non-deterministic; excluded from reproducibility checks)\n"
        << "estimator,kappa,alpha,seed,wall_ms\n";
    for (const auto& r : out.rows) {
        res << r.estimator << ',' << detail::format_double(r.kappa) << ','
            << detail::format_double(r.alpha) << ',' << r.seed << ','
            << detail::format_double(r.normalized_mse) << ',' << detail::format_double(r.raw_mse)
            << ',' << r.edge_modes << ',' << detail::format_double(r.max_residual) << ',' << r.status
            << "\n";
        tim << r.estimator << ',' << detail::format_double(r.kappa) << ','
            << detail::format_double(r.alpha) << ',' << r.seed << ','
            << detail::format_double(r.wall_ms) << "\n";
    }

    agg << meta << "estimator,kappa,alpha,n_seeds,mean_normalized_mse,stderr\n";
    std::map<std::tuple<size_t, double, double>, std::vector<double>> groups;
    auto epos = [&](const std::string& n) {
        for (size_t i = 0; i < cfg.estimators.size(); ++i)
            if (cfg.estimators[i] == n) return i;
        return cfg.estimators.size();
    };
    for (const auto& r : out.rows)
        if (r.status == "ok") groups[{epos(r.estimator), r.kappa, r.alpha}].push_back(r.normalized_mse);
    for (const auto& [key, values] : groups) {
        const auto& [e, kappa, alpha] = key;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= values.size();
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double stderr_mean =
            values.size() > 1 ? std::sqrt(var / (values.size() - 1) / values.size()) : 0.0;
        agg << cfg.estimators[e] << ',' << detail::format_double(kappa) << ','
            << detail::format_double(alpha) << ',' << values.size() << ','
            << detail::format_double(mean) << ',' << detail::format_double(stderr_mean) << "\n";
    }

    out.results_csv = res.str();
    out.aggregate_csv = agg.str();
    out.timings_csv = tim.str();
    return out;
}

inline void write_run_output(const RunOutput& out, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto dump = [&](const std::string& name, const std::string& content) {
        std::ofstream f(fs::path(dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + name + " under " + dir);
        f << content;
    };
    dump("results.csv", out.results_csv);
    dump("aggregate.csv", out.aggregate_csv);
    dump("timings.csv", out.timings_csv);
}

// ---- overlap figure ---------------------------------------------------------

struct OverlapFigure {
    // Rows: (mode, lambda_j, theory, mc_mean, mc_stderr), modes as requested.
    std::string csv;
    // theory[m][j], mc_mean[m][j] for tests.
    std::vector<std::vector<double>> theory, mc_mean, mc_stderr;
    std::vector<double> lambdas;
    std::vector<double> gamma_bar;
    // Pooled singular values across all seeds, and the offset used: the
    // low-noise kernel evaluator behind the theory columns.
    Eigen::VectorXd pooled_gammas;
    int pool_n = 0, pool_m = 0;
    double eta = 0.0;
};

/// Monte-Carlo overlap curves with X held fixed across seeds, against the
/// theoretical prediction evaluated at the seed-averaged singular values.
inline OverlapFigure emit_overlap_figure(const ExperimentConfig& cfg,
                                         const std::vector<int>& mode_indices, int workers = 1,
                                         uint64_t seed_offset = 0) {
    cfg.validate();
    const double kappa = cfg.kappas.front();
    const double alpha = cfg.alphas.front();
    const int n = cfg.n;
    const int m = std::max(1, static_cast<int>(std::lround(n / alpha)));
    const int n_seeds = static_cast<int>(cfg.seeds.size());
    const int n_modes = static_cast<int>(mode_indices.size());

    const Eigen::MatrixXd x = sample_x(cfg.x_prior, n, instance_seed(cfg.seeds.front() + seed_offset, 0, 0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x);
    const Eigen::MatrixXd xvecs = eig.eigenvectors();
    const Eigen::VectorXd lambdas = eig.eigenvalues();

    const int k = std::min(n, m);
    for (int idx : mode_indices)
        if (idx < 0 || idx >= k) throw std::invalid_argument("emit_overlap_figure: bad mode index");

    std::vector<Eigen::MatrixXd> overlaps(n_seeds);  // n_modes x n
    std::vector<Eigen::VectorXd> gammas(n_seeds);
    parallel_for(n_seeds, workers, [&](int si) {
        const uint64_t seed = instance_seed(cfg.seeds[si] + seed_offset, 1, 0);
        const Eigen::MatrixXd y = sample_y(cfg.y_prior, n, m, seed);
        const Eigen::MatrixXd w = sample_w(n, m, seed);
        const Eigen::MatrixXd s = std::sqrt(kappa) * x * y + w;
        const ObservationSVD svd = observation_svd(s);
        Eigen::MatrixXd ov(n_modes, n);
        for (int mi = 0; mi < n_modes; ++mi) {
            const Eigen::VectorXd dots = xvecs.transpose() * svd.u.col(mode_indices[mi]);
            ov.row(mi) = static_cast<double>(n) * dots.array().square().transpose();
        }
        overlaps[si] = std::move(ov);
        gammas[si] = svd.gammas;
    });

    // Pooled kernel evaluator over all seeds' singular values.
    Eigen::VectorXd pooled(static_cast<Eigen::Index>(n_seeds) * k);
    for (int si = 0; si < n_seeds; ++si) pooled.segment(static_cast<Eigen::Index>(si) * k, k) = gammas[si];
    SingularSpectrum pooled_spectrum(pooled, n * n_seeds, m * n_seeds);
    const double eta = cfg.eta_override > 0.0 ? cfg.eta_override : std::sqrt(1.0 / (2.0 * n));
    SpectralEvaluator ev(pooled_spectrum, eta);

    const Measure mu_y = y_prior_measure(cfg.y_prior, alpha);
    const Measure mu_w = w_prior_measure(alpha);

    OverlapFigure fig;
    fig.lambdas.assign(lambdas.data(), lambdas.data() + n);
    fig.pooled_gammas = pooled;
    fig.pool_n = n * n_seeds;
    fig.pool_m = m * n_seeds;
    fig.eta = eta;
    fig.theory.resize(n_modes);
    fig.mc_mean.resize(n_modes);
    fig.mc_stderr.resize(n_modes);
    std::ostringstream csv;
    csv << "# rie-overlap v1\nmode,gamma_bar,lambda,theory,mc_mean,mc_stderr\n";
    for (int mi = 0; mi < n_modes; ++mi) {
        double gamma_bar = 0.0;
        for (int si = 0; si < n_seeds; ++si) gamma_bar += gammas[si](mode_indices[mi]);
        gamma_bar /= n_seeds;
        fig.gamma_bar.push_back(gamma_bar);
        const cplx z = ev.z_at(gamma_bar);
        const cplx gs = ev.stieltjes(z);
        const XParams params = solve_x_params(gs, z, mu_y, mu_w, alpha);
        const double density = gs.imag() / kPi;
        fig.theory[mi].resize(n);
        fig.mc_mean[mi].resize(n);
        fig.mc_stderr[mi].resize(n);
        for (int j = 0; j < n; ++j) {
            const double lam = std::sqrt(kappa) * lambdas(j);
            fig.theory[mi][j] = overlap_x_theory(params, lam, density);
            double mean = 0.0;
            for (int si = 0; si < n_seeds; ++si) mean += overlaps[si](mi, j);
            mean /= n_seeds;
            double var = 0.0;
            for (int si = 0; si < n_seeds; ++si) {
                const double d = overlaps[si](mi, j) - mean;
                var += d * d;
            }
            const double se = n_seeds > 1 ? std::sqrt(var / (n_seeds - 1) / n_seeds) : 0.0;
            fig.mc_mean[mi][j] = mean;
            fig.mc_stderr[mi][j] = se;
            csv << mode_indices[mi] << ',' << detail::format_double(gamma_bar) << ','
                << detail::format_double(lambdas(j)) << ',' << detail::format_double(fig.theory[mi][j])
                << ',' << detail::format_double(mean) << ',' << detail::format_double(se) << "\n";
        }
    }
    fig.csv = csv.str();
    return fig;
}

} // namespace rie
