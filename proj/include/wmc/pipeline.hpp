#pragma once

// Experiment orchestration: load a JSON run configuration, simulate the
// prior paths once, build and filter the constraint securities, calibrate
// with and without the martingale columns, price the cliquet under all
// three measures and emit the reports.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmc/calibrator.hpp"
#include "wmc/constraints.hpp"
#include "wmc/market.hpp"
#include "wmc/paths.hpp"
#include "wmc/pricer.hpp"

namespace wmc {

struct RunConfig {
    // market
    double spot = 0.0;
    RateCurve rates;
    std::string value_date;        // ISO date; may be empty when reset_times given
    std::string day_count = "ACT/365";
    std::filesystem::path surface_csv;

    // simulation
    SimConfig simulation;          // maturities filled from the product resets

    // product
    double cap = 0.0;
    std::vector<std::string> reset_dates;  // ISO dates, converted with ACT/365
    std::vector<double> reset_times;       // year fractions; wins if non-empty

    // constraints
    double window_range_lo = 0.0;
    double window_range_hi = 0.0;
    double min_active_fraction = 0.0;
    double ls_weight = 0.0;

    SolverConfig solver;
    std::filesystem::path output_dir;

    /// Reset dates as year fractions from the value date.
    std::vector<double> resolve_reset_times() const {
        if (!reset_times.empty())
            return reset_times;
        const auto base = parse_iso_date(value_date);
        std::vector<double> ts;
        for (const auto& d : reset_dates)
            ts.push_back(act365(base, parse_iso_date(d)));
        return ts;
    }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);

    RunConfig cfg;
    const auto& m = j.at("market");
    cfg.spot = m.at("spot").get<double>();
    cfg.rates.risk_free_rate = m.at("risk_free_rate").get<double>();
    cfg.rates.dividend_rate = m.at("dividend_rate").get<double>();
    cfg.value_date = m.value("value_date", std::string{});
    cfg.day_count = m.value("day_count", std::string{"ACT/365"});

    cfg.surface_csv = j.at("surface_csv").get<std::string>();
    if (cfg.surface_csv.is_relative())
        cfg.surface_csv = path.parent_path() / cfg.surface_csv;

    const auto& s = j.at("simulation");
    cfg.simulation.n_paths = s.at("n_paths").get<int>();
    cfg.simulation.seed = s.at("seed").get<std::uint64_t>();
    cfg.simulation.antithetic = s.value("antithetic", false);

    const auto& p = j.at("product");
    cfg.cap = p.at("cap").get<double>();
    if (p.contains("reset_times"))
        cfg.reset_times = p.at("reset_times").get<std::vector<double>>();
    if (p.contains("reset_dates"))
        cfg.reset_dates = p.at("reset_dates").get<std::vector<std::string>>();

    const auto& c = j.at("constraints");
    const auto range = c.at("window_range").get<std::vector<double>>();
    if (range.size() == 2) {
        cfg.window_range_lo = range[0];
        cfg.window_range_hi = range[1];
    }
    cfg.min_active_fraction = c.at("min_active_fraction").get<double>();
    cfg.ls_weight = c.at("ls_weight").get<double>();

    if (j.contains("solver")) {
        const auto& so = j.at("solver");
        const std::string mode = so.value("mode", std::string{"least_squares"});
        if (mode == "exact")
            cfg.solver.mode = FitMode::exact;
        else if (mode == "least_squares")
            cfg.solver.mode = FitMode::least_squares;
        else
            throw std::invalid_argument("solver.mode must be 'exact' or 'least_squares'");
        cfg.solver.alpha0 = so.value("alpha0", cfg.solver.alpha0);
        cfg.solver.alpha_growth = so.value("alpha_growth", cfg.solver.alpha_growth);
        cfg.solver.cond_guard_ratio = so.value("cond_guard_ratio", cfg.solver.cond_guard_ratio);
        cfg.solver.step_shrink = so.value("step_shrink", cfg.solver.step_shrink);
        cfg.solver.grad_tol = so.value("grad_tol", cfg.solver.grad_tol);
        cfg.solver.max_iters = so.value("max_iters", cfg.solver.max_iters);
    }

    cfg.output_dir = j.value("output_dir", std::string{"out"});
    return cfg;
}

/// Collects every violated invariant instead of stopping at the first.
inline std::vector<std::string> validate_config(const RunConfig& cfg) {
    std::vector<std::string> issues;
    auto note = [&issues](const std::string& s) { issues.push_back(s); };

    if (!(cfg.spot > 0.0))
        note("market.spot must be positive");
    if (!std::isfinite(cfg.rates.risk_free_rate) || !std::isfinite(cfg.rates.dividend_rate))
        note("market rates must be finite");
    if (cfg.day_count != "ACT/365")
        note("market.day_count: only ACT/365 is supported");
    if (!std::filesystem::exists(cfg.surface_csv))
        note("surface_csv not found: " + cfg.surface_csv.string());
    if (cfg.simulation.n_paths < 2)
        note("simulation.n_paths must be at least 2");
    if (cfg.simulation.antithetic && cfg.simulation.n_paths % 2 != 0)
        note("simulation.n_paths must be even with antithetic sampling");
    if (!(cfg.cap > 0.0))
        note("product.cap must be positive");
    if (cfg.reset_times.empty() && cfg.reset_dates.empty())
        note("product needs reset_dates or reset_times");
    if (cfg.reset_times.empty() && !cfg.reset_dates.empty()) {
        if (cfg.value_date.empty())
            note("market.value_date required when product uses reset_dates");
        else {
            try {
                parse_iso_date(cfg.value_date);
                for (const auto& d : cfg.reset_dates)
                    parse_iso_date(d);
            } catch (const std::exception& e) {
                note(e.what());
            }
        }
    }
    try {
        const auto ts = cfg.resolve_reset_times();
        if (ts.size() < 2)
            note("product needs at least two reset dates");
        else if (!std::is_sorted(ts.begin(), ts.end(), std::less_equal<>{}))
            note("product reset dates must be strictly ascending");
        else if (ts.front() <= 0.0)
            note("product reset dates must lie after the value date");
    } catch (const std::exception&) {
        // date parse problems already reported above
    }
    if (!(cfg.window_range_lo < 1.0 && 1.0 < cfg.window_range_hi))
        note("constraints.window_range must straddle 1 (lo < 1 < hi)");
    if (cfg.min_active_fraction < 0.0 || cfg.min_active_fraction >= 1.0)
        note("constraints.min_active_fraction must be in [0, 1)");
    if (cfg.ls_weight < 0.0)
        note("constraints.ls_weight must be non-negative");
    try {
        cfg.solver.validate();
    } catch (const std::exception& e) {
        note(e.what());
    }
    if (cfg.output_dir.empty())
        note("output_dir must not be empty");
    return issues;
}

struct ModeReport {
    std::string name;
    CalibrationResult calib;
    double price = 0.0;
    std::vector<std::string> labels;
    std::vector<ConstraintKind> kinds;
    Eigen::VectorXd targets;
    Eigen::VectorXd fit_errors;
    double max_vanilla_fit_error = 0.0;
    double entropy_to_prior = 0.0;
    double paying_probability = 0.0;
};

struct CalibrationReport {
    Market market;
    PathMatrix paths;
    CliquetSpec product;
    Eigen::VectorXd cliquet;  // discounted payoff per path

    double price_prior = 0.0;
    double se_prior = 0.0;
    double paying_probability_prior = 0.0;

    ModeReport smile;
    ModeReport smile_mtgl;

    std::vector<MartingaleWindow> windows;
    std::vector<RemovalRecord> removal;
    int n_smile_columns = 0;
    int n_forward_columns = 0;
    int n_martingale_columns = 0;
    int windows_per_pair = 0;
    int n_removed = 0;
    int n_retained = 0;

    bool all_converged() const { return smile.calib.converged && smile_mtgl.calib.converged; }
    double price_uplift() const { return smile_mtgl.price - smile.price; }
};

namespace detail {

inline ModeReport run_mode(const std::string& name, const ConstraintSet& cs,
                           const SolverConfig& solver, const Eigen::VectorXd& cliquet,
                           int n_paths) {
    ModeReport mr;
    mr.name = name;
    mr.calib = calibrate(cs, solver);
    mr.price = price(cliquet, mr.calib.state.probs);
    mr.labels = cs.labels;
    mr.kinds = cs.kinds;
    mr.targets = cs.prices;
    mr.fit_errors = mr.calib.fit_errors(cs);
    mr.max_vanilla_fit_error = 0.0;
    for (int j = 0; j < cs.size(); ++j)
        if (cs.kinds[j] != ConstraintKind::martingale)
            mr.max_vanilla_fit_error =
                std::max(mr.max_vanilla_fit_error, std::abs(mr.fit_errors(j)));
    mr.entropy_to_prior =
        relative_entropy(mr.calib.state.probs, uniform_probs(n_paths));
    for (int i = 0; i < cliquet.size(); ++i)
        if (cliquet(i) > 0.0)
            mr.paying_probability += mr.calib.state.probs(i);
    return mr;
}

} // namespace detail

/// Runs the full experiment on one shared path set: (a) uniform prior
/// probabilities, (b) calibration to vanillas and forwards, (c) the same
/// plus the martingale-window securities.
inline CalibrationReport run(const RunConfig& cfg) {
    if (const auto issues = validate_config(cfg); !issues.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& s : issues)
            msg += "\n  - " + s;
        throw std::invalid_argument(msg);
    }

    CalibrationReport rep;
    rep.market = Market{{cfg.spot, cfg.resolve_reset_times()},
                        cfg.rates,
                        load_vol_surface(cfg.surface_csv)};
    rep.product = CliquetSpec{cfg.cap, rep.market.config.maturities};

    SimConfig sim = cfg.simulation;
    sim.maturities = rep.market.config.maturities;
    rep.paths = simulate(sim, rep.market);

    rep.cliquet = cliquet_payoffs(rep.paths, rep.product, rep.market.rates);
    const Eigen::VectorXd prior = uniform_probs(rep.paths.n_paths());
    rep.price_prior = price(rep.cliquet, prior);
    const double var =
        (rep.cliquet.array() - rep.price_prior).square().sum() / (rep.cliquet.size() - 1);
    rep.se_prior = std::sqrt(var / rep.cliquet.size());
    for (int i = 0; i < rep.cliquet.size(); ++i)
        if (rep.cliquet(i) > 0.0)
            rep.paying_probability_prior += prior(i);

    ConstraintSet all = vanilla_columns(rep.paths, rep.market);
    rep.n_smile_columns = all.size();
    ConstraintSet fwd = forward_columns(rep.paths, rep.market);
    rep.n_forward_columns = fwd.size();
    all.append(fwd);
    rep.windows = build_windows(rep.market, rep.market.config.maturities,
                                cfg.window_range_lo, cfg.window_range_hi);
    rep.windows_per_pair = wmc::windows_per_pair(rep.windows);
    ConstraintSet mtgl = martingale_columns(rep.paths, rep.windows, rep.market);
    rep.n_martingale_columns = mtgl.size();
    all.append(mtgl);
    all.weights = Eigen::VectorXd::Constant(all.size(), cfg.ls_weight);

    FilterResult filtered = filter_constraints(all, cfg.min_active_fraction);
    rep.removal = std::move(filtered.report);
    rep.n_removed = static_cast<int>(rep.removal.size()) - filtered.kept.size();
    rep.n_retained = filtered.kept.size();

    const ConstraintSet smile_only =
        filtered.kept.without_kind(ConstraintKind::martingale);
    rep.smile = detail::run_mode("smile", smile_only, cfg.solver, rep.cliquet,
                                 rep.paths.n_paths());
    rep.smile_mtgl = detail::run_mode("smile+mtgl", filtered.kept, cfg.solver,
                                      rep.cliquet, rep.paths.n_paths());
    return rep;
}

// --- report files -------------------------------------------------------------

namespace detail {

inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_fit_errors_csv(const CalibrationReport& rep, std::ostream& out) {
    out << "mode,label,kind,target,fitted,error\n";
    for (const ModeReport* mr : {&rep.smile, &rep.smile_mtgl})
        for (size_t j = 0; j < mr->labels.size(); ++j)
            out << mr->name << ',' << mr->labels[j] << ',' << to_string(mr->kinds[j])
                << ',' << fmt(mr->targets(j)) << ','
                << fmt(mr->targets(j) + mr->fit_errors(j)) << ','
                << fmt(mr->fit_errors(j)) << "\n";
}

inline void write_cdf_csv(const CalibrationReport& rep, double t, PathPredicate pred,
                          std::ostream& out) {
    const Eigen::VectorXd prior = uniform_probs(rep.paths.n_paths());
    const auto a = cumulative_distribution(rep.paths, t, prior, pred, rep.cliquet);
    const auto b = cumulative_distribution(rep.paths, t, rep.smile.calib.state.probs,
                                           pred, rep.cliquet);
    const auto c = cumulative_distribution(
        rep.paths, t, rep.smile_mtgl.calib.state.probs, pred, rep.cliquet);
    out << "level,cdf_prior,cdf_smile,cdf_smile_mtgl\n";
    for (size_t i = 0; i < a.size(); ++i)
        out << fmt(a[i].level) << ',' << fmt(a[i].cumulative) << ','
            << fmt(b[i].cumulative) << ',' << fmt(c[i].cumulative) << "\n";
}

inline void write_mismatch_csv(const CalibrationReport& rep, double t_from,
                               double min_active_fraction, std::ostream& out) {
    const Eigen::VectorXd prior = uniform_probs(rep.paths.n_paths());
    out << "window_lower,window_upper,mid_per_spot,retained,mm_prior,mm_smile,mm_smile_mtgl\n";
    auto cell = [](std::optional<double> v) { return v ? fmt(*v) : std::string{}; };
    for (const auto& w : rep.windows) {
        if (w.t_from != t_from)
            continue;
        int in_window = 0;
        const int k1 = rep.paths.maturity_index(w.t_from);
        for (int i = 0; i < rep.paths.n_paths(); ++i)
            if (w.contains(rep.paths.spots(i, k1)))
                ++in_window;
        const bool retained =
            in_window > 0 &&
            static_cast<double>(in_window) / rep.paths.n_paths() >= min_active_fraction;
        out << fmt(w.lower) << ',' << fmt(w.upper) << ','
            << fmt(0.5 * (w.lower + w.upper) / rep.market.config.spot) << ','
            << (retained ? 1 : 0) << ','
            << cell(martingale_mismatch(rep.paths, w, prior, rep.market)) << ','
            << cell(martingale_mismatch(rep.paths, w, rep.smile.calib.state.probs,
                                        rep.market))
            << ','
            << cell(martingale_mismatch(rep.paths, w,
                                        rep.smile_mtgl.calib.state.probs, rep.market))
            << "\n";
    }
}

inline nlohmann::ordered_json mode_json(const ModeReport& mr) {
    nlohmann::ordered_json j;
    j["converged"] = mr.calib.converged;
    j["iterations"] = mr.calib.iterations;
    j["constraints"] = mr.labels.size();
    j["price"] = mr.price;
    j["max_vanilla_fit_error"] = mr.max_vanilla_fit_error;
    j["relative_entropy"] = mr.entropy_to_prior;
    j["paying_probability"] = mr.paying_probability;
    return j;
}

} // namespace detail

/// Writes report.json, the iteration/fit/removal CSVs and the figure CSVs.
inline void write_report_files(const CalibrationReport& rep, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    auto open = [&dir](const std::string& name) {
        std::ofstream out(dir / name);
        if (!out)
            throw std::runtime_error("cannot write " + (dir / name).string());
        return out;
    };

    nlohmann::ordered_json j;
    j["prices"]["prior_atmf"] = rep.price_prior;
    j["prices"]["smile"] = rep.smile.price;
    j["prices"]["smile_mtgl"] = rep.smile_mtgl.price;
    j["prices"]["martingale_uplift"] = rep.price_uplift();
    j["prices"]["prior_standard_error"] = rep.se_prior;
    j["modes"]["smile"] = detail::mode_json(rep.smile);
    j["modes"]["smile+mtgl"] = detail::mode_json(rep.smile_mtgl);
    j["paying_probability_prior"] = rep.paying_probability_prior;
    j["constraints"]["smile_columns"] = rep.n_smile_columns;
    j["constraints"]["forward_columns"] = rep.n_forward_columns;
    j["constraints"]["martingale_columns"] = rep.n_martingale_columns;
    j["constraints"]["windows_per_pair"] = rep.windows_per_pair;
    j["constraints"]["total"] =
        rep.n_smile_columns + rep.n_forward_columns + rep.n_martingale_columns;
    j["constraints"]["removed"] = rep.n_removed;
    j["constraints"]["retained"] = rep.n_retained;
    j["simulation"]["n_paths"] = rep.paths.n_paths();
    j["simulation"]["seed"] = rep.paths.seed;
    j["converged"] = rep.all_converged();
    open("report.json") << j.dump(2) << "\n";

    { auto out = open("removal.csv"); write_removal_csv(rep.removal, out); }
    { auto out = open("fit_errors.csv"); detail::write_fit_errors_csv(rep, out); }
    { auto out = open("iterations_smile.csv");
      write_iteration_log_csv(rep.smile.calib.log, out); }
    { auto out = open("iterations_smile+mtgl.csv");
      write_iteration_log_csv(rep.smile_mtgl.calib.log, out); }

    const auto& ts = rep.paths.maturities;
    const double t_fig2 = ts[std::min<size_t>(3, ts.size() - 1)];
    { auto out = open("fig2_cdf.csv");
      detail::write_cdf_csv(rep, t_fig2, PathPredicate::all, out); }
    { auto out = open("fig4_paying.csv");
      detail::write_cdf_csv(rep, ts.back(), PathPredicate::paying, out); }
    { auto out = open("fig4_nonpaying.csv");
      detail::write_cdf_csv(rep, ts.back(), PathPredicate::non_paying, out); }
    for (size_t k = 0; k + 1 < ts.size(); ++k) {
        auto out = open("fig3_mismatch_t" + std::to_string(k + 1) + "_t" +
                        std::to_string(k + 2) + ".csv");
        detail::write_mismatch_csv(rep, ts[k], cfg.min_active_fraction, out);
    }
}

} // namespace wmc
