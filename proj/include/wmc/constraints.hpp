#pragma once

// Calibration securities: discounted vanilla payoffs (OTM convention),
// forward securities, and zero-price martingale-window securities, plus the
// ill-conditioned-column filter. All payoff columns and target prices are
// expressed per unit of spot so every price is O(1).

#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wmc/market.hpp"
#include "wmc/paths.hpp"

namespace wmc {

enum class ConstraintKind { vanilla_call, vanilla_put, forward, martingale };

inline const char* to_string(ConstraintKind k) {
    switch (k) {
    case ConstraintKind::vanilla_call: return "call";
    case ConstraintKind::vanilla_put: return "put";
    case ConstraintKind::forward: return "forward";
    case ConstraintKind::martingale: return "martingale";
    }
    return "?";
}

/// Spot interval [lower, upper) at t_from, tested against t_to.
struct MartingaleWindow {
    double lower = 0.0;
    double upper = 0.0;
    double t_from = 0.0;
    double t_to = 0.0;

    bool contains(double spot) const { return spot >= lower && spot < upper; }
};

/// Payoff matrix (one column per security), target prices, least-squares
/// weights and labels. active_fraction records the share of paths with a
/// nonzero payoff (for martingale columns: the share of in-window paths).
struct ConstraintSet {
    Eigen::MatrixXd payoffs;
    Eigen::VectorXd prices;
    Eigen::VectorXd weights;
    std::vector<std::string> labels;
    std::vector<ConstraintKind> kinds;
    std::vector<double> active_fraction;

    int n_paths() const { return static_cast<int>(payoffs.rows()); }
    int size() const { return static_cast<int>(payoffs.cols()); }

    void append(const ConstraintSet& other) {
        if (size() == 0) {
            *this = other;
            return;
        }
        if (other.size() == 0)
            return;
        if (other.payoffs.rows() != payoffs.rows())
            throw std::invalid_argument("ConstraintSet::append: path count mismatch");
        Eigen::MatrixXd g(payoffs.rows(), payoffs.cols() + other.payoffs.cols());
        g << payoffs, other.payoffs;
        payoffs = std::move(g);
        Eigen::VectorXd c(prices.size() + other.prices.size());
        c << prices, other.prices;
        prices = std::move(c);
        Eigen::VectorXd w(weights.size() + other.weights.size());
        w << weights, other.weights;
        weights = std::move(w);
        labels.insert(labels.end(), other.labels.begin(), other.labels.end());
        kinds.insert(kinds.end(), other.kinds.begin(), other.kinds.end());
        active_fraction.insert(active_fraction.end(), other.active_fraction.begin(),
                               other.active_fraction.end());
    }

    /// Selects columns by index, preserving order.
    ConstraintSet select(std::span<const int> idx) const {
        ConstraintSet out;
        out.payoffs.resize(payoffs.rows(), idx.size());
        out.prices.resize(idx.size());
        out.weights.resize(idx.size());
        for (size_t j = 0; j < idx.size(); ++j) {
            out.payoffs.col(j) = payoffs.col(idx[j]);
            out.prices(j) = prices(idx[j]);
            out.weights(j) = weights(idx[j]);
            out.labels.push_back(labels[idx[j]]);
            out.kinds.push_back(kinds[idx[j]]);
            out.active_fraction.push_back(active_fraction[idx[j]]);
        }
        return out;
    }

    ConstraintSet without_kind(ConstraintKind drop) const {
        std::vector<int> idx;
        for (int j = 0; j < size(); ++j)
            if (kinds[j] != drop)
                idx.push_back(j);
        return select(idx);
    }
};

namespace detail {

inline std::string format_level(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", x);
    return buf;
}

inline std::string format_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", t);
    return buf;
}

} // namespace detail

/// One column per (surface strike, simulated maturity): an out-of-the-money
/// call when the strike is above the forward, a put otherwise. Payoffs are
/// discounted and divided by spot; targets come from Market::vanilla_price.
inline ConstraintSet vanilla_columns(const PathMatrix& paths, const Market& market) {
    const auto& strikes = market.surface.strikes();
    const int n_mat = paths.n_maturities();
    const int n_cols = static_cast<int>(strikes.size()) * n_mat;
    const double spot = market.config.spot;

    ConstraintSet cs;
    cs.payoffs.resize(paths.n_paths(), n_cols);
    cs.prices.resize(n_cols);
    cs.weights = Eigen::VectorXd::Zero(n_cols);
    int j = 0;
    for (int k = 0; k < n_mat; ++k) {
        const double t = paths.maturities[k];
        const double fwd = market.forward(t);
        const double df = market.discount(t);
        for (double strike : strikes) {
            const bool is_call = strike > fwd;
            const auto s = paths.spots.col(k).array();
            const Eigen::ArrayXd pay =
                is_call ? Eigen::ArrayXd((s - strike).max(0.0))
                        : Eigen::ArrayXd((strike - s).max(0.0));
            cs.payoffs.col(j) = pay * (df / spot);
            cs.prices(j) = market.vanilla_price(strike, t, is_call) / spot;
            cs.labels.push_back(std::string(is_call ? "call" : "put") + " K=" +
                                detail::format_level(strike) + " t=" +
                                detail::format_time(t));
            cs.kinds.push_back(is_call ? ConstraintKind::vanilla_call
                                       : ConstraintKind::vanilla_put);
            cs.active_fraction.push_back(
                static_cast<double>((pay > 0.0).count()) / paths.n_paths());
            ++j;
        }
    }
    return cs;
}

/// One column per maturity: the discounted simulated spot with target price
/// S_0 e^{-q t} (both per unit of spot).
inline ConstraintSet forward_columns(const PathMatrix& paths, const Market& market) {
    const int n_mat = paths.n_maturities();
    const double spot = market.config.spot;

    ConstraintSet cs;
    cs.payoffs.resize(paths.n_paths(), n_mat);
    cs.prices.resize(n_mat);
    cs.weights = Eigen::VectorXd::Zero(n_mat);
    for (int k = 0; k < n_mat; ++k) {
        const double t = paths.maturities[k];
        const double df = market.discount(t);
        cs.payoffs.col(k) = paths.spots.col(k) * (df / spot);
        cs.prices(k) = std::exp(-market.rates.dividend_rate * t);
        cs.labels.push_back("fwd t=" + detail::format_time(t));
        cs.kinds.push_back(ConstraintKind::forward);
        cs.active_fraction.push_back(1.0);
    }
    return cs;
}

/// Window level grid: the surface strikes, extended below and above with the
/// outermost strike spacings until [range_lo, range_hi] * spot is covered.
/// The same grid is reused for every consecutive maturity pair.
inline std::vector<MartingaleWindow> build_windows(const Market& market,
                                                   std::span<const double> maturities,
                                                   double range_lo, double range_hi) {
    if (!(range_lo < 1.0 && 1.0 < range_hi))
        throw std::invalid_argument("build_windows: need range_lo < 1 < range_hi");
    if (range_lo <= 0.0)
        throw std::invalid_argument("build_windows: range_lo must be positive");
    if (maturities.size() < 2)
        throw std::invalid_argument("build_windows: need at least two maturities");
    const auto& strikes = market.surface.strikes();
    if (strikes.size() < 2)
        throw std::invalid_argument("build_windows: need at least two strikes");

    const double lo_bound = range_lo * market.config.spot;
    const double hi_bound = range_hi * market.config.spot;
    const double lo_gap = strikes[1] - strikes[0];
    const double hi_gap = strikes[strikes.size() - 1] - strikes[strikes.size() - 2];

    std::vector<double> edges(strikes.begin(), strikes.end());
    // stop the downward extension rather than produce a non-positive edge
    while (edges.front() > lo_bound && edges.front() - lo_gap > 0.0)
        edges.insert(edges.begin(), edges.front() - lo_gap);
    while (edges.back() < hi_bound)
        edges.push_back(edges.back() + hi_gap);

    std::vector<std::pair<double, double>> grid;
    for (size_t i = 0; i + 1 < edges.size(); ++i)
        if (edges[i + 1] > lo_bound && edges[i] < hi_bound)
            grid.emplace_back(edges[i], edges[i + 1]);

    std::vector<MartingaleWindow> windows;
    for (size_t k = 0; k + 1 < maturities.size(); ++k)
        for (const auto& [lo, hi] : grid)
            windows.push_back({lo, hi, maturities[k], maturities[k + 1]});
    return windows;
}

inline int windows_per_pair(std::span<const MartingaleWindow> windows) {
    if (windows.empty())
        return 0;
    int n = 0;
    for (const auto& w : windows)
        if (w.t_from == windows.front().t_from)
            ++n;
    return n;
}

/// Zero-price synthetic securities: per window, the forward-adjusted spot
/// difference of the paths passing through it, discounted and per unit of
/// spot. F(.) is the deterministic forward factor.
inline ConstraintSet martingale_columns(const PathMatrix& paths,
                                        std::span<const MartingaleWindow> windows,
                                        const Market& market) {
    const double spot = market.config.spot;
    ConstraintSet cs;
    cs.payoffs.resize(paths.n_paths(), windows.size());
    cs.prices = Eigen::VectorXd::Zero(windows.size());
    cs.weights = Eigen::VectorXd::Zero(windows.size());
    for (size_t j = 0; j < windows.size(); ++j) {
        const auto& w = windows[j];
        if (!(0.0 < w.lower && w.lower < w.upper) || !(w.t_from < w.t_to))
            throw std::invalid_argument("martingale_columns: malformed window");
        const int k1 = paths.maturity_index(w.t_from);
        const int k2 = paths.maturity_index(w.t_to);
        const double fwd_ratio = market.forward(w.t_from) / market.forward(w.t_to);
        const double df = market.discount(w.t_to);
        int in_window = 0;
        for (int i = 0; i < paths.n_paths(); ++i) {
            const double s1 = paths.spots(i, k1);
            if (w.contains(s1)) {
                cs.payoffs(i, j) =
                    (paths.spots(i, k2) * fwd_ratio - s1) * (df / spot);
                ++in_window;
            } else {
                cs.payoffs(i, j) = 0.0;
            }
        }
        cs.labels.push_back("mtgl [" + detail::format_level(w.lower) + ".." +
                            detail::format_level(w.upper) + ") t=" +
                            detail::format_time(w.t_from) + "->" +
                            detail::format_time(w.t_to));
        cs.kinds.push_back(ConstraintKind::martingale);
        cs.active_fraction.push_back(static_cast<double>(in_window) / paths.n_paths());
    }
    return cs;
}

struct RemovalRecord {
    std::string label;
    ConstraintKind kind;
    double active_fraction;
    bool kept;
};

struct FilterResult {
    ConstraintSet kept;
    std::vector<RemovalRecord> report;

    int n_removed() const {
        int n = 0;
        for (const auto& r : report)
            if (!r.kept)
                ++n;
        return n;
    }
};

/// Drops columns whose active fraction is below min_active_fraction (all-zero
/// columns always go, whatever their in-window count). Refuses to drop
/// everything.
inline FilterResult filter_constraints(const ConstraintSet& cs, double min_active_fraction) {
    if (min_active_fraction < 0.0 || min_active_fraction >= 1.0)
        throw std::invalid_argument("filter_constraints: need 0 <= min_active_fraction < 1");
    FilterResult out;
    std::vector<int> keep;
    for (int j = 0; j < cs.size(); ++j) {
        const double a = cs.active_fraction[j];
        const bool kept =
            a >= min_active_fraction && !cs.payoffs.col(j).isZero(0.0);
        out.report.push_back({cs.labels[j], cs.kinds[j], a, kept});
        if (kept)
            keep.push_back(j);
    }
    if (keep.empty() && cs.size() > 0)
        throw std::runtime_error("filter_constraints: every column removed; "
                                 "min_active_fraction too aggressive for this path set");
    out.kept = cs.select(keep);
    return out;
}

inline void write_removal_csv(std::span<const RemovalRecord> report, std::ostream& out) {
    out << "label,kind,active_fraction,status\n";
    char buf[32];
    for (const auto& r : report) {
        std::snprintf(buf, sizeof buf, "%.17g", r.active_fraction);
        out << r.label << ',' << to_string(r.kind) << ',' << buf << ','
            << (r.kept ? "kept" : "removed") << "\n";
    }
}

} // namespace wmc
