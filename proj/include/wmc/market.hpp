#pragma once

// Market data model: flat rate curve, implied volatility surface with
// strike/total-variance interpolation, forwards and Black-Scholes vanilla
// prices used as calibration targets.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace wmc {

/// Continuously compounded flat rates per year.
struct RateCurve {
    double risk_free_rate = 0.0;
    double dividend_rate = 0.0;
};

/// Spot level and the product maturities as year fractions from the value date.
struct MarketConfig {
    double spot = 0.0;
    std::vector<double> maturities;
};

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

/// Undiscounted-forward Black formula. Degenerates to discounted intrinsic
/// value when vol*sqrt(t) vanishes.
inline double black_price(double fwd, double strike, double vol, double t, double df,
                          bool is_call) {
    const double stddev = vol * std::sqrt(t);
    if (stddev <= 0.0) {
        const double intrinsic = is_call ? fwd - strike : strike - fwd;
        return df * std::max(intrinsic, 0.0);
    }
    const double d1 = std::log(fwd / strike) / stddev + 0.5 * stddev;
    const double d2 = d1 - stddev;
    if (is_call)
        return df * (fwd * norm_cdf(d1) - strike * norm_cdf(d2));
    return df * (strike * norm_cdf(-d2) - fwd * norm_cdf(-d1));
}

/// Implied volatility grid over absolute strikes and year-fraction maturities.
/// Interpolation is linear in strike and linear in total variance (vol^2 * t)
/// across maturity, flat beyond the grid in both directions. Grid nodes are
/// reproduced exactly.
class VolSurface {
  public:
    VolSurface() = default;

    VolSurface(std::vector<double> strikes, std::vector<double> maturities,
               Eigen::MatrixXd vols)
        : strikes_(std::move(strikes)), maturities_(std::move(maturities)),
          vols_(std::move(vols)) {
        if (strikes_.size() < 1 || maturities_.size() < 1)
            throw std::invalid_argument("VolSurface: empty strike or maturity axis");
        if (!std::is_sorted(strikes_.begin(), strikes_.end(), std::less_equal<>{}))
            throw std::invalid_argument("VolSurface: strikes must be strictly ascending");
        if (!std::is_sorted(maturities_.begin(), maturities_.end(), std::less_equal<>{}))
            throw std::invalid_argument("VolSurface: maturities must be strictly ascending");
        if (vols_.rows() != static_cast<Eigen::Index>(strikes_.size()) ||
            vols_.cols() != static_cast<Eigen::Index>(maturities_.size()))
            throw std::invalid_argument("VolSurface: vol matrix dimensions do not match axes");
        if ((vols_.array() < 0.0).any())
            throw std::invalid_argument("VolSurface: negative volatility");
    }

    const std::vector<double>& strikes() const { return strikes_; }
    const std::vector<double>& maturities() const { return maturities_; }
    const Eigen::MatrixXd& vols() const { return vols_; }

    /// Interpolated volatility at (strike, t).
    double operator()(double strike, double t) const {
        if (t <= maturities_.front())
            return strike_interp(strike, 0);
        if (t >= maturities_.back())
            return strike_interp(strike, static_cast<int>(maturities_.size()) - 1);
        const auto it = std::upper_bound(maturities_.begin(), maturities_.end(), t);
        const int hi = static_cast<int>(it - maturities_.begin());
        const int lo = hi - 1;
        if (maturities_[lo] == t)
            return strike_interp(strike, lo);
        const double v_lo = strike_interp(strike, lo);
        const double v_hi = strike_interp(strike, hi);
        const double tv_lo = v_lo * v_lo * maturities_[lo];
        const double tv_hi = v_hi * v_hi * maturities_[hi];
        const double w = (t - maturities_[lo]) / (maturities_[hi] - maturities_[lo]);
        const double tv = tv_lo + (tv_hi - tv_lo) * w;
        return std::sqrt(tv / t);
    }

  private:
    double strike_interp(double strike, int col) const {
        if (strike <= strikes_.front())
            return vols_(0, col);
        if (strike >= strikes_.back())
            return vols_(static_cast<Eigen::Index>(strikes_.size()) - 1, col);
        const auto it = std::upper_bound(strikes_.begin(), strikes_.end(), strike);
        const auto hi = it - strikes_.begin();
        const auto lo = hi - 1;
        const double w = (strike - strikes_[lo]) / (strikes_[hi] - strikes_[lo]);
        return vols_(lo, col) * (1.0 - w) + vols_(hi, col) * w;
    }

    std::vector<double> strikes_;
    std::vector<double> maturities_;
    Eigen::MatrixXd vols_;
};

/// Market data bundle. Immutable after construction; safe for concurrent reads.
struct Market {
    MarketConfig config;
    RateCurve rates;
    VolSurface surface;

    /// Forward price F(t) = S_0 * exp((r - q) t).
    double forward(double t) const {
        return config.spot *
               std::exp((rates.risk_free_rate - rates.dividend_rate) * t);
    }

    double discount(double t) const { return std::exp(-rates.risk_free_rate * t); }

    /// Surface vol read at the forward of t (at-the-money-forward).
    double atmf_vol(double t) const { return surface(forward(t), t); }

    /// Black-Scholes price with the surface vol at (strike, t), discounted to
    /// the value date.
    double vanilla_price(double strike, double t, bool is_call) const {
        return black_price(forward(t), strike, surface(strike, t), t, discount(t),
                           is_call);
    }
};

// --- ACT/365 day count ------------------------------------------------------

inline std::chrono::year_month_day parse_iso_date(std::string_view s) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(std::string(s).c_str(), "%d-%d-%d", &y, &m, &d) != 3)
        throw std::invalid_argument("parse_iso_date: expected YYYY-MM-DD, got '" +
                                    std::string(s) + "'");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                          std::chrono::day{unsigned(d)}};
    if (!ymd.ok())
        throw std::invalid_argument("parse_iso_date: invalid calendar date '" +
                                    std::string(s) + "'");
    return ymd;
}

inline double act365(std::chrono::year_month_day from, std::chrono::year_month_day to) {
    const auto days = std::chrono::sys_days(to) - std::chrono::sys_days(from);
    return static_cast<double>(days.count()) / 365.0;
}

// --- surface CSV ingestion ---------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    return cells;
}

// Accepts maturity headers like "0.25" or "0.25y".
inline double parse_maturity_label(std::string cell) {
    while (!cell.empty() && (cell.back() == 'y' || cell.back() == 'Y' ||
                             std::isspace(static_cast<unsigned char>(cell.back()))))
        cell.pop_back();
    size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size())
        throw std::invalid_argument("vol surface CSV: bad maturity label '" + cell + "'");
    return v;
}

} // namespace detail

/// Reads a strike x maturity grid: header row of maturities, first column
/// strikes, entries in percent.
inline VolSurface load_vol_surface(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("vol surface CSV: empty input");
    auto header = detail::split_csv_row(line);
    if (header.size() < 2)
        throw std::invalid_argument("vol surface CSV: header must list maturities");
    std::vector<double> maturities;
    for (size_t j = 1; j < header.size(); ++j)
        maturities.push_back(detail::parse_maturity_label(header[j]));

    std::vector<double> strikes;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto cells = detail::split_csv_row(line);
        if (cells.size() != header.size())
            throw std::invalid_argument("vol surface CSV: row with " +
                                        std::to_string(cells.size()) + " cells, expected " +
                                        std::to_string(header.size()));
        strikes.push_back(std::stod(cells[0]));
        std::vector<double> row;
        for (size_t j = 1; j < cells.size(); ++j)
            row.push_back(std::stod(cells[j]) / 100.0);
        rows.push_back(std::move(row));
    }

    Eigen::MatrixXd vols(rows.size(), maturities.size());
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < maturities.size(); ++j)
            vols(i, j) = rows[i][j];
    return VolSurface(std::move(strikes), std::move(maturities), std::move(vols));
}

inline VolSurface load_vol_surface(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open vol surface CSV: " + path.string());
    return load_vol_surface(in);
}

} // namespace wmc
