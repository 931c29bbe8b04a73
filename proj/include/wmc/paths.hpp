#pragma once

// Prior-measure path generation: GBM sampled at the product maturities with
// ATMF deterministic volatility, one exact lognormal step per interval.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wmc/market.hpp"

namespace wmc {

struct SimConfig {
    int n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<double> maturities;
    bool antithetic = false;
};

/// Simulated spot levels, one row per path, one column per maturity.
struct PathMatrix {
    Eigen::MatrixXd spots;
    std::vector<double> maturities;
    std::uint64_t seed = 0;

    int n_paths() const { return static_cast<int>(spots.rows()); }
    int n_maturities() const { return static_cast<int>(spots.cols()); }

    int maturity_index(double t) const {
        for (size_t k = 0; k < maturities.size(); ++k)
            if (maturities[k] == t)
                return static_cast<int>(k);
        throw std::invalid_argument("PathMatrix: maturity " + std::to_string(t) +
                                    " not simulated");
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream seed for path j: mixes (seed, j) so each path draws from its own
// generator and the result does not depend on how paths are partitioned
// across workers.
inline std::uint64_t path_stream_seed(std::uint64_t seed, std::uint64_t j) {
    return splitmix64(splitmix64(seed) ^ (j + 0x9e3779b97f4a7c15ULL));
}

} // namespace detail

/// Generates the prior paths. Each interval [t_{k-1}, t_k] takes one exact
/// lognormal step with forward variance sigma_k^2 t_k - sigma_{k-1}^2 t_{k-1},
/// where sigma_k is the ATMF vol at t_k. Deterministic given cfg.seed.
inline PathMatrix simulate(const SimConfig& cfg, const Market& market) {
    if (cfg.n_paths < 2)
        throw std::invalid_argument("simulate: n_paths must be >= 2");
    if (cfg.maturities.empty())
        throw std::invalid_argument("simulate: no maturities");
    if (!std::is_sorted(cfg.maturities.begin(), cfg.maturities.end(), std::less_equal<>{}))
        throw std::invalid_argument("simulate: maturities must be strictly ascending");
    if (cfg.maturities.front() <= 0.0)
        throw std::invalid_argument("simulate: maturities must be positive");
    if (cfg.antithetic && cfg.n_paths % 2 != 0)
        throw std::invalid_argument("simulate: antithetic sampling needs an even path count");

    const int m = static_cast<int>(cfg.maturities.size());
    const double drift_rate = market.rates.risk_free_rate - market.rates.dividend_rate;

    // Per-interval drift and forward variance.
    std::vector<double> step_drift(m), step_sd(m);
    double prev_t = 0.0, prev_tv = 0.0;
    for (int k = 0; k < m; ++k) {
        const double t = cfg.maturities[k];
        const double sigma = market.atmf_vol(t);
        const double tv = sigma * sigma * t;
        const double fwd_var = tv - prev_tv;
        if (fwd_var < 0.0)
            throw std::runtime_error(
                "simulate: negative forward variance on interval [" +
                std::to_string(prev_t) + ", " + std::to_string(t) +
                "]: ATMF total variance decreases");
        step_drift[k] = drift_rate * (t - prev_t) - 0.5 * fwd_var;
        step_sd[k] = std::sqrt(fwd_var);
        prev_t = t;
        prev_tv = tv;
    }

    PathMatrix out;
    out.maturities = cfg.maturities;
    out.seed = cfg.seed;
    out.spots.resize(cfg.n_paths, m);

    const int n_streams = cfg.antithetic ? cfg.n_paths / 2 : cfg.n_paths;
    const int per_stream = cfg.antithetic ? 2 : 1;
    for (int s = 0; s < n_streams; ++s) {
        std::mt19937_64 rng(detail::path_stream_seed(cfg.seed, static_cast<std::uint64_t>(s)));
        std::normal_distribution<double> normal;
        std::vector<double> z(m);
        for (int k = 0; k < m; ++k)
            z[k] = normal(rng);
        for (int a = 0; a < per_stream; ++a) {
            const double sign = (a == 0) ? 1.0 : -1.0;
            double spot = market.config.spot;
            const int j = s * per_stream + a;
            for (int k = 0; k < m; ++k) {
                spot *= std::exp(step_drift[k] + step_sd[k] * sign * z[k]);
                out.spots(j, k) = spot;
            }
        }
    }
    return out;
}

/// Dumps a PathMatrix as CSV (header row of maturities, one row per path).
inline void write_paths_csv(const PathMatrix& paths, std::ostream& out) {
    out << "# seed=" << paths.seed << "\n";
    char buf[64];
    for (size_t k = 0; k < paths.maturities.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", paths.maturities[k]);
        out << (k ? "," : "") << buf;
    }
    out << "\n";
    for (int j = 0; j < paths.n_paths(); ++j) {
        for (int k = 0; k < paths.n_maturities(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", paths.spots(j, k));
            out << (k ? "," : "") << buf;
        }
        out << "\n";
    }
}

inline void write_paths_csv(const PathMatrix& paths, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path.string());
    write_paths_csv(paths, out);
}

inline PathMatrix read_paths_csv(std::istream& in) {
    PathMatrix out;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# seed=", 0) != 0)
        throw std::invalid_argument("paths CSV: missing seed header");
    out.seed = std::stoull(line.substr(7));
    if (!std::getline(in, line))
        throw std::invalid_argument("paths CSV: missing maturity header");
    for (const auto& cell : detail::split_csv_row(line))
        out.maturities.push_back(std::stod(cell));
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto cells = detail::split_csv_row(line);
        if (cells.size() != out.maturities.size())
            throw std::invalid_argument("paths CSV: ragged row");
        std::vector<double> row(cells.size());
        for (size_t k = 0; k < cells.size(); ++k)
            row[k] = std::stod(cells[k]);
        rows.push_back(std::move(row));
    }
    out.spots.resize(rows.size(), out.maturities.size());
    for (size_t j = 0; j < rows.size(); ++j)
        for (size_t k = 0; k < out.maturities.size(); ++k)
            out.spots(j, k) = rows[j][k];
    if ((out.spots.array() <= 0.0).any())
        throw std::invalid_argument("paths CSV: non-positive spot level");
    return out;
}

inline PathMatrix read_paths_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open paths CSV: " + path.string());
    return read_paths_csv(in);
}

} // namespace wmc
