#pragma once

// Pricing under prior or posterior path probabilities: the geometric cliquet
// payoff, martingale-mismatch profiles and cumulative distribution series.

#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "wmc/constraints.hpp"
#include "wmc/market.hpp"
#include "wmc/paths.hpp"

namespace wmc {

/// Geometric cliquet: capped period returns multiplied, floored at zero,
/// discounted from the final reset date.
struct CliquetSpec {
    double cap = 1.1;
    std::vector<double> reset_times;

    void validate() const {
        if (!(cap > 0.0))
            throw std::invalid_argument("CliquetSpec: cap must be positive");
        if (reset_times.size() < 2)
            throw std::invalid_argument("CliquetSpec: need at least two reset dates");
        if (!std::is_sorted(reset_times.begin(), reset_times.end(), std::less_equal<>{}))
            throw std::invalid_argument("CliquetSpec: reset dates must be strictly ascending");
        if (reset_times.front() <= 0.0)
            throw std::invalid_argument("CliquetSpec: reset dates must be positive");
    }
};

/// Discounted payoff max(0, prod_j min(S_j/S_{j-1}, cap) - 1) for one path's
/// spot levels at the reset dates.
inline double cliquet_payoff(std::span<const double> spots_at_resets,
                             const CliquetSpec& spec, const RateCurve& rates) {
    if (spots_at_resets.size() != spec.reset_times.size())
        throw std::invalid_argument("cliquet_payoff: spot level count mismatch");
    double prod = 1.0;
    for (size_t j = 1; j < spots_at_resets.size(); ++j)
        prod *= std::min(spots_at_resets[j] / spots_at_resets[j - 1], spec.cap);
    const double df = std::exp(-rates.risk_free_rate * spec.reset_times.back());
    return df * std::max(prod - 1.0, 0.0);
}

/// Maps an arbitrary payoff functional over the simulated paths. The
/// callable receives one path's spot levels, ordered like
/// paths.maturities, and returns that path's (discounted) payoff.
template <typename PayoffFn>
Eigen::VectorXd path_payoffs(const PathMatrix& paths, PayoffFn&& payoff) {
    Eigen::VectorXd out(paths.n_paths());
    std::vector<double> levels(paths.n_maturities());
    for (int i = 0; i < paths.n_paths(); ++i) {
        for (int k = 0; k < paths.n_maturities(); ++k)
            levels[k] = paths.spots(i, k);
        out(i) = payoff(std::span<const double>(levels));
    }
    return out;
}

/// Discounted cliquet payoff per path. Reset dates must be simulated
/// maturities.
inline Eigen::VectorXd cliquet_payoffs(const PathMatrix& paths, const CliquetSpec& spec,
                                       const RateCurve& rates) {
    spec.validate();
    std::vector<int> cols;
    for (double t : spec.reset_times)
        cols.push_back(paths.maturity_index(t));
    Eigen::VectorXd out(paths.n_paths());
    std::vector<double> levels(cols.size());
    for (int i = 0; i < paths.n_paths(); ++i) {
        for (size_t k = 0; k < cols.size(); ++k)
            levels[k] = paths.spots(i, cols[k]);
        out(i) = cliquet_payoff(levels, spec, rates);
    }
    return out;
}

/// Expected payoff under the given path probabilities.
inline double price(const Eigen::VectorXd& payoffs, const Eigen::VectorXd& probs) {
    if (payoffs.size() != probs.size())
        throw std::invalid_argument("price: size mismatch");
    return payoffs.dot(probs);
}

inline Eigen::VectorXd uniform_probs(int n_paths) {
    return Eigen::VectorXd::Constant(n_paths, 1.0 / n_paths);
}

/// Conditional martingale mismatch of a window, per unit of spot:
/// E[(S_t2 F(t1)/F(t2) - S_t1) | S_t1 in W] / S_0. Empty windows (zero
/// in-window probability) are undefined.
inline std::optional<double> martingale_mismatch(const PathMatrix& paths,
                                                 const MartingaleWindow& window,
                                                 const Eigen::VectorXd& probs,
                                                 const Market& market) {
    const int k1 = paths.maturity_index(window.t_from);
    const int k2 = paths.maturity_index(window.t_to);
    const double fwd_ratio = market.forward(window.t_from) / market.forward(window.t_to);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < paths.n_paths(); ++i) {
        const double s1 = paths.spots(i, k1);
        if (!window.contains(s1))
            continue;
        num += (paths.spots(i, k2) * fwd_ratio - s1) * probs(i);
        den += probs(i);
    }
    if (den <= 0.0)
        return std::nullopt;
    return num / den / market.config.spot;
}

enum class PathPredicate { all, paying, non_paying };

struct CdfPoint {
    double level = 0.0;
    double cumulative = 0.0;
};

/// Unconditional cumulative probability over paths sorted by spot level at
/// the given maturity, restricted to the predicate subset. The paying and
/// non-paying series sum to the full CDF; the final cumulative value is the
/// total probability of the subset.
inline std::vector<CdfPoint> cumulative_distribution(const PathMatrix& paths,
                                                     double maturity,
                                                     const Eigen::VectorXd& probs,
                                                     PathPredicate predicate,
                                                     const Eigen::VectorXd& payoffs = {}) {
    const int k = paths.maturity_index(maturity);
    if (predicate != PathPredicate::all && payoffs.size() != paths.n_paths())
        throw std::invalid_argument(
            "cumulative_distribution: payoffs required for paying/non-paying predicate");

    std::vector<int> order(paths.n_paths());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = paths.spots(a, k), sb = paths.spots(b, k);
        return sa != sb ? sa < sb : a < b;
    });

    std::vector<CdfPoint> out;
    double cum = 0.0;
    for (int i : order) {
        const bool paying = predicate == PathPredicate::all
                                ? true
                                : payoffs(i) > 0.0;
        if (predicate == PathPredicate::paying && !paying)
            continue;
        if (predicate == PathPredicate::non_paying && paying)
            continue;
        cum += probs(i);
        out.push_back({paths.spots(i, k), cum});
    }
    return out;
}

} // namespace wmc
