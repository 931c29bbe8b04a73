#pragma once

// Entropy-dual calibration: minimize the relative entropy of the posterior
// path probabilities to the uniform prior subject to repricing the
// constraint securities, solved in dual form by damped Newton iteration.
// Exact fit minimizes W(lambda) = ln Z - lambda.C; the weighted
// least-squares variant adds a quadratic penalty 1/2 sum w_j lambda_j^2.

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "wmc/constraints.hpp"

namespace wmc {

enum class FitMode { exact, least_squares };

struct SolverConfig {
    FitMode mode = FitMode::least_squares;
    double alpha0 = 0.01;          // initial step shortening factor
    double alpha_growth = 2.0;     // multiplier per iteration until alpha = 1
    double cond_guard_ratio = 10.0; // condition growth triggering a shrink
    double step_shrink = 5.0;      // divisor applied on trigger
    double grad_tol = 1e-6;        // convergence on the gradient inf-norm
    int max_iters = 50;

    void validate() const {
        if (!(alpha0 > 0.0 && alpha0 <= 1.0))
            throw std::invalid_argument("SolverConfig: need 0 < alpha0 <= 1");
        if (alpha_growth < 1.0)
            throw std::invalid_argument("SolverConfig: need alpha_growth >= 1");
        if (!(grad_tol > 0.0))
            throw std::invalid_argument("SolverConfig: need grad_tol > 0");
        if (step_shrink <= 1.0)
            throw std::invalid_argument("SolverConfig: need step_shrink > 1");
        if (max_iters < 1)
            throw std::invalid_argument("SolverConfig: need max_iters >= 1");
    }
};

struct PosteriorResult {
    Eigen::VectorXd probs;
    double log_partition = 0.0;
};

/// Gibbs posterior p_i proportional to exp(sum_j g_ij lambda_j), normalized
/// with the max exponent subtracted so large multipliers cannot overflow.
inline PosteriorResult posterior_probs(const Eigen::VectorXd& lambda,
                                       const Eigen::MatrixXd& payoffs) {
    if (payoffs.cols() != lambda.size())
        throw std::invalid_argument("posterior_probs: lambda size mismatch");
    Eigen::VectorXd expo = lambda.size() == 0
                               ? Eigen::VectorXd::Zero(payoffs.rows())
                               : Eigen::VectorXd(payoffs * lambda);
    const double m = payoffs.rows() ? expo.maxCoeff() : 0.0;
    if (!std::isfinite(m)) {
        int worst = 0;
        double worst_mag = -1.0;
        for (int j = 0; j < lambda.size(); ++j) {
            const double mag =
                std::abs(lambda(j)) * payoffs.col(j).cwiseAbs().maxCoeff();
            if (!std::isfinite(lambda(j)) || mag > worst_mag) {
                worst = j;
                worst_mag = mag;
                if (!std::isfinite(lambda(j)))
                    break;
            }
        }
        throw std::runtime_error(
            "posterior_probs: non-finite exponent; offending multiplier index " +
            std::to_string(worst) + " (lambda=" + std::to_string(lambda(worst)) + ")");
    }
    PosteriorResult out;
    out.probs = (expo.array() - m).exp();
    const double z = out.probs.sum();
    out.probs /= z;
    out.log_partition = m + std::log(z);
    return out;
}

/// D(p/q) = sum p_i ln(p_i/q_i), with 0 ln 0 = 0.
inline double relative_entropy(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size())
        throw std::invalid_argument("relative_entropy: size mismatch");
    double d = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (q(i) <= 0.0)
            throw std::invalid_argument("relative_entropy: prior must be positive");
        if (p(i) > 0.0)
            d += p(i) * std::log(p(i) / q(i));
    }
    return d;
}

/// Multipliers, posterior, and the derivative data of the dual at lambda.
struct DualState {
    Eigen::VectorXd lambda;
    Eigen::VectorXd probs;
    double log_partition = 0.0;
    double dual_value = 0.0;      // W(lambda), or H(lambda) in LS mode
    Eigen::VectorXd gradient;
    Eigen::MatrixXd jacobian;
};

inline double dual_value(const Eigen::VectorXd& lambda, double log_partition,
                         const ConstraintSet& cs, FitMode mode) {
    double w = log_partition - lambda.dot(cs.prices);
    if (mode == FitMode::least_squares)
        w += 0.5 * lambda.cwiseProduct(lambda).dot(cs.weights);
    return w;
}

inline double dual_value(const Eigen::VectorXd& lambda, const ConstraintSet& cs,
                         FitMode mode) {
    return dual_value(lambda, posterior_probs(lambda, cs.payoffs).log_partition, cs,
                      mode);
}

/// grad_k = E_p[g_k] - C_k (+ w_k lambda_k in LS mode).
inline Eigen::VectorXd gradient(const DualState& state, const ConstraintSet& cs,
                                FitMode mode) {
    Eigen::VectorXd g = cs.payoffs.transpose() * state.probs - cs.prices;
    if (mode == FitMode::least_squares)
        g += cs.weights.cwiseProduct(state.lambda);
    return g;
}

/// J_ab = Cov_p(g_a, g_b), plus diag(w) in LS mode. Symmetric PSD.
inline Eigen::MatrixXd jacobian(const DualState& state, const ConstraintSet& cs,
                                FitMode mode) {
    const Eigen::VectorXd mean = cs.payoffs.transpose() * state.probs;
    const Eigen::MatrixXd weighted =
        state.probs.array().sqrt().matrix().asDiagonal() * cs.payoffs;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(cs.size(), cs.size());
    j.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
    j = j.selfadjointView<Eigen::Lower>();
    j -= mean * mean.transpose();
    if (mode == FitMode::least_squares)
        j += cs.weights.asDiagonal();
    return j;
}

/// Evaluates posterior, dual value, gradient and Jacobian at lambda.
inline DualState make_dual_state(const Eigen::VectorXd& lambda, const ConstraintSet& cs,
                                 FitMode mode) {
    DualState s;
    s.lambda = lambda;
    auto post = posterior_probs(lambda, cs.payoffs);
    s.probs = std::move(post.probs);
    s.log_partition = post.log_partition;
    s.dual_value = dual_value(lambda, s.log_partition, cs, mode);
    s.gradient = gradient(s, cs, mode);
    s.jacobian = jacobian(s, cs, mode);
    return s;
}

/// Raised when the Newton system stays unsolvable after regularization.
/// Carries the most correlated constraint pairs, the usual culprits.
struct SingularJacobianError : std::runtime_error {
    explicit SingularJacobianError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string correlated_pairs_report(const Eigen::MatrixXd& j,
                                           std::span<const std::string> labels) {
    struct Pair {
        double corr;
        int a, b;
    };
    std::vector<Pair> pairs;
    for (int a = 0; a < j.rows(); ++a)
        for (int b = a + 1; b < j.cols(); ++b) {
            const double den = std::sqrt(j(a, a) * j(b, b));
            if (den > 0.0)
                pairs.push_back({std::abs(j(a, b)) / den, a, b});
        }
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& x, const Pair& y) { return x.corr > y.corr; });
    if (pairs.empty())
        return "no correlated pair found (degenerate covariance)";
    auto name = [&labels](int i) {
        return i < static_cast<int>(labels.size()) ? std::string(labels[i])
                                                   : "#" + std::to_string(i);
    };
    std::string s = "most correlated constraint pairs:";
    const size_t n = std::min<size_t>(3, pairs.size());
    for (size_t i = 0; i < n; ++i) {
        const auto& p = pairs[i];
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", p.corr);
        s += "\n  |corr|=" + std::string(buf) + "  '" + name(p.a) + "'  '" +
             name(p.b) + "'";
    }
    return s;
}

} // namespace detail

struct NewtonStep {
    Eigen::VectorXd lambda;
    double condition = 0.0;  // 1-norm condition estimate of the factorization
    bool regularized = false;
};

/// lambda+ = lambda - alpha J^{-1} grad, via Cholesky. On factorization
/// failure retries once with eps trace/N added to the diagonal, then gives up
/// with a report naming near-duplicate constraints.
inline NewtonStep newton_step(const DualState& state, double alpha,
                              std::span<const std::string> labels = {}) {
    const int n = static_cast<int>(state.jacobian.rows());
    NewtonStep out;
    Eigen::LLT<Eigen::MatrixXd> llt(state.jacobian);
    if (llt.info() != Eigen::Success) {
        const double eps = 1e-12 * state.jacobian.trace() / std::max(n, 1);
        Eigen::MatrixXd reg = state.jacobian;
        reg.diagonal().array() += eps;
        llt.compute(reg);
        out.regularized = true;
        if (llt.info() != Eigen::Success)
            throw SingularJacobianError(
                "newton_step: Jacobian not positive definite after regularization; " +
                detail::correlated_pairs_report(state.jacobian, labels));
    }
    out.condition = 1.0 / llt.rcond();
    out.lambda = state.lambda - alpha * llt.solve(state.gradient);
    return out;
}

struct IterationRecord {
    int iter = 0;
    double dual_value = 0.0;
    double grad_inf_norm = 0.0;
    double alpha = 0.0;
    double condition = 0.0;
};

struct CalibrationResult {
    DualState state;
    std::vector<IterationRecord> log;
    bool converged = false;
    int iterations = 0;

    /// Per-constraint repricing errors E_p[g_j] - C_j.
    Eigen::VectorXd fit_errors(const ConstraintSet& cs) const {
        return cs.payoffs.transpose() * state.probs - cs.prices;
    }
};

/// Damped Newton from lambda = 0. The step factor starts at alpha0, doubles
/// each iteration up to 1, and is divided by step_shrink whenever the
/// condition estimate grows by more than cond_guard_ratio between
/// iterations (it resumes growing from the shrunk value).
inline CalibrationResult calibrate(const ConstraintSet& cs, const SolverConfig& cfg) {
    cfg.validate();
    if (cfg.mode == FitMode::least_squares && (cs.weights.array() < 0.0).any())
        throw std::invalid_argument("calibrate: negative least-squares weight");

    CalibrationResult out;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(cs.size());
    double alpha = cfg.alpha0;
    double prev_cond = std::numeric_limits<double>::quiet_NaN();

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        out.state = make_dual_state(lambda, cs, cfg.mode);
        const double grad_inf =
            cs.size() ? out.state.gradient.cwiseAbs().maxCoeff() : 0.0;
        if (grad_inf < cfg.grad_tol) {
            out.log.push_back({iter, out.state.dual_value, grad_inf, 0.0, prev_cond});
            out.converged = true;
            out.iterations = iter;
            return out;
        }
        NewtonStep step = newton_step(out.state, alpha, cs.labels);
        if (std::isfinite(prev_cond) && step.condition > cfg.cond_guard_ratio * prev_cond) {
            alpha /= cfg.step_shrink;
            step = newton_step(out.state, alpha, cs.labels);
        }
        out.log.push_back(
            {iter, out.state.dual_value, grad_inf, alpha, step.condition});
        prev_cond = step.condition;
        lambda = std::move(step.lambda);
        alpha = std::min(1.0, alpha * cfg.alpha_growth);
        out.iterations = iter + 1;
    }

    // Iteration budget exhausted: hand back the best effort, caller decides.
    out.state = make_dual_state(lambda, cs, cfg.mode);
    out.converged =
        (cs.size() == 0) || out.state.gradient.cwiseAbs().maxCoeff() < cfg.grad_tol;
    return out;
}

inline void write_iteration_log_csv(std::span<const IterationRecord> log,
                                    std::ostream& out) {
    out << "iter,dual_value,grad_inf_norm,alpha,condition\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.iter,
                      r.dual_value, r.grad_inf_norm, r.alpha, r.condition);
        out << buf;
    }
}

} // namespace wmc
