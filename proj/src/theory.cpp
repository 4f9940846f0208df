#include "ensemble/theory.hpp"
#include "ensemble/hashing.hpp"
#include "ensemble/learners.hpp"
#include "ensemble/synthetic.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <limits>
#include <random>

namespace ensemble {

void RidgeSpectrum::validate() const {
    if (eigenvalues.size() != response_magnitudes.size()) {
        throw ConfigError("spectrum: eigenvalues and response magnitudes differ in length");
    }
    for (double v : eigenvalues) {
        if (!(v >= 0.0)) throw ConfigError("spectrum: eigenvalues must be nonnegative");
    }
    if (!(var_y >= 0.0)) throw ConfigError("spectrum: var_y must be nonnegative");
    if (n_samples < 1) throw ConfigError("spectrum: n_samples must be positive");
}

double squared_bias(const RidgeSpectrum& s, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("squared_bias: lambda must be positive");
    s.validate();
    double sum = 0.0;
    for (std::size_t j = 0; j < s.eigenvalues.size(); ++j) {
        const double shrink = 1.0 + s.eigenvalues[j] / lambda;
        sum += s.eigenvalues[j] / (shrink * shrink) * s.response_magnitudes[j] * s.response_magnitudes[j];
    }
    return sum;
}

double effective_dimension(const RidgeSpectrum& s, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("effective_dimension: lambda must be nonnegative");
    s.validate();
    double d = 0.0;
    for (double ev : s.eigenvalues) {
        if (ev <= 0.0) continue;
        const double r = ev / (ev + lambda);
        d += r * r;
    }
    return d;
}

double ridge_error(const RidgeSpectrum& s, double lambda) {
    return squared_bias(s, lambda) + s.var_y * effective_dimension(s, lambda) / static_cast<double>(s.n_samples);
}

double ensemble_error(double var_y, std::size_t n_subjects, std::size_t n_samples) {
    if (n_subjects < 1 || n_samples < 1) throw ConfigError("ensemble_error: sizes must be positive");
    const auto N = static_cast<double>(n_subjects);
    return var_y / N + var_y * N / static_cast<double>(n_samples);
}

double optimal_lambda(const RidgeSpectrum& s, double lo, double hi, std::size_t grid) {
    if (!(lo > 0.0 && hi > lo)) throw ConfigError("optimal_lambda: need 0 < lo < hi");
    if (grid < 3) throw ConfigError("optimal_lambda: grid needs at least 3 points");
    const double a = std::log(lo);
    const double b = std::log(hi);
    auto f = [&](double t) { return ridge_error(s, std::exp(t)); };

    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    const double step = (b - a) / static_cast<double>(grid - 1);
    for (std::size_t i = 0; i < grid; ++i) {
        const double v = f(a + step * static_cast<double>(i));
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    double left = a + step * static_cast<double>(best == 0 ? 0 : best - 1);
    double right = a + step * static_cast<double>(std::min(best + 1, grid - 1));
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = right - g * (right - left);
    double x2 = left + g * (right - left);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < 100 && right - left > 1e-10; ++it) {
        if (f1 < f2) {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - g * (right - left);
            f1 = f(x1);
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + g * (right - left);
            f2 = f(x2);
        }
    }
    const double t = 0.5 * (left + right);
    const double grid_t = a + step * static_cast<double>(best);
    return f(t) <= best_val ? std::exp(t) : std::exp(grid_t);
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::small_n: return "small-N";
        case Regime::balanced: return "balanced";
        case Regime::large_n: return "large-N";
    }
    return "?";
}

Regime classify_regime(double n_subjects, double n_samples, double d_lambda, const RegimeCuts& cuts) {
    if (!(n_subjects > 0.0 && n_samples > 0.0 && d_lambda > 0.0)) {
        throw ConfigError("classify_regime: inputs must be positive");
    }
    if (n_subjects <= cuts.small_cut) return Regime::small_n;
    if (n_subjects < std::min(n_samples / cuts.rho, d_lambda)) return Regime::balanced;
    return Regime::large_n;
}

// -------------------------------------------------------------- simulation

void MonteCarloConfig::validate() const {
    if (n_subjects < 1 || n_samples < 1 || n_features < 1 || source_samples < 1 || test_samples < 1) {
        throw ConfigError("monte carlo: sizes must be positive");
    }
    if (n_trials < 50) throw ConfigError("monte carlo: n_trials must be at least 50");
    if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("monte carlo: noise must lie in [0,1]");
    if (!(var_y > 0.0)) throw ConfigError("monte carlo: var_y must be positive");
    if (!(shift >= 0.0 && shift <= 1.0)) throw ConfigError("monte carlo: shift must lie in [0,1]");
    if (!(ridge_lambda > 0.0)) throw ConfigError("monte carlo: ridge_lambda must be positive");
}

namespace {

struct TrialOutcome {
    double conventional = 0.0;
    double ensemble = 0.0;
    bool singular = false;
};

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
        for (Eigen::Index r = 0; r < M.rows(); ++r) M(r, c) = normal(rng);
    }
    return M;
}

Vector noisy_response(const Matrix& X, const Vector& beta, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, sigma);
    Vector y = X * beta;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += normal(rng);
    return y;
}

TrialOutcome run_trial(const MonteCarloConfig& cfg, std::size_t trial) {
    const std::uint64_t tseed = derive_seed(cfg.seed, "trial/" + std::to_string(trial));
    std::mt19937_64 rng(tseed);
    const double signal_var = cfg.var_y * (1.0 - cfg.noise);
    const double sigma = std::sqrt(cfg.var_y * cfg.noise);

    // x ~ N(0, I), so var(x . beta) = |beta|^2.
    Vector beta0 = gaussian(cfg.n_features, 1, rng).col(0);
    beta0 *= std::sqrt(signal_var) / beta0.norm();

    // Subject i turns beta0 toward its own random direction u_i, along the
    // geodesic of a random plane rotation. O(p) per subject.
    auto subject_beta = [&](std::size_t i) -> Vector {
        const std::uint64_t rseed = derive_seed(tseed, "rotation/" + std::to_string(i));
        std::mt19937_64 urng(rseed);
        Vector u = gaussian(cfg.n_features, 1, urng).col(0);
        u -= (u.dot(beta0) / beta0.squaredNorm()) * beta0;
        u *= beta0.norm() / u.norm();
        const Matrix R = geodesic_rotation(2, cfg.shift, rseed);
        return R(0, 0) * beta0 + R(1, 0) * u;
    };
    const Vector beta_t = subject_beta(0);

    const Matrix X_train = gaussian(cfg.n_samples, cfg.n_features, rng);
    const Vector y_train = noisy_response(X_train, beta_t, sigma, rng);
    const Matrix X_test = gaussian(cfg.test_samples, cfg.n_features, rng);
    const Vector y_test = noisy_response(X_test, beta_t, sigma, rng);

    TrialOutcome out;
    const RidgeFit conv = fit_ridge(X_train, y_train, {cfg.ridge_lambda});
    out.conventional = (y_test - conv.predict(X_test)).squaredNorm() / static_cast<double>(cfg.test_samples);

    const std::size_t n_bases = cfg.n_subjects - 1;
    if (n_bases == 0) {
        out.ensemble = y_test.squaredNorm() / static_cast<double>(cfg.test_samples);
        return out;
    }
    Matrix Z_train(X_train.rows(), static_cast<Eigen::Index>(n_bases));
    Matrix Z_test(X_test.rows(), static_cast<Eigen::Index>(n_bases));
    for (std::size_t b = 0; b < n_bases; ++b) {
        std::mt19937_64 srng(derive_seed(tseed, "source/" + std::to_string(b + 1)));
        const Matrix Xs = gaussian(cfg.source_samples, cfg.n_features, srng);
        const Vector ys = noisy_response(Xs, subject_beta(b + 1), sigma, srng);
        const RidgeFit base = fit_ridge(Xs, ys, {cfg.ridge_lambda});
        Z_train.col(static_cast<Eigen::Index>(b)) = base.predict(X_train);
        Z_test.col(static_cast<Eigen::Index>(b)) = base.predict(X_test);
    }
    const RidgeFit meta = fit_ridge(Z_train, y_train, {0.0});
    out.singular = meta.used_pseudo_inverse || n_bases >= cfg.n_samples;
    out.ensemble = (y_test - meta.predict(Z_test)).squaredNorm() / static_cast<double>(cfg.test_samples);
    return out;
}

MonteCarloResult aggregate(const MonteCarloConfig& cfg, const std::vector<TrialOutcome>& trials) {
    MonteCarloResult r;
    const auto n = static_cast<double>(trials.size());
    double sc = 0.0, se = 0.0, qc = 0.0, qe = 0.0;
    for (const auto& t : trials) {
        sc += t.conventional;
        se += t.ensemble;
        qc += t.conventional * t.conventional;
        qe += t.ensemble * t.ensemble;
        if (t.singular) ++r.singular_trials;
    }
    r.conventional_error = sc / n;
    r.ensemble_error = se / n;
    r.conventional_se = std::sqrt(std::max(0.0, qc / n - r.conventional_error * r.conventional_error) / (n - 1.0));
    r.ensemble_se = std::sqrt(std::max(0.0, qe / n - r.ensemble_error * r.ensemble_error) / (n - 1.0));
    if (r.singular_trials > 0) {
        r.diagnostic = "stacked design singular in " + std::to_string(r.singular_trials) + " of " +
                       std::to_string(trials.size()) + " trials (" + std::to_string(cfg.n_subjects - 1) +
                       " bases, " + std::to_string(cfg.n_samples) +
                       " rows); least squares needs regularization here, minimum-norm solution used";
    }
    return r;
}

}  // namespace

MonteCarloResult monte_carlo_ensemble_error(const MonteCarloConfig& cfg, int workers) {
    cfg.validate();
    std::vector<TrialOutcome> trials(cfg.n_trials);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (long t = 0; t < static_cast<long>(cfg.n_trials); ++t) {
        try {
            trials[static_cast<std::size_t>(t)] = run_trial(cfg, static_cast<std::size_t>(t));
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return aggregate(cfg, trials);
}

namespace reference {

MonteCarloResult monte_carlo_ensemble_error(const MonteCarloConfig& cfg) {
    cfg.validate();
    std::vector<TrialOutcome> trials;
    trials.reserve(cfg.n_trials);
    for (std::size_t t = 0; t < cfg.n_trials; ++t) trials.push_back(run_trial(cfg, t));
    return aggregate(cfg, trials);
}

}  // namespace reference

}  // namespace ensemble
