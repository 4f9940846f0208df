#pragma once

#include "ensemble/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ensemble {

/// Spectral description of a ridge problem: covariance eigenvalues, the
/// response along each eigendirection, var(y), and the sample/subject counts.
struct RidgeSpectrum {
    std::vector<double> eigenvalues;
    std::vector<double> response_magnitudes;
    double var_y = 1.0;
    std::size_t n_samples = 1;
    std::size_t n_subjects = 1;

    void validate() const;
};

/// sum_j lambda_j / (1 + lambda_j/lambda)^2 * f_j^2
double squared_bias(const RidgeSpectrum& s, double lambda);
/// sum_j (lambda_j / (lambda_j + lambda))^2; counts positive eigenvalues at lambda = 0.
double effective_dimension(const RidgeSpectrum& s, double lambda);
/// squared_bias + var_y * d(lambda) / n_samples
double ridge_error(const RidgeSpectrum& s, double lambda);
/// var_y / N + var_y * N / n_samples
double ensemble_error(double var_y, std::size_t n_subjects, std::size_t n_samples);

/// Minimizer of ridge_error over [lo, hi]: log-spaced scan refined by
/// golden-section search in log(lambda).
double optimal_lambda(const RidgeSpectrum& s, double lo = 1e-6, double hi = 1e6, std::size_t grid = 241);

enum class Regime { small_n, balanced, large_n };
std::string to_string(Regime r);

struct RegimeCuts {
    double small_cut = 3.0;  ///< N at or below this is small-N
    double rho = 4.0;        ///< N >= n_samples / rho is large-N
};

Regime classify_regime(double n_subjects, double n_samples, double d_lambda, const RegimeCuts& cuts = {});

/// Regression simulation behind the error decomposition. Subject 0 is the
/// target; subjects 1..N-1 each fit a ridge base on their own data, and the
/// ensemble regresses the target's y on the base predictions by least squares.
/// Subject i's coefficients are beta0 rotated by the geodesic fraction `shift`
/// of a random rotation in the plane of beta0 and a subject-specific direction.
/// With n_features >= n_samples the base predictions are not confined to a
/// low-rank subspace, so N near n_samples reaches the interpolating regime.
struct MonteCarloConfig {
    std::size_t n_subjects = 14;       ///< N, counting the target
    std::size_t n_samples = 200;       ///< target training rows
    std::size_t n_features = 200;
    double noise = 0.1;                ///< fraction of var_y that is noise
    double var_y = 1.0;
    double shift = 0.6;                ///< subject rotation strength
    std::size_t source_samples = 100;  ///< rows per source subject
    double ridge_lambda = 1.0;
    std::size_t test_samples = 200;
    std::size_t n_trials = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MonteCarloResult {
    double conventional_error = 0.0;
    double ensemble_error = 0.0;
    double conventional_se = 0.0;  ///< standard error over trials
    double ensemble_se = 0.0;
    /// Trials whose stacked design had at least as many bases as rows and
    /// needed the minimum-norm solution.
    std::size_t singular_trials = 0;
    std::string diagnostic;
};

MonteCarloResult monte_carlo_ensemble_error(const MonteCarloConfig& cfg, int workers = 1);

namespace reference {
MonteCarloResult monte_carlo_ensemble_error(const MonteCarloConfig& cfg);
}

}  // namespace ensemble
