#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ensemble {

/// Dense real matrix, rows = samples, columns = features.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Storage type for cohort features. Files hold float32, so cohorts do too;
/// this keeps save/load bit-exact.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Labels = std::vector<int>;
using IndexList = std::vector<std::size_t>;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (cohort files, label values, shapes).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during fitting (non-finite loss or objective).
class FitError : public Error {
public:
    using Error::Error;
};

/// Gathers rows of `X` listed in `rows`, in order.
Matrix take_rows(const Matrix& X, std::span<const std::size_t> rows);
Labels take_labels(std::span<const int> y, std::span<const std::size_t> rows);

/// Number of distinct values in `y`.
int count_distinct(std::span<const int> y);

}  // namespace ensemble
