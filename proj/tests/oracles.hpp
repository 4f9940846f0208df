#pragma once

// Independent reference computations used as test oracles. None of these
// call into the library's solvers.

#include "ensemble/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using ensemble::Matrix;
using ensemble::Vector;

inline double sq_hinge_l2(const Matrix& X, const Vector& y, double w0, double w1, double b, double C) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double r = 1.0 - y(i) * (w0 * X(i, 0) + w1 * X(i, 1) + b);
        if (r > 0.0) loss += r * r;
    }
    return 0.5 * (w0 * w0 + w1 * w1 + b * b) + C * loss;
}

/// Exhaustive search of (w0, w1, b) over [-3, 3]^3 at the given step.
inline std::array<double, 3> svc_grid_search(const Matrix& X, const Vector& y, double C, double step = 0.05) {
    std::array<double, 3> best{0, 0, 0};
    double best_obj = std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(std::lround(6.0 / step));
    for (int i = 0; i <= n; ++i) {
        const double w0 = -3.0 + i * step;
        for (int j = 0; j <= n; ++j) {
            const double w1 = -3.0 + j * step;
            for (int k = 0; k <= n; ++k) {
                const double b = -3.0 + k * step;
                const double obj = sq_hinge_l2(X, y, w0, w1, b, C);
                if (obj < best_obj) {
                    best_obj = obj;
                    best = {w0, w1, b};
                }
            }
        }
    }
    return best;
}

/// Proximal gradient (ISTA) on |[w; b]|_1 + C * sum squared hinge.
inline Vector ista_l1_svc(const Matrix& X, const Vector& y, double C, int iters = 20000) {
    const Eigen::Index p = X.cols();
    Matrix Xa(X.rows(), p + 1);
    Xa.leftCols(p) = X;
    Xa.col(p).setOnes();
    // Lipschitz constant of the smooth part: 2C * sigma_max(Xa)^2.
    Eigen::JacobiSVD<Matrix> svd(Xa);
    const double L = 2.0 * C * svd.singularValues()(0) * svd.singularValues()(0);
    const double t = 1.0 / L;
    Vector w = Vector::Zero(p + 1);
    for (int it = 0; it < iters; ++it) {
        const Vector m = Xa * w;
        Vector g = Vector::Zero(p + 1);
        for (Eigen::Index i = 0; i < Xa.rows(); ++i) {
            const double r = 1.0 - y(i) * m(i);
            if (r > 0.0) g -= 2.0 * C * r * y(i) * Xa.row(i).transpose();
        }
        Vector z = w - t * g;
        for (Eigen::Index j = 0; j <= p; ++j) {
            const double a = std::abs(z(j)) - t;
            w(j) = a > 0.0 ? std::copysign(a, z(j)) : 0.0;
        }
    }
    return w;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    auto p = std::filesystem::temp_directory_path() / ("ensemble_test_" + tag + "_" + std::to_string(rng() % 1000000000));
    std::filesystem::create_directories(p);
    return p;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace oracle
