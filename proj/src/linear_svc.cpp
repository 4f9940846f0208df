#include "ensemble/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ensemble {

void LinearSvcConfig::validate() const {
    if (!(C > 0.0)) throw ConfigError("linear SVC: C must be positive");
    if (!(tol > 0.0)) throw ConfigError("linear SVC: tol must be positive");
    if (max_iter < 1) throw ConfigError("linear SVC: max_iter must be at least 1");
}

double svc_objective(const Matrix& X, const Vector& y_pm, const Vector& w, double b, double C, Penalty penalty) {
    Vector margins = (X * w).array() + b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double r = 1.0 - y_pm[i] * margins[i];
        if (r > 0.0) loss += r * r;
    }
    double reg = penalty == Penalty::l2 ? 0.5 * (w.squaredNorm() + b * b) : w.lpNorm<1>() + std::abs(b);
    return reg + C * loss;
}

namespace {

constexpr double kSigma = 0.01;
constexpr int kMaxLineSearch = 30;

struct BinaryFit {
    Vector w;
    double b = 0.0;
    std::vector<double> trace;
};

// Primal coordinate descent with a one-dimensional Newton step and
// backtracking line search per coordinate. The intercept is coordinate p,
// whose column is all ones.
BinaryFit solve_binary(const Matrix& X, const Vector& y, const LinearSvcConfig& cfg) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    const double C = cfg.C;
    const bool l1 = cfg.penalty == Penalty::l1;

    Vector v = Vector::Zero(p + 1);
    Vector r = Vector::Ones(n);  // r_i = 1 - y_i (w.x_i + b)
    auto column = [&](Eigen::Index j, Eigen::Index i) { return j == p ? 1.0 : X(i, j); };

    std::vector<Eigen::Index> order(static_cast<std::size_t>(p + 1));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(0x5eedULL);

    BinaryFit fit;
    auto objective = [&]() {
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (r[i] > 0.0) loss += r[i] * r[i];
        }
        double reg = l1 ? v.lpNorm<1>() : 0.5 * v.squaredNorm();
        return reg + C * loss;
    };

    double pg_initial = -1.0;
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        std::shuffle(order.begin(), order.end(), rng);
        double pg_max = 0.0;
        for (auto j : order) {
            double g = 0.0;
            double h = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (r[i] > 0.0) {
                    double a = column(j, i);
                    g -= y[i] * a * r[i];
                    h += a * a;
                }
            }
            g *= 2.0 * C;
            h *= 2.0 * C;

            const double vj = v[j];
            double d = 0.0;
            double pg = 0.0;
            if (l1) {
                h += 1e-12;
                if (vj > 0.0) {
                    pg = g + 1.0;
                } else if (vj < 0.0) {
                    pg = g - 1.0;
                } else {
                    pg = std::max({g - 1.0, -g - 1.0, 0.0});
                }
                if (g + 1.0 <= h * vj) {
                    d = -(g + 1.0) / h;
                } else if (g - 1.0 >= h * vj) {
                    d = -(g - 1.0) / h;
                } else {
                    d = -vj;
                }
            } else {
                g += vj;
                h += 1.0;
                pg = g;
                d = -g / h;
            }
            pg_max = std::max(pg_max, std::abs(pg));
            if (std::abs(d) < 1e-14) continue;

            // Change in the loss part for a step z along coordinate j.
            auto loss_delta = [&](double z) {
                double delta = 0.0;
                if (j == p) {
                    for (Eigen::Index i = 0; i < n; ++i) {
                        double before = r[i] > 0.0 ? r[i] * r[i] : 0.0;
                        double ri = r[i] - y[i] * z;
                        double after = ri > 0.0 ? ri * ri : 0.0;
                        delta += after - before;
                    }
                } else {
                    const double* col = X.col(j).data();
                    for (Eigen::Index i = 0; i < n; ++i) {
                        double before = r[i] > 0.0 ? r[i] * r[i] : 0.0;
                        double ri = r[i] - y[i] * col[i] * z;
                        double after = ri > 0.0 ? ri * ri : 0.0;
                        delta += after - before;
                    }
                }
                return C * delta;
            };

            double step = 1.0;
            bool accepted = false;
            const double grad_loss = l1 ? g : g - vj;
            for (int ls = 0; ls < kMaxLineSearch; ++ls) {
                double z = step * d;
                double change;
                double bound;
                if (l1) {
                    change = std::abs(vj + z) - std::abs(vj) + loss_delta(z);
                    bound = kSigma * step * (grad_loss * d + std::abs(vj + d) - std::abs(vj));
                } else {
                    change = 0.5 * ((vj + z) * (vj + z) - vj * vj) + loss_delta(z);
                    bound = -kSigma * z * z;
                }
                if (change <= bound) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) continue;
            const double z = step * d;
            v[j] = vj + z;
            for (Eigen::Index i = 0; i < n; ++i) r[i] -= y[i] * column(j, i) * z;
        }

        double obj = objective();
        if (!std::isfinite(obj)) throw FitError("linear SVC: non-finite objective at iteration " + std::to_string(iter));
        fit.trace.push_back(obj);
        if (pg_initial < 0.0) pg_initial = pg_max;
        if (pg_max <= cfg.tol * std::max(pg_initial, 1e-12)) break;
    }
    fit.w = v.head(p);
    fit.b = v[p];
    return fit;
}

}  // namespace

TrainedModel fit_linear_svc(const Matrix& X, std::span<const int> y, int n_classes, const LinearSvcConfig& cfg) {
    cfg.validate();
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("linear SVC: X rows and label count differ");
    if (count_distinct(y) < 2) throw DataError("linear SVC: need at least 2 distinct classes in y");
    if (!X.allFinite()) throw DataError("linear SVC: non-finite feature values");

    LinearSvcModel model;
    model.penalty = cfg.penalty;
    model.weights = Matrix::Zero(n_classes, X.cols());
    model.bias = Vector::Zero(n_classes);
    for (int k = 0; k < n_classes; ++k) {
        Vector y_pm(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) y_pm[i] = y[static_cast<std::size_t>(i)] == k ? 1.0 : -1.0;
        BinaryFit f = solve_binary(X, y_pm, cfg);
        model.weights.row(k) = f.w.transpose();
        model.bias[k] = f.b;
        model.objective_trace.push_back(std::move(f.trace));
    }
    return TrainedModel(std::move(model), n_classes, static_cast<std::size_t>(X.cols()));
}

}  // namespace ensemble
