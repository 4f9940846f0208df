#include "ensemble/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace ensemble {

void MlpConfig::validate() const {
    if (hidden_layers.empty()) throw ConfigError("MLP: at least one hidden layer is required");
    for (int h : hidden_layers) {
        if (h < 1) throw ConfigError("MLP: hidden layer widths must be at least 1");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("MLP: learning rate must be positive");
    if (max_iter < 1) throw ConfigError("MLP: max_iter must be at least 1");
    if (batch_size < 1) throw ConfigError("MLP: batch_size must be at least 1");
    if (alpha < 0.0) throw ConfigError("MLP: alpha must be nonnegative");
}

Matrix one_hot(std::span<const int> y, int n_classes) {
    Matrix Y = Matrix::Zero(static_cast<Eigen::Index>(y.size()), n_classes);
    for (std::size_t i = 0; i < y.size(); ++i) Y(static_cast<Eigen::Index>(i), y[i]) = 1.0;
    return Y;
}

MlpNetwork init_mlp(const std::vector<int>& widths, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MlpNetwork net;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l + 1]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix W(widths[l], widths[l + 1]);
        for (Eigen::Index c = 0; c < W.cols(); ++c) {
            for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = dist(rng);
        }
        Vector b(widths[l + 1]);
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = dist(rng);
        net.weights.push_back(std::move(W));
        net.biases.push_back(std::move(b));
    }
    return net;
}

namespace {

void softmax_rows(Matrix& Z) {
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        double mx = Z.row(i).maxCoeff();
        Z.row(i) = (Z.row(i).array() - mx).exp();
        Z.row(i) /= Z.row(i).sum();
    }
}

}  // namespace

Matrix mlp_forward(const MlpNetwork& net, const Matrix& X) {
    Matrix A = X;
    const std::size_t L = net.weights.size();
    for (std::size_t l = 0; l < L; ++l) {
        Matrix Z = A * net.weights[l];
        Z.rowwise() += net.biases[l].transpose();
        if (l + 1 < L) {
            A = Z.cwiseMax(0.0);
        } else {
            softmax_rows(Z);
            A = std::move(Z);
        }
    }
    return A;
}

double mlp_loss_and_gradient(const MlpNetwork& net, const Matrix& X, const Matrix& Y, double alpha, MlpNetwork* grad) {
    const std::size_t L = net.weights.size();
    const auto n = static_cast<double>(X.rows());
    std::vector<Matrix> activations;
    activations.reserve(L + 1);
    activations.push_back(X);
    for (std::size_t l = 0; l < L; ++l) {
        Matrix Z = activations.back() * net.weights[l];
        Z.rowwise() += net.biases[l].transpose();
        if (l + 1 < L) {
            activations.push_back(Z.cwiseMax(0.0));
        } else {
            softmax_rows(Z);
            activations.push_back(std::move(Z));
        }
    }
    const Matrix& P = activations.back();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        for (Eigen::Index k = 0; k < P.cols(); ++k) {
            if (Y(i, k) > 0.0) loss -= Y(i, k) * std::log(std::max(P(i, k), 1e-300));
        }
    }
    loss /= n;
    double sq = 0.0;
    for (const auto& W : net.weights) sq += W.squaredNorm();
    loss += 0.5 * alpha * sq / n;

    if (grad != nullptr) {
        grad->weights.resize(L);
        grad->biases.resize(L);
        Matrix delta = (P - Y) / n;
        for (std::size_t l = L; l-- > 0;) {
            grad->weights[l] = activations[l].transpose() * delta + (alpha / n) * net.weights[l];
            grad->biases[l] = delta.colwise().sum().transpose();
            if (l > 0) {
                Matrix back = delta * net.weights[l].transpose();
                // ReLU derivative: activations[l] > 0 exactly where the pre-activation was positive.
                delta = back.cwiseProduct((activations[l].array() > 0.0).cast<double>().matrix());
            }
        }
    }
    return loss;
}

TrainedModel fit_mlp(const Matrix& X, std::span<const int> y, int n_classes, const MlpConfig& cfg) {
    cfg.validate();
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("MLP: X rows and label count differ");
    if (count_distinct(y) < 2) throw DataError("MLP: need at least 2 distinct classes in y");
    if (!X.allFinite()) throw DataError("MLP: non-finite feature values");

    std::vector<int> widths;
    widths.push_back(static_cast<int>(X.cols()));
    widths.insert(widths.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
    widths.push_back(n_classes);

    std::mt19937_64 rng(cfg.seed);
    MlpNetwork net = init_mlp(widths, rng());
    const std::size_t L = net.weights.size();

    // Adam moments, same shapes as the parameters.
    MlpNetwork m1;
    MlpNetwork m2;
    for (std::size_t l = 0; l < L; ++l) {
        m1.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        m1.biases.push_back(Vector::Zero(net.biases[l].size()));
    }
    m2 = m1;

    const Matrix Y = one_hot(y, n_classes);
    const auto n = static_cast<std::size_t>(X.rows());
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
    const bool full_batch = batch == n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    MlpModel model;
    double best_loss = std::numeric_limits<double>::infinity();
    int no_improvement = 0;
    long step = 0;
    MlpNetwork grad;
    for (int epoch = 0; epoch < cfg.max_iter; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(start + batch, n);
            double batch_loss;
            if (full_batch) {
                batch_loss = mlp_loss_and_gradient(net, X, Y, cfg.alpha, &grad);
            } else {
                std::span<const std::size_t> rows(order.data() + start, stop - start);
                batch_loss = mlp_loss_and_gradient(net, take_rows(X, rows), take_rows(Y, rows), cfg.alpha, &grad);
            }
            epoch_loss += batch_loss * static_cast<double>(stop - start);

            ++step;
            const double t = static_cast<double>(step);
            const double lr = cfg.learning_rate * std::sqrt(1.0 - std::pow(cfg.beta2, t)) /
                              (1.0 - std::pow(cfg.beta1, t));
            auto adam = [&](auto& param, auto& g, auto& mom1, auto& mom2) {
                mom1 = cfg.beta1 * mom1 + (1.0 - cfg.beta1) * g;
                mom2 = cfg.beta2 * mom2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
                param.array() -= lr * mom1.array() / (mom2.array().sqrt() + cfg.epsilon);
            };
            for (std::size_t l = 0; l < L; ++l) {
                adam(net.weights[l], grad.weights[l], m1.weights[l], m2.weights[l]);
                adam(net.biases[l], grad.biases[l], m1.biases[l], m2.biases[l]);
            }
        }
        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) {
            throw FitError("MLP: non-finite loss at iteration " + std::to_string(epoch + 1));
        }
        model.loss_curve.push_back(epoch_loss);

        if (epoch_loss > best_loss - cfg.tol) {
            ++no_improvement;
        } else {
            no_improvement = 0;
        }
        best_loss = std::min(best_loss, epoch_loss);
        if (no_improvement > cfg.n_iter_no_change) break;
    }
    model.network = std::move(net);
    return TrainedModel(std::move(model), n_classes, static_cast<std::size_t>(X.cols()));
}

}  // namespace ensemble
