#include "ensemble/learners.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace ensemble {

std::string to_string(Penalty p) { return p == Penalty::l1 ? "l1" : "l2"; }

std::string to_string(Family f) {
    switch (f) {
        case Family::linear_svc: return "svc";
        case Family::mlp: return "mlp";
        case Family::forest: return "forest";
    }
    return "unknown";
}

Penalty parse_penalty(const std::string& s) {
    if (s == "l1") return Penalty::l1;
    if (s == "l2") return Penalty::l2;
    throw ConfigError("unknown penalty '" + s + "' (expected l1 or l2)");
}

Family parse_family(const std::string& s) {
    if (s == "svc" || s == "linear_svc" || s == "linearsvc") return Family::linear_svc;
    if (s == "mlp") return Family::mlp;
    if (s == "forest" || s == "random_forest" || s == "rf") return Family::forest;
    throw ConfigError("unknown classifier family '" + s + "' (expected svc, mlp or forest)");
}

Family family_of(const ClassifierConfig& cfg) {
    return static_cast<Family>(cfg.index());
}

// -------------------------------------------------------------- TrainedModel

TrainedModel::TrainedModel(Params params, int n_classes, std::size_t n_features)
    : params_(std::move(params)), n_classes_(n_classes), n_features_(n_features) {
    if (n_classes_ < 2) throw ConfigError("model: n_classes must be at least 2");
}

Family TrainedModel::family() const { return static_cast<Family>(params_.index()); }

void TrainedModel::check_dims(const Matrix& X) const {
    if (static_cast<std::size_t>(X.cols()) != n_features_) {
        throw DataError("model expects " + std::to_string(n_features_) + " features, got " +
                        std::to_string(X.cols()));
    }
}

Matrix TrainedModel::decision_scores(const Matrix& X) const {
    check_dims(X);
    if (const auto* svc = std::get_if<LinearSvcModel>(&params_)) {
        Matrix S = X * svc->weights.transpose();
        S.rowwise() += svc->bias.transpose();
        return S;
    }
    if (const auto* mlp = std::get_if<MlpModel>(&params_)) {
        return mlp_forward(mlp->network, X);
    }
    const auto& forest = std::get<ForestModel>(params_);
    Matrix S = Matrix::Zero(X.rows(), n_classes_);
    const Eigen::Index stride = X.rows();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double* row = X.data() + i;
        for (const auto& tree : forest.trees) S(i, tree.predict_row(row, stride)) += 1.0;
    }
    S /= static_cast<double>(forest.trees.size());
    return S;
}

Labels TrainedModel::predict(const Matrix& X) const {
    const Matrix S = decision_scores(X);
    Labels out(static_cast<std::size_t>(S.rows()));
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        int best = 0;
        for (Eigen::Index k = 1; k < S.cols(); ++k) {
            if (S(i, k) > S(i, best)) best = static_cast<int>(k);
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

double TrainedModel::score(const Matrix& X, std::span<const int> y) const {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("score: X rows and label count differ");
    if (y.empty()) throw DataError("score: empty input");
    const Labels pred = predict(X);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(y.size());
}

// ------------------------------------------------------------- serialization

namespace {

constexpr char kModelMagic[4] = {'E', 'N', 'S', 'M'};
constexpr std::uint32_t kModelVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw DataError("model blob: truncated");
    return v;
}

void put_matrix(std::ostream& out, const Matrix& m) {
    put(out, static_cast<std::uint64_t>(m.rows()));
    put(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix get_matrix(std::istream& in) {
    auto rows = get<std::uint64_t>(in);
    auto cols = get<std::uint64_t>(in);
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw DataError("model blob: implausible matrix shape");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw DataError("model blob: truncated matrix");
    return m;
}

void put_vector(std::ostream& out, const Vector& v) { put_matrix(out, Matrix(v)); }

Vector get_vector(std::istream& in) {
    Matrix m = get_matrix(in);
    if (m.cols() != 1) throw DataError("model blob: expected a column vector");
    return m.col(0);
}

}  // namespace

void TrainedModel::serialize(std::ostream& out) const {
    out.write(kModelMagic, 4);
    put(out, kModelVersion);
    put(out, static_cast<std::uint8_t>(params_.index()));
    put(out, static_cast<std::int32_t>(n_classes_));
    put(out, static_cast<std::uint64_t>(n_features_));
    if (const auto* svc = std::get_if<LinearSvcModel>(&params_)) {
        put(out, static_cast<std::uint8_t>(svc->penalty));
        put_matrix(out, svc->weights);
        put_vector(out, svc->bias);
    } else if (const auto* mlp = std::get_if<MlpModel>(&params_)) {
        put(out, static_cast<std::uint32_t>(mlp->network.weights.size()));
        for (std::size_t l = 0; l < mlp->network.weights.size(); ++l) {
            put_matrix(out, mlp->network.weights[l]);
            put_vector(out, mlp->network.biases[l]);
        }
    } else {
        const auto& forest = std::get<ForestModel>(params_);
        put_vector(out, forest.importances);
        put(out, static_cast<std::uint32_t>(forest.trees.size()));
        for (const auto& tree : forest.trees) {
            put(out, static_cast<std::uint32_t>(tree.nodes.size()));
            for (const auto& nd : tree.nodes) {
                put(out, static_cast<std::int32_t>(nd.feature));
                put(out, nd.threshold);
                put(out, static_cast<std::int32_t>(nd.left));
                put(out, static_cast<std::int32_t>(nd.right));
                put(out, static_cast<std::int32_t>(nd.label));
            }
        }
    }
    if (!out) throw Error("model blob: write failed");
}

TrainedModel TrainedModel::deserialize(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kModelMagic, 4) != 0) throw DataError("model blob: bad magic");
    auto version = get<std::uint32_t>(in);
    if (version != kModelVersion) throw DataError("model blob: unsupported version " + std::to_string(version));
    auto family = get<std::uint8_t>(in);
    auto n_classes = get<std::int32_t>(in);
    auto n_features = get<std::uint64_t>(in);
    switch (family) {
        case 0: {
            LinearSvcModel svc;
            svc.penalty = static_cast<Penalty>(get<std::uint8_t>(in));
            svc.weights = get_matrix(in);
            svc.bias = get_vector(in);
            return TrainedModel(std::move(svc), n_classes, n_features);
        }
        case 1: {
            MlpModel mlp;
            auto layers = get<std::uint32_t>(in);
            for (std::uint32_t l = 0; l < layers; ++l) {
                mlp.network.weights.push_back(get_matrix(in));
                mlp.network.biases.push_back(get_vector(in));
            }
            return TrainedModel(std::move(mlp), n_classes, n_features);
        }
        case 2: {
            ForestModel forest;
            forest.importances = get_vector(in);
            auto n_trees = get<std::uint32_t>(in);
            for (std::uint32_t t = 0; t < n_trees; ++t) {
                DecisionTree tree;
                auto n_nodes = get<std::uint32_t>(in);
                tree.nodes.resize(n_nodes);
                for (auto& nd : tree.nodes) {
                    nd.feature = get<std::int32_t>(in);
                    nd.threshold = get<double>(in);
                    nd.left = get<std::int32_t>(in);
                    nd.right = get<std::int32_t>(in);
                    nd.label = get<std::int32_t>(in);
                }
                forest.trees.push_back(std::move(tree));
            }
            return TrainedModel(std::move(forest), n_classes, n_features);
        }
        default: throw DataError("model blob: unknown family tag " + std::to_string(family));
    }
}

// -------------------------------------------------------------- Standardizer

Standardizer Standardizer::fit(const Matrix& X) {
    if (X.rows() == 0) throw DataError("standardizer: no rows");
    Standardizer s;
    s.mean = X.colwise().mean().transpose();
    s.scale.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double var = (X.col(j).array() - s.mean[j]).square().mean();
        double sd = std::sqrt(var);
        s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Matrix Standardizer::transform(const Matrix& X) const {
    if (X.cols() != mean.size()) throw DataError("standardizer: feature count mismatch");
    Matrix out = X.rowwise() - mean.transpose();
    out.array().rowwise() /= scale.transpose().array();
    return out;
}

void Standardizer::serialize(std::ostream& out) const {
    put_vector(out, mean);
    put_vector(out, scale);
}

Standardizer Standardizer::deserialize(std::istream& in) {
    Standardizer s;
    s.mean = get_vector(in);
    s.scale = get_vector(in);
    return s;
}

// ---------------------------------------------------------------- dispatch

TrainedModel fit_classifier(const Matrix& X, std::span<const int> y, int n_classes, const ClassifierConfig& cfg,
                            int workers) {
    if (const auto* svc = std::get_if<LinearSvcConfig>(&cfg)) return fit_linear_svc(X, y, n_classes, *svc);
    if (const auto* mlp = std::get_if<MlpConfig>(&cfg)) return fit_mlp(X, y, n_classes, *mlp);
    return fit_forest(X, y, n_classes, std::get<ForestConfig>(cfg), workers);
}

Matrix feature_weights(const TrainedModel& model) {
    if (const auto* svc = std::get_if<LinearSvcModel>(&model.params())) return svc->weights;
    if (const auto* forest = std::get_if<ForestModel>(&model.params())) return forest->importances.transpose();
    throw ConfigError("feature_weights: not available for the " + to_string(model.family()) + " family");
}

// --------------------------------------------------------------------- ridge

RidgeFit fit_ridge(const Matrix& X, const Vector& y, const RidgeConfig& cfg) {
    if (cfg.lambda < 0.0) throw ConfigError("ridge: lambda must be nonnegative");
    if (X.rows() < 1) throw DataError("ridge: need at least one row");
    if (X.rows() != y.size()) throw DataError("ridge: X rows and target length differ");
    RidgeFit fit;
    fit.lambda = cfg.lambda;
    if (cfg.lambda > 0.0 && X.rows() < X.cols()) {
        // Wide design: w = X^T (X X^T + lambda I)^-1 y, same solution, smaller system.
        Matrix G = X * X.transpose();
        G.diagonal().array() += cfg.lambda;
        fit.coefficients = X.transpose() * G.llt().solve(y);
        return fit;
    }
    Matrix A = X.transpose() * X;
    A.diagonal().array() += cfg.lambda;
    const Vector rhs = X.transpose() * y;
    if (cfg.lambda > 0.0) {
        fit.coefficients = A.llt().solve(rhs);
        return fit;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    if (qr.rank() == X.cols()) {
        fit.coefficients = A.ldlt().solve(rhs);
    } else {
        fit.coefficients = Eigen::CompleteOrthogonalDecomposition<Matrix>(X).solve(y);
        fit.used_pseudo_inverse = true;
    }
    return fit;
}

Vector RidgeFit::predict(const Matrix& X) const {
    if (X.cols() != coefficients.size()) throw DataError("ridge: feature count mismatch");
    return X * coefficients;
}

}  // namespace ensemble
