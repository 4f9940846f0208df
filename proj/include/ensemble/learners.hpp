#pragma once

#include "ensemble/common.hpp"

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace ensemble {

enum class Penalty { l1, l2 };
enum class Family { linear_svc, mlp, forest };

std::string to_string(Penalty p);
std::string to_string(Family f);
Penalty parse_penalty(const std::string& s);
/// Accepts "svc", "linear_svc", "mlp", "forest".
Family parse_family(const std::string& s);

/// One-vs-rest linear SVC with squared hinge loss. The intercept is treated
/// as an extra constant feature and is penalized like the weights.
struct LinearSvcConfig {
    Penalty penalty = Penalty::l2;
    double C = 1.0;
    double tol = 1e-4;
    int max_iter = 1000;

    void validate() const;
};

/// Fully connected ReLU network with a softmax output, trained with Adam.
/// Training stops early once the epoch loss has failed to improve by `tol`
/// for more than `n_iter_no_change` consecutive epochs.
struct MlpConfig {
    std::vector<int> hidden_layers{100};
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double alpha = 1e-4;  ///< L2 penalty on weights
    int max_iter = 1000;  ///< epochs
    int batch_size = 200; ///< effective size is min(batch_size, n_samples)
    double tol = 1e-4;
    int n_iter_no_change = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Random forest of unpruned Gini CART trees.
struct ForestConfig {
    int n_trees = 500;
    bool bootstrap = true;
    int max_features = 0;  ///< 0 selects floor(sqrt(n_features))
    int min_samples_split = 2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RidgeConfig {
    double lambda = 1.0;
};

using ClassifierConfig = std::variant<LinearSvcConfig, MlpConfig, ForestConfig>;

Family family_of(const ClassifierConfig& cfg);

// ------------------------------------------------------------ fitted params

struct LinearSvcModel {
    Matrix weights;  ///< K x n_features
    Vector bias;     ///< K
    Penalty penalty = Penalty::l2;
    /// Objective value after each outer pass, one trace per class.
    std::vector<std::vector<double>> objective_trace;
};

struct MlpNetwork {
    std::vector<Matrix> weights;  ///< layer l maps width[l] -> width[l+1]
    std::vector<Vector> biases;
};

struct MlpModel {
    MlpNetwork network;
    std::vector<double> loss_curve;
};

struct TreeNode {
    int feature = -1;  ///< -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;  ///< majority class of the training rows reaching this node
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    int predict_row(const double* row, Eigen::Index stride) const;
    int depth() const;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    Vector importances;  ///< mean decrease in impurity, normalized to sum 1
};

/// Immutable fitted classifier.
class TrainedModel {
public:
    using Params = std::variant<LinearSvcModel, MlpModel, ForestModel>;

    TrainedModel(Params params, int n_classes, std::size_t n_features);

    Family family() const;
    int n_classes() const { return n_classes_; }
    std::size_t n_features() const { return n_features_; }
    const Params& params() const { return params_; }

    /// Per-class scores: margins (SVC), softmax probabilities (MLP) or vote
    /// fractions (forest).
    Matrix decision_scores(const Matrix& X) const;
    /// argmax of decision_scores, ties resolved toward the lowest class.
    Labels predict(const Matrix& X) const;
    /// Plain accuracy on (X, y).
    double score(const Matrix& X, std::span<const int> y) const;

    void serialize(std::ostream& out) const;
    static TrainedModel deserialize(std::istream& in);

private:
    void check_dims(const Matrix& X) const;

    Params params_;
    int n_classes_;
    std::size_t n_features_;
};

struct RidgeFit {
    Vector coefficients;
    double lambda = 0.0;
    bool used_pseudo_inverse = false;

    Vector predict(const Matrix& X) const;
};

/// Per-column centering and scaling fitted on training rows.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Matrix& X);
    Matrix transform(const Matrix& X) const;

    void serialize(std::ostream& out) const;
    static Standardizer deserialize(std::istream& in);
};

// ----------------------------------------------------------------- fitting

/// `n_classes` is the size of the label space; labels must lie in 0..K-1 and
/// at least two distinct labels must be present.
TrainedModel fit_linear_svc(const Matrix& X, std::span<const int> y, int n_classes, const LinearSvcConfig& cfg);
TrainedModel fit_mlp(const Matrix& X, std::span<const int> y, int n_classes, const MlpConfig& cfg);
/// Trees are built on up to `workers` OpenMP threads; results do not depend on
/// the worker count.
TrainedModel fit_forest(const Matrix& X, std::span<const int> y, int n_classes, const ForestConfig& cfg,
                        int workers = 1);
TrainedModel fit_classifier(const Matrix& X, std::span<const int> y, int n_classes, const ClassifierConfig& cfg,
                            int workers = 1);

/// Solves (X^T X + lambda I) w = X^T y. With lambda = 0 and a rank-deficient
/// design, returns the minimum-norm least-squares solution instead.
RidgeFit fit_ridge(const Matrix& X, const Vector& y, const RidgeConfig& cfg);

/// K x n_features weights for linear SVC; 1 x n_features importances for a
/// forest. Throws ConfigError for an MLP.
Matrix feature_weights(const TrainedModel& model);

// ---------------------------------------------------------- exposed kernels

/// Squared-hinge primal objective of one binary problem, labels in {-1,+1}.
double svc_objective(const Matrix& X, const Vector& y_pm, const Vector& w, double b, double C, Penalty penalty);

/// Gini impurity of a label multiset over K classes.
double gini_impurity(std::span<const int> labels, int n_classes);

/// Glorot-uniform initialization of a network with the given layer widths.
MlpNetwork init_mlp(const std::vector<int>& widths, std::uint64_t seed);
/// Softmax outputs of the network, rows x K.
Matrix mlp_forward(const MlpNetwork& net, const Matrix& X);
/// Mean cross-entropy plus alpha/(2n) * sum of squared weights. When `grad`
/// is non-null it receives the gradient with the same shapes as `net`.
double mlp_loss_and_gradient(const MlpNetwork& net, const Matrix& X, const Matrix& Y_onehot, double alpha,
                             MlpNetwork* grad);

/// One-hot encoding, rows x K.
Matrix one_hot(std::span<const int> y, int n_classes);

}  // namespace ensemble
