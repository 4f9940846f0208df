#include "ensemble/hashing.hpp"
#include "ensemble/learners.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <exception>
#include <numeric>
#include <random>

namespace ensemble {

void ForestConfig::validate() const {
    if (n_trees < 1) throw ConfigError("forest: n_trees must be at least 1");
    if (max_features < 0) throw ConfigError("forest: max_features must be nonnegative");
    if (min_samples_split < 2) throw ConfigError("forest: min_samples_split must be at least 2");
}

double gini_impurity(std::span<const int> labels, int n_classes) {
    if (labels.empty()) return 0.0;
    std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
    for (int l : labels) counts[static_cast<std::size_t>(l)] += 1.0;
    const auto n = static_cast<double>(labels.size());
    double sum_sq = 0.0;
    for (double c : counts) sum_sq += (c / n) * (c / n);
    return 1.0 - sum_sq;
}

int DecisionTree::predict_row(const double* row, Eigen::Index stride) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(node)];
        node = row[nd.feature * stride] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(node)].label;
}

int DecisionTree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& nd = nodes[i];
        if (nd.feature >= 0) {
            d[static_cast<std::size_t>(nd.left)] = d[i] + 1;
            d[static_cast<std::size_t>(nd.right)] = d[i] + 1;
        }
        best = std::max(best, d[i]);
    }
    return best;
}

namespace {

double gini_from_counts(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double s = 0.0;
    for (double c : counts) s += (c / total) * (c / total);
    return 1.0 - s;
}

struct TreeBuilder {
    const Matrix& X;
    std::span<const int> y;
    int n_classes;
    int max_features;
    int min_samples_split;
    std::mt19937_64 rng;

    DecisionTree tree;
    Vector importance;

    struct Candidate {
        int feature = -1;
        double threshold = 0.0;
        double child_impurity = std::numeric_limits<double>::infinity();  // weighted sum n_l*g_l + n_r*g_r
    };

    int majority(const std::vector<double>& counts) const {
        int best = 0;
        for (int k = 1; k < n_classes; ++k) {
            if (counts[static_cast<std::size_t>(k)] > counts[static_cast<std::size_t>(best)]) best = k;
        }
        return best;
    }

    // Evaluates every threshold of one feature over the node's rows.
    void scan_feature(int f, const std::vector<std::size_t>& rows, Candidate& best) {
        std::vector<std::pair<double, int>> vals;
        vals.reserve(rows.size());
        for (auto r : rows) vals.emplace_back(X(static_cast<Eigen::Index>(r), f), y[r]);
        std::sort(vals.begin(), vals.end());
        std::vector<double> left(static_cast<std::size_t>(n_classes), 0.0);
        std::vector<double> right(static_cast<std::size_t>(n_classes), 0.0);
        for (const auto& v : vals) right[static_cast<std::size_t>(v.second)] += 1.0;
        const auto total = static_cast<double>(vals.size());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            left[static_cast<std::size_t>(vals[i].second)] += 1.0;
            right[static_cast<std::size_t>(vals[i].second)] -= 1.0;
            if (vals[i].first == vals[i + 1].first) continue;
            const auto nl = static_cast<double>(i + 1);
            const double nr = total - nl;
            const double score = nl * gini_from_counts(left, nl) + nr * gini_from_counts(right, nr);
            if (score < best.child_impurity - 1e-12) {
                best.feature = f;
                best.child_impurity = score;
                double mid = 0.5 * (vals[i].first + vals[i + 1].first);
                // Guard against the midpoint rounding onto the right value.
                best.threshold = mid < vals[i + 1].first ? mid : vals[i].first;
            }
        }
    }

    bool is_constant(int f, const std::vector<std::size_t>& rows) const {
        const double first = X(static_cast<Eigen::Index>(rows.front()), f);
        for (auto r : rows) {
            if (X(static_cast<Eigen::Index>(r), f) != first) return false;
        }
        return true;
    }

    int build(std::vector<std::size_t> rows) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
        for (auto r : rows) counts[static_cast<std::size_t>(y[r])] += 1.0;
        const auto n = static_cast<double>(rows.size());
        const double impurity = gini_from_counts(counts, n);
        tree.nodes[static_cast<std::size_t>(id)].label = majority(counts);
        if (impurity <= 0.0 || rows.size() < static_cast<std::size_t>(min_samples_split)) return id;

        std::vector<int> features(static_cast<std::size_t>(X.cols()));
        std::iota(features.begin(), features.end(), 0);
        std::shuffle(features.begin(), features.end(), rng);
        Candidate best;
        int visited = 0;
        for (int f : features) {
            if (visited >= max_features) break;
            if (is_constant(f, rows)) continue;
            ++visited;
            scan_feature(f, rows, best);
        }
        if (best.feature < 0) return id;

        std::vector<std::size_t> left_rows;
        std::vector<std::size_t> right_rows;
        for (auto r : rows) {
            (X(static_cast<Eigen::Index>(r), best.feature) <= best.threshold ? left_rows : right_rows).push_back(r);
        }
        importance[best.feature] += n * impurity - best.child_impurity;
        rows.clear();
        rows.shrink_to_fit();

        const int left = build(std::move(left_rows));
        const int right = build(std::move(right_rows));
        auto& nd = tree.nodes[static_cast<std::size_t>(id)];
        nd.feature = best.feature;
        nd.threshold = best.threshold;
        nd.left = left;
        nd.right = right;
        return id;
    }
};

struct TreeResult {
    DecisionTree tree;
    Vector importance;
};

TreeResult grow_tree(const Matrix& X, std::span<const int> y, int n_classes, const ForestConfig& cfg,
                     int max_features, std::uint64_t seed) {
    TreeBuilder b{X, y, n_classes, max_features, cfg.min_samples_split, std::mt19937_64(seed), {}, Vector::Zero(X.cols())};
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<std::size_t> rows(n);
    if (cfg.bootstrap) {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (auto& r : rows) r = pick(b.rng);
    } else {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    b.build(std::move(rows));
    double total = b.importance.sum();
    if (total > 0.0) b.importance /= total;
    return {std::move(b.tree), std::move(b.importance)};
}

}  // namespace

TrainedModel fit_forest(const Matrix& X, std::span<const int> y, int n_classes, const ForestConfig& cfg, int workers) {
    cfg.validate();
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("forest: X rows and label count differ");
    if (count_distinct(y) < 2) throw DataError("forest: need at least 2 distinct classes in y");
    if (!X.allFinite()) throw DataError("forest: non-finite feature values");
    const int max_features =
        cfg.max_features > 0 ? cfg.max_features
                             : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(X.cols())))));

    std::vector<TreeResult> results(static_cast<std::size_t>(cfg.n_trees));
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (int t = 0; t < cfg.n_trees; ++t) {
        try {
            results[static_cast<std::size_t>(t)] =
                grow_tree(X, y, n_classes, cfg, max_features, derive_seed(cfg.seed, "tree/" + std::to_string(t)));
        } catch (...) {
#pragma omp critical
            failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    ForestModel model;
    model.importances = Vector::Zero(X.cols());
    for (auto& r : results) {
        model.importances += r.importance;
        model.trees.push_back(std::move(r.tree));
    }
    const double total = model.importances.sum();
    if (total > 0.0) model.importances /= total;
    return TrainedModel(std::move(model), n_classes, static_cast<std::size_t>(X.cols()));
}

}  // namespace ensemble
