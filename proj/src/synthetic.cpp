#include "ensemble/synthetic.hpp"
#include "ensemble/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ensemble {

void SyntheticSpec::validate() const {
    if (n_subjects < 1) throw ConfigError("synthetic: n_subjects must be at least 1");
    if (n_classes < 2) throw ConfigError("synthetic: n_classes must be at least 2");
    if (n_samples_per_subject < n_classes) throw ConfigError("synthetic: n_samples_per_subject must be >= n_classes");
    if (n_features < n_classes) throw ConfigError("synthetic: n_features must be >= n_classes");
    if (!(class_separation >= 0.0)) throw ConfigError("synthetic: class_separation must be nonnegative");
    if (!(subject_shift >= 0.0 && subject_shift <= 1.0)) throw ConfigError("synthetic: subject_shift must lie in [0,1]");
    if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic: noise_sigma must be nonnegative");
}

SyntheticSpec default_synthetic_spec() {
    SyntheticSpec s;
    s.n_features = 64;
    s.class_separation = 4.0;
    s.subject_shift = 0.6;
    s.noise_sigma = 1.0;
    return s;
}

SyntheticSpec benchmark_spec() {
    SyntheticSpec s = default_synthetic_spec();
    s.n_subjects = 14;
    s.n_samples_per_subject = 120;
    s.n_classes = 4;
    s.subject_shift = 0.6;
    return s;
}

std::vector<std::string> table1_preset_names() { return {"neuromod", "aomic", "forrest", "bold5000", "rsvp-ibc"}; }

SyntheticSpec table1_preset(const std::string& name) {
    struct Shape {
        const char* name;
        std::size_t samples;
        std::size_t subjects;
        std::size_t classes;
    };
    static constexpr Shape shapes[] = {
        {"neuromod", 50, 4, 4},  {"aomic", 61, 203, 4},  {"forrest", 175, 10, 5},
        {"bold5000", 332, 3, 4}, {"rsvp-ibc", 360, 13, 6},
    };
    for (const auto& sh : shapes) {
        if (name == sh.name) {
            SyntheticSpec s = default_synthetic_spec();
            s.n_samples_per_subject = sh.samples;
            s.n_subjects = sh.subjects;
            s.n_classes = sh.classes;
            return s;
        }
    }
    throw ConfigError("unknown preset '" + name + "' (expected one of neuromod, aomic, forrest, bold5000, rsvp-ibc)");
}

SyntheticSpec preset(const std::string& name) {
    if (name == "benchmark") return benchmark_spec();
    return table1_preset(name);
}

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix M(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) M(r, c) = normal(rng);
    }
    return M;
}

// Orthonormal columns from the QR factor of a Gaussian matrix, with the sign
// convention that makes the result Haar distributed.
Matrix orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    Matrix G = gaussian_matrix(rows, cols, rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(rows, cols);
    const Matrix R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < cols; ++j) {
        if (R(j, j) < 0.0) Q.col(j) *= -1.0;
    }
    return Q;
}

}  // namespace

Matrix geodesic_rotation(Eigen::Index dim, double shift, std::uint64_t seed) {
    if (shift == 0.0) return Matrix::Identity(dim, dim);
    std::mt19937_64 rng(seed);
    // R(s) = V B(s * theta) V^T, with B block-diagonal plane rotations; this is
    // the geodesic exp(s A) from the identity to R(1).
    const Matrix V = orthonormal_columns(dim, dim, rng);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    Matrix B = Matrix::Identity(dim, dim);
    for (Eigen::Index j = 0; j + 1 < dim; j += 2) {
        const double th = shift * angle(rng);
        B(j, j) = std::cos(th);
        B(j, j + 1) = -std::sin(th);
        B(j + 1, j) = std::sin(th);
        B(j + 1, j + 1) = std::cos(th);
    }
    return V * B * V.transpose();
}

Matrix apply_subject_rotation(const Matrix& M, double shift, std::uint64_t seed) {
    if (shift == 0.0) return M;
    return geodesic_rotation(M.rows(), shift, seed) * M;
}

Matrix mix_class_means(const Matrix& means, double shift, std::uint64_t seed) {
    if (shift == 0.0) return means;
    Eigen::HouseholderQR<Matrix> qr(means);
    const Matrix Q = qr.householderQ() * Matrix::Identity(means.rows(), means.cols());
    const Matrix C = Q.transpose() * means;
    return Q * (geodesic_rotation(means.cols(), shift, seed) * C);
}

Cohort generate_cohort(const SyntheticSpec& spec) {
    spec.validate();
    const auto p = static_cast<Eigen::Index>(spec.n_features);
    const auto K = static_cast<Eigen::Index>(spec.n_classes);

    std::mt19937_64 master(spec.seed);
    const Matrix means = orthonormal_columns(p, K, master) * (spec.class_separation / std::numbers::sqrt2);

    std::vector<std::string> classes;
    for (Eigen::Index k = 0; k < K; ++k) classes.push_back("class" + std::to_string(k));

    const std::size_t width = std::max<std::size_t>(2, std::to_string(spec.n_subjects).size());
    std::vector<SubjectDataset> subjects;
    subjects.reserve(spec.n_subjects);
    for (std::size_t i = 0; i < spec.n_subjects; ++i) {
        std::string num = std::to_string(i + 1);
        num.insert(0, width - num.size(), '0');
        SubjectDataset ds;
        ds.subject_id = "sub-" + num;

        const Matrix subject_means =
            mix_class_means(means, spec.subject_shift, derive_seed(spec.seed, "rotation/" + std::to_string(i)));

        std::mt19937_64 rng(derive_seed(spec.seed, "samples/" + std::to_string(i)));
        const std::size_t n = spec.n_samples_per_subject;
        ds.labels.resize(n);
        for (std::size_t r = 0; r < n; ++r) ds.labels[r] = static_cast<int>(r % spec.n_classes);
        std::shuffle(ds.labels.begin(), ds.labels.end(), rng);

        std::normal_distribution<double> normal(0.0, 1.0);
        ds.features.resize(static_cast<Eigen::Index>(n), p);
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            for (Eigen::Index c = 0; c < p; ++c) {
                const double v = subject_means(c, ds.labels[r]) + spec.noise_sigma * normal(rng);
                ds.features(row, c) = static_cast<float>(v);
            }
        }
        subjects.push_back(std::move(ds));
    }
    return Cohort(std::move(subjects), LabelSpace(std::move(classes)), spec.n_features);
}

}  // namespace ensemble
