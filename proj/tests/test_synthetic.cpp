#include "ensemble/learners.hpp"
#include "ensemble/synthetic.hpp"

#include <doctest.h>

#include <map>

using namespace ensemble;

namespace {

SyntheticSpec small_spec(std::size_t subjects, double shift, double noise, std::uint64_t seed) {
    SyntheticSpec s;
    s.n_subjects = subjects;
    s.n_samples_per_subject = 40;
    s.n_features = 12;
    s.n_classes = 4;
    s.class_separation = 4.0;
    s.subject_shift = shift;
    s.noise_sigma = noise;
    s.seed = seed;
    return s;
}

std::map<int, Vector> class_means(const SubjectDataset& ds) {
    std::map<int, Vector> sums;
    std::map<int, double> counts;
    const Matrix X = ds.as_matrix();
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        auto& s = sums[ds.labels[r]];
        if (s.size() == 0) s = Vector::Zero(X.cols());
        s += X.row(static_cast<Eigen::Index>(r)).transpose();
        counts[ds.labels[r]] += 1.0;
    }
    for (auto& [k, v] : sums) v /= counts[k];
    return sums;
}

double transfer_accuracy(const Cohort& c) {
    const auto& a = c.subjects()[0];
    const auto& b = c.subjects()[1];
    const TrainedModel m = fit_linear_svc(a.as_matrix(), a.labels, c.n_classes(), {});
    return m.score(b.as_matrix(), b.labels);
}

}  // namespace

TEST_SUITE("synthetic") {

TEST_CASE("identical spec gives a bit-identical cohort") {
    const auto s = small_spec(3, 0.6, 1.0, 42);
    const Cohort a = generate_cohort(s);
    const Cohort b = generate_cohort(s);
    CHECK(a.content_hash() == b.content_hash());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.subjects()[i].features == b.subjects()[i].features);
        CHECK(a.subjects()[i].labels == b.subjects()[i].labels);
    }
    auto t = s;
    t.seed = 43;
    CHECK(generate_cohort(t).content_hash() != a.content_hash());
}

TEST_CASE("table presets") {
    struct Row {
        const char* name;
        std::size_t samples, subjects, classes;
    };
    for (const Row r : {Row{"neuromod", 50, 4, 4}, Row{"aomic", 61, 203, 4}, Row{"forrest", 175, 10, 5},
                        Row{"bold5000", 332, 3, 4}, Row{"rsvp-ibc", 360, 13, 6}}) {
        CAPTURE(r.name);
        const SyntheticSpec s = table1_preset(r.name);
        CHECK(s.n_samples_per_subject == r.samples);
        CHECK(s.n_subjects == r.subjects);
        CHECK(s.n_classes == r.classes);
    }
    CHECK_THROWS_AS(table1_preset("hcp"), ConfigError);
    CHECK(table1_preset_names().size() == 5);

    const SyntheticSpec b = preset("benchmark");
    CHECK(b.n_subjects == 14);
    CHECK(b.n_samples_per_subject == 120);
    CHECK(b.n_classes == 4);
    CHECK(b.subject_shift == doctest::Approx(0.6));

    const Cohort forrest = generate_cohort(table1_preset("forrest"));
    CHECK(forrest.size() == 10);
    CHECK(forrest.n_classes() == 5);
    for (const auto& s : forrest.subjects()) {
        CHECK(s.rows() == 175);
        std::map<int, int> counts;
        for (int y : s.labels) ++counts[y];
        for (const auto& [k, n] : counts) CHECK((n == 35));
    }
}

TEST_CASE("spec invariants are enforced") {
    auto s = small_spec(2, 0.5, 1.0, 0);
    s.n_samples_per_subject = 3;
    CHECK_THROWS_AS(generate_cohort(s), ConfigError);
    s = small_spec(2, 0.5, 1.0, 0);
    s.n_features = 3;
    CHECK_THROWS_AS(generate_cohort(s), ConfigError);
    s = small_spec(0, 0.5, 1.0, 0);
    CHECK_THROWS_AS(generate_cohort(s), ConfigError);
    s = small_spec(2, 1.5, 1.0, 0);
    CHECK_THROWS_AS(generate_cohort(s), ConfigError);
    s = small_spec(2, 0.5, -1.0, 0);
    CHECK_THROWS_AS(generate_cohort(s), ConfigError);
}

TEST_CASE("labels are balanced up to rounding") {
    auto s = small_spec(2, 0.3, 1.0, 5);
    s.n_samples_per_subject = 42;
    const Cohort c = generate_cohort(s);
    for (const auto& ds : c.subjects()) {
        std::map<int, int> counts;
        for (int y : ds.labels) ++counts[y];
        CHECK(counts.size() == 4);
        for (const auto& [k, n] : counts) CHECK((n == 10 || n == 11));
    }
}

TEST_CASE("zero noise, zero shift: subjects coincide and transfer perfectly") {
    const Cohort c = generate_cohort(small_spec(2, 0.0, 0.0, 3));
    const auto ma = class_means(c.subjects()[0]);
    const auto mb = class_means(c.subjects()[1]);
    for (int k = 0; k < 4; ++k) CHECK((ma.at(k) - mb.at(k)).norm() < 1e-5);
    CHECK(transfer_accuracy(c) == 1.0);
}

TEST_CASE("full shift keeps subjects internally separable") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Cohort c = generate_cohort(small_spec(3, 1.0, 0.0, seed));
        for (const auto& ds : c.subjects()) {
            const auto m = class_means(ds);
            for (int a = 0; a < 4; ++a) {
                for (int b = a + 1; b < 4; ++b) CHECK((m.at(a) - m.at(b)).norm() == doctest::Approx(4.0).epsilon(1e-5));
                for (int b = a + 1; b < 4; ++b) CHECK(std::abs(m.at(a).dot(m.at(b))) < 1e-4);
            }
            const TrainedModel model = fit_linear_svc(ds.as_matrix(), ds.labels, 4, {});
            CHECK(model.score(ds.as_matrix(), ds.labels) == 1.0);
        }
    }
}

TEST_CASE("zero noise gives perfect training accuracy at any shift") {
    for (double shift : {0.0, 0.4, 0.8}) {
        const Cohort c = generate_cohort(small_spec(3, shift, 0.0, 11));
        for (const auto& ds : c.subjects()) {
            const TrainedModel model = fit_linear_svc(ds.as_matrix(), ds.labels, 4, {});
            CHECK(model.score(ds.as_matrix(), ds.labels) == 1.0);
        }
    }
}

TEST_CASE("cross-subject transfer does not improve with shift") {
    const std::vector<double> shifts{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> mean(shifts.size(), 0.0);
    const int seeds = 30;
    for (std::size_t i = 0; i < shifts.size(); ++i) {
        for (int seed = 0; seed < seeds; ++seed) {
            mean[i] += transfer_accuracy(generate_cohort(small_spec(2, shifts[i], 1.0, static_cast<std::uint64_t>(seed))));
        }
        mean[i] /= seeds;
    }
    for (std::size_t i = 1; i < shifts.size(); ++i) {
        CAPTURE(i);
        CHECK(mean[i] <= mean[i - 1]);
    }
    CHECK(mean.front() > mean.back() + 0.3);
    MESSAGE("transfer accuracy by shift: " << mean[0] << " " << mean[1] << " " << mean[2] << " " << mean[3] << " "
                                           << mean[4]);
}

TEST_CASE("geodesic rotation is an orthogonal one-parameter path") {
    const Eigen::Index d = 7;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        CHECK(geodesic_rotation(d, 0.0, seed).isApprox(Matrix::Identity(d, d), 1e-12));
        for (double s : {0.3, 1.0}) {
            const Matrix R = geodesic_rotation(d, s, seed);
            CHECK((R.transpose() * R - Matrix::Identity(d, d)).norm() < 1e-10);
            CHECK(R.determinant() == doctest::Approx(1.0));
        }
        const Matrix composed = geodesic_rotation(d, 0.3, seed) * geodesic_rotation(d, 0.4, seed);
        CHECK((composed - geodesic_rotation(d, 0.7, seed)).norm() < 1e-10);
    }
    CHECK_FALSE(geodesic_rotation(d, 1.0, 1).isApprox(geodesic_rotation(d, 1.0, 2), 1e-6));
}

TEST_CASE("mixing stays within the span of the class means") {
    Matrix M = Matrix::Zero(10, 3);
    M(0, 0) = 2.0;
    M(1, 1) = 2.0;
    M(2, 2) = 2.0;
    const Matrix out = mix_class_means(M, 1.0, 9);
    CHECK(out.bottomRows(7).norm() < 1e-12);
    CHECK((out.transpose() * out - M.transpose() * M).norm() < 1e-10);
    CHECK(mix_class_means(M, 0.0, 9).isApprox(M, 1e-12));
    CHECK((mix_class_means(M, 0.8, 9) - M).norm() > 0.1);
}

}
