#include "ensemble/data_model.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <fstream>
#include <set>

using namespace ensemble;
namespace fs = std::filesystem;

namespace {

SubjectDataset make_subject(const std::string& id, std::size_t rows, std::size_t cols, int K, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n;
    SubjectDataset ds;
    ds.subject_id = id;
    ds.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < ds.features.size(); ++i) ds.features.data()[i] = n(rng);
    for (std::size_t r = 0; r < rows; ++r) ds.labels.push_back(static_cast<int>(r % static_cast<std::size_t>(K)));
    return ds;
}

LabelSpace classes(int K) {
    std::vector<std::string> names;
    for (int k = 0; k < K; ++k) names.push_back("c" + std::to_string(k));
    return LabelSpace(names);
}

Cohort neuromod_like() {
    std::vector<SubjectDataset> subs;
    for (int i = 0; i < 4; ++i) subs.push_back(make_subject("sub-0" + std::to_string(i + 1), 50, 16, 4, 10 + i));
    return Cohort(std::move(subs), classes(4), 16);
}

std::map<int, std::size_t> class_counts(const SubjectDataset& ds, const IndexList& rows) {
    std::map<int, std::size_t> c;
    for (auto r : rows) ++c[ds.labels[r]];
    return c;
}

}  // namespace

TEST_SUITE("data_model") {

TEST_CASE("label space validation") {
    CHECK_THROWS_AS(LabelSpace({"a"}), DataError);
    CHECK_THROWS_AS(LabelSpace({"a", "a"}), DataError);
    const LabelSpace ls({"face", "house", "tool"});
    CHECK(ls.size() == 3);
    CHECK(ls.encode("tool") == 2);
    CHECK_FALSE(ls.find("car").has_value());
    CHECK_THROWS_AS(ls.encode("car"), DataError);
}

TEST_CASE("cohort invariants") {
    std::vector<SubjectDataset> subs{make_subject("a", 10, 4, 2, 1), make_subject("a", 10, 4, 2, 2)};
    CHECK_THROWS_AS(Cohort(subs, classes(2), 4), DataError);
    subs[1].subject_id = "b";
    subs[1].labels[3] = 7;
    CHECK_THROWS_AS(Cohort(subs, classes(2), 4), DataError);
    subs[1].labels[3] = 1;
    subs[1].features(2, 2) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(Cohort(subs, classes(2), 4), DataError);
}

TEST_CASE("save then load is bit-exact (binary and csv)") {
    const Cohort c = neuromod_like();
    for (auto fmt : {FeatureFormat::binary, FeatureFormat::csv}) {
        const auto dir = oracle::temp_dir("roundtrip");
        save_cohort(c, dir, fmt);
        const Cohort back = load_cohort(dir / "cohort.json");
        REQUIRE(back.size() == 4);
        CHECK(back.n_classes() == 4);
        CHECK(back.label_space() == c.label_space());
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(back.subjects()[i].subject_id == c.subjects()[i].subject_id);
            CHECK(back.subjects()[i].labels == c.subjects()[i].labels);
            CHECK(back.subjects()[i].features == c.subjects()[i].features);
        }
        CHECK(back.content_hash() == c.content_hash());
        // A directory is accepted in place of the manifest path.
        CHECK(load_cohort(dir).size() == 4);
        fs::remove_all(dir);
    }
}

TEST_CASE("loading reports the offending subject") {
    const auto dir = oracle::temp_dir("mismatch");
    std::vector<SubjectDataset> subs{make_subject("sub-01", 8, 1024, 2, 1), make_subject("sub-02", 8, 1024, 2, 2)};
    save_cohort(Cohort(subs, classes(2), 1024), dir);
    write_feature_file(dir / "sub-02.ensb", make_subject("x", 8, 1023, 2, 3).features);
    try {
        load_cohort(dir);
        FAIL("expected a dimension mismatch");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("sub-02") != std::string::npos);
    }

    save_cohort(Cohort(subs, classes(2), 1024), dir);
    {
        std::ofstream out(dir / "sub-01.labels");
        for (int i = 0; i < 8; ++i) out << (i == 5 ? "zebra" : "c0") << "\n";
    }
    try {
        load_cohort(dir);
        FAIL("expected an unknown label");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("sub-01") != std::string::npos);
        CHECK(msg.find("zebra") != std::string::npos);
    }
    fs::remove(dir / "sub-01.labels");
    CHECK_THROWS_AS(load_cohort(dir), DataError);
    CHECK_THROWS_AS(load_cohort(dir / "nothing_here"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("feature file format") {
    const auto dir = oracle::temp_dir("ensb");
    FeatureMatrix F(2, 3);
    F << 1, 2, 3, 4, 5, 6;
    write_feature_file(dir / "f.ensb", F);
    const std::string bytes = oracle::read_file(dir / "f.ensb");
    REQUIRE(bytes.size() == 4 + 4 + 8 + 8 + 6 * 4);
    CHECK(bytes.substr(0, 4) == "ENSB");
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 2);
    CHECK(bytes[16] == 3);
    float second;
    std::memcpy(&second, bytes.data() + 24 + 4, 4);
    CHECK(second == 2.0f);
    CHECK(read_feature_file(dir / "f.ensb") == F);
    fs::remove_all(dir);
}

TEST_CASE("stratified split of 50 balanced samples") {
    const auto ds = make_subject("s", 50, 3, 4, 1);
    const SplitPlan p = stratified_split(ds, 0.1, 7);
    CHECK(p.test_indices.size() == 5);
    CHECK(p.train_indices.size() == 45);
    const auto counts = class_counts(ds, p.test_indices);
    CHECK(counts.size() == 4);
    for (const auto& [k, n] : counts) CHECK(n >= 1);

    std::set<std::size_t> train(p.train_indices.begin(), p.train_indices.end());
    for (auto t : p.test_indices) CHECK(train.count(t) == 0);

    const SplitPlan q = stratified_split(ds, 0.1, 7);
    CHECK(q.train_indices == p.train_indices);
    CHECK(q.test_indices == p.test_indices);
    CHECK(stratified_split(ds, 0.1, 8).test_indices != p.test_indices);
}

TEST_CASE("stratified split proportions stay within one sample per class") {
    auto ds = make_subject("s", 97, 2, 3, 2);
    for (std::size_t i = 0; i < 20; ++i) ds.labels[i] = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SplitPlan p = stratified_split(ds, 0.2, seed);
        CHECK(p.test_indices.size() == static_cast<std::size_t>(std::ceil(0.2 * 97)));
        const auto test = class_counts(ds, p.test_indices);
        IndexList all(97);
        std::iota(all.begin(), all.end(), 0);
        for (const auto& [k, n] : class_counts(ds, all)) {
            const double expect = 0.2 * static_cast<double>(n);
            CHECK(std::abs(static_cast<double>(test.at(k)) - expect) <= 1.0);
        }
    }
}

TEST_CASE("stratified split edge cases") {
    auto ds = make_subject("s", 6, 2, 3, 3);
    const SplitPlan p = stratified_split(ds, 0.5, 1);
    const auto counts = class_counts(ds, p.test_indices);
    for (int k = 0; k < 3; ++k) CHECK(counts.at(k) == 1);

    ds.labels = {0, 0, 1, 1, 2, 0};
    try {
        stratified_split(ds, 0.5, 1);
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find('2') != std::string::npos);
    }
    CHECK_THROWS_AS(stratified_split(make_subject("s", 10, 2, 2, 1), 1.5, 1), ConfigError);
}

TEST_CASE("geometric training grid") {
    CHECK(geometric_train_grid(45, 4, 10) == std::vector<std::size_t>{4, 5, 7, 9, 12, 15, 20, 26, 34, 45});
    CHECK(geometric_train_grid(4, 4, 10) == std::vector<std::size_t>{4});
    const auto g = geometric_train_grid(324, 6, 10);
    CHECK(g.size() == 10);
    CHECK(g.front() == 6);
    CHECK(g.back() == 324);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
    CHECK_THROWS_AS(geometric_train_grid(3, 4, 10), ConfigError);

    // Independent evaluation of the defining formula.
    for (std::size_t n : {17, 45, 99, 297, 540}) {
        std::vector<std::size_t> expect;
        for (int k = 0; k < 10; ++k) {
            const auto v = static_cast<std::size_t>(std::llround(4.0 * std::pow(n / 4.0, k / 9.0)));
            if (expect.empty() || v != expect.back()) expect.push_back(v);
        }
        expect.back() = n;
        CHECK(geometric_train_grid(n, 4, 10) == expect);
    }
}

TEST_CASE("stratified subsamples are balanced, restricted to train and nested") {
    const auto ds = make_subject("s", 120, 2, 4, 4);
    const SplitPlan p = stratified_split(ds, 0.1, 3);
    CHECK(subsample_stratified(ds, p, p.train_indices.size(), 7).size() == p.train_indices.size());
    {
        const auto one = subsample_stratified(ds, p, 4, 7);
        const auto c = class_counts(ds, one);
        for (int k = 0; k < 4; ++k) CHECK(c.at(k) == 1);
    }
    const auto s8 = subsample_stratified(ds, p, 8, 7);
    const auto s16 = subsample_stratified(ds, p, 16, 7);
    std::set<std::size_t> big(s16.begin(), s16.end());
    for (auto r : s8) CHECK(big.count(r) == 1);

    const auto grid = geometric_train_grid(p.train_indices.size(), 4);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const auto a = subsample_stratified(ds, p, grid[i], 99);
        const auto b = subsample_stratified(ds, p, grid[i + 1], 99);
        std::set<std::size_t> sb(b.begin(), b.end());
        for (auto r : a) CHECK(sb.count(r) == 1);
        for (auto r : b) CHECK_FALSE(p.is_test_row(r));
        const auto c = class_counts(ds, b);
        std::size_t lo = b.size(), hi = 0;
        for (const auto& [k, n] : c) {
            lo = std::min(lo, n);
            hi = std::max(hi, n);
        }
        CHECK(hi - lo <= 1);
    }
    CHECK_THROWS_AS(subsample_stratified(ds, p, p.train_indices.size() + 1, 7), ConfigError);
}

TEST_CASE("leakage audit") {
    const auto ds = make_subject("s", 20, 2, 2, 5);
    const SplitPlan p = stratified_split(ds, 0.2, 1);
    CHECK_NOTHROW(audit_no_test_rows(p, p.train_indices, "ok"));
    IndexList bad = p.train_indices;
    bad.push_back(p.test_indices.front());
    CHECK_THROWS_AS(audit_no_test_rows(p, bad, "bad"), DataError);
}

}
