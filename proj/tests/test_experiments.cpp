#include "ensemble/experiments.hpp"
#include "ensemble/synthetic.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

using namespace ensemble;

namespace {

SyntheticSpec tiny(std::size_t subjects, std::size_t samples = 40, std::uint64_t seed = 1) {
    SyntheticSpec s = default_synthetic_spec();
    s.n_subjects = subjects;
    s.n_samples_per_subject = samples;
    s.n_features = 12;
    s.seed = seed;
    return s;
}

ExperimentConfig quick(int n_cv = 3) {
    ExperimentConfig c;
    c.n_cv = n_cv;
    c.grid_points = 4;
    c.bootstrap_iterations = 200;
    return c;
}

// Balanced accuracy straight from a confusion matrix.
double confusion_oracle(const std::vector<std::vector<int>>& cm) {
    double sum = 0.0;
    int present = 0;
    for (std::size_t k = 0; k < cm.size(); ++k) {
        const int row = std::accumulate(cm[k].begin(), cm[k].end(), 0);
        if (row == 0) continue;
        sum += static_cast<double>(cm[k][k]) / row;
        ++present;
    }
    return sum / present;
}

RunRecord rec(const std::string& target, int split, Approach a, double acc, int size_index = 0) {
    RunRecord r;
    r.target = target;
    r.split = split;
    r.size_index = size_index;
    r.approach = a;
    r.balanced_accuracy = acc;
    r.train_size = 8;
    r.samples_per_class = 2;
    return r;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("balanced accuracy against hand-computed confusion matrices") {
    struct Case {
        Labels truth, pred;
        int K;
        double expect;
    };
    const std::vector<Case> cases{
        {{0, 0, 1, 1}, {0, 1, 1, 1}, 2, 0.75},
        {{0, 1, 2, 3}, {0, 1, 2, 3}, 4, 1.0},
        {{0, 0, 1, 1, 2, 2}, {0, 0, 0, 0, 0, 0}, 3, 1.0 / 3.0},
        {{0, 1, 2, 3}, {1, 1, 1, 1}, 4, 0.25},
        {{0, 0, 0, 1}, {0, 0, 0, 0}, 2, 0.5},
        {{0, 0, 0, 0, 1, 1}, {0, 1, 0, 1, 1, 0}, 2, 0.5},
        {{0, 0, 2, 2}, {0, 1, 2, 2}, 3, 0.75},
        {{2, 2, 2}, {2, 0, 2}, 3, 2.0 / 3.0},
        {{0, 1, 1, 1, 2, 2, 2, 2, 2}, {0, 1, 0, 2, 2, 2, 1, 0, 2}, 3, (1.0 + 1.0 / 3.0 + 3.0 / 5.0) / 3.0},
        {{1, 0, 1, 0, 1, 0}, {0, 1, 0, 1, 0, 1}, 2, 0.0},
        {{3, 3, 1, 1, 0}, {3, 1, 1, 1, 2}, 4, (0.0 + 1.0 + 0.5) / 3.0},
        {{0, 1, 0, 1, 0, 1, 0, 1}, {0, 1, 1, 1, 0, 0, 0, 1}, 2, 0.75},
    };
    for (const auto& c : cases) {
        std::vector<std::vector<int>> cm(static_cast<std::size_t>(c.K), std::vector<int>(static_cast<std::size_t>(c.K)));
        for (std::size_t i = 0; i < c.truth.size(); ++i) ++cm[static_cast<std::size_t>(c.truth[i])][static_cast<std::size_t>(c.pred[i])];
        CHECK(confusion_oracle(cm) == doctest::Approx(c.expect).epsilon(1e-15));
        CHECK(balanced_accuracy(c.truth, c.pred, c.K) == confusion_oracle(cm));
    }
    CHECK_THROWS_AS(balanced_accuracy(Labels{}, Labels{}, 2), DataError);
    CHECK_THROWS_AS(balanced_accuracy(Labels{0, 1}, Labels{0}, 2), DataError);
}

TEST_CASE("bootstrap intervals") {
    const std::vector<double> constant(12, 0.42);
    const Interval c = bootstrap_ci(constant, 500, 0.95, 1);
    CHECK(c.low == 0.42);
    CHECK(c.high == 0.42);

    const std::vector<double> one{0.7};
    const Interval s = bootstrap_ci(one, 500, 0.95, 1);
    CHECK(s.degenerate);
    CHECK(s.low == 0.7);
    CHECK(s.high == 0.7);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    std::vector<double> v(30);
    for (auto& x : v) x = n(rng);
    const Interval a = bootstrap_ci(v, 1000, 0.95, 9);
    const Interval b = bootstrap_ci(v, 1000, 0.95, 9);
    CHECK(a.low == b.low);
    CHECK(a.high == b.high);
    CHECK(a.low < a.high);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    CHECK(a.contains(mean));
    const Interval narrow = bootstrap_ci(v, 1000, 0.5, 9);
    CHECK(narrow.high - narrow.low < a.high - a.low);

    CHECK_THROWS_AS(bootstrap_ci(v, 99, 0.95, 1), ConfigError);
    CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{}, 500, 0.95, 1), ConfigError);
}

TEST_CASE("bootstrap coverage of a known mean") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    int covered = 0;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> v(50);
        for (auto& x : v) x = n(rng);
        covered += bootstrap_ci(v, 1000, 0.95, static_cast<std::uint64_t>(rep)).contains(0.0);
    }
    MESSAGE("bootstrap coverage " << covered << "/200");
    CHECK(covered >= 180);
    CHECK(covered <= 198);
}

TEST_CASE("gain") {
    ExperimentReport r;
    r.config.bootstrap_iterations = 200;
    for (int s = 0; s < 4; ++s) {
        r.records.push_back(rec("a", s, Approach::conventional, 0.55));
        r.records.push_back(rec("a", s, Approach::ensemble, 0.75));
        r.records.push_back(rec("a", s, Approach::conventional, 0.6, 1));
        r.records.push_back(rec("a", s, Approach::ensemble, 0.6, 1));
    }
    CellSelector at0;
    at0.size_index = 0;
    CHECK(gain(r, at0) == doctest::Approx(20.0));
    CHECK(gain(r, at0, Approach::conventional, Approach::ensemble) == doctest::Approx(-20.0));
    CellSelector at1;
    at1.size_index = 1;
    CHECK(gain(r, at1) == 0.0);
    CellSelector nobody;
    nobody.target = "b";
    CHECK_THROWS_AS(gain(r, nobody), ConfigError);
    CellSelector mlp;
    mlp.family = Family::mlp;
    CHECK_THROWS_AS(gain(r, mlp), ConfigError);

    summarize(r);
    const GainSummary* g = r.find_gain(Family::linear_svc, "size", 0);
    REQUIRE(g != nullptr);
    CHECK(g->gain == doctest::Approx(20.0));
    CHECK(g->ci.low == doctest::Approx(20.0));
    const Summary* s = r.find_summary(Approach::ensemble, Family::linear_svc, "size", 0);
    REQUIRE(s != nullptr);
    CHECK(s->mean == doctest::Approx(0.75));
    CHECK(s->n_records == 4);
    CHECK(r.find_summary(Approach::ensemble, Family::linear_svc, "overall", 0) != nullptr);
    CHECK(r.find_gain(Family::mlp, "size", 0) == nullptr);
}

TEST_CASE("size sweep follows the protocol") {
    auto spec = table1_preset("neuromod");
    spec.n_features = 16;
    const Cohort c = generate_cohort(spec);
    ExperimentConfig cfg;
    cfg.bootstrap_iterations = 200;
    const ExperimentReport r = run_size_sweep(c, cfg);
    CHECK(cfg.resolved_n_cv() == 20);
    const auto grid = geometric_train_grid(45, 4, 10);
    REQUIRE(grid.size() == 10);
    CHECK(r.records.size() == 4 * 20 * grid.size() * 1 * 2);
    CHECK(r.metadata.at("grids").at("sub-01").get<std::vector<std::size_t>>() == grid);

    std::map<std::pair<std::string, int>, std::set<std::string>> hashes;
    std::map<int, std::size_t> per_size;
    for (const auto& x : r.records) {
        CHECK(x.leakage_ok);
        CHECK(x.failure.empty());
        REQUIRE(x.balanced_accuracy.has_value());
        CHECK(*x.balanced_accuracy >= 0.0);
        CHECK(*x.balanced_accuracy <= 1.0);
        CHECK(x.train_size == grid[static_cast<std::size_t>(x.size_index)]);
        CHECK(x.samples_per_class == x.train_size / 4);
        CHECK(x.n_subjects_in_ensemble == (x.approach == Approach::ensemble ? 3u : 0u));
        hashes[{x.target, x.split}].insert(x.test_hash);
        ++per_size[x.size_index];
    }
    for (const auto& [key, h] : hashes) CHECK(h.size() == 1);
    std::set<std::string> across;
    for (int s = 0; s < 20; ++s) across.insert(*hashes[{"sub-01", s}].begin());
    CHECK(across.size() == 20);
    CHECK(per_size.at(0) == per_size.at(9));
    for (const auto& [id, rows] : r.metadata.at("base_training_rows").items()) CHECK(rows.get<std::size_t>() == 50);
    CHECK(r.metadata.at("bootstrap_unit").get<std::string>().find("split") != std::string::npos);
    CHECK(r.metadata.at("encoding") == "one-hot-labels");
}

TEST_CASE("reports do not depend on the worker count") {
    const Cohort c = generate_cohort(tiny(4));
    auto cfg = quick();
    cfg.meta_families = {Family::linear_svc, Family::forest};
    cfg.forest.n_trees = 20;
    const auto a = run_size_sweep(c, cfg, {1, {}});
    const auto b = run_size_sweep(c, cfg, {3, {}});
    CHECK(a.content_hash() == b.content_hash());
    CHECK(a.to_json().at("records") == b.to_json().at("records"));
    cfg.master_seed = 1;
    CHECK(run_size_sweep(c, cfg).content_hash() != a.content_hash());
}

TEST_CASE("subject subsets") {
    std::vector<std::string> src;
    for (int i = 0; i < 13; ++i) src.push_back("s" + std::to_string(i));
    for (std::size_t m : {1u, 2u, 4u, 8u, 12u}) {
        const auto sets = draw_subject_subsets(src, m, 5, 42);
        REQUIRE(sets.size() == 5);
        std::set<std::vector<std::string>> distinct;
        for (auto s : sets) {
            CHECK(s.size() == m);
            CHECK(std::set<std::string>(s.begin(), s.end()).size() == m);
            std::sort(s.begin(), s.end());
            distinct.insert(s);
        }
        CHECK(distinct.size() == 5);
    }
    const auto all = draw_subject_subsets(src, 13, 5, 42);
    for (const auto& s : all) {
        CHECK(std::set<std::string>(s.begin(), s.end()) == std::set<std::string>(src.begin(), src.end()));
    }
    const std::vector<std::string> three{"a", "b", "c"};
    std::set<std::vector<std::string>> seen;
    for (auto s : draw_subject_subsets(three, 2, 5, 1)) {
        std::sort(s.begin(), s.end());
        seen.insert(s);
    }
    CHECK(seen.size() == 3);
    CHECK(draw_subject_subsets(src, 4, 5, 7) == draw_subject_subsets(src, 4, 5, 7));
    CHECK_THROWS_AS(draw_subject_subsets(src, 14, 5, 1), ConfigError);
    CHECK_THROWS_AS(draw_subject_subsets(src, 0, 5, 1), ConfigError);
}

TEST_CASE("subject sweep") {
    const Cohort c = generate_cohort(tiny(6));
    auto cfg = quick(2);
    cfg.targets = {"sub-01", "sub-02"};
    cfg.subject_subset_sizes = {1, 3, 5};
    const auto r = run_subject_sweep(c, cfg);
    CHECK(r.config.sweep == SweepKind::subject);
    std::map<std::size_t, std::size_t> ens_by_m;
    std::size_t conv = 0;
    for (const auto& x : r.records) {
        CHECK(x.leakage_ok);
        if (x.approach == Approach::ensemble) {
            ++ens_by_m[x.n_subjects_in_ensemble];
        } else {
            ++conv;
        }
    }
    CHECK(ens_by_m.size() == 3);
    CHECK(ens_by_m.at(1) == ens_by_m.at(5));
    CHECK(conv == ens_by_m.at(1) * 3);
    const auto subsets = r.metadata.at("subject_subsets").at("sub-01");
    for (const auto& [m, list] : subsets.items()) {
        CHECK(list.size() == 2);
        for (const auto& s : list) {
            CHECK(s.size() == std::stoul(m));
            for (const auto& id : s) CHECK(id.get<std::string>() != "sub-01");
        }
    }
    CHECK(r.find_gain(Family::linear_svc, "subjects", 3) != nullptr);

    auto too_big = cfg;
    too_big.subject_subset_sizes = {6};
    CHECK_THROWS_AS(run_subject_sweep(c, too_big), ConfigError);

    ExperimentConfig defaults;
    CHECK(defaults.resolved_n_cv() == 20);
    defaults.sweep = SweepKind::subject;
    CHECK(defaults.resolved_n_cv() == 5);
}

TEST_CASE("a failing learner yields null records, not an aborted sweep") {
    const Cohort c = generate_cohort(tiny(3));
    auto cfg = quick(2);
    cfg.meta_families = {Family::linear_svc, Family::mlp};
    cfg.mlp.learning_rate = 1e200;
    cfg.mlp.hidden_layers = {4};
    const auto r = run_size_sweep(c, cfg);
    std::size_t failed = 0;
    for (const auto& x : r.records) {
        if (x.family == Family::mlp) {
            CHECK_FALSE(x.balanced_accuracy.has_value());
            CHECK_FALSE(x.failure.empty());
            ++failed;
        } else {
            CHECK(x.balanced_accuracy.has_value());
        }
    }
    CHECK(failed == r.records.size() / 2);
    CHECK(r.find_summary(Approach::ensemble, Family::mlp, "size", 0) == nullptr);
    CHECK(r.find_summary(Approach::ensemble, Family::linear_svc, "size", 0) != nullptr);
    const auto j = r.to_json();
    CHECK(ExperimentReport::from_json(j).content_hash() == r.content_hash());
}

TEST_CASE("config and report serialization") {
    ExperimentConfig cfg = quick(4);
    cfg.sweep = SweepKind::subject;
    cfg.approaches = {Approach::ensemble};
    cfg.meta_families = {Family::forest, Family::mlp};
    cfg.base_penalty = Penalty::l1;
    cfg.subject_subset_sizes = {1, 2};
    cfg.encoding = StackEncoding::decision_scores;
    cfg.master_seed = 99;
    cfg.targets = {"sub-02"};
    cfg.mlp.hidden_layers = {7, 3};
    cfg.forest.n_trees = 11;
    cfg.svc.C = 0.25;
    const auto j = cfg.to_json();
    const auto back = ExperimentConfig::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.mlp.hidden_layers == std::vector<int>{7, 3});
    CHECK(back.encoding == StackEncoding::decision_scores);

    CHECK(ExperimentConfig::from_json(nlohmann::json::object()).to_json() == ExperimentConfig{}.to_json());
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"n_splits", 3}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"mlp", {{"hidden", 3}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"sweep", "diagonal"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"test_fraction", 1.5}}), ConfigError);

    const Cohort c = generate_cohort(tiny(3));
    const auto r = run_size_sweep(c, quick(2));
    const auto rj = r.to_json();
    const auto rb = ExperimentReport::from_json(rj);
    CHECK(rb.content_hash() == r.content_hash());
    CHECK(rb.to_json() == rj);
    CHECK(r.metadata.at("content_hash") == r.content_hash());
    const std::string csv = r.records_csv();
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.records.size() + 1);
}

TEST_CASE("conventional-only runs need no bank") {
    const Cohort c = generate_cohort(tiny(1));
    auto cfg = quick(2);
    cfg.approaches = {Approach::conventional};
    const auto r = run_size_sweep(c, cfg);
    CHECK_FALSE(r.records.empty());
    for (const auto& x : r.records) CHECK(x.approach == Approach::conventional);
    CHECK(r.gains.empty());
    cfg.approaches = {Approach::conventional, Approach::ensemble};
    CHECK_THROWS_AS(run_size_sweep(c, cfg), ConfigError);
}

TEST_CASE("base banks are cached and reused across meta families") {
    const Cohort c = generate_cohort(tiny(3));
    const auto dir = oracle::temp_dir("bankcache");
    auto cfg = quick(2);
    const auto first = run_size_sweep(c, cfg, {1, dir});
    CHECK(first.metadata.at("bank_cache").at("misses") == 3);
    CHECK(first.metadata.at("bank_cache").at("hits") == 0);
    const auto second = run_size_sweep(c, cfg, {2, dir});
    CHECK(second.metadata.at("bank_cache").at("hits") == 3);
    CHECK(second.content_hash() == first.content_hash());

    cfg.meta_families = {Family::forest};
    cfg.forest.n_trees = 10;
    cfg.grid_points = 3;
    const auto other = run_size_sweep(c, cfg, {1, dir});
    CHECK(other.metadata.at("bank_cache").at("hits") == 3);

    cfg.base_penalty = Penalty::l1;
    CHECK(run_size_sweep(c, cfg, {1, dir}).metadata.at("bank_cache").at("misses") == 3);
    std::filesystem::remove_all(dir);
}

}
