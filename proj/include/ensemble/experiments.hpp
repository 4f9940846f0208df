#pragma once

#include "ensemble/data_model.hpp"
#include "ensemble/learners.hpp"
#include "ensemble/stacking.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ensemble {

enum class Approach { conventional, ensemble };
enum class SweepKind { size, subject };

std::string to_string(Approach a);
std::string to_string(SweepKind s);
Approach parse_approach(const std::string& s);
SweepKind parse_sweep(const std::string& s);

/// Evaluation protocol settings. Every field has a default; `n_cv` falls back
/// to 20 splits for a size sweep and 5 for a subject sweep.
struct ExperimentConfig {
    SweepKind sweep = SweepKind::size;
    std::vector<Approach> approaches{Approach::conventional, Approach::ensemble};
    std::vector<Family> meta_families{Family::linear_svc};
    Penalty base_penalty = Penalty::l2;
    std::optional<int> n_cv;
    std::size_t grid_points = 10;
    double test_fraction = 0.1;
    /// Ensemble sizes for the subject sweep; empty selects 1, 2, 4, ... up to N-1.
    std::vector<std::size_t> subject_subset_sizes;
    StackEncoding encoding = StackEncoding::one_hot_labels;
    int bootstrap_iterations = 1000;
    std::uint64_t master_seed = 0;
    /// Restrict evaluation to these targets; empty means every subject.
    std::vector<std::string> targets;

    LinearSvcConfig base_svc;
    LinearSvcConfig svc;
    MlpConfig mlp;
    ForestConfig forest;

    int resolved_n_cv() const;
    ClassifierConfig meta_config(Family f) const;
    void validate() const;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static ExperimentConfig from_json(const nlohmann::json& j);
};

struct RunRecord {
    std::string target;
    int split = 0;
    int size_index = 0;
    std::size_t train_size = 0;
    std::size_t samples_per_class = 0;
    std::size_t n_subjects_in_ensemble = 0;
    Family family = Family::linear_svc;
    Approach approach = Approach::conventional;
    std::optional<double> balanced_accuracy;  ///< empty when the cell failed
    std::string failure;
    bool leakage_ok = true;
    std::string test_hash;  ///< identifies the held-out rows of the split
};

struct Interval {
    double low = 0.0;
    double high = 0.0;
    bool degenerate = false;

    bool contains(double v) const { return low <= v && v <= high; }
};

struct Summary {
    Approach approach = Approach::conventional;
    Family family = Family::linear_svc;
    std::string group;  ///< "size", "subjects" or "overall"
    std::size_t group_value = 0;
    std::size_t n_records = 0;
    std::size_t n_units = 0;
    double mean = 0.0;
    Interval ci;
    double mean_train_size = 0.0;
    double mean_samples_per_class = 0.0;
};

/// Ensemble minus conventional accuracy, in percentage points.
struct GainSummary {
    Family family = Family::linear_svc;
    std::string group;
    std::size_t group_value = 0;
    std::size_t n_units = 0;
    double gain = 0.0;
    Interval ci;
    double mean_samples_per_class = 0.0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunRecord> records;
    std::vector<Summary> summaries;
    std::vector<GainSummary> gains;
    nlohmann::json metadata = nlohmann::json::object();

    /// Git-style hash of config, records, summaries and gains. Timing and
    /// execution details in the metadata are excluded.
    std::string content_hash() const;

    nlohmann::json to_json() const;
    static ExperimentReport from_json(const nlohmann::json& j);
    /// One row per record.
    std::string records_csv() const;

    const Summary* find_summary(Approach a, Family f, const std::string& group, std::size_t value) const;
    const GainSummary* find_gain(Family f, const std::string& group, std::size_t value) const;
};

/// Execution options that never influence results.
struct RunOptions {
    int workers = 1;
    /// Directory holding serialized base banks; empty disables caching.
    std::filesystem::path bank_cache_dir;
};

/// Mean recall over the classes present in `y_true`.
double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred, int n_classes);

/// Percentile bootstrap interval of the mean. A single value yields the
/// degenerate interval (v, v) with `degenerate` set.
Interval bootstrap_ci(std::span<const double> values, int iterations, double level, std::uint64_t seed);

ExperimentReport run_size_sweep(const Cohort& cohort, const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentReport run_subject_sweep(const Cohort& cohort, const ExperimentConfig& cfg, const RunOptions& opts = {});
/// Dispatches on cfg.sweep.
ExperimentReport run_experiment(const Cohort& cohort, const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Selects records for gain(). Unset fields match everything.
struct CellSelector {
    Family family = Family::linear_svc;
    std::optional<int> size_index;
    std::optional<std::size_t> n_subjects;
    std::optional<std::string> target;
};

/// Mean accuracy of `a` minus mean accuracy of `b` over the selected records,
/// in percentage points. Throws ConfigError if either approach is missing.
double gain(const ExperimentReport& report, const CellSelector& sel, Approach a = Approach::ensemble,
            Approach b = Approach::conventional);

/// Recomputes summaries and gains from the records.
void summarize(ExperimentReport& report);

/// Random subsets of `sources` of size m, one per split; distinct across
/// splits whenever the number of possible subsets allows, otherwise every
/// subset appears before any repeats.
std::vector<std::vector<std::string>> draw_subject_subsets(const std::vector<std::string>& sources, std::size_t m,
                                                           int n_splits, std::uint64_t seed);

}  // namespace ensemble
