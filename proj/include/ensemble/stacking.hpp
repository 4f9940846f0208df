#pragma once

#include "ensemble/data_model.hpp"
#include "ensemble/learners.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ensemble {

/// A source subject's classifier: the scaler fitted on that subject's rows
/// followed by a linear SVC.
struct BasePipeline {
    std::string subject_id;
    Standardizer scaler;
    TrainedModel model;
    std::size_t training_rows = 0;

    Labels predict(const Matrix& X_raw) const;
    Matrix scores(const Matrix& X_raw) const;
};

/// Pre-trained per-subject classifiers for one target subject.
struct BaseBank {
    std::vector<std::string> source_subject_ids;
    std::vector<BasePipeline> models;
    Penalty penalty = Penalty::l2;
    std::vector<std::string> warnings;

    std::size_t size() const { return models.size(); }
    int n_classes() const;
    std::size_t n_features() const;
    /// Sub-bank restricted to `ids`, in the order given.
    BaseBank subset(const std::vector<std::string>& ids) const;

    void save(const std::filesystem::path& path) const;
    static BaseBank load(const std::filesystem::path& path);
};

enum class StackEncoding { one_hot_labels, decision_scores };

std::string to_string(StackEncoding e);
StackEncoding parse_encoding(const std::string& s);

/// Meta-features of target samples: one K-wide column block per base model,
/// blocks ordered like the bank's source subjects.
struct StackedFeatures {
    Matrix values;
    std::vector<std::string> block_subjects;
    int block_width = 0;

    /// Rows `rows` of the stacked matrix.
    StackedFeatures take(std::span<const std::size_t> rows) const;
    /// Column blocks of the listed subjects, in the order given.
    StackedFeatures select_blocks(const std::vector<std::string>& subjects) const;
};

/// Trains one base pipeline on all rows of `ds`. Returns nullopt when the
/// subject has a single class.
std::optional<BasePipeline> train_base(const SubjectDataset& ds, int n_classes, const LinearSvcConfig& cfg);

/// One base pipeline per cohort subject (nullopt for single-class subjects),
/// trained on up to `workers` threads.
std::vector<std::optional<BasePipeline>> train_subject_bases(const Cohort& cohort, const LinearSvcConfig& cfg,
                                                             int workers = 1);

/// Bank for `target` from per-subject pipelines indexed like the cohort.
BaseBank assemble_bank(const Cohort& cohort, const std::vector<std::optional<BasePipeline>>& bases,
                       const std::string& target, Penalty penalty);

/// Trains a linear SVC with the given penalty on the full data of every
/// subject except `target`.
BaseBank pretrain_bases(const Cohort& cohort, const std::string& target, Penalty penalty, int workers = 1,
                        LinearSvcConfig base_cfg = {});

StackedFeatures stack_features(const BaseBank& bank, const Matrix& X_target, StackEncoding enc, int workers = 1);

/// Fits the final classifier on stacked target-subject training rows.
TrainedModel fit_ensemble(const StackedFeatures& stacked, std::span<const int> y_train, int n_classes,
                          const ClassifierConfig& meta_cfg, int workers = 1);

/// Single-subject baseline: standardize on the training rows, fit, predict.
Labels conventional_decode(const Matrix& X_train, std::span<const int> y_train, const Matrix& X_test,
                           int n_classes, const ClassifierConfig& cfg, int workers = 1);

/// Per-source-subject importance of a fitted meta model: summed |weights|
/// over the subject's block (SVC) or summed block importances (forest).
std::map<std::string, double> subject_importances(const TrainedModel& meta, const BaseBank& bank);

/// File name of a cached bank.
std::string bank_cache_key(const std::string& cohort_hash, const std::string& target, Penalty penalty);

namespace reference {

/// Sequential versions of the parallel kernels above; kept as the
/// reference the parallel paths are tested against.
std::vector<std::optional<BasePipeline>> train_subject_bases(const Cohort& cohort, const LinearSvcConfig& cfg);
StackedFeatures stack_features(const BaseBank& bank, const Matrix& X_target, StackEncoding enc);

}  // namespace reference

}  // namespace ensemble
