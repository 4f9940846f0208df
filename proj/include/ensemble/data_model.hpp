#pragma once

#include "ensemble/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ensemble {

/// Ordered set of class names with a bijective encoding onto 0..K-1.
class LabelSpace {
public:
    LabelSpace() = default;
    explicit LabelSpace(std::vector<std::string> classes);

    int size() const { return static_cast<int>(classes_.size()); }
    const std::vector<std::string>& classes() const { return classes_; }
    const std::string& name(int index) const { return classes_.at(static_cast<std::size_t>(index)); }
    /// Index of `name`, or nullopt when the name is not part of the space.
    std::optional<int> find(const std::string& name) const;
    int encode(const std::string& name) const;

    bool operator==(const LabelSpace& other) const { return classes_ == other.classes_; }

private:
    std::vector<std::string> classes_;
    std::map<std::string, int> index_;
};

/// One subject's labeled feature matrix.
struct SubjectDataset {
    std::string subject_id;
    FeatureMatrix features;
    Labels labels;

    std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }
    /// Features as double precision, for the learners.
    Matrix as_matrix() const { return features.cast<double>(); }
};

/// A set of subjects sharing one label space and feature dimensionality.
class Cohort {
public:
    Cohort(std::vector<SubjectDataset> subjects, LabelSpace label_space, std::size_t n_features);

    const std::vector<SubjectDataset>& subjects() const { return subjects_; }
    const LabelSpace& label_space() const { return label_space_; }
    std::size_t n_features() const { return n_features_; }
    int n_classes() const { return label_space_.size(); }
    std::size_t size() const { return subjects_.size(); }

    const SubjectDataset& subject(const std::string& id) const;
    std::size_t index_of(const std::string& id) const;
    std::vector<std::string> subject_ids() const;

    /// SHA-1 over label space, shapes, features and labels of every subject.
    std::string content_hash() const;

private:
    std::vector<SubjectDataset> subjects_;
    LabelSpace label_space_;
    std::size_t n_features_ = 0;
};

/// Fixed train/test partition of one subject's rows.
struct SplitPlan {
    IndexList train_indices;
    IndexList test_indices;
    std::uint64_t seed = 0;

    bool is_test_row(std::size_t row) const;
};

/// Checks that no row in `rows` belongs to the plan's test split.
/// Throws DataError naming the first offending row.
void audit_no_test_rows(const SplitPlan& plan, std::span<const std::size_t> rows, const std::string& context);

/// Reads `cohort.json` and the files it references.
Cohort load_cohort(const std::filesystem::path& manifest_path);

enum class FeatureFormat { binary, csv };

/// Writes the cohort directory (manifest, one feature and one label file per
/// subject). Files are written to temporaries and renamed into place.
void save_cohort(const Cohort& cohort, const std::filesystem::path& directory,
                 FeatureFormat format = FeatureFormat::binary);

/// Binary feature file codec ("ENSB" v1, little-endian float32, row-major).
FeatureMatrix read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& features);

/// Stratified train/test split. Each class contributes round(fraction * n_c)
/// test rows (at least one, at most n_c - 1) and the total is
/// ceil(fraction * n), distributed by largest remainder.
SplitPlan stratified_split(const SubjectDataset& ds, double test_fraction, std::uint64_t seed);

/// Geometrically spaced training sizes from n_classes up to n_train_max,
/// rounded and deduplicated.
std::vector<std::size_t> geometric_train_grid(std::size_t n_train_max, std::size_t n_classes,
                                              std::size_t n_points = 10);

/// Class-balanced subsample of the plan's training rows. For a fixed seed the
/// result for a smaller size is always a subset of the result for a larger one.
IndexList subsample_stratified(const SubjectDataset& ds, const SplitPlan& plan, std::size_t size,
                               std::uint64_t seed);

/// Writes `contents` to `path` via a sibling temporary and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace ensemble
