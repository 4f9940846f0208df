#pragma once

#include "ensemble/data_model.hpp"

#include <string>
#include <vector>

namespace ensemble {

/// Parameters of a synthetic multi-subject cohort.
///
/// Every subject shares K orthogonal class means (pairwise distance
/// `class_separation`). Subject i sees them through its own rotation R_i of
/// the class-mean subspace, which moves along a geodesic from the identity
/// (`subject_shift` = 0) to a uniformly random rotation of that subspace
/// (`subject_shift` = 1) and leaves the orthogonal complement fixed. Samples
/// add isotropic Gaussian noise.
struct SyntheticSpec {
    std::size_t n_subjects = 14;
    std::size_t n_samples_per_subject = 120;
    std::size_t n_features = 256;
    std::size_t n_classes = 4;
    double class_separation = 1.0;
    double subject_shift = 0.6;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Defaults shared by the presets for the knobs not fixed by the dataset shape.
SyntheticSpec default_synthetic_spec();

/// Shape presets for the five reference datasets:
/// neuromod, aomic, forrest, bold5000, rsvp-ibc.
SyntheticSpec table1_preset(const std::string& name);
std::vector<std::string> table1_preset_names();

/// The standard benchmark cohort: 14 subjects x 120 samples x 4 classes,
/// shift 0.6, noise calibrated so conventional linear decoding at full
/// training size sits around 0.8 balanced accuracy.
SyntheticSpec benchmark_spec();

/// Resolves "benchmark" or any table-1 preset name.
SyntheticSpec preset(const std::string& name);

/// Deterministic in `spec` (including the seed).
Cohort generate_cohort(const SyntheticSpec& spec);

/// Point at fraction `shift` on the geodesic from the identity to a Haar
/// random rotation of R^dim selected by `seed`.
Matrix geodesic_rotation(Eigen::Index dim, double shift, std::uint64_t seed);

/// geodesic_rotation(M.rows(), shift, seed) * M.
Matrix apply_subject_rotation(const Matrix& M, double shift, std::uint64_t seed);

/// Rotates the columns of `means` within their own span by the geodesic
/// rotation of that K-dimensional subspace; the complement is untouched.
Matrix mix_class_means(const Matrix& means, double shift, std::uint64_t seed);

}  // namespace ensemble
