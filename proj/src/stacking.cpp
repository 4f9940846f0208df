#include "ensemble/stacking.hpp"
#include "ensemble/data_model.hpp"

#include <omp.h>

#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>

namespace ensemble {

std::string to_string(StackEncoding e) {
    return e == StackEncoding::one_hot_labels ? "one-hot-labels" : "decision-scores";
}

StackEncoding parse_encoding(const std::string& s) {
    if (s == "one-hot-labels" || s == "one-hot" || s == "labels") return StackEncoding::one_hot_labels;
    if (s == "decision-scores" || s == "scores") return StackEncoding::decision_scores;
    throw ConfigError("unknown stack encoding '" + s + "' (expected one-hot-labels or decision-scores)");
}

// ---------------------------------------------------------------- pipelines

Labels BasePipeline::predict(const Matrix& X_raw) const { return model.predict(scaler.transform(X_raw)); }

Matrix BasePipeline::scores(const Matrix& X_raw) const { return model.decision_scores(scaler.transform(X_raw)); }

int BaseBank::n_classes() const {
    if (models.empty()) throw ConfigError("empty base bank");
    return models.front().model.n_classes();
}

std::size_t BaseBank::n_features() const {
    if (models.empty()) throw ConfigError("empty base bank");
    return models.front().model.n_features();
}

BaseBank BaseBank::subset(const std::vector<std::string>& ids) const {
    BaseBank out;
    out.penalty = penalty;
    for (const auto& id : ids) {
        bool found = false;
        for (std::size_t i = 0; i < models.size(); ++i) {
            if (source_subject_ids[i] == id) {
                out.source_subject_ids.push_back(id);
                out.models.push_back(models[i]);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("base bank has no model for subject '" + id + "'");
    }
    return out;
}

namespace {

constexpr char kBankMagic[4] = {'E', 'N', 'S', 'K'};
constexpr std::uint32_t kBankVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw DataError("bank file: truncated");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    auto n = get<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw DataError("bank file: truncated string");
    return s;
}

}  // namespace

void BaseBank::save(const std::filesystem::path& path) const {
    std::ostringstream out(std::ios::binary);
    out.write(kBankMagic, 4);
    put(out, kBankVersion);
    put(out, static_cast<std::uint8_t>(penalty));
    put(out, static_cast<std::uint32_t>(models.size()));
    for (const auto& m : models) {
        put_string(out, m.subject_id);
        put(out, static_cast<std::uint64_t>(m.training_rows));
        m.scaler.serialize(out);
        m.model.serialize(out);
    }
    put(out, static_cast<std::uint32_t>(warnings.size()));
    for (const auto& w : warnings) put_string(out, w);
    write_file_atomic(path, out.str());
}

BaseBank BaseBank::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open bank file '" + path.string() + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBankMagic, 4) != 0) throw DataError("'" + path.string() + "': not a bank file");
    if (get<std::uint32_t>(in) != kBankVersion) throw DataError("'" + path.string() + "': unsupported bank version");
    BaseBank bank;
    bank.penalty = static_cast<Penalty>(get<std::uint8_t>(in));
    auto n = get<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string id = get_string(in);
        auto rows = get<std::uint64_t>(in);
        Standardizer scaler = Standardizer::deserialize(in);
        TrainedModel model = TrainedModel::deserialize(in);
        bank.source_subject_ids.push_back(id);
        bank.models.push_back(BasePipeline{id, std::move(scaler), std::move(model), rows});
    }
    auto nw = get<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < nw; ++i) bank.warnings.push_back(get_string(in));
    return bank;
}

std::string bank_cache_key(const std::string& cohort_hash, const std::string& target, Penalty penalty) {
    return cohort_hash.substr(0, 16) + "_" + target + "_" + to_string(penalty) + ".bank";
}

// ------------------------------------------------------------------ training

std::optional<BasePipeline> train_base(const SubjectDataset& ds, int n_classes, const LinearSvcConfig& cfg) {
    if (count_distinct(ds.labels) < 2) return std::nullopt;
    const Matrix X = ds.as_matrix();
    Standardizer scaler = Standardizer::fit(X);
    TrainedModel model = fit_linear_svc(scaler.transform(X), ds.labels, n_classes, cfg);
    return BasePipeline{ds.subject_id, std::move(scaler), std::move(model), ds.rows()};
}

std::vector<std::optional<BasePipeline>> train_subject_bases(const Cohort& cohort, const LinearSvcConfig& cfg,
                                                             int workers) {
    const auto n = static_cast<long>(cohort.size());
    std::vector<std::optional<BasePipeline>> out(cohort.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (long i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] =
                train_base(cohort.subjects()[static_cast<std::size_t>(i)], cohort.n_classes(), cfg);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

BaseBank assemble_bank(const Cohort& cohort, const std::vector<std::optional<BasePipeline>>& bases,
                       const std::string& target, Penalty penalty) {
    if (cohort.size() < 2) throw ConfigError("ensemble needs a cohort of at least 2 subjects");
    (void)cohort.index_of(target);
    if (bases.size() != cohort.size()) throw ConfigError("assemble_bank: one base slot per subject expected");
    BaseBank bank;
    bank.penalty = penalty;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& id = cohort.subjects()[i].subject_id;
        if (id == target) continue;
        if (!bases[i]) {
            bank.warnings.push_back("subject '" + id + "' skipped: single class");
            continue;
        }
        if (bases[i]->model.family() != Family::linear_svc) {
            throw ConfigError("base models must be linear SVCs");
        }
        bank.source_subject_ids.push_back(id);
        bank.models.push_back(*bases[i]);
    }
    return bank;
}

BaseBank pretrain_bases(const Cohort& cohort, const std::string& target, Penalty penalty, int workers,
                        LinearSvcConfig base_cfg) {
    if (cohort.size() < 2) throw ConfigError("ensemble needs a cohort of at least 2 subjects");
    (void)cohort.index_of(target);
    base_cfg.penalty = penalty;
    // Only source subjects are trained; the target's rows are never touched.
    std::vector<SubjectDataset> sources;
    for (const auto& s : cohort.subjects()) {
        if (s.subject_id != target) sources.push_back(s);
    }
    std::vector<std::optional<BasePipeline>> bases(sources.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (long i = 0; i < static_cast<long>(sources.size()); ++i) {
        try {
            bases[static_cast<std::size_t>(i)] =
                train_base(sources[static_cast<std::size_t>(i)], cohort.n_classes(), base_cfg);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    BaseBank bank;
    bank.penalty = penalty;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (!bases[i]) {
            bank.warnings.push_back("subject '" + sources[i].subject_id + "' skipped: single class");
            continue;
        }
        bank.source_subject_ids.push_back(sources[i].subject_id);
        bank.models.push_back(std::move(*bases[i]));
    }
    return bank;
}

// ------------------------------------------------------------------ stacking

namespace {

void check_bank_for_stacking(const BaseBank& bank, const Matrix& X, StackEncoding enc) {
    if (bank.models.empty()) throw ConfigError("stack_features: empty base bank");
    if (static_cast<std::size_t>(X.cols()) != bank.n_features()) {
        throw DataError("stack_features: target has " + std::to_string(X.cols()) + " features, bank expects " +
                        std::to_string(bank.n_features()));
    }
    if (enc == StackEncoding::decision_scores) {
        for (const auto& m : bank.models) {
            if (m.model.family() != Family::linear_svc) {
                throw ConfigError("stack_features: score encoding requires linear SVC bases, subject '" +
                                  m.subject_id + "' is " + to_string(m.model.family()));
            }
        }
    }
}

void fill_block(const BasePipeline& base, const Matrix& X, StackEncoding enc, Matrix& out, Eigen::Index col0) {
    const int K = base.model.n_classes();
    if (enc == StackEncoding::one_hot_labels) {
        const Labels pred = base.predict(X);
        out.middleCols(col0, K).setZero();
        for (std::size_t r = 0; r < pred.size(); ++r) out(static_cast<Eigen::Index>(r), col0 + pred[r]) = 1.0;
    } else {
        out.middleCols(col0, K) = base.scores(X);
    }
}

}  // namespace

StackedFeatures stack_features(const BaseBank& bank, const Matrix& X_target, StackEncoding enc, int workers) {
    check_bank_for_stacking(bank, X_target, enc);
    const int K = bank.n_classes();
    StackedFeatures sf;
    sf.block_width = K;
    sf.block_subjects = bank.source_subject_ids;
    sf.values.resize(X_target.rows(), static_cast<Eigen::Index>(bank.size()) * K);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (long b = 0; b < static_cast<long>(bank.size()); ++b) {
        try {
            fill_block(bank.models[static_cast<std::size_t>(b)], X_target, enc, sf.values, b * K);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return sf;
}

StackedFeatures StackedFeatures::take(std::span<const std::size_t> rows) const {
    StackedFeatures out;
    out.block_subjects = block_subjects;
    out.block_width = block_width;
    out.values = take_rows(values, rows);
    return out;
}

StackedFeatures StackedFeatures::select_blocks(const std::vector<std::string>& subjects) const {
    StackedFeatures out;
    out.block_width = block_width;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(subjects.size()) * block_width);
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        auto it = std::find(block_subjects.begin(), block_subjects.end(), subjects[s]);
        if (it == block_subjects.end()) throw ConfigError("stacked features have no block for '" + subjects[s] + "'");
        const auto src = static_cast<Eigen::Index>(it - block_subjects.begin()) * block_width;
        out.values.middleCols(static_cast<Eigen::Index>(s) * block_width, block_width) =
            values.middleCols(src, block_width);
        out.block_subjects.push_back(subjects[s]);
    }
    return out;
}

TrainedModel fit_ensemble(const StackedFeatures& stacked, std::span<const int> y_train, int n_classes,
                          const ClassifierConfig& meta_cfg, int workers) {
    if (static_cast<std::size_t>(stacked.values.rows()) != y_train.size()) {
        throw DataError("fit_ensemble: stacked rows and label count differ");
    }
    if (stacked.values.cols() == 0) throw ConfigError("fit_ensemble: no stacked features");
    return fit_classifier(stacked.values, y_train, n_classes, meta_cfg, workers);
}

Labels conventional_decode(const Matrix& X_train, std::span<const int> y_train, const Matrix& X_test, int n_classes,
                           const ClassifierConfig& cfg, int workers) {
    const Standardizer scaler = Standardizer::fit(X_train);
    const TrainedModel model = fit_classifier(scaler.transform(X_train), y_train, n_classes, cfg, workers);
    return model.predict(scaler.transform(X_test));
}

std::map<std::string, double> subject_importances(const TrainedModel& meta, const BaseBank& bank) {
    if (bank.models.empty()) throw ConfigError("subject_importances: empty base bank");
    const int K = bank.n_classes();
    if (meta.n_features() != bank.size() * static_cast<std::size_t>(K)) {
        throw DataError("subject_importances: meta model width does not match the bank");
    }
    std::map<std::string, double> out;
    if (meta.family() == Family::mlp) throw ConfigError("subject_importances: not available for an MLP meta model");
    const Matrix w = feature_weights(meta);
    for (std::size_t b = 0; b < bank.size(); ++b) {
        const auto col0 = static_cast<Eigen::Index>(b) * K;
        out[bank.source_subject_ids[b]] = w.middleCols(col0, K).cwiseAbs().sum();
    }
    return out;
}

// ----------------------------------------------------------------- reference

namespace reference {

std::vector<std::optional<BasePipeline>> train_subject_bases(const Cohort& cohort, const LinearSvcConfig& cfg) {
    std::vector<std::optional<BasePipeline>> out;
    for (const auto& s : cohort.subjects()) out.push_back(train_base(s, cohort.n_classes(), cfg));
    return out;
}

StackedFeatures stack_features(const BaseBank& bank, const Matrix& X_target, StackEncoding enc) {
    check_bank_for_stacking(bank, X_target, enc);
    const int K = bank.n_classes();
    StackedFeatures sf;
    sf.block_width = K;
    sf.block_subjects = bank.source_subject_ids;
    sf.values.resize(X_target.rows(), static_cast<Eigen::Index>(bank.size()) * K);
    for (std::size_t b = 0; b < bank.size(); ++b) {
        fill_block(bank.models[b], X_target, enc, sf.values, static_cast<Eigen::Index>(b) * K);
    }
    return sf;
}

}  // namespace reference

}  // namespace ensemble
