#include "ensemble/data_model.hpp"
#include "ensemble/hashing.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace ensemble {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

// ---------------------------------------------------------------- LabelSpace

LabelSpace::LabelSpace(std::vector<std::string> classes) : classes_(std::move(classes)) {
    if (classes_.size() < 2) {
        throw DataError("label space needs at least 2 classes, got " + std::to_string(classes_.size()));
    }
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (classes_[i].empty()) throw DataError("label space: empty class name at position " + std::to_string(i));
        auto [it, inserted] = index_.emplace(classes_[i], static_cast<int>(i));
        if (!inserted) throw DataError("label space: duplicate class name '" + classes_[i] + "'");
    }
}

std::optional<int> LabelSpace::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int LabelSpace::encode(const std::string& name) const {
    auto idx = find(name);
    if (!idx) throw DataError("unknown label '" + name + "'");
    return *idx;
}

// -------------------------------------------------------------------- Cohort

Cohort::Cohort(std::vector<SubjectDataset> subjects, LabelSpace label_space, std::size_t n_features)
    : subjects_(std::move(subjects)), label_space_(std::move(label_space)), n_features_(n_features) {
    if (n_features_ == 0) throw DataError("cohort: n_features must be positive");
    if (label_space_.size() < 2) throw DataError("cohort: label space needs at least 2 classes");
    std::set<std::string> ids;
    const int k = label_space_.size();
    for (const auto& s : subjects_) {
        if (!ids.insert(s.subject_id).second) throw DataError("cohort: duplicate subject id '" + s.subject_id + "'");
        if (s.cols() != n_features_) {
            throw DataError("subject '" + s.subject_id + "': dimension mismatch, expected " +
                            std::to_string(n_features_) + " features, got " + std::to_string(s.cols()));
        }
        if (s.rows() == 0) throw DataError("subject '" + s.subject_id + "': no samples");
        if (s.labels.size() != s.rows()) {
            throw DataError("subject '" + s.subject_id + "': " + std::to_string(s.labels.size()) + " labels for " +
                            std::to_string(s.rows()) + " rows");
        }
        for (std::size_t r = 0; r < s.rows(); ++r) {
            if (s.labels[r] < 0 || s.labels[r] >= k) {
                throw DataError("subject '" + s.subject_id + "' row " + std::to_string(r) + ": label " +
                                std::to_string(s.labels[r]) + " outside 0.." + std::to_string(k - 1));
            }
            for (Eigen::Index c = 0; c < s.features.cols(); ++c) {
                if (!std::isfinite(s.features(static_cast<Eigen::Index>(r), c))) {
                    throw DataError("subject '" + s.subject_id + "' row " + std::to_string(r) +
                                    ": non-finite feature at column " + std::to_string(c));
                }
            }
        }
    }
}

const SubjectDataset& Cohort::subject(const std::string& id) const { return subjects_[index_of(id)]; }

std::size_t Cohort::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
        if (subjects_[i].subject_id == id) return i;
    }
    throw DataError("cohort: unknown subject '" + id + "'");
}

std::vector<std::string> Cohort::subject_ids() const {
    std::vector<std::string> ids;
    ids.reserve(subjects_.size());
    for (const auto& s : subjects_) ids.push_back(s.subject_id);
    return ids;
}

std::string Cohort::content_hash() const {
    std::string buf;
    for (const auto& c : label_space_.classes()) {
        buf += c;
        buf.push_back('\n');
    }
    buf += std::to_string(n_features_) + "\n";
    for (const auto& s : subjects_) {
        buf += s.subject_id + "\n" + std::to_string(s.rows()) + "\n";
        const auto* bytes = reinterpret_cast<const char*>(s.features.data());
        buf.append(bytes, static_cast<std::size_t>(s.features.size()) * sizeof(float));
        const auto* lbytes = reinterpret_cast<const char*>(s.labels.data());
        buf.append(lbytes, s.labels.size() * sizeof(int));
    }
    return sha1_hex(buf);
}

// ----------------------------------------------------------------- SplitPlan

bool SplitPlan::is_test_row(std::size_t row) const {
    return std::find(test_indices.begin(), test_indices.end(), row) != test_indices.end();
}

void audit_no_test_rows(const SplitPlan& plan, std::span<const std::size_t> rows, const std::string& context) {
    std::set<std::size_t> test(plan.test_indices.begin(), plan.test_indices.end());
    for (auto r : rows) {
        if (test.count(r) != 0) {
            throw DataError("leakage audit (" + context + "): test row " + std::to_string(r) + " used for fitting");
        }
    }
}

// ----------------------------------------------------------------------- I/O

namespace {

struct BinaryHeader {
    char magic[4];
    std::uint32_t version;
    std::uint64_t rows;
    std::uint64_t cols;
};

constexpr std::uint32_t kFeatureVersion = 1;

bool is_csv(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv";
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::string text = read_text(path);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = end + 1;
    }
    return lines;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

FeatureMatrix read_feature_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file '" + path.string() + "'");
    BinaryHeader h{};
    in.read(h.magic, 4);
    in.read(reinterpret_cast<char*>(&h.version), sizeof h.version);
    in.read(reinterpret_cast<char*>(&h.rows), sizeof h.rows);
    in.read(reinterpret_cast<char*>(&h.cols), sizeof h.cols);
    if (!in || std::memcmp(h.magic, "ENSB", 4) != 0) {
        throw DataError("'" + path.string() + "': not an ENSB feature file");
    }
    if (h.version != kFeatureVersion) {
        throw DataError("'" + path.string() + "': unsupported feature file version " + std::to_string(h.version));
    }
    FeatureMatrix m(static_cast<Eigen::Index>(h.rows), static_cast<Eigen::Index>(h.cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(h.rows * h.cols * sizeof(float)));
    if (!in) throw DataError("'" + path.string() + "': truncated feature payload");
    return m;
}

void write_feature_file(const fs::path& path, const FeatureMatrix& features) {
    std::string buf("ENSB", 4);
    auto append = [&buf](const auto& v) { buf.append(reinterpret_cast<const char*>(&v), sizeof v); };
    append(kFeatureVersion);
    append(static_cast<std::uint64_t>(features.rows()));
    append(static_cast<std::uint64_t>(features.cols()));
    buf.append(reinterpret_cast<const char*>(features.data()),
               static_cast<std::size_t>(features.size()) * sizeof(float));
    write_file_atomic(path, buf);
}

FeatureMatrix read_feature_csv(const fs::path& path) {
    auto lines = read_lines(path);
    std::vector<std::vector<float>> rows;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (line.empty()) continue;
        std::vector<float> row;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p <= end) {
            while (p < end && *p == ' ') ++p;
            float v = 0.0f;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc()) {
                throw DataError("'" + path.string() + "' row " + std::to_string(i) + ": unparsable value");
            }
            row.push_back(v);
            p = next;
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            if (*p != ',') throw DataError("'" + path.string() + "' row " + std::to_string(i) + ": expected ','");
            ++p;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw DataError("'" + path.string() + "' row " + std::to_string(i) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    FeatureMatrix m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return m;
}

void write_feature_csv(const fs::path& path, const FeatureMatrix& features) {
    std::string out;
    char buf[64];
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c) {
            if (c > 0) out.push_back(',');
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, features(r, c));
            out.append(buf, p);
        }
        out.push_back('\n');
    }
    write_file_atomic(path, out);
}

Cohort load_cohort(const fs::path& manifest_path) {
    fs::path manifest = manifest_path;
    if (fs::is_directory(manifest)) manifest /= "cohort.json";
    if (!fs::exists(manifest)) throw DataError("missing manifest '" + manifest.string() + "'");
    json doc;
    try {
        doc = json::parse(read_text(manifest));
    } catch (const json::exception& e) {
        throw DataError("manifest '" + manifest.string() + "': " + e.what());
    }
    const fs::path base = manifest.parent_path();
    try {
        LabelSpace space(doc.at("classes").get<std::vector<std::string>>());
        auto n_features = doc.at("n_features").get<std::size_t>();
        std::vector<SubjectDataset> subjects;
        for (const auto& entry : doc.at("subjects")) {
            SubjectDataset s;
            s.subject_id = entry.at("id").get<std::string>();
            fs::path fpath = base / entry.at("features").get<std::string>();
            fs::path lpath = base / entry.at("labels").get<std::string>();
            if (!fs::exists(fpath)) {
                throw DataError("subject '" + s.subject_id + "': missing feature file '" + fpath.string() + "'");
            }
            if (!fs::exists(lpath)) {
                throw DataError("subject '" + s.subject_id + "': missing label file '" + lpath.string() + "'");
            }
            s.features = is_csv(fpath) ? read_feature_csv(fpath) : read_feature_file(fpath);
            if (s.cols() != n_features) {
                throw DataError("subject '" + s.subject_id + "': dimension mismatch, expected " +
                                std::to_string(n_features) + " features, got " + std::to_string(s.cols()));
            }
            auto lines = read_lines(lpath);
            while (!lines.empty() && lines.back().empty()) lines.pop_back();
            if (lines.size() != s.rows()) {
                throw DataError("subject '" + s.subject_id + "': " + std::to_string(lines.size()) +
                                " labels for " + std::to_string(s.rows()) + " rows");
            }
            for (std::size_t r = 0; r < lines.size(); ++r) {
                auto idx = space.find(lines[r]);
                if (!idx) {
                    throw DataError("subject '" + s.subject_id + "' row " + std::to_string(r) + ": unknown label '" +
                                    lines[r] + "'");
                }
                s.labels.push_back(*idx);
            }
            subjects.push_back(std::move(s));
        }
        return Cohort(std::move(subjects), std::move(space), n_features);
    } catch (const json::exception& e) {
        throw DataError("manifest '" + manifest.string() + "': " + e.what());
    }
}

void save_cohort(const Cohort& cohort, const fs::path& directory, FeatureFormat format) {
    fs::create_directories(directory);
    json doc;
    doc["classes"] = cohort.label_space().classes();
    doc["n_features"] = cohort.n_features();
    doc["subjects"] = json::array();
    for (const auto& s : cohort.subjects()) {
        std::string fname = s.subject_id + (format == FeatureFormat::binary ? ".ensb" : ".csv");
        std::string lname = s.subject_id + ".labels";
        if (format == FeatureFormat::binary) {
            write_feature_file(directory / fname, s.features);
        } else {
            write_feature_csv(directory / fname, s.features);
        }
        std::string labels;
        for (int l : s.labels) labels += cohort.label_space().name(l) + "\n";
        write_file_atomic(directory / lname, labels);
        doc["subjects"].push_back({{"id", s.subject_id}, {"features", fname}, {"labels", lname}});
    }
    write_file_atomic(directory / "cohort.json", doc.dump(2) + "\n");
}

// ------------------------------------------------------------------ splitting

namespace {

std::map<int, IndexList> rows_by_class(std::span<const int> labels, std::span<const std::size_t> rows) {
    std::map<int, IndexList> out;
    for (auto r : rows) out[labels[r]].push_back(r);
    return out;
}

}  // namespace

SplitPlan stratified_split(const SubjectDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("stratified_split: test fraction must lie in (0,1)");
    }
    IndexList all(ds.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto by_class = rows_by_class(ds.labels, all);
    for (const auto& [cls, rows] : by_class) {
        if (rows.size() < 2) {
            throw DataError("subject '" + ds.subject_id + "': class " + std::to_string(cls) +
                            " has fewer than 2 samples, cannot stratify");
        }
    }

    std::mt19937_64 rng(seed);
    const auto n = static_cast<double>(ds.rows());
    const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * n - 1e-9));

    struct Quota {
        int cls;
        std::size_t count;
        std::size_t capacity;
        double remainder;
        std::uint64_t tie;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [cls, rows] : by_class) {
        double q = test_fraction * static_cast<double>(rows.size());
        auto base = static_cast<std::size_t>(std::floor(q + 1e-9));
        base = std::clamp<std::size_t>(base, 1, rows.size() - 1);
        quotas.push_back({cls, base, rows.size() - 1, q - static_cast<double>(base), rng()});
        assigned += base;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (std::abs(quotas[a].remainder - quotas[b].remainder) > 1e-12) {
            return quotas[a].remainder > quotas[b].remainder;
        }
        return quotas[a].tie < quotas[b].tie;
    });
    bool progress = true;
    while (assigned < n_test && progress) {
        progress = false;
        for (auto i : order) {
            if (assigned >= n_test) break;
            if (quotas[i].count < quotas[i].capacity) {
                ++quotas[i].count;
                ++assigned;
                progress = true;
            }
        }
    }

    SplitPlan plan;
    plan.seed = seed;
    for (const auto& q : quotas) {
        IndexList rows = by_class[q.cls];
        std::shuffle(rows.begin(), rows.end(), rng);
        plan.test_indices.insert(plan.test_indices.end(), rows.begin(), rows.begin() + static_cast<long>(q.count));
        plan.train_indices.insert(plan.train_indices.end(), rows.begin() + static_cast<long>(q.count), rows.end());
    }
    std::sort(plan.test_indices.begin(), plan.test_indices.end());
    std::sort(plan.train_indices.begin(), plan.train_indices.end());
    return plan;
}

std::vector<std::size_t> geometric_train_grid(std::size_t n_train_max, std::size_t n_classes, std::size_t n_points) {
    if (n_classes == 0) throw ConfigError("geometric_train_grid: n_classes must be positive");
    if (n_train_max < n_classes) {
        throw ConfigError("geometric_train_grid: n_train_max (" + std::to_string(n_train_max) +
                          ") is smaller than n_classes (" + std::to_string(n_classes) + ")");
    }
    if (n_points < 2) throw ConfigError("geometric_train_grid: need at least 2 points");
    const double lo = static_cast<double>(n_classes);
    const double ratio = static_cast<double>(n_train_max) / lo;
    std::vector<std::size_t> sizes;
    for (std::size_t k = 0; k < n_points; ++k) {
        double v = lo * std::pow(ratio, static_cast<double>(k) / static_cast<double>(n_points - 1));
        auto s = static_cast<std::size_t>(std::llround(v));
        s = std::clamp(s, n_classes, n_train_max);
        if (sizes.empty() || s > sizes.back()) sizes.push_back(s);
    }
    sizes.back() = n_train_max;
    return sizes;
}

IndexList subsample_stratified(const SubjectDataset& ds, const SplitPlan& plan, std::size_t size, std::uint64_t seed) {
    if (size > plan.train_indices.size()) {
        throw ConfigError("subsample_stratified: size " + std::to_string(size) + " exceeds training split of " +
                          std::to_string(plan.train_indices.size()));
    }
    auto by_class = rows_by_class(ds.labels, plan.train_indices);
    std::mt19937_64 rng(seed);
    std::vector<IndexList> pools;
    for (auto& [cls, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        pools.push_back(rows);
    }
    std::shuffle(pools.begin(), pools.end(), rng);

    // Round-robin over classes in a fixed order: the dealt sequence does not
    // depend on `size`, so smaller subsamples are prefixes of larger ones.
    IndexList out;
    out.reserve(size);
    std::vector<std::size_t> taken(pools.size(), 0);
    while (out.size() < size) {
        for (std::size_t c = 0; c < pools.size() && out.size() < size; ++c) {
            if (taken[c] < pools[c].size()) out.push_back(pools[c][taken[c]++]);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace ensemble
