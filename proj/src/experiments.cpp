#include "ensemble/experiments.hpp"
#include "ensemble/hashing.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace ensemble {

using json = nlohmann::json;

std::string to_string(Approach a) { return a == Approach::conventional ? "conventional" : "ensemble"; }
std::string to_string(SweepKind s) { return s == SweepKind::size ? "size" : "subject"; }

Approach parse_approach(const std::string& s) {
    if (s == "conventional") return Approach::conventional;
    if (s == "ensemble") return Approach::ensemble;
    throw ConfigError("unknown approach '" + s + "' (expected conventional or ensemble)");
}

SweepKind parse_sweep(const std::string& s) {
    if (s == "size") return SweepKind::size;
    if (s == "subject" || s == "subjects") return SweepKind::subject;
    throw ConfigError("unknown sweep '" + s + "' (expected size or subject)");
}

// ------------------------------------------------------------------ config

int ExperimentConfig::resolved_n_cv() const {
    if (n_cv) return *n_cv;
    return sweep == SweepKind::size ? 20 : 5;
}

ClassifierConfig ExperimentConfig::meta_config(Family f) const {
    switch (f) {
        case Family::linear_svc: return svc;
        case Family::mlp: return mlp;
        case Family::forest: return forest;
    }
    throw ConfigError("unknown family");
}

void ExperimentConfig::validate() const {
    if (resolved_n_cv() < 1) throw ConfigError("n_cv must be at least 1");
    if (grid_points < 2) throw ConfigError("grid_points must be at least 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0,1)");
    if (approaches.empty()) throw ConfigError("at least one approach is required");
    if (meta_families.empty()) throw ConfigError("at least one meta family is required");
    if (bootstrap_iterations < 100) throw ConfigError("bootstrap_iterations must be at least 100");
    for (auto m : subject_subset_sizes) {
        if (m < 1) throw ConfigError("subject subset sizes must be positive");
    }
    base_svc.validate();
    svc.validate();
    mlp.validate();
    forest.validate();
}

namespace {

json svc_to_json(const LinearSvcConfig& c) {
    return {{"penalty", to_string(c.penalty)}, {"C", c.C}, {"tol", c.tol}, {"max_iter", c.max_iter}};
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

LinearSvcConfig svc_from_json(const json& j, LinearSvcConfig c, const std::string& where) {
    check_keys(j, {"penalty", "C", "tol", "max_iter"}, where);
    if (j.contains("penalty")) c.penalty = parse_penalty(j.at("penalty").get<std::string>());
    read_field(j, "C", c.C);
    read_field(j, "tol", c.tol);
    read_field(j, "max_iter", c.max_iter);
    return c;
}

}  // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["sweep"] = to_string(sweep);
    j["approaches"] = json::array();
    for (auto a : approaches) j["approaches"].push_back(to_string(a));
    j["meta_families"] = json::array();
    for (auto f : meta_families) j["meta_families"].push_back(to_string(f));
    j["base_penalty"] = to_string(base_penalty);
    j["n_cv"] = resolved_n_cv();
    j["grid_points"] = grid_points;
    j["test_fraction"] = test_fraction;
    j["subject_subset_sizes"] = subject_subset_sizes;
    j["encoding"] = to_string(encoding);
    j["bootstrap_iterations"] = bootstrap_iterations;
    j["master_seed"] = master_seed;
    j["targets"] = targets;
    j["base_svc"] = svc_to_json(base_svc);
    j["svc"] = svc_to_json(svc);
    j["mlp"] = {{"hidden_layers", mlp.hidden_layers}, {"learning_rate", mlp.learning_rate},
                {"beta1", mlp.beta1},                 {"beta2", mlp.beta2},
                {"epsilon", mlp.epsilon},             {"alpha", mlp.alpha},
                {"max_iter", mlp.max_iter},           {"batch_size", mlp.batch_size},
                {"tol", mlp.tol},                     {"n_iter_no_change", mlp.n_iter_no_change}};
    j["forest"] = {{"n_trees", forest.n_trees},
                   {"bootstrap", forest.bootstrap},
                   {"max_features", forest.max_features},
                   {"min_samples_split", forest.min_samples_split}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    try {
        check_keys(j,
                   {"sweep", "approaches", "meta_families", "base_penalty", "n_cv", "grid_points", "test_fraction",
                    "subject_subset_sizes", "encoding", "bootstrap_iterations", "master_seed", "targets", "base_svc",
                    "svc", "mlp", "forest", "cohort"},
                   "experiment config");
        if (j.contains("sweep")) c.sweep = parse_sweep(j.at("sweep").get<std::string>());
        if (j.contains("approaches")) {
            c.approaches.clear();
            for (const auto& a : j.at("approaches")) c.approaches.push_back(parse_approach(a.get<std::string>()));
        }
        if (j.contains("meta_families")) {
            c.meta_families.clear();
            for (const auto& f : j.at("meta_families")) c.meta_families.push_back(parse_family(f.get<std::string>()));
        }
        if (j.contains("base_penalty")) c.base_penalty = parse_penalty(j.at("base_penalty").get<std::string>());
        if (j.contains("n_cv") && !j.at("n_cv").is_null()) c.n_cv = j.at("n_cv").get<int>();
        read_field(j, "grid_points", c.grid_points);
        read_field(j, "test_fraction", c.test_fraction);
        read_field(j, "subject_subset_sizes", c.subject_subset_sizes);
        if (j.contains("encoding")) c.encoding = parse_encoding(j.at("encoding").get<std::string>());
        read_field(j, "bootstrap_iterations", c.bootstrap_iterations);
        read_field(j, "master_seed", c.master_seed);
        read_field(j, "targets", c.targets);
        if (j.contains("base_svc")) c.base_svc = svc_from_json(j.at("base_svc"), c.base_svc, "base_svc");
        if (j.contains("svc")) c.svc = svc_from_json(j.at("svc"), c.svc, "svc");
        if (j.contains("mlp")) {
            const auto& m = j.at("mlp");
            check_keys(m,
                       {"hidden_layers", "learning_rate", "beta1", "beta2", "epsilon", "alpha", "max_iter",
                        "batch_size", "tol", "n_iter_no_change"},
                       "mlp");
            read_field(m, "hidden_layers", c.mlp.hidden_layers);
            read_field(m, "learning_rate", c.mlp.learning_rate);
            read_field(m, "beta1", c.mlp.beta1);
            read_field(m, "beta2", c.mlp.beta2);
            read_field(m, "epsilon", c.mlp.epsilon);
            read_field(m, "alpha", c.mlp.alpha);
            read_field(m, "max_iter", c.mlp.max_iter);
            read_field(m, "batch_size", c.mlp.batch_size);
            read_field(m, "tol", c.mlp.tol);
            read_field(m, "n_iter_no_change", c.mlp.n_iter_no_change);
        }
        if (j.contains("forest")) {
            const auto& f = j.at("forest");
            check_keys(f, {"n_trees", "bootstrap", "max_features", "min_samples_split"}, "forest");
            read_field(f, "n_trees", c.forest.n_trees);
            read_field(f, "bootstrap", c.forest.bootstrap);
            read_field(f, "max_features", c.forest.max_features);
            read_field(f, "min_samples_split", c.forest.min_samples_split);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

// ------------------------------------------------------------------ metrics

double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
    if (y_true.empty()) throw DataError("balanced_accuracy: empty input");
    if (y_true.size() != y_pred.size()) throw DataError("balanced_accuracy: length mismatch");
    std::vector<double> total(static_cast<std::size_t>(n_classes), 0.0);
    std::vector<double> hit(static_cast<std::size_t>(n_classes), 0.0);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const auto c = static_cast<std::size_t>(y_true[i]);
        if (c >= total.size()) throw DataError("balanced_accuracy: label outside 0..K-1");
        total[c] += 1.0;
        if (y_pred[i] == y_true[i]) hit[c] += 1.0;
    }
    double sum = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < total.size(); ++c) {
        if (total[c] > 0.0) {
            sum += hit[c] / total[c];
            ++present;
        }
    }
    return sum / present;
}

Interval bootstrap_ci(std::span<const double> values, int iterations, double level, std::uint64_t seed) {
    if (values.empty()) throw ConfigError("bootstrap_ci: no values");
    if (iterations < 100) throw ConfigError("bootstrap_ci: need at least 100 iterations");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap_ci: level must lie in (0,1)");
    if (values.size() == 1) return {values[0], values[0], true};

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> means(static_cast<std::size_t>(iterations));
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
        m = s / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, means.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return means[lo] + frac * (means[hi] - means[lo]);
    };
    const double tail = (1.0 - level) / 2.0;
    return {quantile(tail), quantile(1.0 - tail), false};
}

// -------------------------------------------------------------- subsetting

std::vector<std::vector<std::string>> draw_subject_subsets(const std::vector<std::string>& sources, std::size_t m,
                                                           int n_splits, std::uint64_t seed) {
    if (m < 1 || m > sources.size()) {
        throw ConfigError("subject subset size " + std::to_string(m) + " outside 1.." + std::to_string(sources.size()));
    }
    // Number of possible subsets (capped; only small counts matter).
    double combos = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
        combos = combos * static_cast<double>(sources.size() - i) / static_cast<double>(i + 1);
        if (combos > 1e9) break;
    }

    // Distinct subsets until every one has been used, then start over.
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::string>> out;
    std::set<std::vector<std::string>> seen;
    while (static_cast<int>(out.size()) < n_splits) {
        if (static_cast<double>(seen.size()) + 0.5 > combos) seen.clear();
        std::vector<std::string> pool = sources;
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(m);
        std::sort(pool.begin(), pool.end());
        if (!seen.insert(pool).second) continue;
        out.push_back(std::move(pool));
    }
    return out;
}

// ------------------------------------------------------------------- sweeps

namespace {

std::string index_hash(std::span<const std::size_t> rows) {
    std::string buf;
    for (auto r : rows) buf += std::to_string(r) + ",";
    char hex[17];
    auto h = fnv1a(buf);
    for (int i = 15; i >= 0; --i) {
        hex[i] = "0123456789abcdef"[h & 0xF];
        h >>= 4;
    }
    hex[16] = '\0';
    return hex;
}

ClassifierConfig seeded(ClassifierConfig cfg, std::uint64_t seed) {
    if (auto* m = std::get_if<MlpConfig>(&cfg)) m->seed = seed;
    if (auto* f = std::get_if<ForestConfig>(&cfg)) f->seed = seed;
    return cfg;
}

bool has(const std::vector<Approach>& v, Approach a) { return std::find(v.begin(), v.end(), a) != v.end(); }

struct TargetContext {
    const SubjectDataset* ds = nullptr;
    Matrix X;
    StackedFeatures stacked;  // all rows of the target, every source block
    std::vector<std::string> sources;
    std::vector<std::vector<std::vector<std::string>>> subsets;  // [subset size index][split]
};

std::vector<std::string> resolve_targets(const Cohort& cohort, const ExperimentConfig& cfg) {
    if (cfg.targets.empty()) return cohort.subject_ids();
    for (const auto& t : cfg.targets) (void)cohort.index_of(t);
    return cfg.targets;
}

// Builds or loads one bank per target. Source pipelines are trained once per
// subject and shared by every bank that includes that subject.
std::map<std::string, BaseBank> prepare_banks(const Cohort& cohort, const ExperimentConfig& cfg,
                                              const RunOptions& opts, const std::vector<std::string>& targets,
                                              json& meta) {
    const auto t0 = std::chrono::steady_clock::now();
    LinearSvcConfig base_cfg = cfg.base_svc;
    base_cfg.penalty = cfg.base_penalty;
    std::map<std::string, BaseBank> banks;
    std::vector<std::string> missing;
    int hits = 0;
    std::string cohort_hash;
    // Base solver settings are folded into the file name so that a change of C
    // or tolerance never reuses a stale bank.
    const std::string solver_tag = sha1_hex(svc_to_json(base_cfg).dump()).substr(0, 8);
    auto cache_path = [&](const std::string& t) {
        return opts.bank_cache_dir / (solver_tag + "_" + bank_cache_key(cohort_hash, t, cfg.base_penalty));
    };
    if (!opts.bank_cache_dir.empty()) {
        std::filesystem::create_directories(opts.bank_cache_dir);
        cohort_hash = cohort.content_hash();
        for (const auto& t : targets) {
            if (std::filesystem::exists(cache_path(t))) {
                banks.emplace(t, BaseBank::load(cache_path(t)));
                ++hits;
            } else {
                missing.push_back(t);
            }
        }
    } else {
        missing = targets;
    }
    if (!missing.empty()) {
        const auto bases = train_subject_bases(cohort, base_cfg, opts.workers);
        for (const auto& t : missing) {
            BaseBank bank = assemble_bank(cohort, bases, t, cfg.base_penalty);
            if (!opts.bank_cache_dir.empty()) bank.save(cache_path(t));
            banks.emplace(t, std::move(bank));
        }
    }
    meta["bank_cache"] = {{"enabled", !opts.bank_cache_dir.empty()},
                          {"hits", hits},
                          {"misses", static_cast<int>(missing.size())}};
    meta["bank_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return banks;
}

template <class Job>
std::vector<std::vector<RunRecord>> run_jobs(std::size_t n_jobs, int workers, Job&& job) {
    std::vector<std::vector<RunRecord>> out(n_jobs);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (long j = 0; j < static_cast<long>(n_jobs); ++j) {
        try {
            out[static_cast<std::size_t>(j)] = job(static_cast<std::size_t>(j));
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

struct CellResult {
    std::optional<double> accuracy;
    std::string failure;
};

template <class Fn>
CellResult evaluate_cell(Fn&& fn) {
    try {
        return {fn(), {}};
    } catch (const Error& e) {
        return {std::nullopt, e.what()};
    }
}

struct SplitCells {
    SplitPlan plan;
    std::vector<std::size_t> grid;
    std::vector<IndexList> rows;  // per grid size
    std::vector<bool> leakage_ok;
    Matrix X_test;
    Labels y_test;
    std::string test_hash;
};

SplitCells make_split_cells(const TargetContext& ctx, const ExperimentConfig& cfg, int split, int n_classes) {
    SplitCells sc;
    const auto& ds = *ctx.ds;
    const std::string key = ds.subject_id + "/" + std::to_string(split);
    sc.plan = stratified_split(ds, cfg.test_fraction, derive_seed(cfg.master_seed, "split/" + key));
    sc.grid = geometric_train_grid(sc.plan.train_indices.size(), static_cast<std::size_t>(n_classes), cfg.grid_points);
    const auto sub_seed = derive_seed(cfg.master_seed, "subsample/" + key);
    for (auto size : sc.grid) {
        IndexList rows = subsample_stratified(ds, sc.plan, size, sub_seed);
        bool ok = true;
        try {
            audit_no_test_rows(sc.plan, rows, key);
        } catch (const DataError&) {
            ok = false;
        }
        sc.rows.push_back(std::move(rows));
        sc.leakage_ok.push_back(ok);
    }
    sc.X_test = take_rows(ctx.X, sc.plan.test_indices);
    sc.y_test = take_labels(ds.labels, sc.plan.test_indices);
    sc.test_hash = index_hash(sc.plan.test_indices);
    return sc;
}

double conventional_cell(const TargetContext& ctx, const SplitCells& sc, std::size_t gi, int K,
                         const ClassifierConfig& cfg) {
    const auto& rows = sc.rows[gi];
    const Labels pred = conventional_decode(take_rows(ctx.X, rows), take_labels(ctx.ds->labels, rows), sc.X_test, K, cfg);
    return balanced_accuracy(sc.y_test, pred, K);
}

double ensemble_cell(const StackedFeatures& stacked, const TargetContext& ctx, const SplitCells& sc, std::size_t gi,
                     int K, const ClassifierConfig& cfg) {
    const auto& rows = sc.rows[gi];
    const TrainedModel meta = fit_ensemble(stacked.take(rows), take_labels(ctx.ds->labels, rows), K, cfg);
    const Labels pred = meta.predict(stacked.take(sc.plan.test_indices).values);
    return balanced_accuracy(sc.y_test, pred, K);
}

RunRecord base_record(const TargetContext& ctx, const SplitCells& sc, int split, std::size_t gi, int K) {
    RunRecord r;
    r.target = ctx.ds->subject_id;
    r.split = split;
    r.size_index = static_cast<int>(gi);
    r.train_size = sc.grid[gi];
    r.samples_per_class = sc.grid[gi] / static_cast<std::size_t>(K);
    r.leakage_ok = sc.leakage_ok[gi];
    r.test_hash = sc.test_hash;
    return r;
}

std::vector<std::size_t> resolve_subset_sizes(const ExperimentConfig& cfg, std::size_t n_sources) {
    std::vector<std::size_t> sizes = cfg.subject_subset_sizes;
    if (sizes.empty()) {
        for (std::size_t m = 1; m < n_sources; m *= 2) sizes.push_back(m);
        sizes.push_back(n_sources);
    }
    for (auto m : sizes) {
        if (m > n_sources) {
            throw ConfigError("subject subset size " + std::to_string(m) + " exceeds the " +
                              std::to_string(n_sources) + " available source subjects");
        }
    }
    return sizes;
}

struct Prepared {
    std::vector<TargetContext> contexts;
    json meta = json::object();
    std::chrono::steady_clock::time_point start;
};

Prepared prepare(const Cohort& cohort, const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    Prepared p;
    p.start = std::chrono::steady_clock::now();
    const bool want_ensemble = has(cfg.approaches, Approach::ensemble);
    if (want_ensemble && cohort.size() < 2) throw ConfigError("the ensemble approach needs at least 2 subjects");
    const auto targets = resolve_targets(cohort, cfg);

    std::map<std::string, BaseBank> banks;
    if (want_ensemble) banks = prepare_banks(cohort, cfg, opts, targets, p.meta);

    json base_rows = json::object();
    json bank_sources = json::object();
    for (const auto& t : targets) {
        TargetContext ctx;
        ctx.ds = &cohort.subject(t);
        ctx.X = ctx.ds->as_matrix();
        if (want_ensemble) {
            const auto& bank = banks.at(t);
            ctx.sources = bank.source_subject_ids;
            ctx.stacked = stack_features(bank, ctx.X, cfg.encoding, opts.workers);
            for (const auto& m : bank.models) base_rows[m.subject_id] = m.training_rows;
            bank_sources[t] = bank.source_subject_ids;
            json warnings = bank.warnings;
            if (!bank.warnings.empty()) p.meta["bank_warnings"][t] = warnings;
        }
        p.contexts.push_back(std::move(ctx));
    }
    if (want_ensemble) {
        p.meta["base_training_rows"] = base_rows;
        p.meta["bank_sources"] = bank_sources;
    }
    return p;
}

void finish(ExperimentReport& report, Prepared& p, const Cohort& cohort, const RunOptions& opts) {
    report.metadata = std::move(p.meta);
    report.metadata["bootstrap_unit"] = "per (target subject, cv split) mean accuracy within a cell";
    report.metadata["weighting"] = "uniform per record";
    report.metadata["encoding"] = to_string(report.config.encoding);
    report.metadata["n_cv"] = report.config.resolved_n_cv();
    report.metadata["test_fraction"] = report.config.test_fraction;
    report.metadata["cohort_hash"] = cohort.content_hash();
    report.metadata["config_hash"] = sha1_hex(report.config.to_json().dump());
    json subject_rows = json::object();
    for (const auto& s : cohort.subjects()) subject_rows[s.subject_id] = s.rows();
    report.metadata["subject_rows"] = subject_rows;
    summarize(report);
    report.metadata["content_hash"] = report.content_hash();
    report.metadata["workers"] = opts.workers;
    report.metadata["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - p.start).count();
}

}  // namespace

ExperimentReport run_size_sweep(const Cohort& cohort, const ExperimentConfig& cfg_in, const RunOptions& opts) {
    ExperimentConfig cfg = cfg_in;
    cfg.sweep = SweepKind::size;
    Prepared p = prepare(cohort, cfg, opts);
    const int K = cohort.n_classes();
    const int n_cv = cfg.resolved_n_cv();
    const std::size_t n_jobs = p.contexts.size() * static_cast<std::size_t>(n_cv);

    json grids = json::object();
    auto results = run_jobs(n_jobs, opts.workers, [&](std::size_t j) {
        const auto& ctx = p.contexts[j / static_cast<std::size_t>(n_cv)];
        const int split = static_cast<int>(j % static_cast<std::size_t>(n_cv));
        const SplitCells sc = make_split_cells(ctx, cfg, split, K);
        std::vector<RunRecord> out;
        for (std::size_t gi = 0; gi < sc.grid.size(); ++gi) {
            for (auto fam : cfg.meta_families) {
                for (auto approach : cfg.approaches) {
                    RunRecord r = base_record(ctx, sc, split, gi, K);
                    r.family = fam;
                    r.approach = approach;
                    r.n_subjects_in_ensemble = approach == Approach::ensemble ? ctx.sources.size() : 0;
                    const std::string key = "fit/" + r.target + "/" + std::to_string(split) + "/" +
                                            std::to_string(gi) + "/" + to_string(fam) + "/" + to_string(approach);
                    const auto mcfg = seeded(cfg.meta_config(fam), derive_seed(cfg.master_seed, key));
                    CellResult res = evaluate_cell([&] {
                        return approach == Approach::conventional ? conventional_cell(ctx, sc, gi, K, mcfg)
                                                                  : ensemble_cell(ctx.stacked, ctx, sc, gi, K, mcfg);
                    });
                    r.balanced_accuracy = res.accuracy;
                    r.failure = res.failure;
                    out.push_back(std::move(r));
                }
            }
        }
        return out;
    });

    ExperimentReport report;
    report.config = cfg;
    for (auto& chunk : results) {
        for (auto& r : chunk) report.records.push_back(std::move(r));
    }
    for (const auto& ctx : p.contexts) {
        const SplitPlan plan0 = stratified_split(*ctx.ds, cfg.test_fraction,
                                                 derive_seed(cfg.master_seed, "split/" + ctx.ds->subject_id + "/0"));
        grids[ctx.ds->subject_id] = geometric_train_grid(plan0.train_indices.size(), static_cast<std::size_t>(K),
                                                         cfg.grid_points);
    }
    p.meta["grids"] = grids;
    finish(report, p, cohort, opts);
    return report;
}

ExperimentReport run_subject_sweep(const Cohort& cohort, const ExperimentConfig& cfg_in, const RunOptions& opts) {
    ExperimentConfig cfg = cfg_in;
    cfg.sweep = SweepKind::subject;
    Prepared p = prepare(cohort, cfg, opts);
    const int K = cohort.n_classes();
    const int n_cv = cfg.resolved_n_cv();
    const bool want_ensemble = has(cfg.approaches, Approach::ensemble);
    const bool want_conventional = has(cfg.approaches, Approach::conventional);

    const std::size_t n_sources = cohort.size() - 1;
    const auto subset_sizes = resolve_subset_sizes(cfg, n_sources);
    json subsets_meta = json::object();
    for (auto& ctx : p.contexts) {
        std::vector<std::string> sources = ctx.sources;
        if (sources.empty()) {
            for (const auto& id : cohort.subject_ids()) {
                if (id != ctx.ds->subject_id) sources.push_back(id);
            }
        }
        for (auto m : subset_sizes) {
            if (m > sources.size()) {
                throw ConfigError("subject subset size " + std::to_string(m) + " exceeds the sources of '" +
                                  ctx.ds->subject_id + "'");
            }
            ctx.subsets.push_back(draw_subject_subsets(
                sources, m, n_cv,
                derive_seed(cfg.master_seed, "subsets/" + ctx.ds->subject_id + "/" + std::to_string(m))));
            subsets_meta[ctx.ds->subject_id][std::to_string(m)] = ctx.subsets.back();
        }
    }
    p.meta["subject_subsets"] = subsets_meta;
    p.meta["subject_subset_sizes"] = subset_sizes;

    const std::size_t n_jobs = p.contexts.size() * static_cast<std::size_t>(n_cv);
    auto results = run_jobs(n_jobs, opts.workers, [&](std::size_t j) {
        const auto& ctx = p.contexts[j / static_cast<std::size_t>(n_cv)];
        const int split = static_cast<int>(j % static_cast<std::size_t>(n_cv));
        const SplitCells sc = make_split_cells(ctx, cfg, split, K);
        std::vector<StackedFeatures> sub_stacked;
        if (want_ensemble) {
            for (std::size_t mi = 0; mi < subset_sizes.size(); ++mi) {
                sub_stacked.push_back(ctx.stacked.select_blocks(ctx.subsets[mi][static_cast<std::size_t>(split)]));
            }
        }
        std::vector<RunRecord> out;
        for (std::size_t gi = 0; gi < sc.grid.size(); ++gi) {
            for (auto fam : cfg.meta_families) {
                const std::string cell = ctx.ds->subject_id + "/" + std::to_string(split) + "/" +
                                         std::to_string(gi) + "/" + to_string(fam);
                // The conventional baseline does not depend on the ensemble size;
                // it is fitted once and recorded under every size for pairing.
                CellResult conv;
                if (want_conventional) {
                    const auto mcfg = seeded(cfg.meta_config(fam),
                                             derive_seed(cfg.master_seed, "fit/" + cell + "/conventional"));
                    conv = evaluate_cell([&] { return conventional_cell(ctx, sc, gi, K, mcfg); });
                }
                for (std::size_t mi = 0; mi < subset_sizes.size(); ++mi) {
                    for (auto approach : cfg.approaches) {
                        RunRecord r = base_record(ctx, sc, split, gi, K);
                        r.family = fam;
                        r.approach = approach;
                        r.n_subjects_in_ensemble = subset_sizes[mi];
                        if (approach == Approach::conventional) {
                            r.balanced_accuracy = conv.accuracy;
                            r.failure = conv.failure;
                        } else {
                            const auto mcfg = seeded(
                                cfg.meta_config(fam),
                                derive_seed(cfg.master_seed,
                                            "fit/" + cell + "/ensemble/" + std::to_string(subset_sizes[mi])));
                            CellResult res = evaluate_cell(
                                [&] { return ensemble_cell(sub_stacked[mi], ctx, sc, gi, K, mcfg); });
                            r.balanced_accuracy = res.accuracy;
                            r.failure = res.failure;
                        }
                        out.push_back(std::move(r));
                    }
                }
            }
        }
        return out;
    });

    ExperimentReport report;
    report.config = cfg;
    for (auto& chunk : results) {
        for (auto& r : chunk) report.records.push_back(std::move(r));
    }
    finish(report, p, cohort, opts);
    return report;
}

ExperimentReport run_experiment(const Cohort& cohort, const ExperimentConfig& cfg, const RunOptions& opts) {
    return cfg.sweep == SweepKind::size ? run_size_sweep(cohort, cfg, opts) : run_subject_sweep(cohort, cfg, opts);
}

// ---------------------------------------------------------------- summaries

namespace {

std::string group_name(SweepKind s) { return s == SweepKind::size ? "size" : "subjects"; }

std::size_t group_value(const RunRecord& r, SweepKind s) {
    return s == SweepKind::size ? static_cast<std::size_t>(r.size_index) : r.n_subjects_in_ensemble;
}

using UnitKey = std::pair<std::string, int>;

std::vector<double> unit_means(const std::map<UnitKey, std::pair<double, int>>& acc) {
    std::vector<double> out;
    out.reserve(acc.size());
    for (const auto& [k, v] : acc) out.push_back(v.first / v.second);
    return out;
}

}  // namespace

void summarize(ExperimentReport& report) {
    report.summaries.clear();
    report.gains.clear();
    const auto& cfg = report.config;
    const std::string gname = group_name(cfg.sweep);

    // (approach, family, group, value) -> records
    std::map<std::tuple<int, int, std::string, std::size_t>, std::vector<const RunRecord*>> cells;
    for (const auto& r : report.records) {
        if (!r.balanced_accuracy) continue;
        const int a = static_cast<int>(r.approach);
        const int f = static_cast<int>(r.family);
        cells[{a, f, gname, group_value(r, cfg.sweep)}].push_back(&r);
        cells[{a, f, "overall", 0}].push_back(&r);
    }
    for (const auto& [key, recs] : cells) {
        const auto& [a, f, group, value] = key;
        Summary s;
        s.approach = static_cast<Approach>(a);
        s.family = static_cast<Family>(f);
        s.group = group;
        s.group_value = value;
        s.n_records = recs.size();
        std::map<UnitKey, std::pair<double, int>> units;
        double sum = 0.0;
        double size_sum = 0.0;
        double spc_sum = 0.0;
        for (const auto* r : recs) {
            sum += *r->balanced_accuracy;
            size_sum += static_cast<double>(r->train_size);
            spc_sum += static_cast<double>(r->samples_per_class);
            auto& u = units[{r->target, r->split}];
            u.first += *r->balanced_accuracy;
            u.second += 1;
        }
        const auto n = static_cast<double>(recs.size());
        s.mean = sum / n;
        s.mean_train_size = size_sum / n;
        s.mean_samples_per_class = spc_sum / n;
        const auto uv = unit_means(units);
        s.n_units = uv.size();
        s.ci = bootstrap_ci(uv, cfg.bootstrap_iterations, 0.95,
                            derive_seed(cfg.master_seed, "bootstrap/" + to_string(s.approach) + "/" +
                                                             to_string(s.family) + "/" + group + "/" +
                                                             std::to_string(value)));
        report.summaries.push_back(s);
    }

    // Paired ensemble - conventional differences per record cell.
    using PairKey = std::tuple<std::string, int, int, std::size_t>;
    std::map<int, std::map<PairKey, std::pair<std::optional<double>, std::optional<double>>>> pairs;
    for (const auto& r : report.records) {
        if (!r.balanced_accuracy) continue;
        auto& slot = pairs[static_cast<int>(r.family)][{r.target, r.split, r.size_index, r.n_subjects_in_ensemble}];
        if (r.approach == Approach::ensemble) {
            slot.first = r.balanced_accuracy;
        } else {
            slot.second = r.balanced_accuracy;
        }
    }
    // In a size sweep conventional records carry n_subjects 0 while ensemble
    // records carry the bank size; pair them on the remaining key fields.
    if (cfg.sweep == SweepKind::size) {
        for (auto& [f, m] : pairs) {
            std::map<PairKey, std::pair<std::optional<double>, std::optional<double>>> merged;
            for (auto& [k, v] : m) {
                auto& slot = merged[{std::get<0>(k), std::get<1>(k), std::get<2>(k), 0}];
                if (v.first) slot.first = v.first;
                if (v.second) slot.second = v.second;
            }
            m = std::move(merged);
        }
    }
    std::map<std::string, std::size_t> spc_by_size;
    for (const auto& [f, m] : pairs) {
        std::map<std::pair<std::string, std::size_t>, std::vector<std::tuple<UnitKey, double, double>>> groups;
        for (const auto& [k, v] : m) {
            if (!v.first || !v.second) continue;
            const auto& [target, split, size_index, n_sub] = k;
            const std::size_t value = cfg.sweep == SweepKind::size ? static_cast<std::size_t>(size_index) : n_sub;
            const double diff = *v.first - *v.second;
            groups[{gname, value}].emplace_back(UnitKey{target, split}, diff, 0.0);
            groups[{"overall", 0}].emplace_back(UnitKey{target, split}, diff, 0.0);
        }
        for (const auto& [gk, diffs] : groups) {
            GainSummary g;
            g.family = static_cast<Family>(f);
            g.group = gk.first;
            g.group_value = gk.second;
            std::map<UnitKey, std::pair<double, int>> units;
            double sum = 0.0;
            for (const auto& [uk, d, unused] : diffs) {
                sum += d;
                auto& u = units[uk];
                u.first += d;
                u.second += 1;
            }
            g.gain = 100.0 * sum / static_cast<double>(diffs.size());
            auto uv = unit_means(units);
            for (auto& v : uv) v *= 100.0;
            g.n_units = uv.size();
            g.ci = bootstrap_ci(uv, cfg.bootstrap_iterations, 0.95,
                                derive_seed(cfg.master_seed, "bootstrap/gain/" + to_string(g.family) + "/" +
                                                                 g.group + "/" + std::to_string(g.group_value)));
            if (const Summary* s = report.find_summary(Approach::ensemble, g.family, g.group, g.group_value)) {
                g.mean_samples_per_class = s->mean_samples_per_class;
            }
            report.gains.push_back(g);
        }
    }
}

double gain(const ExperimentReport& report, const CellSelector& sel, Approach a, Approach b) {
    double sum_a = 0.0;
    double sum_b = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    for (const auto& r : report.records) {
        if (!r.balanced_accuracy || r.family != sel.family) continue;
        if (sel.size_index && r.size_index != *sel.size_index) continue;
        if (sel.n_subjects && r.n_subjects_in_ensemble != *sel.n_subjects) continue;
        if (sel.target && r.target != *sel.target) continue;
        if (r.approach == a) {
            sum_a += *r.balanced_accuracy;
            ++n_a;
        }
        if (r.approach == b) {
            sum_b += *r.balanced_accuracy;
            ++n_b;
        }
    }
    if (n_a == 0) throw ConfigError("gain: no " + to_string(a) + " records in the selected cell");
    if (n_b == 0) throw ConfigError("gain: no " + to_string(b) + " records in the selected cell");
    return 100.0 * (sum_a / static_cast<double>(n_a) - sum_b / static_cast<double>(n_b));
}

// ------------------------------------------------------------ serialization

namespace {

json interval_json(const Interval& i) { return {{"low", i.low}, {"high", i.high}, {"degenerate", i.degenerate}}; }

Interval interval_from(const json& j) {
    return {j.at("low").get<double>(), j.at("high").get<double>(), j.value("degenerate", false)};
}

json record_json(const RunRecord& r) {
    json j;
    j["target"] = r.target;
    j["split"] = r.split;
    j["size_index"] = r.size_index;
    j["train_size"] = r.train_size;
    j["samples_per_class"] = r.samples_per_class;
    j["n_subjects_in_ensemble"] = r.n_subjects_in_ensemble;
    j["family"] = to_string(r.family);
    j["approach"] = to_string(r.approach);
    j["balanced_accuracy"] = r.balanced_accuracy ? json(*r.balanced_accuracy) : json(nullptr);
    j["failure"] = r.failure;
    j["leakage_ok"] = r.leakage_ok;
    j["test_hash"] = r.test_hash;
    return j;
}

json summary_json(const Summary& s) {
    return {{"approach", to_string(s.approach)},
            {"family", to_string(s.family)},
            {"group", s.group},
            {"group_value", s.group_value},
            {"n_records", s.n_records},
            {"n_units", s.n_units},
            {"mean", s.mean},
            {"ci", interval_json(s.ci)},
            {"mean_train_size", s.mean_train_size},
            {"mean_samples_per_class", s.mean_samples_per_class}};
}

json gain_json(const GainSummary& g) {
    return {{"family", to_string(g.family)},     {"group", g.group},   {"group_value", g.group_value},
            {"n_units", g.n_units},              {"gain", g.gain},     {"ci", interval_json(g.ci)},
            {"mean_samples_per_class", g.mean_samples_per_class}};
}

json content_json(const ExperimentReport& r) {
    json j;
    j["config"] = r.config.to_json();
    j["records"] = json::array();
    for (const auto& rec : r.records) j["records"].push_back(record_json(rec));
    j["summaries"] = json::array();
    for (const auto& s : r.summaries) j["summaries"].push_back(summary_json(s));
    j["gains"] = json::array();
    for (const auto& g : r.gains) j["gains"].push_back(gain_json(g));
    return j;
}

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

std::string ExperimentReport::content_hash() const { return git_blob_hash(content_json(*this).dump()); }

json ExperimentReport::to_json() const {
    json j = content_json(*this);
    j["metadata"] = metadata;
    j["metadata"]["content_hash"] = content_hash();
    return j;
}

ExperimentReport ExperimentReport::from_json(const json& j) {
    ExperimentReport r;
    try {
        r.config = ExperimentConfig::from_json(j.at("config"));
        for (const auto& x : j.at("records")) {
            RunRecord rec;
            rec.target = x.at("target").get<std::string>();
            rec.split = x.at("split").get<int>();
            rec.size_index = x.at("size_index").get<int>();
            rec.train_size = x.at("train_size").get<std::size_t>();
            rec.samples_per_class = x.at("samples_per_class").get<std::size_t>();
            rec.n_subjects_in_ensemble = x.at("n_subjects_in_ensemble").get<std::size_t>();
            rec.family = parse_family(x.at("family").get<std::string>());
            rec.approach = parse_approach(x.at("approach").get<std::string>());
            if (!x.at("balanced_accuracy").is_null()) rec.balanced_accuracy = x.at("balanced_accuracy").get<double>();
            rec.failure = x.value("failure", "");
            rec.leakage_ok = x.value("leakage_ok", true);
            rec.test_hash = x.value("test_hash", "");
            r.records.push_back(std::move(rec));
        }
        for (const auto& x : j.at("summaries")) {
            Summary s;
            s.approach = parse_approach(x.at("approach").get<std::string>());
            s.family = parse_family(x.at("family").get<std::string>());
            s.group = x.at("group").get<std::string>();
            s.group_value = x.at("group_value").get<std::size_t>();
            s.n_records = x.at("n_records").get<std::size_t>();
            s.n_units = x.at("n_units").get<std::size_t>();
            s.mean = x.at("mean").get<double>();
            s.ci = interval_from(x.at("ci"));
            s.mean_train_size = x.at("mean_train_size").get<double>();
            s.mean_samples_per_class = x.at("mean_samples_per_class").get<double>();
            r.summaries.push_back(s);
        }
        for (const auto& x : j.at("gains")) {
            GainSummary g;
            g.family = parse_family(x.at("family").get<std::string>());
            g.group = x.at("group").get<std::string>();
            g.group_value = x.at("group_value").get<std::size_t>();
            g.n_units = x.at("n_units").get<std::size_t>();
            g.gain = x.at("gain").get<double>();
            g.ci = interval_from(x.at("ci"));
            g.mean_samples_per_class = x.value("mean_samples_per_class", 0.0);
            r.gains.push_back(g);
        }
        if (j.contains("metadata")) r.metadata = j.at("metadata");
    } catch (const json::exception& e) {
        throw DataError(std::string("report: ") + e.what());
    }
    return r;
}

std::string ExperimentReport::records_csv() const {
    std::string out =
        "target,split,size_index,train_size,samples_per_class,n_subjects_in_ensemble,family,approach,"
        "balanced_accuracy,leakage_ok,failure\n";
    for (const auto& r : records) {
        out += r.target + "," + std::to_string(r.split) + "," + std::to_string(r.size_index) + "," +
               std::to_string(r.train_size) + "," + std::to_string(r.samples_per_class) + "," +
               std::to_string(r.n_subjects_in_ensemble) + "," + to_string(r.family) + "," + to_string(r.approach) +
               "," + (r.balanced_accuracy ? fmt_double(*r.balanced_accuracy) : std::string()) + "," +
               (r.leakage_ok ? "1" : "0") + ",\"" + r.failure + "\"\n";
    }
    return out;
}

const Summary* ExperimentReport::find_summary(Approach a, Family f, const std::string& group,
                                              std::size_t value) const {
    for (const auto& s : summaries) {
        if (s.approach == a && s.family == f && s.group == group && s.group_value == value) return &s;
    }
    return nullptr;
}

const GainSummary* ExperimentReport::find_gain(Family f, const std::string& group, std::size_t value) const {
    for (const auto& g : gains) {
        if (g.family == f && g.group == group && g.group_value == value) return &g;
    }
    return nullptr;
}

}  // namespace ensemble
