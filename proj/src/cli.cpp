#include "ensemble/cli.hpp"
#include "ensemble/experiments.hpp"
#include "ensemble/stacking.hpp"
#include "ensemble/theory.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace ensemble::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int default_workers() { return std::max(1, omp_get_max_threads()); }

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, text);
}

struct Verbose {
    std::ostream& err;
    bool on;
    void operator()(const std::string& msg) const {
        if (on) err << msg << "\n";
    }
};

// ------------------------------------------------------------------ generate

struct GenerateArgs {
    std::string preset;
    std::string spec_file;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "binary";
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    SyntheticSpec spec;
    if (!a.spec_file.empty()) {
        spec = spec_from_json(read_json_file(a.spec_file));
    } else if (!a.preset.empty()) {
        spec = preset(a.preset);
    } else {
        spec = benchmark_spec();
    }
    if (a.seed) spec.seed = *a.seed;
    if (a.format != "binary" && a.format != "csv") throw ConfigError("--format must be binary or csv");
    const Cohort cohort = generate_cohort(spec);
    save_cohort(cohort, a.out, a.format == "csv" ? FeatureFormat::csv : FeatureFormat::binary);
    write_text(fs::path(a.out) / "spec.json", spec_to_json(spec).dump(2) + "\n");
    out << "wrote " << cohort.size() << " subjects x " << spec.n_samples_per_subject << " samples x "
        << spec.n_classes << " classes to " << a.out << "\n";
    return ok;
}

// ----------------------------------------------------------------------- run

struct RunArgs {
    std::string config_file;
    std::string cohort;
    std::string out;
    std::string sweep;
    std::string approaches;
    std::string meta;
    std::optional<int> n_cv;
    std::optional<std::uint64_t> seed;
    std::string cache_dir;
    bool no_cache = false;
};

Cohort resolve_cohort(const std::string& flag, const json& cfg_json) {
    if (!flag.empty()) return load_cohort(flag);
    if (!cfg_json.contains("cohort")) throw ConfigError("no cohort given (use --cohort or a \"cohort\" config entry)");
    const json& c = cfg_json.at("cohort");
    if (c.is_string()) return load_cohort(c.get<std::string>());
    return generate_cohort(spec_from_json(c));
}

std::string summary_csv(const ExperimentReport& r) {
    std::string s = "family,approach,group,group_value,mean_samples_per_class,n_records,n_units,mean,ci_low,ci_high\n";
    for (const auto& x : r.summaries) {
        s += to_string(x.family) + "," + to_string(x.approach) + "," + x.group + "," + std::to_string(x.group_value) +
             "," + num(x.mean_samples_per_class) + "," + std::to_string(x.n_records) + "," +
             std::to_string(x.n_units) + "," + num(x.mean) + "," + num(x.ci.low) + "," + num(x.ci.high) + "\n";
    }
    return s;
}

int cmd_run(const RunArgs& a, int workers, const Verbose& log, std::ostream& out) {
    json cfg_json = a.config_file.empty() ? json::object() : read_json_file(a.config_file);
    ExperimentConfig cfg = ExperimentConfig::from_json(cfg_json);
    if (!a.sweep.empty()) cfg.sweep = parse_sweep(a.sweep);
    if (!a.approaches.empty()) {
        cfg.approaches.clear();
        for (const auto& s : split_list(a.approaches)) cfg.approaches.push_back(parse_approach(s));
    }
    if (!a.meta.empty()) {
        cfg.meta_families.clear();
        for (const auto& s : split_list(a.meta)) cfg.meta_families.push_back(parse_family(s));
    }
    if (a.n_cv) cfg.n_cv = *a.n_cv;
    if (a.seed) cfg.master_seed = *a.seed;
    cfg.validate();

    const Cohort cohort = resolve_cohort(a.cohort, cfg_json);
    RunOptions opts;
    opts.workers = workers;
    if (!a.no_cache) {
        if (!a.cache_dir.empty()) {
            opts.bank_cache_dir = a.cache_dir;
        } else if (const char* env = std::getenv("ENSEMBLE_CACHE_DIR"); env && *env) {
            opts.bank_cache_dir = env;
        } else {
            opts.bank_cache_dir = fs::path(a.out) / "bank_cache";
        }
    }
    log("running " + to_string(cfg.sweep) + " sweep on " + std::to_string(cohort.size()) + " subjects with " +
        std::to_string(workers) + " workers");
    const ExperimentReport report = run_experiment(cohort, cfg, opts);

    const fs::path dir(a.out);
    write_text(dir / "report.json", report.to_json().dump(2) + "\n");
    write_text(dir / "report.csv", report.records_csv());
    write_text(dir / "summary.csv", summary_csv(report));
    std::size_t failed = 0;
    for (const auto& r : report.records) failed += r.balanced_accuracy ? 0 : 1;
    out << "records: " << report.records.size() << " (" << failed << " failed)\n";
    out << "content hash: " << report.content_hash() << "\n";
    out << "report: " << (dir / "report.json").string() << "\n";
    return ok;
}

// -------------------------------------------------------------------- theory

struct TheoryArgs {
    std::size_t n_samples = 200;
    double var_y = 1.0;
    std::string grid;
    std::size_t trials = 100;
    std::optional<std::size_t> n_features;  // defaults to n_samples
    double noise = 0.1;
    double shift = 0.6;
    std::size_t source_samples = MonteCarloConfig{}.source_samples;
    double ridge_lambda = 1.0;
    std::optional<double> d_lambda;
    std::uint64_t seed = 0;
    bool no_empirical = false;
    std::string out;
};

int cmd_theory(const TheoryArgs& a, int workers, const Verbose& log, std::ostream& out) {
    if (a.n_samples < 1) throw ConfigError("--n-samples must be positive");
    std::vector<std::size_t> requested;
    for (const auto& s : split_list(a.grid)) {
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || v < 1) throw ConfigError("bad --grid entry '" + s + "'");
        requested.push_back(v);
    }
    const auto grid = theory_grid(a.n_samples, requested);

    std::size_t best = 1;
    for (std::size_t N = 1; N <= a.n_samples; ++N) {
        if (ensemble_error(a.var_y, N, a.n_samples) < ensemble_error(a.var_y, best, a.n_samples)) best = N;
    }
    const double d = a.d_lambda.value_or(static_cast<double>(a.n_samples));

    std::string csv =
        "n_subjects,predicted_error,regime,predicted_optimal,empirical_conventional,empirical_ensemble,"
        "empirical_ensemble_se,diagnostic\n";
    for (auto N : grid) {
        csv += std::to_string(N) + "," + num(ensemble_error(a.var_y, N, a.n_samples)) + "," +
               to_string(classify_regime(static_cast<double>(N), static_cast<double>(a.n_samples), d)) + "," +
               (N == best ? "1" : "0") + ",";
        if (a.no_empirical) {
            csv += ",,,\n";
            continue;
        }
        MonteCarloConfig mc;
        mc.n_subjects = N;
        mc.n_samples = a.n_samples;
        mc.n_features = a.n_features.value_or(a.n_samples);
        mc.noise = a.noise;
        mc.var_y = a.var_y;
        mc.shift = a.shift;
        mc.source_samples = a.source_samples;
        mc.ridge_lambda = a.ridge_lambda;
        mc.n_trials = a.trials;
        mc.seed = a.seed;
        log("monte carlo N=" + std::to_string(N));
        const auto r = monte_carlo_ensemble_error(mc, workers);
        csv += num(r.conventional_error) + "," + num(r.ensemble_error) + "," + num(r.ensemble_se) + ",\"" +
               r.diagnostic + "\"\n";
    }
    if (a.out.empty()) {
        out << csv;
    } else {
        write_text(fs::path(a.out) / "theory.csv", csv);
        out << "wrote " << (fs::path(a.out) / "theory.csv").string() << "\n";
    }
    return ok;
}

// -------------------------------------------------------------------- report

struct ReportArgs {
    std::string report;
    std::string table = "summary";
    std::vector<std::string> queries;
    std::string csv;
};

struct Query {
    std::optional<Family> family;
    std::optional<std::string> group;
    std::optional<std::size_t> value;
};

Query parse_queries(const std::vector<std::string>& qs) {
    Query q;
    for (const auto& s : qs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("query '" + s + "' is not key=value");
        const std::string key = s.substr(0, eq);
        const std::string val = s.substr(eq + 1);
        if (key == "family") {
            q.family = parse_family(val);
        } else if (key == "group") {
            if (val != "size" && val != "subjects" && val != "overall") {
                throw ConfigError("group must be size, subjects or overall");
            }
            q.group = val;
        } else if (key == "value") {
            std::size_t v = 0;
            auto [end, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
            if (ec != std::errc() || end != val.data() + val.size()) throw ConfigError("value must be an integer");
            q.value = v;
        } else {
            throw ConfigError("unknown query key '" + key + "' (expected family, group or value)");
        }
    }
    return q;
}

bool matches(const Query& q, Family f, const std::string& group, std::size_t value) {
    if (q.family && *q.family != f) return false;
    if (q.group && *q.group != group) return false;
    if (q.value && *q.value != value) return false;
    return true;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
    json doc;
    {
        std::ifstream in(a.report);
        if (!in) throw DataError("cannot open report " + a.report);
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw DataError(a.report + ": " + e.what());
        }
    }
    const ExperimentReport r = ExperimentReport::from_json(doc);
    const Query q = parse_queries(a.queries);

    // Cells are the (family, group, value) triples present in either table.
    std::vector<std::tuple<Family, std::string, std::size_t>> cells;
    auto add_cell = [&](Family f, const std::string& g, std::size_t v) {
        auto key = std::make_tuple(f, g, v);
        if (matches(q, f, g, v) && std::find(cells.begin(), cells.end(), key) == cells.end()) cells.push_back(key);
    };
    for (const auto& s : r.summaries) add_cell(s.family, s.group, s.group_value);
    std::stable_sort(cells.begin(), cells.end(), [](const auto& x, const auto& y) {
        const auto rank = [](const std::string& g) { return g == "overall" ? 1 : 0; };
        if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) < std::get<0>(y);
        if (rank(std::get<1>(x)) != rank(std::get<1>(y))) return rank(std::get<1>(x)) < rank(std::get<1>(y));
        return std::get<2>(x) < std::get<2>(y);
    });

    std::string csv;
    if (a.table == "summary") {
        csv = "family,group,group_value,approach,mean,ci_low,ci_high,n_records\n";
        out << std::left << std::setw(8) << "family" << std::setw(10) << "group" << std::setw(7) << "value"
            << std::setw(8) << "s/class" << std::setw(28) << "conventional" << "ensemble\n";
        for (const auto& [f, g, v] : cells) {
            double spc = 0.0;
            std::string cols[2];
            int idx = 0;
            for (auto ap : {Approach::conventional, Approach::ensemble}) {
                const Summary* s = r.find_summary(ap, f, g, v);
                if (!s) {
                    cols[idx++] = "not computed";
                    continue;
                }
                spc = s->mean_samples_per_class;
                cols[idx++] = fixed(s->mean, 3) + " [" + fixed(s->ci.low, 3) + ", " + fixed(s->ci.high, 3) + "]";
                csv += to_string(f) + "," + g + "," + std::to_string(v) + "," + to_string(ap) + "," + num(s->mean) +
                       "," + num(s->ci.low) + "," + num(s->ci.high) + "," + std::to_string(s->n_records) + "\n";
            }
            out << std::left << std::setw(8) << to_string(f) << std::setw(10) << g << std::setw(7) << v
                << std::setw(8) << fixed(spc, 1) << std::setw(28) << cols[0] << cols[1] << "\n";
        }
    } else if (a.table == "gain") {
        csv = "family,group,group_value,mean_samples_per_class,gain_points,ci_low,ci_high,n_units\n";
        out << std::left << std::setw(8) << "family" << std::setw(10) << "group" << std::setw(7) << "value"
            << std::setw(8) << "s/class" << "gain (points) [95% CI]\n";
        for (const auto& [f, g, v] : cells) {
            const GainSummary* gs = r.find_gain(f, g, v);
            out << std::left << std::setw(8) << to_string(f) << std::setw(10) << g << std::setw(7) << v;
            if (!gs) {
                out << std::setw(8) << "-" << "not computed\n";
                continue;
            }
            out << std::setw(8) << fixed(gs->mean_samples_per_class, 1) << fixed(gs->gain, 2) << " ["
                << fixed(gs->ci.low, 2) << ", " << fixed(gs->ci.high, 2) << "]\n";
            csv += to_string(f) + "," + g + "," + std::to_string(v) + "," + num(gs->mean_samples_per_class) + "," +
                   num(gs->gain) + "," + num(gs->ci.low) + "," + num(gs->ci.high) + "," + std::to_string(gs->n_units) +
                   "\n";
        }
    } else {
        throw ConfigError("--table must be summary or gain");
    }
    if (!a.csv.empty()) write_text(a.csv, csv);
    return ok;
}

// ---------------------------------------------------------------- importance

struct ImportanceArgs {
    std::string cohort;
    std::string target;
    std::string config_file;
    std::string kind = "subjects";
    std::string family;
    std::string out;
};

int cmd_importance(const ImportanceArgs& a, int workers, std::ostream& out) {
    json cfg_json = a.config_file.empty() ? json::object() : read_json_file(a.config_file);
    const ExperimentConfig cfg = ExperimentConfig::from_json(cfg_json);
    const Cohort cohort = resolve_cohort(a.cohort, cfg_json);
    const std::string target = a.target.empty() ? cohort.subject_ids().front() : a.target;
    const SubjectDataset& ds = cohort.subject(target);
    const Family fam = a.family.empty() ? cfg.meta_families.front() : parse_family(a.family);
    const ClassifierConfig mcfg = cfg.meta_config(fam);
    const int K = cohort.n_classes();
    const Matrix X = ds.as_matrix();

    std::string csv;
    if (a.kind == "subjects") {
        LinearSvcConfig base = cfg.base_svc;
        base.penalty = cfg.base_penalty;
        const BaseBank bank = pretrain_bases(cohort, target, cfg.base_penalty, workers, base);
        const StackedFeatures stacked = stack_features(bank, X, cfg.encoding, workers);
        const TrainedModel meta = fit_ensemble(stacked, ds.labels, K, mcfg, workers);
        csv = "subject,importance\n";
        for (const auto& [id, v] : subject_importances(meta, bank)) csv += id + "," + num(v) + "\n";
    } else if (a.kind == "features") {
        const Standardizer sc = Standardizer::fit(X);
        const TrainedModel model = fit_classifier(sc.transform(X), ds.labels, K, mcfg, workers);
        const Matrix W = feature_weights(model);
        if (W.rows() == 1 && fam == Family::forest) {
            csv = "feature,importance\n";
            for (Eigen::Index j = 0; j < W.cols(); ++j) csv += std::to_string(j) + "," + num(W(0, j)) + "\n";
        } else {
            csv = "feature";
            for (int k = 0; k < K; ++k) csv += "," + cohort.label_space().name(k);
            csv += "\n";
            for (Eigen::Index j = 0; j < W.cols(); ++j) {
                csv += std::to_string(j);
                for (Eigen::Index k = 0; k < W.rows(); ++k) csv += "," + num(W(k, j));
                csv += "\n";
            }
        }
    } else {
        throw ConfigError("--kind must be subjects or features");
    }
    if (a.out.empty()) {
        out << csv;
    } else {
        write_text(a.out, csv);
    }
    return ok;
}

}  // namespace

// -------------------------------------------------------------------- shared

SyntheticSpec spec_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("synthetic spec must be an object");
    static const char* keys[] = {"preset",       "n_subjects",       "n_samples_per_subject", "n_features", "n_classes",
                                 "class_separation", "subject_shift", "noise_sigma",           "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(std::begin(keys), std::end(keys), [&](const char* k) { return it.key() == k; }) ==
            std::end(keys)) {
            throw ConfigError("synthetic spec: unknown key '" + it.key() + "'");
        }
    }
    try {
        SyntheticSpec s = j.contains("preset") ? preset(j.at("preset").get<std::string>()) : benchmark_spec();
        if (j.contains("n_subjects")) s.n_subjects = j.at("n_subjects").get<std::size_t>();
        if (j.contains("n_samples_per_subject")) s.n_samples_per_subject = j.at("n_samples_per_subject").get<std::size_t>();
        if (j.contains("n_features")) s.n_features = j.at("n_features").get<std::size_t>();
        if (j.contains("n_classes")) s.n_classes = j.at("n_classes").get<std::size_t>();
        if (j.contains("class_separation")) s.class_separation = j.at("class_separation").get<double>();
        if (j.contains("subject_shift")) s.subject_shift = j.at("subject_shift").get<double>();
        if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
}

json spec_to_json(const SyntheticSpec& s) {
    return {{"n_subjects", s.n_subjects},
            {"n_samples_per_subject", s.n_samples_per_subject},
            {"n_features", s.n_features},
            {"n_classes", s.n_classes},
            {"class_separation", s.class_separation},
            {"subject_shift", s.subject_shift},
            {"noise_sigma", s.noise_sigma},
            {"seed", s.seed}};
}

std::vector<std::size_t> theory_grid(std::size_t n_samples, const std::vector<std::size_t>& requested) {
    std::vector<std::size_t> g = requested;
    if (g.empty()) {
        for (std::size_t N = 2; N < n_samples; N *= 2) g.push_back(N);
    }
    g.push_back(1);
    g.push_back(static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_samples)))));
    g.push_back(n_samples);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Across-subject stacking ensembles for decoding"};
    app.require_subcommand(1);
    app.fallthrough();
    int workers = default_workers();
    bool verbose = false;
    app.add_option("-j,--workers", workers, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
    app.add_flag("-v,--verbose", verbose, "Progress messages on standard error");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic cohort directory");
    g->add_option("--preset", gen.preset, "benchmark, neuromod, aomic, forrest, bold5000 or rsvp-ibc");
    g->add_option("--spec", gen.spec_file, "JSON synthetic spec (overrides --preset)");
    g->add_option("--seed", gen.seed, "Generator seed");
    g->add_option("-o,--out", gen.out, "Output directory")->required();
    g->add_option("--format", gen.format, "Feature file format: binary or csv");

    RunArgs ra;
    auto* r = app.add_subcommand("run", "Run a size or subject sweep and write report.json / report.csv");
    r->add_option("-c,--config", ra.config_file, "JSON experiment config");
    r->add_option("--cohort", ra.cohort, "Cohort directory or cohort.json");
    r->add_option("-o,--out", ra.out, "Output directory")->required();
    r->add_option("--sweep", ra.sweep, "size or subject");
    r->add_option("--approaches", ra.approaches, "Comma list: conventional,ensemble");
    r->add_option("--meta", ra.meta, "Comma list of meta families: svc,mlp,forest");
    r->add_option("--n-cv", ra.n_cv, "Number of random splits");
    r->add_option("--seed", ra.seed, "Master seed");
    r->add_option("--cache-dir", ra.cache_dir, "Bank cache directory (default: $ENSEMBLE_CACHE_DIR or <out>/bank_cache)");
    r->add_flag("--no-cache", ra.no_cache, "Do not read or write cached banks");

    TheoryArgs ta;
    auto* t = app.add_subcommand("theory", "Predicted and simulated ensemble error over N");
    t->add_option("--n-samples", ta.n_samples, "Target training samples");
    t->add_option("--var-y", ta.var_y, "var(y)");
    t->add_option("--grid", ta.grid, "Comma list of N (1, round(sqrt(n)) and n are always added)");
    t->add_option("--trials", ta.trials, "Monte-Carlo trials per N");
    t->add_option("--n-features", ta.n_features, "Simulated feature dimension (default: --n-samples)");
    t->add_option("--noise", ta.noise, "Noise fraction of var(y)");
    t->add_option("--shift", ta.shift, "Subject rotation strength");
    t->add_option("--source-samples", ta.source_samples, "Rows per source subject");
    t->add_option("--ridge-lambda", ta.ridge_lambda, "Ridge penalty of the base and conventional models");
    t->add_option("--d-lambda", ta.d_lambda, "Effective dimension used for regime labels (default: n)");
    t->add_option("--seed", ta.seed, "Simulation seed");
    t->add_flag("--no-empirical", ta.no_empirical, "Skip the Monte-Carlo columns");
    t->add_option("-o,--out", ta.out, "Output directory for theory.csv (default: standard output)");

    ReportArgs rp;
    auto* p = app.add_subcommand("report", "Print summary or gain tables from a report.json");
    p->add_option("report", rp.report, "report.json")->required();
    p->add_option("--table", rp.table, "summary or gain");
    p->add_option("-q,--query", rp.queries, "Filter key=value (family, group, value); repeatable");
    p->add_option("--csv", rp.csv, "Also export the table as CSV");

    ImportanceArgs ia;
    auto* im = app.add_subcommand("importance", "Per-subject or per-feature importances as CSV");
    im->add_option("--cohort", ia.cohort, "Cohort directory or cohort.json");
    im->add_option("--target", ia.target, "Target subject (default: first)");
    im->add_option("-c,--config", ia.config_file, "JSON experiment config");
    im->add_option("--kind", ia.kind, "subjects (meta model over the bank) or features (single-subject model)");
    im->add_option("--family", ia.family, "svc or forest (default: first configured meta family)");
    im->add_option("-o,--out", ia.out, "Output CSV (default: standard output)");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    }

    const Verbose log{err, verbose};
    try {
        if (g->parsed()) return cmd_generate(gen, out);
        if (r->parsed()) return cmd_run(ra, workers, log, out);
        if (t->parsed()) return cmd_theory(ta, workers, log, out);
        if (p->parsed()) return cmd_report(rp, out);
        if (im->parsed()) return cmd_importance(ia, workers, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return failure;
    }
    return failure;
}

}  // namespace ensemble::cli
