#pragma once

// Batch runner: seeds x methods (x gamma for the selection methods) over a
// cohort, with the metric battery and report files.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "diagbed/metrics.hpp"
#include "diagbed/remote_surrogate.hpp"
#include "diagbed/scripted_surrogate.hpp"
#include "diagbed/synthetic_world.hpp"
#include "diagbed/trajectory.hpp"

namespace diagbed {

struct ExperimentConfig {
    std::filesystem::path dataset;  // manifest
    std::vector<Method> methods{Method::Actmed};
    std::size_t budget = 3;
    std::vector<double> gammas{0.3, 0.5, 0.7};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::size_t m = 10;
    // Criterion used by the "actmed" method; "actmed-entropy" always uses entropy.
    Criterion criterion = Criterion::Kl;
    double theta = 0.5;
    bool early_stop = true;
    SurrogateConfig surrogate;
    std::filesystem::path out = "out";
    std::size_t threads = 0;  // 0: hardware concurrency
    std::size_t bootstrap_draws = 1000;
    std::vector<std::string> global_features;
    bool fidelity = false;

    void validate() const {
        if (methods.empty()) throw Error(ErrorKind::InvalidArgument, "no methods", "methods");
        if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "seeds must be non-empty", "seeds");
        auto sorted = seeds;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw Error(ErrorKind::InvalidArgument, "seeds must be distinct", "seeds");
        }
        if (budget < 1) throw Error(ErrorKind::InvalidArgument, "budget must be >= 1", "budget");
        if (m < 1) throw Error(ErrorKind::InvalidArgument, "m must be >= 1", "m");
        if (gammas.empty()) throw Error(ErrorKind::InvalidArgument, "gammas must be non-empty", "gammas");
        for (double g : gammas) StoppingPolicy{theta, g}.validate();
        surrogate.validate();
    }
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    try {
        c.dataset = resolve(j.at("dataset").get<std::string>());
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
        }
        c.budget = j.value("budget", c.budget);
        c.gammas = j.value("gammas", c.gammas);
        c.seeds = j.value("seeds", c.seeds);
        c.m = j.value("m", c.m);
        c.criterion = parse_criterion(j.value("criterion", std::string{"kl"}));
        c.theta = j.value("theta", c.theta);
        c.early_stop = j.value("early_stop", c.early_stop);
        if (j.contains("surrogate")) {
            c.surrogate = parse_surrogate_config(j.at("surrogate"));
            if (!c.surrogate.table_path.empty()) c.surrogate.table_path = resolve(c.surrogate.table_path).string();
        }
        c.out = resolve(j.value("out", std::string{"out"}));
        c.threads = j.value("threads", c.threads);
        c.bootstrap_draws = j.value("bootstrap_draws", c.bootstrap_draws);
        c.global_features = j.value("global_features", c.global_features);
        c.fidelity = j.value("fidelity", c.fidelity);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("malformed experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    try {
        return parse_experiment_config(nlohmann::json::parse(read_file(path)), path.parent_path());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

inline std::unique_ptr<Surrogate> make_surrogate(const SurrogateConfig& config) {
    config.validate();
    switch (config.kind) {
        case SurrogateKind::Scripted:
            if (config.table_path.empty()) throw Error(ErrorKind::InvalidArgument, "scripted surrogate needs a table", "table");
            return std::make_unique<ScriptedSurrogate>(ScriptedSurrogate::load(config.table_path));
        case SurrogateKind::Synthetic: {
            if (config.table_path.empty()) throw Error(ErrorKind::InvalidArgument, "synthetic surrogate needs a world", "table");
            const auto world = SyntheticWorld::from_json(nlohmann::json::parse(read_file(config.table_path)));
            return std::make_unique<SyntheticSurrogate>(world, config.exact);
        }
        case SurrogateKind::Remote:
            return std::make_unique<RemoteSurrogate>(config);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown surrogate kind");
}

/// The part of an episode the reports need.
struct EpisodeSummary {
    std::string patient_id;
    int label = 0;
    double final_risk = 0.0;
    bool failed = false;
    std::vector<std::string> acquired;
    std::uint64_t queries = 0;
    std::string status;
};

inline EpisodeSummary summarize(const EpisodeResult& r) {
    EpisodeSummary s;
    s.patient_id = r.session.patient_id;
    s.label = r.label;
    s.final_risk = r.final_risk;
    s.failed = r.failed;
    s.acquired.assign(r.session.known.begin() + static_cast<std::ptrdiff_t>(r.session.initial_known), r.session.known.end());
    s.queries = r.session.queries_used;
    s.status = to_string(r.session.status);
    return s;
}

inline EpisodeSummary summary_from_json(const nlohmann::json& j) {
    EpisodeSummary s;
    s.patient_id = j.at("patient_id").get<std::string>();
    s.label = j.at("label").get<int>();
    s.final_risk = j.at("final_risk").get<double>();
    s.failed = j.at("failed").get<bool>();
    const auto known = j.at("known").get<std::vector<std::string>>();
    const auto initial = j.at("initial_known").get<std::size_t>();
    s.acquired.assign(known.begin() + static_cast<std::ptrdiff_t>(std::min(initial, known.size())), known.end());
    s.queries = j.at("queries_used").get<std::uint64_t>();
    s.status = j.at("status").get<std::string>();
    return s;
}

/// One (method, gamma, seed) pass over the cohort. gamma is empty for methods
/// that do not use the stopping rule.
struct RunRecord {
    std::string method;
    std::optional<double> gamma;
    std::uint64_t seed = 0;
    std::vector<EpisodeSummary> episodes;

    std::string arm() const { return gamma ? method + "@" + format_real(*gamma) : method; }
};

struct RunSummary {
    std::string method;
    std::optional<double> gamma;
    std::uint64_t seed = 0;
    std::size_t episodes = 0;
    std::size_t failures = 0;
    ClassificationMetrics metrics;
    MeanStd tests;
    double overlap = 0.0;  // share of acquired tests inside the global-best set
    std::uint64_t queries = 0;
};

struct Aggregate {
    std::string arm;
    std::string method;
    std::optional<double> gamma;
    MeanStd accuracy, precision, recall, f1, auc;
    std::size_t auc_runs = 0;  // runs where AUC was defined
    MeanStd tests;             // pooled over every non-failed episode of the arm
    std::size_t failures = 0;
    double overlap = 0.0;
    std::map<std::string, double> frequency;         // feature -> selections per episode
    std::map<std::string, std::size_t> freq_counts;  // feature -> selections
    std::size_t freq_episodes = 0;
    std::map<int, BootstrapSummary> bootstrap;  // label -> final-risk summary
};

struct FidelityRow {
    std::string feature;
    std::size_t patients = 0;
    double wasserstein = 0.0;
    double energy = 0.0;
    double best_mae_pct = 0.0;
};

struct MetricsReport {
    std::vector<RunSummary> runs;
    std::vector<Aggregate> aggregates;
    std::vector<std::string> global_best;
    std::vector<FidelityRow> fidelity;
};

struct ReportOptions {
    double theta = 0.5;
    std::size_t bootstrap_draws = 1000;
    std::uint64_t bootstrap_seed = 0;
    std::vector<std::string> global_best;
};

inline MetricsReport build_report(const std::vector<RunRecord>& records, const ReportOptions& opts) {
    MetricsReport report;
    report.global_best = opts.global_best;
    const std::set<std::string> best(opts.global_best.begin(), opts.global_best.end());
    std::vector<std::string> arms;
    std::map<std::string, std::vector<std::size_t>> by_arm;

    for (const auto& rec : records) {
        RunSummary run;
        run.method = rec.method;
        run.gamma = rec.gamma;
        run.seed = rec.seed;
        run.episodes = rec.episodes.size();
        std::vector<int> labels;
        std::vector<double> risks, tests;
        std::size_t acquired = 0, in_best = 0;
        for (const auto& e : rec.episodes) {
            run.queries += e.queries;
            if (e.failed) {
                ++run.failures;
                continue;
            }
            labels.push_back(e.label);
            risks.push_back(e.final_risk);
            tests.push_back(static_cast<double>(e.acquired.size()));
            for (const auto& f : e.acquired) {
                ++acquired;
                in_best += best.count(f);
            }
        }
        if (!labels.empty()) run.metrics = compute_classification_metrics(labels, risks, opts.theta);
        run.tests = mean_std(tests);
        run.overlap = acquired ? static_cast<double>(in_best) / static_cast<double>(acquired) : 0.0;
        const auto arm = rec.arm();
        if (!by_arm.count(arm)) arms.push_back(arm);
        by_arm[arm].push_back(report.runs.size());
        report.runs.push_back(std::move(run));
    }

    for (const auto& arm : arms) {
        Aggregate agg;
        agg.arm = arm;
        std::vector<double> acc, prec, rec, f1, auc, tests;
        std::map<int, std::vector<double>> risks_by_label;
        std::size_t acquired = 0, in_best = 0;
        for (std::size_t idx : by_arm[arm]) {
            const auto& run = report.runs[idx];
            agg.method = run.method;
            agg.gamma = run.gamma;
            agg.failures += run.failures;
            if (run.episodes > run.failures) {
                acc.push_back(run.metrics.accuracy);
                prec.push_back(run.metrics.precision);
                rec.push_back(run.metrics.recall);
                f1.push_back(run.metrics.f1);
                if (run.metrics.auc) auc.push_back(*run.metrics.auc);
            }
            for (const auto& e : records[idx].episodes) {
                if (e.failed) continue;
                ++agg.freq_episodes;
                tests.push_back(static_cast<double>(e.acquired.size()));
                risks_by_label[e.label].push_back(e.final_risk);
                for (const auto& f : e.acquired) {
                    ++agg.freq_counts[f];
                    ++acquired;
                    in_best += best.count(f);
                }
            }
        }
        agg.accuracy = mean_std(acc);
        agg.precision = mean_std(prec);
        agg.recall = mean_std(rec);
        agg.f1 = mean_std(f1);
        agg.auc = mean_std(auc);
        agg.auc_runs = auc.size();
        agg.tests = mean_std(tests);
        agg.overlap = acquired ? static_cast<double>(in_best) / static_cast<double>(acquired) : 0.0;
        for (const auto& [f, n] : agg.freq_counts) {
            agg.frequency[f] = static_cast<double>(n) / static_cast<double>(agg.freq_episodes);
        }
        for (const auto& [label, values] : risks_by_label) {
            agg.bootstrap[label] = bayesian_bootstrap(values, opts.bootstrap_draws, mix_seed(opts.bootstrap_seed, arm));
        }
        report.aggregates.push_back(std::move(agg));
    }
    return report;
}

/// Distribution match between surrogate samples and the true values of each
/// numeric test, conditioned on each patient's start-known features. Values
/// are min-max normalised by the true data's range; MAE is best-of-m per
/// patient as a percentage of that range, averaged over patients.
inline std::vector<FidelityRow> sample_fidelity(const DatasetSchema& schema, const std::vector<PatientRecord>& records,
                                                Surrogate& surrogate, std::size_t m, std::uint64_t seed) {
    std::vector<FidelityRow> rows;
    for (const auto& f : schema.features) {
        if (f.known_at_start || f.kind != FeatureKind::Numeric) continue;
        std::vector<double> truth;
        for (const auto& r : records) truth.push_back(std::get<double>(r.value(f.name)));
        const auto [lo_it, hi_it] = std::minmax_element(truth.begin(), truth.end());
        const double lo = *lo_it, hi = *hi_it;
        if (!(hi > lo)) continue;
        std::vector<double> sampled;
        double mae_sum = 0.0;
        std::size_t patients = 0;
        for (const auto& r : records) {
            const auto session = SessionState::start(schema, r, seed);
            const auto samples =
                surrogate.sample_outcomes(session.context(), f.name, m, mix_seed(mix_seed(seed, r.id), f.name));
            std::vector<double> values;
            for (const auto& s : samples) {
                if (const auto* d = std::get_if<double>(&s.value)) values.push_back(*d);
            }
            if (values.empty()) continue;
            ++patients;
            const double t = std::get<double>(r.value(f.name));
            mae_sum += 100.0 * best_of_k_mae(values, t, values.size()) / (hi - lo);
            sampled.insert(sampled.end(), values.begin(), values.end());
        }
        if (sampled.empty()) continue;
        const auto a = normalize_feature(truth, lo, hi);
        const auto b = normalize_feature(sampled, lo, hi);
        rows.push_back({f.name, patients, wasserstein_1d(a, b), energy_distance_1d(a, b), mae_sum / patients});
    }
    return rows;
}

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << std::fixed << v;
    return ss.str();
}

inline std::string pm(const MeanStd& ms) { return fmt(ms.mean) + " +/- " + fmt(ms.std); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::NotFound, "cannot write " + path.string());
    out << text;
}

}  // namespace detail

inline std::string report_csv(const MetricsReport& report) {
    std::string out =
        "method,gamma,seed,episodes,failures,accuracy,precision,recall,f1,auc,tests_mean,tests_std,overlap,queries\n";
    for (const auto& r : report.runs) {
        out += csv::format_row({r.method, r.gamma ? format_real(*r.gamma) : "", std::to_string(r.seed),
                                std::to_string(r.episodes), std::to_string(r.failures), format_real(r.metrics.accuracy),
                                format_real(r.metrics.precision), format_real(r.metrics.recall),
                                format_real(r.metrics.f1), r.metrics.auc ? format_real(*r.metrics.auc) : "NA",
                                format_real(r.tests.mean), format_real(r.tests.std), format_real(r.overlap),
                                std::to_string(r.queries)});
    }
    return out;
}

inline std::string report_text(const MetricsReport& report) {
    using detail::fmt;
    using detail::pm;
    std::ostringstream out;
    if (!report.global_best.empty()) {
        out << "global best:";
        for (const auto& f : report.global_best) out << ' ' << f;
        out << "\n\n";
    }
    for (const auto& a : report.aggregates) {
        out << "[" << a.arm << "]\n";
        out << "  accuracy   " << pm(a.accuracy) << "\n";
        out << "  precision  " << pm(a.precision) << "\n";
        out << "  recall     " << pm(a.recall) << "\n";
        out << "  f1         " << pm(a.f1) << "\n";
        out << "  auc        " << (a.auc_runs ? pm(a.auc) : std::string("undefined")) << "\n";
        out << "  tests      " << pm(a.tests) << "\n";
        out << "  overlap    " << fmt(a.overlap) << "\n";
        out << "  failures   " << a.failures << "\n";
        for (const auto& [label, b] : a.bootstrap) {
            out << "  risk|label=" << label << "  mean " << fmt(b.mean) << " std " << fmt(b.std) << " ci95 ["
                << fmt(b.lower) << ", " << fmt(b.upper) << "]\n";
        }
        out << "\n";
    }
    return out.str();
}

inline std::string frequencies_csv(const MetricsReport& report) {
    std::string out = "method,gamma,feature,count,episodes,rate\n";
    for (const auto& a : report.aggregates) {
        for (const auto& [f, n] : a.freq_counts) {
            out += csv::format_row({a.method, a.gamma ? format_real(*a.gamma) : "", f, std::to_string(n),
                                    std::to_string(a.freq_episodes), format_real(a.frequency.at(f))});
        }
    }
    return out;
}

inline std::string fidelity_csv(const std::vector<FidelityRow>& rows) {
    std::string out = "feature,patients,wasserstein,energy,best_mae_pct\n";
    double w = 0.0, e = 0.0, mae = 0.0;
    for (const auto& r : rows) {
        out += csv::format_row({r.feature, std::to_string(r.patients), format_real(r.wasserstein),
                                format_real(r.energy), format_real(r.best_mae_pct)});
        w += r.wasserstein;
        e += r.energy;
        mae += r.best_mae_pct;
    }
    if (!rows.empty()) {
        const double n = static_cast<double>(rows.size());
        out += csv::format_row({"mean", "", format_real(w / n), format_real(e / n), format_real(mae / n)});
    }
    return out;
}

inline void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "report.csv", report_csv(report));
    detail::write_text(dir / "report.txt", report_text(report));
    detail::write_text(dir / "frequencies.csv", frequencies_csv(report));
    if (!report.fidelity.empty()) detail::write_text(dir / "fidelity.csv", fidelity_csv(report.fidelity));
}

inline std::string run_file_name(const RunRecord& r) {
    std::string name = r.method;
    if (r.gamma) name += "_g" + format_real(*r.gamma);
    return name + "_s" + std::to_string(r.seed) + ".jsonl";
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex error_mutex;
    std::exception_ptr error;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

struct ExperimentResult {
    MetricsReport report;
    std::vector<RunRecord> runs;
    // Full episodes per run, same order as `runs`.
    std::vector<std::vector<EpisodeResult>> episodes;
};

inline bool uses_stopping(Method m) { return m == Method::Actmed || m == Method::ActmedEntropy; }

/// Runs every arm of the experiment. Episode failures are tallied in the
/// report; schema or configuration errors propagate. Writes the report files
/// and per-run trajectory archives when `write` is set.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const DatasetSchema& schema,
                                       const std::vector<PatientRecord>& records, Surrogate& surrogate,
                                       bool write = true) {
    config.validate();
    if (records.empty()) throw Error(ErrorKind::InvalidArgument, "empty cohort");
    const auto costs = schema.cost_model();
    const auto selectable = partition(schema).unknown;
    if (config.budget > selectable.size()) {
        throw Error(ErrorKind::InvalidArgument, "budget exceeds the number of selectable features", "budget");
    }

    std::vector<std::string> global_best = config.global_features;
    const bool needs_global = std::find(config.methods.begin(), config.methods.end(), Method::Global) != config.methods.end();
    if (global_best.empty() && needs_global) global_best = surrogate.global_select(schema, selectable, config.budget);

    struct Arm {
        Method method;
        std::optional<double> gamma;
        std::uint64_t seed;
    };
    std::vector<Arm> arms;
    for (auto seed : config.seeds) {
        for (auto method : config.methods) {
            if (uses_stopping(method)) {
                for (double g : config.gammas) arms.push_back({method, g, seed});
            } else {
                arms.push_back({method, std::nullopt, seed});
            }
        }
    }

    ExperimentResult result;
    result.episodes.resize(arms.size());
    for (const auto& arm : arms) {
        RunRecord rec;
        rec.method = to_string(arm.method);
        rec.gamma = arm.gamma;
        rec.seed = arm.seed;
        rec.episodes.resize(records.size());
        result.runs.push_back(std::move(rec));
    }
    for (auto& eps : result.episodes) eps.resize(records.size());

    const bool nested_parallel = config.surrogate.kind == SurrogateKind::Remote;
    parallel_for(arms.size() * records.size(), config.threads, [&](std::size_t job) {
        const auto a = job / records.size();
        const auto p = job % records.size();
        const auto& arm = arms[a];
        EpisodeOptions opts;
        opts.method = arm.method;
        if (arm.method == Method::Actmed && config.criterion == Criterion::Entropy) opts.method = Method::ActmedEntropy;
        opts.budget = config.budget;
        opts.m = config.m;
        opts.policy = StoppingPolicy{config.theta, arm.gamma.value_or(0.5)};
        opts.early_stop = config.early_stop && uses_stopping(arm.method);
        opts.costs = costs;
        opts.global_features = global_best;
        opts.parallel = nested_parallel;
        auto episode = run_episode(schema, records[p], opts, surrogate, arm.seed);
        result.runs[a].episodes[p] = summarize(episode);
        result.episodes[a][p] = std::move(episode);
    });

    ReportOptions ropts;
    ropts.theta = config.theta;
    ropts.bootstrap_draws = config.bootstrap_draws;
    ropts.bootstrap_seed = config.seeds.front();
    ropts.global_best = global_best;
    result.report = build_report(result.runs, ropts);
    if (config.fidelity) {
        result.report.fidelity = sample_fidelity(schema, records, surrogate, config.m, config.seeds.front());
    }

    if (write) {
        write_report(result.report, config.out);
        const auto traj_dir = config.out / "trajectories";
        std::filesystem::create_directories(traj_dir);
        for (std::size_t a = 0; a < arms.size(); ++a) {
            std::string lines;
            for (const auto& ep : result.episodes[a]) {
                auto j = to_json(ep);
                j["gamma"] = arms[a].gamma ? nlohmann::json(*arms[a].gamma) : nlohmann::json(nullptr);
                j["run_seed"] = arms[a].seed;
                lines += j.dump() + "\n";
            }
            detail::write_text(traj_dir / run_file_name(result.runs[a]), lines);
        }
    }
    return result;
}

/// Rebuilds run records from a trajectories/ directory written by run_experiment.
inline std::vector<RunRecord> load_trajectory_archive(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::NotFound, "no trajectory archive at " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RunRecord> runs;
    for (const auto& file : files) {
        RunRecord rec;
        std::istringstream in(read_file(file));
        bool first = true;
        for (std::string line; std::getline(in, line);) {
            if (trim(line).empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorKind::Parse, file.string() + ": " + e.what());
            }
            if (first) {
                rec.method = j.at("method").get<std::string>();
                if (!j.at("gamma").is_null()) rec.gamma = j.at("gamma").get<double>();
                rec.seed = j.at("run_seed").get<std::uint64_t>();
                first = false;
            }
            rec.episodes.push_back(summary_from_json(j));
        }
        if (!first) runs.push_back(std::move(rec));
    }
    return runs;
}

}  // namespace diagbed
