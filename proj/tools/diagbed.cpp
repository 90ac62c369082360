// diagbed: experiment runner, metric tools and the session service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "diagbed/diagbed.hpp"

namespace {

using namespace diagbed;

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : std::move(fallback);
}

SurrogateConfig load_surrogate_config(const std::string& path) {
    const std::filesystem::path p(path);
    auto cfg = parse_surrogate_config(nlohmann::json::parse(read_file(p)));
    if (!cfg.table_path.empty() && std::filesystem::path(cfg.table_path).is_relative()) {
        cfg.table_path = (p.parent_path() / cfg.table_path).string();
    }
    return cfg;
}

struct CommonFlags {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> methods;
    std::vector<double> gammas;
    std::string out;
    std::string surrogate;
};

ExperimentConfig resolve(const CommonFlags& flags) {
    auto cfg = load_experiment_config(flags.config);
    if (!flags.seeds.empty()) cfg.seeds = flags.seeds;
    if (!flags.methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : flags.methods) cfg.methods.push_back(parse_method(m));
    }
    if (!flags.gammas.empty()) cfg.gammas = flags.gammas;
    if (!flags.out.empty()) cfg.out = flags.out;
    if (!flags.surrogate.empty()) cfg.surrogate = load_surrogate_config(flags.surrogate);
    cfg.validate();
    return cfg;
}

int cmd_run(const CommonFlags& flags) {
    const auto cfg = resolve(flags);
    const auto schema = load_manifest(cfg.dataset);
    const auto data = load_dataset(schema);
    for (const auto& issue : data.dropped) {
        std::cerr << "dropped row " << issue.row << " (" << issue.column << "): " << issue.reason << "\n";
    }
    auto surrogate = make_surrogate(cfg.surrogate);
    const auto result = run_experiment(cfg, schema, data.records, *surrogate);
    std::cout << report_text(result.report);
    std::cout << "surrogate queries: " << surrogate->counter().total() << "\n";
    std::cout << "report written to " << cfg.out.string() << "\n";
    return 0;
}

int cmd_metrics(const std::string& dir, double theta, std::size_t draws, std::uint64_t seed) {
    const std::filesystem::path out(dir);
    const auto runs = load_trajectory_archive(out / "trajectories");
    ReportOptions opts;
    opts.theta = theta;
    opts.bootstrap_draws = draws;
    opts.bootstrap_seed = seed;
    const auto report = build_report(runs, opts);
    write_report(report, out);
    std::cout << report_text(report);
    return 0;
}

int cmd_fidelity(const CommonFlags& flags) {
    const auto cfg = resolve(flags);
    const auto schema = load_manifest(cfg.dataset);
    const auto data = load_dataset(schema);
    auto surrogate = make_surrogate(cfg.surrogate);
    const auto rows = sample_fidelity(schema, data.records, *surrogate, cfg.m, cfg.seeds.front());
    const auto text = fidelity_csv(rows);
    std::filesystem::create_directories(cfg.out);
    std::ofstream(cfg.out / "fidelity.csv") << text;
    std::cout << text;
    return 0;
}

int cmd_bootstrap(const std::string& path, std::size_t draws, std::uint64_t seed) {
    std::vector<double> values;
    std::istringstream in(read_file(path));
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        double v = 0.0;
        if (!parse_real(text, v)) throw Error(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": not a number");
        values.push_back(v);
    }
    const auto s = bayesian_bootstrap(values, draws, seed);
    std::cout << "n,mean,std,ci_lower,ci_upper\n"
              << values.size() << "," << format_real(s.mean) << "," << format_real(s.std) << ","
              << format_real(s.lower) << "," << format_real(s.upper) << "\n";
    return 0;
}

ServiceServer* g_server = nullptr;

int cmd_serve(const std::string& datasets_dir, const std::string& surrogate_path, const std::string& listen,
              const ServiceOptions& options) {
    auto datasets = load_dataset_directory(datasets_dir);
    if (datasets.empty()) throw Error(ErrorKind::NotFound, "no dataset manifests in " + datasets_dir);
    auto surrogate = make_surrogate(load_surrogate_config(surrogate_path));
    SessionService service(std::move(datasets), *surrogate, options);
    ServiceServer server(service);
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::InvalidArgument, "listen address must be host:port", "listen");
    const auto host = listen.substr(0, colon);
    const int port = std::stoi(listen.substr(colon + 1));
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    std::cerr << "listening on " << host << ":" << port << "\n";
    if (!server.listen(host, port)) throw Error(ErrorKind::InvalidArgument, "cannot listen on " + listen, "listen");
    return 0;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
    auto* opt = cmd->add_option("--config", flags.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    if (config_required) opt->required();
    cmd->add_option("--seed", flags.seeds, "override the seed list");
    cmd->add_option("--method", flags.methods, "restrict to these methods");
    cmd->add_option("--gamma", flags.gammas, "override the gamma sweep");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--surrogate", flags.surrogate, "surrogate config (JSON) replacing the experiment's")
        ->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential diagnostic test selection by expected information gain"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    add_common(run, run_flags);

    std::string metrics_dir;
    double theta = 0.5;
    std::size_t metric_draws = 1000;
    std::uint64_t metric_seed = 1;
    auto* metrics = app.add_subcommand("metrics", "recompute reports from a trajectory archive");
    metrics->add_option("--out", metrics_dir, "experiment output directory holding trajectories/")->required();
    metrics->add_option("--theta", theta, "decision threshold");
    metrics->add_option("--draws", metric_draws, "bootstrap draws");
    metrics->add_option("--seed", metric_seed, "bootstrap seed");

    CommonFlags fid_flags;
    auto* fidelity = app.add_subcommand("sample-fidelity", "distribution match of surrogate samples against a dataset");
    add_common(fidelity, fid_flags);

    std::string values_path;
    std::size_t draws = 1000;
    std::uint64_t boot_seed = 1;
    auto* boot = app.add_subcommand("bootstrap", "Bayesian bootstrap CI from a file with one value per line");
    boot->add_option("values", values_path, "values file")->required()->check(CLI::ExistingFile);
    boot->add_option("--draws", draws, "bootstrap draws");
    boot->add_option("--seed", boot_seed, "random seed");

    std::string datasets_dir = env_or("DIAGBED_DATASETS", "data");
    std::string surrogate_path = env_or("DIAGBED_SURROGATE", "");
    std::string listen = env_or("DIAGBED_LISTEN", "127.0.0.1:8080");
    ServiceOptions service_opts;
    service_opts.store_path = env_or("DIAGBED_STORE", "diagbed-sessions.db");
    service_opts.bearer_token = env_or("DIAGBED_TOKEN", "");
    auto* serve = app.add_subcommand("serve", "run the HTTP session service");
    serve->add_option("--datasets", datasets_dir, "directory of dataset manifests");
    serve->add_option("--surrogate", surrogate_path, "surrogate config (JSON)");
    serve->add_option("--listen", listen, "host:port");
    serve->add_option("--store", service_opts.store_path, "SQLite session store");
    serve->add_option("--m", service_opts.m, "Monte Carlo samples per candidate");
    serve->add_option("--budget", service_opts.budget, "default acquisition budget");
    serve->add_option("--theta", service_opts.policy.theta, "decision threshold");
    serve->add_option("--gamma", service_opts.policy.gamma, "stopping sensitivity");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(run_flags);
        if (*metrics) return cmd_metrics(metrics_dir, theta, metric_draws, metric_seed);
        if (*fidelity) return cmd_fidelity(fid_flags);
        if (*boot) return cmd_bootstrap(values_path, draws, boot_seed);
        if (*serve) {
            if (surrogate_path.empty()) throw Error(ErrorKind::InvalidArgument, "--surrogate is required", "surrogate");
            return cmd_serve(datasets_dir, surrogate_path, listen, service_opts);
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        if (!e.raw().empty()) std::cerr << "raw reply: " << e.raw() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
