// Command-line front end: construct / optimize / eval / retrieve / analyze
// subcommands over config-driven, reproducible runs.
//
// Exit codes: 0 success, 1 validation or path errors, 2 test-split
// contamination, 3 backend failure.

#include <CLI11.hpp>

#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "templar/analytics.hpp"
#include "templar/construction.hpp"
#include "templar/digest.hpp"
#include "templar/infer_eval.hpp"
#include "templar/json_io.hpp"
#include "templar/optimizer.hpp"
#include "templar/retrieval.hpp"

namespace fs = std::filesystem;
using namespace templar;

namespace {

using ConfigMap = std::map<std::string, std::string>;

std::string trim_copy(const std::string& s) {
    const size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

// key = value lines, # comments, optional quotes around the value. Dotted
// keys group backends and roles.
ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    ConfigMap config;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim_copy(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": expected key = value");
        }
        const std::string key = trim_copy(stripped.substr(0, eq));
        std::string value = trim_copy(stripped.substr(eq + 1));
        if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                                  (value.front() == '\'' && value.back() == '\''))) {
            value = value.substr(1, value.size() - 2);
        }
        if (key.empty()) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) + ": empty key");
        }
        config[key] = value;
    }
    return config;
}

const std::string* find_key(const ConfigMap& config, const std::string& key) {
    const auto it = config.find(key);
    return it == config.end() ? nullptr : &it->second;
}

std::string require_key(const ConfigMap& config, const std::string& key) {
    const std::string* value = find_key(config, key);
    if (value == nullptr) throw std::runtime_error("config key missing: " + key);
    return *value;
}

std::string get_or(const ConfigMap& config, const std::string& key, const std::string& fallback) {
    const std::string* value = find_key(config, key);
    return value ? *value : fallback;
}

long get_long(const ConfigMap& config, const std::string& key, long fallback) {
    const std::string* value = find_key(config, key);
    if (!value) return fallback;
    try {
        return std::stol(*value);
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + " must be an integer, got: " + *value);
    }
}

double get_double(const ConfigMap& config, const std::string& key, double fallback) {
    const std::string* value = find_key(config, key);
    if (!value) return fallback;
    try {
        return std::stod(*value);
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + " must be a number, got: " + *value);
    }
}

bool get_bool(const ConfigMap& config, const std::string& key, bool fallback) {
    const std::string* value = find_key(config, key);
    if (!value) return fallback;
    if (*value == "true") return true;
    if (*value == "false") return false;
    throw std::runtime_error("config key " + key + " must be true or false, got: " + *value);
}

std::string require_path(const ConfigMap& config, const std::string& key) {
    const std::string path = require_key(config, key);
    if (!fs::exists(path)) throw std::runtime_error(key + " does not exist: " + path);
    return path;
}

// Backends are declared as backend.<id>.<field>. A backend with a
// mock_script key is scripted; anything else must name an endpoint.
void build_gateway(const ConfigMap& config, Gateway& gateway) {
    std::set<std::string> ids;
    for (const auto& [key, value] : config) {
        if (key.rfind("backend.", 0) != 0) continue;
        const size_t dot = key.find('.', 8);
        if (dot == std::string::npos) continue;
        ids.insert(key.substr(8, dot - 8));
    }
    for (const std::string& id : ids) {
        const std::string prefix = "backend." + id + ".";
        BackendConfig backend;
        backend.backend_id = id;
        backend.endpoint = get_or(config, prefix + "endpoint", "");
        backend.model = get_or(config, prefix + "model", id);
        backend.auth_env = get_or(config, prefix + "auth_env", "");
        backend.timeout_seconds = get_double(config, prefix + "timeout_seconds", 60.0);
        backend.max_retries = static_cast<int>(get_long(config, prefix + "max_retries", 2));
        backend.parallelism = static_cast<int>(get_long(config, prefix + "parallelism", 4));
        backend.context_limit_tokens =
            get_long(config, prefix + "context_limit_tokens", 128000);
        const std::string* script = find_key(config, prefix + "mock_script");
        if (script != nullptr) {
            if (!fs::exists(*script)) {
                throw std::runtime_error(prefix + "mock_script does not exist: " + *script);
            }
            gateway.register_backend(backend, MockBackend::from_script(*script));
        } else {
            if (backend.endpoint.empty()) {
                throw std::runtime_error("backend " + id +
                                         " needs either an endpoint or a mock_script");
            }
            gateway.register_backend(backend, std::make_unique<HttpBackend>(backend));
        }
    }
    if (ids.empty()) throw std::runtime_error("config declares no backends");
}

std::string role_backend(const ConfigMap& config, Gateway& gateway, const std::string& role) {
    const std::string* named = find_key(config, "roles." + role);
    if (named != nullptr) {
        if (!gateway.has_backend(*named)) {
            throw std::runtime_error("roles." + role + " names unknown backend: " + *named);
        }
        return *named;
    }
    // Unambiguous single-backend configs need no roles section.
    std::string only;
    for (const auto& [key, value] : config) {
        if (key.rfind("backend.", 0) != 0) continue;
        const size_t dot = key.find('.', 8);
        if (dot == std::string::npos) continue;
        const std::string id = key.substr(8, dot - 8);
        if (only.empty()) {
            only = id;
        } else if (only != id) {
            throw std::runtime_error("several backends configured; set roles." + role);
        }
    }
    return only;
}

std::string iso8601_now() {
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

// The only timestamp any artifact carries lives here, so output trees stay
// byte-comparable after dropping meta.json.
void write_meta(const fs::path& out_dir, const std::string& command, const ConfigMap& config) {
    Json j;
    j["created_at"] = iso8601_now();
    j["command"] = command;
    Json resolved;
    for (const auto& [key, value] : config) resolved[key] = value;
    j["config"] = std::move(resolved);
    std::ofstream out(out_dir / "meta.json");
    if (!out) throw std::runtime_error("cannot write meta.json under " + out_dir.string());
    out << j.dump(2) << "\n";
}

// Order-preserving seeded pick of `count` triples.
std::vector<TrainingTriple> sample_triples(std::vector<TrainingTriple> triples, size_t count,
                                           unsigned long seed) {
    if (triples.size() <= count) return triples;
    std::vector<size_t> index(triples.size());
    for (size_t i = 0; i < index.size(); ++i) index[i] = i;
    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
    for (size_t i = index.size() - 1; i > 0; --i) {
        std::swap(index[i], index[rng() % (i + 1)]);
    }
    index.resize(count);
    std::sort(index.begin(), index.end());
    std::vector<TrainingTriple> picked;
    picked.reserve(count);
    for (const size_t i : index) picked.push_back(std::move(triples[i]));
    return picked;
}

OptimizerConfig optimizer_config(const ConfigMap& config, Gateway& gateway) {
    OptimizerConfig opt;
    opt.answerer_backend = role_backend(config, gateway, "answerer");
    opt.feedback_backend = role_backend(config, gateway, "feedback");
    opt.updater_backend = role_backend(config, gateway, "updater");
    opt.tau = get_double(config, "tau", 0.5);
    opt.min_usage = static_cast<int>(get_long(config, "min_usage", 2));
    const std::string aggregation = get_or(config, "aggregation", "mean");
    if (aggregation == "mean") {
        opt.aggregation = ScoreAggregation::Mean;
    } else if (aggregation == "sum") {
        opt.aggregation = ScoreAggregation::Sum;
    } else {
        throw std::runtime_error("aggregation must be mean or sum, got: " + aggregation);
    }
    const long k = get_long(config, "k", 0);
    if (k > 0) opt.k = static_cast<int>(k);
    opt.token_budget = get_long(config, "token_budget", 128000);
    opt.max_output_tokens = static_cast<int>(get_long(config, "max_output_tokens", 4096));
    opt.max_reprompts = static_cast<int>(get_long(config, "max_reprompts", 2));
    opt.max_failed_cases = static_cast<int>(get_long(config, "max_failed_cases", 3));
    return opt;
}

int cmd_construct(const ConfigMap& config) {
    Gateway gateway;
    build_gateway(config, gateway);
    std::vector<TrainingTriple> triples = load_triples(require_path(config, "triples"));
    triples = sample_triples(std::move(triples),
                             static_cast<size_t>(get_long(config, "sample", 50)),
                             static_cast<unsigned long>(get_long(config, "seed", 0)));

    std::optional<DatasetManifest> test_manifest;
    if (find_key(config, "test_manifest") != nullptr) {
        test_manifest = load_manifest(require_path(config, "test_manifest"));
    }

    ConstructionConfig construction;
    construction.backend_id = role_backend(config, gateway, "constructor");
    construction.store_holistic = get_bool(config, "store_holistic", false);
    construction.oracle = get_bool(config, "oracle", false);
    construction.max_reprompts = static_cast<int>(get_long(config, "max_reprompts", 2));
    construction.max_output_tokens =
        static_cast<int>(get_long(config, "max_output_tokens", 4096));

    const fs::path out_dir = require_key(config, "out_dir");
    fs::create_directories(out_dir);
    const ConstructionOutcome outcome = build_initial_set(
        gateway, triples, test_manifest ? &*test_manifest : nullptr, construction);
    snapshot(outcome.store, (out_dir / "store.iter0.json").string());
    write_construction_meta(outcome, (out_dir / "construction_meta.json").string());
    write_meta(out_dir, "construct", config);

    std::cout << "constructed " << outcome.store.templates.size() << " templates from "
              << triples.size() << " triples (" << outcome.skips.size() << " skipped)\n";
    for (const SkipRecord& skip : outcome.skips) {
        std::cerr << "skipped " << skip.query_id << ": " << skip.reason << "\n";
    }
    return 0;
}

int cmd_optimize(const ConfigMap& config) {
    Gateway gateway;
    build_gateway(config, gateway);
    const TemplateStore initial = load_store(require_path(config, "store"));
    const DatasetManifest train = load_manifest(require_path(config, "train_manifest"));
    const DatasetManifest validation =
        load_manifest(require_path(config, "validation_manifest"));

    std::map<std::string, SourceCase> sources;
    if (find_key(config, "construction_meta") != nullptr &&
        find_key(config, "triples") != nullptr) {
        sources = build_source_cases(load_triples(require_path(config, "triples")),
                                     load_source_map(require_path(config, "construction_meta")));
    }

    OptimizationConfig optimization;
    optimization.iteration = optimizer_config(config, gateway);
    optimization.max_iterations = static_cast<int>(get_long(config, "max_iterations", 3));
    optimization.early_stop = get_bool(config, "early_stop", true);
    optimization.epsilon = get_double(config, "epsilon", 0.001);
    const fs::path out_dir = require_key(config, "out_dir");
    fs::create_directories(out_dir);
    optimization.out_dir = out_dir.string();

    if (get_or(config, "tau", "") == "grid") {
        std::vector<double> grid = {0.3, 0.4, 0.5, 0.6, 0.7};
        optimization.iteration.tau =
            grid_search_tau(gateway, initial, train, validation, sources,
                            optimization.iteration, grid);
        std::cout << "grid-selected tau " << optimization.iteration.tau << "\n";
    }

    const OptimizationOutcome outcome =
        run_optimization(gateway, initial, train, validation, sources, optimization);
    snapshot(outcome.store, (out_dir / "store.final.json").string());

    Json summary;
    summary["best_iteration"] = outcome.best_iteration;
    summary["early_stopped"] = outcome.early_stopped;
    summary["tau"] = optimization.iteration.tau;
    summary["validation_metrics"] = outcome.validation_metrics;
    {
        std::ofstream out(out_dir / "optimization.json");
        out << summary.dump(2) << "\n";
    }
    write_meta(out_dir, "optimize", config);

    std::cout << "iter  KEEP   ADD   FIX  DISCARD  aggregate\n";
    for (const IterationReport& report : outcome.reports) {
        std::printf("%4d %5d %5d %5d %8d  %9.4f\n", report.iteration,
                    report.decision_counts.at("KEEP"), report.decision_counts.at("ADD"),
                    report.decision_counts.at("FIX"), report.decision_counts.at("DISCARD"),
                    report.aggregate_metric);
    }
    std::cout << "best iteration " << outcome.best_iteration << " (validation "
              << outcome.validation_metrics[static_cast<size_t>(outcome.best_iteration -
                                                                initial.iteration)]
              << ")\n";
    return 0;
}

int cmd_eval(const ConfigMap& config) {
    Gateway gateway;
    build_gateway(config, gateway);
    const DatasetManifest manifest = load_manifest(require_path(config, "manifest"));

    EvalConfig eval;
    eval.backend_id = role_backend(config, gateway, "answerer");
    eval.mode = mode_from_name(get_or(config, "mode", "total"));
    const long k = get_long(config, "k", 0);
    if (k > 0) eval.k = static_cast<int>(k);
    eval.token_budget = get_long(config, "token_budget", 128000);
    eval.max_output_tokens = static_cast<int>(get_long(config, "max_output_tokens", 4096));
    eval.prompt_sample_count = static_cast<int>(get_long(config, "prompt_samples", 2));

    std::optional<TemplateStore> store;
    if (eval.mode == PromptMode::Total) {
        store = load_store(require_path(config, "store"));
    }

    const EvalOutcome outcome =
        evaluate_dataset(gateway, manifest, store ? &*store : nullptr, eval);

    // Runs land under a config-derived id so identical configs rerun into
    // identical trees.
    std::string run_id = get_or(config, "run_id", "");
    if (run_id.empty()) {
        std::string fingerprint = mode_name(eval.mode) + "|" + get_or(config, "manifest", "") +
                                  "|" + get_or(config, "store", "") + "|" +
                                  std::to_string(k) + "|" + std::to_string(eval.token_budget);
        run_id = "run-" + sha256_hex(fingerprint).substr(0, 12);
    }
    const fs::path out_dir = require_key(config, "out_dir");
    const fs::path run_dir = out_dir / "runs" / run_id;
    write_eval_run(run_dir.string(), outcome);
    fs::create_directories(out_dir);
    write_meta(out_dir, "eval", config);

    std::cout << "aggregate " << outcome.result.metric << " " << outcome.result.aggregate
              << " over " << outcome.result.rows.size() << " queries (" << run_dir.string()
              << ")\n";
    return 0;
}

int cmd_retrieve(const ConfigMap& config) {
    const DatasetManifest manifest = load_manifest(require_path(config, "manifest"));
    const std::vector<Document> corpus = ingest(manifest.corpus_path);
    const Bm25Index index(corpus);

    std::vector<int> ks;
    std::istringstream in(get_or(config, "ks", "1,3,5,10"));
    std::string token;
    while (std::getline(in, token, ',')) {
        const int k = std::stoi(trim_copy(token));
        if (k < 1) throw std::runtime_error("retrieval depth must be >= 1");
        ks.push_back(k);
    }

    const fs::path out_dir = require_key(config, "out_dir");
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "recall.csv");
    csv << "k,recall\n";
    std::cout << "k,recall\n";
    for (const int k : ks) {
        double total = 0.0;
        long counted = 0;
        for (const QuerySpec& query : manifest.queries) {
            if (!query.doc_allowlist || query.doc_allowlist->empty()) continue;
            total += recall_at_k(index.retrieve(query.question, k), *query.doc_allowlist);
            ++counted;
        }
        if (counted == 0) throw std::runtime_error("no queries carry gold document ids");
        const double recall = total / static_cast<double>(counted);
        csv << k << "," << recall << "\n";
        std::cout << k << "," << recall << "\n";
    }
    write_meta(out_dir, "retrieve", config);
    return 0;
}

int cmd_analyze(const ConfigMap& config) {
    const fs::path out_dir = require_key(config, "out_dir");
    fs::create_directories(out_dir);

    const std::vector<UsageRecord> usage = load_usage_log(require_path(config, "usage_log"));
    write_histogram_csv(usage_histogram(usage), (out_dir / "histogram.csv").string());
    const LiftMatrix lift = cooccurrence_lift(usage);
    write_lift_csv(lift, (out_dir / "lift.csv").string());
    write_lift_json(lift, (out_dir / "lift.json").string());

    if (find_key(config, "store") != nullptr) {
        const TemplateStore store = load_store(require_path(config, "store"));
        export_template_texts(store, (out_dir / "template_texts.jsonl").string());
        if (find_key(config, "percentile") != nullptr) {
            const int percentile = static_cast<int>(get_long(config, "percentile", 100));
            const SubsetDirection direction =
                direction_from_name(get_or(config, "direction", "bottom"));
            const TemplateStore subset = subset_by_score(
                store, score_templates(usage, store), percentile, direction);
            snapshot(subset, (out_dir / ("store.subset" + std::to_string(percentile) +
                                         direction_name(direction) + ".json"))
                                 .string());
            std::cout << "subset " << direction_name(direction) << " " << percentile << "% -> "
                      << subset.templates.size() << " templates\n";
        }
        if (find_key(config, "transfer_target") != nullptr) {
            const TransferRunConfig transfer = transfer_run_config(
                require_path(config, "store"), get_or(config, "template_source", "unknown"),
                require_key(config, "transfer_target"));
            std::ofstream out(out_dir / "transfer.json");
            out << transfer_run_config_to_json(transfer).dump(2) << "\n";
        }
    }
    if (find_key(config, "manifest") != nullptr) {
        export_query_texts(load_manifest(require_path(config, "manifest")),
                           (out_dir / "query_texts.jsonl").string());
    }
    write_meta(out_dir, "analyze", config);
    std::cout << "analyzed " << usage.size() << " usage records, " << lift.template_ids.size()
              << " templates\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"thought template lifecycle: construct, optimize, evaluate, analyze"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string store_path;
    std::string manifest_path;
    double tau = -1.0;
    long k = 0;
    std::string mode;
    long iterations = 0;
    bool oracle = false;
    long percentile = 0;
    std::string direction;
    long seed = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides config out_dir)");
    };

    CLI::App* construct = app.add_subcommand("construct", "build the initial template store");
    add_common(construct);
    construct->add_flag("--oracle", oracle, "mark the store as built from test queries");
    construct->add_option("--seed", seed, "sampling seed");

    CLI::App* optimize = app.add_subcommand("optimize", "run the template update loop");
    add_common(optimize);
    optimize->add_option("--store", store_path, "initial store snapshot");
    optimize->add_option("--tau", tau, "refinement threshold");
    optimize->add_option("--iterations", iterations, "maximum update iterations");

    CLI::App* eval = app.add_subcommand("eval", "answer a dataset and score it");
    add_common(eval);
    eval->add_option("--store", store_path, "template store snapshot");
    eval->add_option("--manifest", manifest_path, "dataset manifest");
    eval->add_option("--mode", mode, "naive | cot | cic | cic_cot | total");
    eval->add_option("--k", k, "retrieval depth (omit to pack the corpus)");

    CLI::App* retrieve = app.add_subcommand("retrieve", "sweep retrieval depths and report recall");
    add_common(retrieve);
    retrieve->add_option("--manifest", manifest_path, "dataset manifest");

    CLI::App* analyze = app.add_subcommand("analyze", "usage histograms, lift, store subsets");
    add_common(analyze);
    analyze->add_option("--store", store_path, "template store snapshot");
    analyze->add_option("--percentile", percentile, "subset size: 25, 50, 75 or 100");
    analyze->add_option("--direction", direction, "subset from the bottom or top");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        ConfigMap config = parse_config_file(config_path);
        // Flags win over config entries.
        if (!out_dir.empty()) config["out_dir"] = out_dir;
        if (!store_path.empty()) config["store"] = store_path;
        if (!manifest_path.empty()) config["manifest"] = manifest_path;
        if (tau >= 0.0) config["tau"] = std::to_string(tau);
        if (k > 0) config["k"] = std::to_string(k);
        if (!mode.empty()) config["mode"] = mode;
        if (iterations > 0) config["max_iterations"] = std::to_string(iterations);
        if (oracle) config["oracle"] = "true";
        if (percentile > 0) config["percentile"] = std::to_string(percentile);
        if (!direction.empty()) config["direction"] = direction;
        if (seed >= 0) config["seed"] = std::to_string(seed);

        if (app.got_subcommand(construct)) return cmd_construct(config);
        if (app.got_subcommand(optimize)) return cmd_optimize(config);
        if (app.got_subcommand(eval)) return cmd_eval(config);
        if (app.got_subcommand(retrieve)) return cmd_retrieve(config);
        if (app.got_subcommand(analyze)) return cmd_analyze(config);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const ContaminationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TransportError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const ContextLimitError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const EvalAborted& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
