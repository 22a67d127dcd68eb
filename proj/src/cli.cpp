#include "acc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "acc/checkpoint.hpp"
#include "acc/eval.hpp"
#include "acc/selftest.hpp"

namespace acc::cli {

const char* kCodeVersion = "1.0.0";

using nlohmann::json;

Experiment::Experiment() {
    data.alphabet_sizes = default_alphabets();
    data.dataset_size = 50000;
    data.coarse_labels = true;
}

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::vector<int> parse_alphabets(const std::string& text) {
    std::vector<int> sizes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        sizes.push_back(std::stoi(item));
    }
    if (sizes.empty()) throw std::invalid_argument("config field alphabets: empty list");
    return sizes;
}

bool parse_on_off(const std::string& v, const char* field) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw std::invalid_argument(std::string("config field ") + field + ": expected on/off");
}

template <typename T>
T parse_count(const std::string& v, const char* field) {
    try {
        return static_cast<T>(std::stoull(v));
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("config field ") + field + ": not a count");
    }
}

double parse_real(const std::string& v, const char* field) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("config field ") + field + ": not a number");
    }
}

void apply_json(Experiment& exp, const json& j) {
    for (const auto& [key, value] : j.items()) {
        if (key == "M") exp.train.M = value.get<std::size_t>();
        else if (key == "K") exp.train.K = value.get<std::size_t>();
        else if (key == "N") exp.train.N = value.get<std::size_t>();
        else if (key == "m") exp.train.m = value.get<double>();
        else if (key == "tau") exp.train.tau = value.get<double>();
        else if (key == "lr") exp.train.lr = value.get<double>();
        else if (key == "warmup") exp.train.warmup_steps = value.get<std::size_t>();
        else if (key == "epochs") exp.train.epochs = value.get<std::size_t>();
        else if (key == "sampler") exp.train.sampler = sampler_from_name(value.get<std::string>());
        else if (key == "heads") {
            exp.train.heads_enabled =
                value.is_boolean() ? value.get<bool>()
                                   : parse_on_off(value.get<std::string>(), "heads");
        } else if (key == "seed") exp.train.seed = value.get<std::uint64_t>();
        else if (key == "hidden_dim") exp.train.hidden_dim = value.get<std::size_t>();
        else if (key == "embed_dim") exp.train.embed_dim = value.get<std::size_t>();
        else if (key == "init_uniform01") {
            exp.train.init = value.get<bool>() ? InitScheme::uniform01
                                               : InitScheme::fan_in_uniform;
        } else if (key == "alphabets") exp.data.alphabet_sizes = value.get<std::vector<int>>();
        else if (key == "slot_dim") exp.data.slot_dim = value.get<int>();
        else if (key == "sigma") exp.data.noise_sigma = value.get<double>();
        else if (key == "dataset_size") exp.data.dataset_size = value.get<std::size_t>();
        else if (key == "coarse_labels") exp.data.coarse_labels = value.get<bool>();
        else if (key == "out") exp.out_dir = value.get<std::string>();
        else if (key == "trace") exp.trace = value.get<bool>();
        else if (key == "steps") exp.steps = value.get<std::size_t>();
        else if (key == "coverage_steps") exp.coverage_steps = value.get<std::size_t>();
        else if (key == "coverage_batch_sizes") {
            exp.coverage_batch_sizes = value.get<std::vector<std::size_t>>();
        } else if (key == "samplers") exp.samplers = value.get<std::vector<std::string>>();
        else if (key == "checkpoint") exp.checkpoint = value.get<std::string>();
        else if (key == "probe_modality") exp.probe_modality = value.get<std::string>();
        else throw std::invalid_argument("config field " + key + ": unknown");
    }
}

void apply_override(Experiment& exp, const std::string& key, const std::string& value) {
    if (key == "M") exp.train.M = parse_count<std::size_t>(value, "M");
    else if (key == "K") exp.train.K = parse_count<std::size_t>(value, "K");
    else if (key == "N") exp.train.N = parse_count<std::size_t>(value, "N");
    else if (key == "m") exp.train.m = parse_real(value, "m");
    else if (key == "tau") exp.train.tau = parse_real(value, "tau");
    else if (key == "lr") exp.train.lr = parse_real(value, "lr");
    else if (key == "warmup") exp.train.warmup_steps = parse_count<std::size_t>(value, "warmup");
    else if (key == "epochs") exp.train.epochs = parse_count<std::size_t>(value, "epochs");
    else if (key == "sampler") exp.train.sampler = sampler_from_name(value);
    else if (key == "heads") exp.train.heads_enabled = parse_on_off(value, "heads");
    else if (key == "seed") exp.train.seed = parse_count<std::uint64_t>(value, "seed");
    else if (key == "alphabets") exp.data.alphabet_sizes = parse_alphabets(value);
    else if (key == "out") exp.out_dir = value;
    else if (key == "trace") exp.trace = parse_on_off(value, "trace");
    else if (key == "checkpoint") exp.checkpoint = value;
    else throw std::invalid_argument("flag " + key + ": unknown override");
}

json config_to_json(const Experiment& exp) {
    json j;
    j["M"] = exp.train.M;
    j["K"] = exp.train.K;
    j["N"] = exp.train.N;
    j["m"] = exp.train.m;
    j["tau"] = exp.train.tau;
    j["lr"] = exp.train.lr;
    j["warmup"] = exp.train.warmup_steps;
    j["epochs"] = exp.train.epochs;
    j["sampler"] = sampler_name(exp.train.sampler);
    j["heads"] = exp.train.heads_enabled;
    j["seed"] = exp.train.seed;
    j["hidden_dim"] = exp.train.hidden_dim;
    j["embed_dim"] = exp.train.embed_dim;
    j["init_uniform01"] = exp.train.init == InitScheme::uniform01;
    j["alphabets"] = exp.data.alphabet_sizes;
    j["slot_dim"] = exp.data.slot_dim;
    j["sigma"] = exp.data.noise_sigma;
    j["dataset_size"] = exp.data.dataset_size;
    j["coarse_labels"] = exp.data.coarse_labels;
    j["out"] = exp.out_dir;
    j["trace"] = exp.trace;
    j["steps"] = exp.steps;
    j["coverage_steps"] = exp.coverage_steps;
    j["coverage_batch_sizes"] = exp.coverage_batch_sizes;
    j["samplers"] = exp.samplers;
    j["checkpoint"] = exp.checkpoint;
    j["probe_modality"] = exp.probe_modality;
    return j;
}

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    const std::string text = buffer.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        return json::object();  // empty file keeps the defaults
    }
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream msg;
        msg << "config parse error in " << path << " at line " << line << ", column " << col
            << ": " << e.what();
        throw std::runtime_error(msg.str());
    }
}

}  // namespace

Experiment parse_config(const std::string& config_path, const Overrides& overrides) {
    Experiment exp;
    if (!config_path.empty()) {
        json j = load_json_file(config_path);
        if (j.contains("config") && j["config"].is_object()) {
            // Manifest from a previous run; its resolved config replays the
            // experiment verbatim.
            apply_json(exp, j["config"]);
        } else {
            apply_json(exp, j);
        }
    }
    for (const auto& [key, value] : overrides) apply_override(exp, key, value);
    exp.data.validate();
    exp.train.validate(exp.data.dataset_size);
    return exp;
}

namespace {

namespace fs = std::filesystem;

struct ManifestWriter {
    fs::path path;
    json body;

    ManifestWriter(const Experiment& exp, const std::string& command) {
        fs::create_directories(exp.out_dir);
        path = fs::path(exp.out_dir) / "manifest.json";
        body["command"] = command;
        body["code_version"] = kCodeVersion;
        body["seed"] = exp.train.seed;
        body["config"] = config_to_json(exp);
        body["started_utc"] = utc_now();
        body["finished_utc"] = "";
        body["outputs"] = json::array();
        flush();  // recorded before any training starts
    }

    void finish(const std::vector<std::string>& outputs) {
        body["finished_utc"] = utc_now();
        for (const std::string& o : outputs) body["outputs"].push_back(o);
        flush();
    }

    void flush() const {
        std::ofstream os(path);
        os << body.dump(2) << '\n';
    }
};

// Effective sampler list for the comparison commands: an explicit --sampler
// flag narrows to that one, a "samplers" config list is used verbatim, and
// otherwise the command's default comparison set applies. The resolved list
// is written back into the experiment so the manifest replays it exactly.
std::vector<SamplerKind> resolve_samplers(Experiment& exp,
                                          std::initializer_list<SamplerKind> fallback,
                                          bool sampler_flag_set) {
    std::vector<SamplerKind> kinds;
    if (sampler_flag_set) {
        kinds = {exp.train.sampler};
    } else if (!exp.samplers.empty()) {
        for (const std::string& s : exp.samplers) kinds.push_back(sampler_from_name(s));
    } else {
        kinds = fallback;
    }
    exp.samplers.clear();
    for (SamplerKind k : kinds) exp.samplers.push_back(sampler_name(k));
    return kinds;
}

int cmd_train(const Experiment& exp, const std::string& command) {
    ManifestWriter manifest(exp, command);
    const PairedDataset dataset = generate(exp.data);

    std::ofstream trace;
    StepObserver observer;
    if (exp.trace) {
        trace.open(fs::path(exp.out_dir) / "trace.jsonl", std::ios::trunc);
        observer = [&](const StepRecord& record) {
            auto emit = [&](const char* side, const std::vector<std::int64_t>& ids,
                            double grad_norm) {
                json line;
                line["step"] = record.metrics.step;
                line["side"] = side;
                line["ids"] = ids;
                json labels = json::array();
                for (std::int64_t id : ids) {
                    labels.push_back(dataset.labels[static_cast<std::size_t>(id)]);
                }
                line["labels"] = labels;
                line["grad_norm_mean"] = grad_norm;
                trace << line.dump() << '\n';
            };
            emit("v", record.selected_v, record.metrics.grad_norm_v);
            emit("a", record.selected_a, record.metrics.grad_norm_a);
        };
    }

    const bool baseline = command == "baseline";
    const RunResult result = baseline ? run_baseline(exp.train, dataset, observer, exp.steps)
                                      : run(exp.train, dataset, observer, exp.steps);

    const fs::path metrics_path = fs::path(exp.out_dir) / "metrics.csv";
    write_metrics_csv(result.history, metrics_path.string());

    Checkpoint ckpt;
    ckpt.bundle = result.bundle;
    ckpt.adam_visual = result.adam_visual;
    ckpt.adam_audio = result.adam_audio;
    ckpt.steps_taken = result.history.size();
    const fs::path ckpt_path = fs::path(exp.out_dir) / "checkpoint.bin";
    save_checkpoint(ckpt, ckpt_path.string());

    std::vector<std::string> outputs = {"metrics.csv", "checkpoint.bin"};
    if (exp.trace) outputs.push_back("trace.jsonl");
    manifest.finish(outputs);

    const double final_v2a = result.history.empty() ? 0.0 : result.history.back().loss_v2a;
    std::printf("%s: %zu steps, final loss_v2a=%.6f -> %s\n", command.c_str(),
                result.history.size(), final_v2a, exp.out_dir.c_str());
    return 0;
}

int cmd_coverage(Experiment exp, bool sampler_flag_set) {
    const std::vector<SamplerKind> samplers = resolve_samplers(
        exp, {SamplerKind::active, SamplerKind::feature, SamplerKind::random}, sampler_flag_set);
    ManifestWriter manifest(exp, "coverage");
    const PairedDataset dataset = generate(exp.data);
    const std::vector<CoverageSeries> series = coverage_experiment(
        dataset, exp.train, samplers, exp.coverage_batch_sizes, exp.coverage_steps);
    write_coverage_csv(series, (fs::path(exp.out_dir) / "coverage.csv").string());
    write_coverage_fraction_csv(series,
                                (fs::path(exp.out_dir) / "coverage_fractions.csv").string());
    manifest.finish({"coverage.csv", "coverage_fractions.csv"});
    std::printf("coverage: %zu series -> %s\n", series.size(), exp.out_dir.c_str());
    return 0;
}

int cmd_misweep(Experiment exp, bool sampler_flag_set) {
    const std::vector<SamplerKind> samplers =
        resolve_samplers(exp, {SamplerKind::active, SamplerKind::random}, sampler_flag_set);
    ManifestWriter manifest(exp, "mi-sweep");
    std::vector<MiSpec> specs;
    for (std::size_t slots = 1; slots <= exp.data.alphabet_sizes.size(); ++slots) {
        MiSpec spec = exp.data;
        spec.alphabet_sizes.assign(exp.data.alphabet_sizes.begin(),
                                   exp.data.alphabet_sizes.begin() + slots);
        specs.push_back(std::move(spec));
    }
    const std::size_t steps = exp.steps > 0 ? exp.steps : 2000;
    const std::vector<MiSweepRow> rows =
        mi_sweep(specs, exp.train, samplers, {exp.train.seed}, steps);
    write_mi_csv(rows, (fs::path(exp.out_dir) / "mi.csv").string());
    manifest.finish({"mi.csv"});
    std::printf("mi-sweep: %zu rows -> %s\n", rows.size(), exp.out_dir.c_str());
    return 0;
}

int cmd_probe(const Experiment& exp) {
    ManifestWriter manifest(exp, "probe");
    const std::string ckpt_path = exp.checkpoint.empty()
                                      ? (fs::path(exp.out_dir) / "checkpoint.bin").string()
                                      : exp.checkpoint;
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const PairedDataset dataset = generate(exp.data);
    const Modality modality =
        exp.probe_modality == "audio" ? Modality::audio : Modality::visual;
    const ProbeResult result =
        linear_probe(ckpt.bundle, modality, dataset, derive_stream_seed(exp.train.seed, 7));
    const fs::path csv_path = fs::path(exp.out_dir) / "probe.csv";
    std::ofstream os(csv_path);
    char buf[96];
    os << "train_accuracy,test_accuracy\n";
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", result.train_accuracy,
                  result.test_accuracy);
    os << buf;
    os.close();
    manifest.finish({"probe.csv"});
    std::printf("probe: train=%.4f test=%.4f -> %s\n", result.train_accuracy,
                result.test_accuracy, exp.out_dir.c_str());
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Cross-modal active contrastive coding on synthetic paired data"};
    app.require_subcommand(1);

    struct FlagSet {
        std::string config, sampler, heads, alphabets, out, checkpoint;
        std::uint64_t seed = 0;
        std::size_t M = 0, K = 0, N = 0, warmup = 0, epochs = 0;
        double m = 0, tau = 0, lr = 0;
        bool trace = false;
        std::map<std::string, CLI::Option*> opts;
    };

    std::map<std::string, FlagSet> flags;
    const std::vector<std::string> commands = {"train", "baseline", "coverage",
                                               "mi-sweep", "probe", "selftest"};
    for (const std::string& name : commands) {
        CLI::App* sub = app.add_subcommand(name);
        FlagSet& f = flags[name];
        f.opts["config"] = sub->add_option("--config", f.config, "JSON config or manifest path");
        f.opts["seed"] = sub->add_option("--seed", f.seed, "experiment seed");
        f.opts["sampler"] =
            sub->add_option("--sampler", f.sampler, "active|feature|random|ohem");
        f.opts["M"] = sub->add_option("--M", f.M, "mini-batch size");
        f.opts["K"] = sub->add_option("--K", f.K, "dictionary size");
        f.opts["N"] = sub->add_option("--N", f.N, "candidate pool size");
        f.opts["m"] = sub->add_option("--m", f.m, "key-encoder momentum");
        f.opts["tau"] = sub->add_option("--tau", f.tau, "softmax temperature");
        f.opts["lr"] = sub->add_option("--lr", f.lr, "peak learning rate");
        f.opts["warmup"] = sub->add_option("--warmup", f.warmup, "warm-up steps");
        f.opts["epochs"] = sub->add_option("--epochs", f.epochs, "training epochs");
        f.opts["heads"] = sub->add_option("--heads", f.heads, "cross-modal heads on|off");
        f.opts["alphabets"] =
            sub->add_option("--alphabets", f.alphabets, "comma-separated alphabet sizes");
        f.opts["out"] = sub->add_option("--out", f.out, "output directory");
        f.opts["trace"] = sub->add_flag("--trace", f.trace, "write per-step sampler trace");
        if (name == "probe") {
            f.opts["checkpoint"] =
                sub->add_option("--checkpoint", f.checkpoint, "checkpoint to probe");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();

    try {
        if (command == "selftest") {
            return run_selftest();
        }
        const FlagSet& f = flags[command];
        Overrides overrides;
        auto set_if = [&](const char* key, auto render) {
            const auto it = f.opts.find(key);
            if (it != f.opts.end() && it->second->count() > 0) overrides[key] = render();
        };
        set_if("seed", [&] { return std::to_string(f.seed); });
        set_if("sampler", [&] { return f.sampler; });
        set_if("M", [&] { return std::to_string(f.M); });
        set_if("K", [&] { return std::to_string(f.K); });
        set_if("N", [&] { return std::to_string(f.N); });
        set_if("m", [&] {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", f.m);
            return std::string(buf);
        });
        set_if("tau", [&] {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", f.tau);
            return std::string(buf);
        });
        set_if("lr", [&] {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", f.lr);
            return std::string(buf);
        });
        set_if("warmup", [&] { return std::to_string(f.warmup); });
        set_if("epochs", [&] { return std::to_string(f.epochs); });
        set_if("heads", [&] { return f.heads; });
        set_if("alphabets", [&] { return f.alphabets; });
        set_if("out", [&] { return f.out; });
        set_if("checkpoint", [&] { return f.checkpoint; });
        if (f.trace) overrides["trace"] = "on";

        const Experiment exp = parse_config(f.config, overrides);
        const bool sampler_flag_set = overrides.count("sampler") > 0;

        if (command == "train" || command == "baseline") return cmd_train(exp, command);
        if (command == "coverage") return cmd_coverage(exp, sampler_flag_set);
        if (command == "mi-sweep") return cmd_misweep(exp, sampler_flag_set);
        if (command == "probe") return cmd_probe(exp);
        std::fprintf(stderr, "acc: unknown command %s\n", command.c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acc %s: error: %s\n", command.c_str(), e.what());
        return 1;
    }
}

}  // namespace acc::cli
