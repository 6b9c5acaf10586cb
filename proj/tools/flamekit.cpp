// flamekit: batch front end for the flamelet surrogate pipeline.
//
// Subcommands: gen-data, train, predict, evaluate, ablate. Every command
// is deterministic given its flags and seeds; outputs are written
// atomically so a re-run can never leave partial files behind.
//
// Exit codes: 0 success, 2 usage/config, 3 I/O or malformed input files,
// 4 training failure, 5 consistency violation. All failures print a
// machine-parseable `error_code=<n>` line on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "flamekit/dataset.hpp"
#include "flamekit/ensemble.hpp"
#include "flamekit/error.hpp"
#include "flamekit/evaluation.hpp"
#include "flamekit/fsio.hpp"
#include "flamekit/network.hpp"
#include "flamekit/numfmt.hpp"
#include "flamekit/rng.hpp"
#include "flamekit/strategy.hpp"
#include "flamekit/svg.hpp"
#include "flamekit/uncertainty.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace flamekit;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitTraining = 4;
constexpr int kExitConsistency = 5;

struct CliFailure {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw CliFailure{code, message}; }

// Failures while reading input files (missing, unreadable, malformed)
// are I/O-class regardless of which library error they surface as.
template <typename F>
auto io_guard(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const CliFailure&) {
        throw;
    } catch (const std::exception& e) {
        fail(kExitIo, e.what());
    }
}

// Failures caused by how the user combined inputs (wrong encoder for the
// dataset, bad config values) are usage-class.
template <typename F>
auto usage_guard(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const CliFailure&) {
        throw;
    } catch (const std::exception& e) {
        fail(kExitUsage, e.what());
    }
}

// ---------------------------------------------------------------------------
// Run configuration: defaults < config file < command-line flags.

struct RunConfig {
    std::string data_csv;  // empty means synthetic source
    SyntheticConfig synthetic;
    bool synthetic_touched = false;

    std::string encoder = "identity-p4";
    Strategy strategy = Strategy::Flamelets;
    double split_fraction = 0.2;
    std::uint64_t seed = 7;
    std::string out_dir;
    int threads = 1;

    TrainConfig train;
    int ensemble_members = 8;
    double sample_fraction = 0.8;
    bool with_replacement = false;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\''))) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(kExitUsage, "config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& context) {
    std::vector<int> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(kExitUsage, context + ": empty entry in list '" + v + "'");
        out.push_back(static_cast<int>(parse_long(item, context)));
    }
    if (out.empty()) fail(kExitUsage, context + ": empty list");
    return out;
}

void apply_config_entry(RunConfig& rc, const std::string& key, const std::string& value) {
    auto num = [&](const std::string& v) { return parse_double(v, "config key '" + key + "'"); };
    auto integer = [&](const std::string& v) {
        return parse_long(v, "config key '" + key + "'");
    };
    try {
        if (key == "data.csv") {
            rc.data_csv = value;
        } else if (key == "data.synthetic") {
            if (parse_bool(value, key)) rc.data_csv.clear();
        } else if (key == "synthetic.n_flamelets") {
            rc.synthetic.n_flamelets = static_cast<int>(integer(value));
            rc.synthetic_touched = true;
        } else if (key == "synthetic.grid_size") {
            rc.synthetic.grid_size = static_cast<int>(integer(value));
            rc.synthetic_touched = true;
        } else if (key == "synthetic.n_species") {
            rc.synthetic.n_species = static_cast<int>(integer(value));
            rc.synthetic_touched = true;
        } else if (key == "synthetic.base_strain") {
            rc.synthetic.base_strain = num(value);
            rc.synthetic_touched = true;
        } else if (key == "synthetic.extinction_decay") {
            rc.synthetic.extinction_decay = num(value);
            rc.synthetic_touched = true;
        } else if (key == "synthetic.extinction_jitter") {
            rc.synthetic.extinction_jitter = num(value);
            rc.synthetic_touched = true;
        } else if (key == "synthetic.extinction_threshold") {
            rc.synthetic.extinction_threshold = num(value);
            rc.synthetic_touched = true;
        } else if (key == "encoder") {
            rc.encoder = value;
        } else if (key == "strategy") {
            rc.strategy = strategy_from_string(value);
        } else if (key == "split.fraction") {
            rc.split_fraction = num(value);
        } else if (key == "seed") {
            rc.seed = static_cast<std::uint64_t>(integer(value));
        } else if (key == "out") {
            rc.out_dir = value;
        } else if (key == "threads") {
            rc.threads = static_cast<int>(integer(value));
        } else if (key == "train.hidden_dims") {
            rc.train.hidden_dims = parse_int_list(value, "config key 'train.hidden_dims'");
        } else if (key == "train.learning_rate") {
            rc.train.learning_rate = num(value);
        } else if (key == "train.beta1") {
            rc.train.beta1 = num(value);
        } else if (key == "train.beta2") {
            rc.train.beta2 = num(value);
        } else if (key == "train.epsilon") {
            rc.train.epsilon = num(value);
        } else if (key == "train.batch_size") {
            rc.train.batch_size = static_cast<int>(integer(value));
        } else if (key == "train.max_epochs") {
            rc.train.max_epochs = static_cast<int>(integer(value));
        } else if (key == "train.patience") {
            rc.train.patience = static_cast<int>(integer(value));
        } else if (key == "train.val_fraction") {
            rc.train.val_fraction = num(value);
        } else if (key == "train.activation") {
            rc.train.activation = activation_from_string(value);
        } else if (key == "ensemble.members") {
            rc.ensemble_members = static_cast<int>(integer(value));
        } else if (key == "ensemble.sample_fraction") {
            rc.sample_fraction = num(value);
        } else if (key == "ensemble.with_replacement") {
            rc.with_replacement = parse_bool(value, key);
        } else {
            fail(kExitUsage, "unknown config key '" + key + "'");
        }
    } catch (const CliFailure&) {
        throw;
    } catch (const std::exception& e) {
        fail(kExitUsage, std::string("config key '") + key + "': " + e.what());
    }
}

// TOML-style key = value file; [section] headers prefix the keys that
// follow, so `[train]\npatience = 10` equals `train.patience = 10`.
void apply_config_file(RunConfig& rc, const std::string& path) {
    const std::string text = io_guard([&] { return read_file(path); });
    std::istringstream ss(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                fail(kExitUsage, path + ":" + std::to_string(line_no) + ": unterminated [section]");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(kExitUsage,
                 path + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        const std::string value = strip_quotes(trim(line.substr(eq + 1)));
        if (key.empty()) {
            fail(kExitUsage, path + ":" + std::to_string(line_no) + ": empty key");
        }
        if (!section.empty()) key = section + "." + key;
        apply_config_entry(rc, key, value);
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.

void require_out(const RunConfig& rc) {
    if (rc.out_dir.empty()) fail(kExitUsage, "--out is required (or set `out` in the config file)");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(kExitIo, "cannot create output directory '" + dir + "': " + ec.message());
}

FlameletDataset resolve_dataset(const RunConfig& rc, std::uint64_t synthetic_seed) {
    if (!rc.data_csv.empty()) {
        if (rc.synthetic_touched) {
            fail(kExitUsage, "exactly one dataset source: both data.csv and synthetic.* are set");
        }
        return io_guard([&] { return load_csv(rc.data_csv); });
    }
    usage_guard([&] { rc.synthetic.validate(); });
    return generate_synthetic(rc.synthetic, synthetic_seed);
}

EncoderWeights resolve_encoder(const RunConfig& rc, const SpeciesTable& species) {
    if (rc.encoder == "identity-p4") return identity_encoder(species, 4);
    return io_guard([&] { return load_encoder_weights(rc.encoder); });
}

EnsembleConfig make_ensemble_config(const RunConfig& rc) {
    EnsembleConfig ec;
    ec.n_members = rc.ensemble_members;
    ec.sample_fraction = rc.sample_fraction;
    ec.with_replacement = rc.with_replacement;
    ec.strategy = rc.strategy;
    ec.base = rc.train;
    ec.seed = rc.seed;
    return ec;
}

ordered_json synthetic_to_json(const SyntheticConfig& c, std::uint64_t seed) {
    ordered_json j;
    j["n_flamelets"] = c.n_flamelets;
    j["grid_size"] = c.grid_size;
    j["n_species"] = c.n_species;
    j["base_strain"] = c.base_strain;
    j["extinction_decay"] = c.extinction_decay;
    j["extinction_jitter"] = c.extinction_jitter;
    j["extinction_threshold"] = c.extinction_threshold;
    j["seed"] = seed;
    return j;
}

SyntheticConfig synthetic_from_json(const ordered_json& j, std::uint64_t* seed) {
    SyntheticConfig c;
    c.n_flamelets = j.at("n_flamelets").get<int>();
    c.grid_size = j.at("grid_size").get<int>();
    c.n_species = j.at("n_species").get<int>();
    c.base_strain = j.at("base_strain").get<double>();
    c.extinction_decay = j.at("extinction_decay").get<double>();
    c.extinction_jitter = j.at("extinction_jitter").get<double>();
    c.extinction_threshold = j.at("extinction_threshold").get<double>();
    *seed = j.at("seed").get<std::uint64_t>();
    return c;
}

ordered_json train_to_json(const TrainConfig& c) {
    ordered_json j;
    j["hidden_dims"] = c.hidden_dims;
    j["learning_rate"] = c.learning_rate;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon"] = c.epsilon;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["val_fraction"] = c.val_fraction;
    j["activation"] = to_string(c.activation);
    return j;
}

void json_to_file(const ordered_json& j, const std::string& path) {
    write_file_atomic(path, j.dump(2) + "\n");
}

ordered_json json_from_file(const std::string& path) {
    const std::string text = io_guard([&] { return read_file(path); });
    try {
        return ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        fail(kExitIo, "Corrupted: JSON parse error at byte " + std::to_string(e.byte) + " in '" +
                          path + "'");
    }
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const RunConfig& rc) {
    require_out(rc);
    ensure_dir(rc.out_dir);
    if (!rc.data_csv.empty()) {
        fail(kExitUsage, "gen-data always generates synthetic data; drop data.csv from the config");
    }
    usage_guard([&] { rc.synthetic.validate(); });
    const FlameletDataset ds = generate_synthetic(rc.synthetic, rc.seed);

    const fs::path out(rc.out_dir);
    save_csv(ds, (out / "flamelets.csv").string());

    ordered_json j;
    j["command"] = "gen-data";
    j["synthetic"] = synthetic_to_json(rc.synthetic, rc.seed);
    j["n_flamelets_surviving"] = ds.flamelets.size();
    j["n_flamelets_configured"] = rc.synthetic.n_flamelets;
    j["n_points"] = ds.n_points();
    j["files"] = ordered_json{{"csv", "flamelets.csv"}};
    json_to_file(j, (out / "provenance.json").string());

    std::cout << "wrote " << (out / "flamelets.csv").string() << " (" << ds.flamelets.size()
              << " flamelets, " << ds.n_points() << " points; "
              << (rc.synthetic.n_flamelets - static_cast<int>(ds.flamelets.size()))
              << " extinguished)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

ordered_json holdout_manifest_json(const RunConfig& rc, const SplitResult& split,
                                   const std::string& dataset_fp, std::size_t n_points) {
    ordered_json j;
    j["format_version"] = 1;
    j["strategy"] = to_string(rc.strategy);
    j["split_fraction"] = rc.split_fraction;
    j["seed"] = rc.seed;
    j["dataset_fingerprint"] = dataset_fp;
    j["n_points"] = n_points;
    j["n_train_val"] = split.train_val.size();
    j["n_holdout"] = split.holdout.size();
    if (rc.strategy == Strategy::Flamelets) {
        j["holdout_keys"] = split.holdout_keys;
    } else {
        j["holdout_indices"] = split.holdout_indices;
    }
    return j;
}

int cmd_train(const RunConfig& rc) {
    require_out(rc);
    ensure_dir(rc.out_dir);
    if (rc.ensemble_members < 2) {
        fail(kExitUsage, "--members must be at least 2 (ensembles need two or more members), got " +
                             std::to_string(rc.ensemble_members));
    }
    if (!(rc.split_fraction > 0.0) || !(rc.split_fraction < 1.0)) {
        fail(kExitUsage, "--split-fraction must lie strictly between 0 and 1");
    }
    if (rc.threads < 1) fail(kExitUsage, "--threads must be at least 1");

    const FlameletDataset ds = resolve_dataset(rc, rc.seed);
    const EncoderWeights enc = resolve_encoder(rc, ds.species);
    const std::vector<EncodedPoint> points = usage_guard([&] { return encode(ds, enc); });
    const std::string dataset_fp = fingerprint(points);

    const SplitResult split =
        usage_guard([&] { return split_holdout(points, rc.strategy, rc.split_fraction, rc.seed); });

    TrainConfig tc = rc.train;
    tc.seed = rc.seed;
    const Mlp single = train_single(split.train_val, tc);

    const EnsembleConfig ec = make_ensemble_config(rc);
    const EnsembleModel ensemble = train_ensemble(split.train_val, ec, rc.threads);

    const fs::path out(rc.out_dir);
    save_model(single, (out / "single.model").string());
    save_ensemble(ensemble, (out / "ensemble.model").string());
    json_to_file(holdout_manifest_json(rc, split, dataset_fp, points.size()),
                 (out / "holdout.json").string());

    ordered_json run;
    run["command"] = "train";
    if (!rc.data_csv.empty()) {
        run["data"] = ordered_json{{"csv", rc.data_csv}};
    } else {
        run["data"] = ordered_json{{"synthetic", synthetic_to_json(rc.synthetic, rc.seed)}};
    }
    run["encoder"] = rc.encoder;
    run["strategy"] = to_string(rc.strategy);
    run["split_fraction"] = rc.split_fraction;
    run["seed"] = rc.seed;
    run["threads"] = rc.threads;
    run["train"] = train_to_json(rc.train);
    run["ensemble"] = ordered_json{{"members", rc.ensemble_members},
                                   {"sample_fraction", rc.sample_fraction},
                                   {"with_replacement", rc.with_replacement}};
    run["dataset_fingerprint"] = dataset_fp;
    run["files"] = ordered_json{{"single", "single.model"},
                                {"ensemble", "ensemble.model"},
                                {"holdout", "holdout.json"}};
    json_to_file(run, (out / "run.json").string());

    std::cout << "train_val=" << split.train_val.size() << " holdout=" << split.holdout.size()
              << " points (strategy=" << to_string(rc.strategy) << ")\n";
    std::cout << "single.model: best_val_loss=" << format_double_sci(single.meta.best_val_loss)
              << " epochs=" << single.meta.epochs_run << "\n";
    std::cout << "ensemble.model: " << ensemble.n_members() << " members\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict

int cmd_predict(const RunConfig& rc, const std::string& model_path) {
    require_out(rc);
    ensure_dir(rc.out_dir);
    if (model_path.empty()) fail(kExitUsage, "--model is required");

    const ordered_json doc = json_from_file(model_path);
    const std::string kind = doc.value("kind", std::string{});

    const FlameletDataset ds = resolve_dataset(rc, rc.seed);
    const EncoderWeights enc = resolve_encoder(rc, ds.species);
    const std::vector<EncodedPoint> points = usage_guard([&] { return encode(ds, enc); });
    const Eigen::MatrixXd inputs = pack_inputs(points);

    const auto& names = report_target_names();
    const auto& order = report_target_order();
    std::string csv;
    if (kind == "mlp") {
        const Mlp model = io_guard([&] { return load_model(model_path); });
        const Eigen::MatrixXd preds = forward_batch(model, inputs);
        csv = "flame_key,x_pos";
        for (const auto& n : names) csv += ",pred_" + n;
        csv += '\n';
        for (std::size_t i = 0; i < points.size(); ++i) {
            csv += format_double_sci(points[i].flamelet_key) + ',' +
                   format_double_sci(points[i].x_pos);
            for (int t : order) {
                csv += ',' + format_double_sci(preds(t, static_cast<Eigen::Index>(i)));
            }
            csv += '\n';
        }
    } else if (kind == "ensemble") {
        const EnsembleModel ens = io_guard([&] { return load_ensemble(model_path); });
        const std::vector<Eigen::MatrixXd> member_preds = predict_members_batch(ens, inputs);
        const Eigen::MatrixXd mean = posterior_mean(member_preds);
        const Eigen::MatrixXd stddev = posterior_stddev(member_preds);
        csv = "flame_key,x_pos";
        for (const auto& n : names) {
            csv += ",mean_" + n + ",std_" + n + ",ci_low_" + n + ",ci_high_" + n;
        }
        csv += '\n';
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            csv += format_double_sci(points[i].flamelet_key) + ',' +
                   format_double_sci(points[i].x_pos);
            for (int t : order) {
                const double half = 1.96 * stddev(t, c);
                csv += ',' + format_double_sci(mean(t, c)) + ',' + format_double_sci(stddev(t, c)) +
                       ',' + format_double_sci(mean(t, c) - half) + ',' +
                       format_double_sci(mean(t, c) + half);
            }
            csv += '\n';
        }
    } else {
        fail(kExitIo, "'" + model_path + "' is neither a model nor an ensemble file");
    }

    const fs::path out_file = fs::path(rc.out_dir) / "predictions.csv";
    write_file_atomic(out_file.string(), csv);
    std::cout << "wrote " << out_file.string() << " (" << points.size() << " rows)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct HoldoutManifest {
    Strategy strategy = Strategy::Flamelets;
    double split_fraction = 0.2;
    std::uint64_t seed = 0;
    std::string dataset_fingerprint;
    std::vector<double> holdout_keys;
    std::vector<std::uint64_t> holdout_indices;
};

HoldoutManifest parse_holdout_manifest(const std::string& path) {
    const ordered_json j = json_from_file(path);
    HoldoutManifest m;
    try {
        if (j.at("format_version").get<long>() != 1) {
            fail(kExitIo, "UnsupportedVersion: holdout manifest '" + path + "'");
        }
        m.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        m.split_fraction = j.at("split_fraction").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
        if (j.contains("holdout_keys")) {
            m.holdout_keys = j.at("holdout_keys").get<std::vector<double>>();
        }
        if (j.contains("holdout_indices")) {
            m.holdout_indices = j.at("holdout_indices").get<std::vector<std::uint64_t>>();
        }
    } catch (const CliFailure&) {
        throw;
    } catch (const std::exception& e) {
        fail(kExitIo, "Corrupted: holdout manifest '" + path + "' is incomplete (" + e.what() + ")");
    }
    return m;
}

// Rebuilds the encoded dataset an earlier `train` run used, preferring
// the recorded run.json source unless the caller supplied --data.
std::vector<EncodedPoint> rebuild_points(const RunConfig& rc, const std::string& run_dir) {
    RunConfig source = rc;
    if (source.data_csv.empty()) {
        const fs::path run_json = fs::path(run_dir) / "run.json";
        const ordered_json run = json_from_file(run_json.string());
        try {
            const auto& data = run.at("data");
            if (data.contains("csv")) {
                source.data_csv = data.at("csv").get<std::string>();
                const FlameletDataset ds = io_guard([&] { return load_csv(source.data_csv); });
                const EncoderWeights enc = resolve_encoder(source, ds.species);
                return usage_guard([&] { return encode(ds, enc); });
            }
            std::uint64_t gen_seed = 0;
            source.synthetic = synthetic_from_json(data.at("synthetic"), &gen_seed);
            source.encoder = run.value("encoder", source.encoder);
            const FlameletDataset ds = generate_synthetic(source.synthetic, gen_seed);
            const EncoderWeights enc = resolve_encoder(source, ds.species);
            return usage_guard([&] { return encode(ds, enc); });
        } catch (const CliFailure&) {
            throw;
        } catch (const std::exception& e) {
            fail(kExitIo, "Corrupted: '" + run_json.string() + "' is incomplete (" + e.what() + ")");
        }
    }
    const FlameletDataset ds = io_guard([&] { return load_csv(source.data_csv); });
    const EncoderWeights enc = resolve_encoder(source, ds.species);
    return usage_guard([&] { return encode(ds, enc); });
}

int cmd_evaluate(const RunConfig& rc_in, std::string run_dir, int top,
                 const std::vector<std::string>& profile_keys, bool force, double ci_multiplier) {
    RunConfig rc = rc_in;
    if (run_dir.empty()) run_dir = rc.out_dir;
    if (run_dir.empty()) fail(kExitUsage, "--run (or --out) must point at a training run directory");
    if (rc.out_dir.empty()) rc.out_dir = run_dir;
    ensure_dir(rc.out_dir);

    const fs::path run(run_dir);
    const Mlp single = io_guard([&] { return load_model((run / "single.model").string()); });
    const EnsembleModel ensemble =
        io_guard([&] { return load_ensemble((run / "ensemble.model").string()); });
    const HoldoutManifest manifest = parse_holdout_manifest((run / "holdout.json").string());

    const std::vector<EncodedPoint> points = rebuild_points(rc, run_dir);
    const std::string fp = fingerprint(points);
    if (fp != manifest.dataset_fingerprint) {
        const std::string msg = "dataset fingerprint mismatch: holdout manifest records " +
                                manifest.dataset_fingerprint + " but the evaluated dataset is " + fp;
        if (!force) fail(kExitConsistency, msg + " (pass --force to evaluate anyway)");
        std::cerr << "warning: " << msg << "\n";
    }

    const SplitResult split = usage_guard([&] {
        return split_by_holdout_units(points, manifest.strategy, manifest.holdout_keys,
                                      manifest.holdout_indices);
    });

    const EvaluationReport report = compare_models(single, ensemble, split.holdout, ci_multiplier);
    if (!report.fingerprint_match) {
        std::cerr << "warning: single model and ensemble were trained on different data ("
                  << report.single_fingerprint << " vs " << report.ensemble_fingerprint << ")\n";
    }

    const fs::path out(rc.out_dir);
    write_mae_report_csv(report, (out / "report_mae.csv").string());
    write_flamelet_report_csv(report, (out / "report_by_flamelet.csv").string(), top);
    write_xpos_report_csv(report, (out / "report_by_xpos.csv").string(), top);
    write_coverage_report_csv(report, (out / "report_coverage.csv").string());

    ordered_json meta;
    meta["command"] = "evaluate";
    meta["strategy"] = to_string(report.strategy);
    meta["n_members"] = report.n_members;
    meta["single_seed"] = report.single_seed;
    meta["ensemble_seed"] = report.ensemble_seed;
    meta["ci_multiplier"] = report.ci_multiplier;
    meta["n_holdout_points"] = report.n_holdout_points;
    meta["dataset_fingerprint"] = fp;
    meta["training_fingerprint_match"] = report.fingerprint_match;
    meta["ensemble_wins"] = report.ensemble_wins;
    meta["n_targets"] = report.target_names.size();
    ordered_json files = ordered_json::array(
        {"report_mae.csv", "report_by_flamelet.csv", "report_by_xpos.csv", "report_coverage.csv"});
    for (const auto& key_str : profile_keys) {
        files.push_back("profile_" + key_str + ".csv");
        files.push_back("profile_" + key_str + ".svg");
    }
    meta["files"] = files;
    json_to_file(meta, (out / "report_meta.json").string());

    // Optional per-flamelet profile series and plots.
    for (const auto& key_str : profile_keys) {
        const double key = usage_guard([&] { return parse_double(key_str, "--profile"); });
        std::vector<ProfileRow> rows;
        try {
            rows = flamelet_profile(single, ensemble, split.holdout, key, ci_multiplier);
        } catch (const DataError& e) {
            fail(kExitUsage, std::string(e.what()) + " (keys are listed in report_by_flamelet.csv)");
        }
        write_profile_csv(rows, (out / ("profile_" + key_str + ".csv")).string());

        std::vector<SvgPanel> panels;
        const auto& names = report_target_names();
        for (std::size_t t = 0; t < names.size(); ++t) {
            SvgPanel panel;
            panel.title = names[t] + "  (flamelet " + key_str + ")";
            panel.x_label = "x_pos";
            panel.y_label = names[t];
            SvgBand band;
            band.label = "95% CI";
            band.color = "#2ca02c";
            SvgSeries truth{"truth", {}, {}, "#111111", false};
            SvgSeries single_s{"single", {}, {}, "#d62728", true};
            SvgSeries mean_s{"ensemble mean", {}, {}, "#2ca02c", false};
            for (const auto& row : rows) {
                band.x.push_back(row.x_pos);
                band.lo.push_back(row.ci_low[t]);
                band.hi.push_back(row.ci_high[t]);
                truth.x.push_back(row.x_pos);
                truth.y.push_back(row.truth[t]);
                single_s.x.push_back(row.x_pos);
                single_s.y.push_back(row.single_pred[t]);
                mean_s.x.push_back(row.x_pos);
                mean_s.y.push_back(row.ens_mean[t]);
            }
            panel.bands.push_back(std::move(band));
            panel.series.push_back(std::move(truth));
            panel.series.push_back(std::move(single_s));
            panel.series.push_back(std::move(mean_s));
            panels.push_back(std::move(panel));
        }
        write_svg((out / ("profile_" + key_str + ".svg")).string(), panels, 2);
    }

    std::cout << "holdout=" << report.n_holdout_points << " points; ensemble wins "
              << report.ensemble_wins << "/" << report.target_names.size() << " MAE targets\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablate

std::pair<int, int> parse_range(const std::string& range) {
    const auto dots = range.find("..");
    if (dots == std::string::npos) {
        fail(kExitUsage, "--range must look like 2..12, got '" + range + "'");
    }
    const int lo = static_cast<int>(
        usage_guard([&] { return parse_long(range.substr(0, dots), "--range"); }));
    const int hi = static_cast<int>(
        usage_guard([&] { return parse_long(range.substr(dots + 2), "--range"); }));
    if (lo < 2) fail(kExitUsage, "--range must start at 2 or higher (ensembles need 2 members)");
    if (hi < lo) fail(kExitUsage, "--range is empty: " + range);
    return {lo, hi};
}

int cmd_ablate(const RunConfig& rc, const std::string& range) {
    require_out(rc);
    ensure_dir(rc.out_dir);
    const auto [n_min, n_max] = parse_range(range);
    if (rc.threads < 1) fail(kExitUsage, "--threads must be at least 1");

    const FlameletDataset ds = resolve_dataset(rc, rc.seed);
    const EncoderWeights enc = resolve_encoder(rc, ds.species);
    const std::vector<EncodedPoint> points = usage_guard([&] { return encode(ds, enc); });
    const SplitResult split =
        usage_guard([&] { return split_holdout(points, rc.strategy, rc.split_fraction, rc.seed); });

    const EnsembleConfig base = make_ensemble_config(rc);
    const AblationResult result =
        ablation_study(split.train_val, split.holdout, base, n_min, n_max, rc.threads);

    const fs::path out(rc.out_dir);
    write_ablation_csv(result, (out / "ablation.csv").string());

    std::vector<SvgPanel> panels;
    for (std::size_t t = 0; t < result.target_names.size(); ++t) {
        SvgPanel panel;
        panel.title = "MAE vs N  (" + result.target_names[t] + ")";
        panel.x_label = "ensemble size N";
        panel.y_label = "holdout MAE";
        SvgSeries curve{"MAE", {}, {}, "#1f77b4", false};
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& row : result.rows) {
            curve.x.push_back(row.n_members);
            curve.y.push_back(row.mae[t]);
            lo = std::min(lo, row.mae[t]);
            hi = std::max(hi, row.mae[t]);
        }
        SvgSeries chosen{"chosen N", {double(result.chosen_n), double(result.chosen_n)}, {lo, hi},
                         "#d62728", true};
        panel.series.push_back(std::move(curve));
        panel.series.push_back(std::move(chosen));
        panels.push_back(std::move(panel));
    }
    write_svg((out / "ablation.svg").string(), panels, 2);

    std::cout << "ablation over N=" << n_min << ".." << n_max << ": " << result.rows.size()
              << " rows, chosen N=" << result.chosen_n << "\n";
    return 0;
}

std::string find_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config") {
            if (i + 1 >= argc) fail(kExitUsage, "--config needs a file path");
            return argv[i + 1];
        }
        if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    try {
        RunConfig rc;
        const std::string config_path = find_config_path(argc, argv);
        if (!config_path.empty()) apply_config_file(rc, config_path);

        CLI::App app{"flamelet surrogate pipeline: synthetic data, deep-ensemble training, "
                     "uncertainty-aware evaluation"};
        app.require_subcommand(1);
        std::string config_dummy;
        app.add_option("--config", config_dummy, "TOML-style key=value run configuration");

        // Global options are registered per subcommand so they can appear
        // after the subcommand name; they all write into the shared rc.
        auto add_common = [&](CLI::App* sub, bool with_data = true) {
            sub->add_option("--seed", rc.seed, "master seed for the whole run");
            sub->add_option("--out", rc.out_dir, "output directory");
            sub->add_option("--threads", rc.threads, "worker threads for member training");
            sub->add_option("--config", config_dummy, "TOML-style key=value run configuration");
            if (with_data) {
                sub->add_option("--data", rc.data_csv, "dataset CSV (omit to use synthetic data)");
                sub->add_option("--encoder", rc.encoder,
                                "encoder weights file, or the identity-p4 builtin");
            }
        };
        auto add_strategy = [&](CLI::App* sub) {
            sub->add_option_function<std::string>(
                   "--strategy",
                   [&](const std::string& s) {
                       rc.strategy = usage_guard([&] { return strategy_from_string(s); });
                   },
                   "bagging unit: flamelets or points")
                ->type_name("TEXT");
            sub->add_option("--split-fraction", rc.split_fraction, "holdout fraction of units");
        };
        auto add_training = [&](CLI::App* sub) {
            sub->add_option_function<std::string>(
                   "--hidden",
                   [&](const std::string& s) {
                       rc.train.hidden_dims = parse_int_list(s, "--hidden");
                   },
                   "hidden layer widths, comma separated")
                ->type_name("TEXT");
            sub->add_option("--lr", rc.train.learning_rate, "Adam learning rate");
            sub->add_option("--batch", rc.train.batch_size, "minibatch size");
            sub->add_option("--epochs", rc.train.max_epochs, "maximum training epochs");
            sub->add_option("--patience", rc.train.patience, "early-stopping patience, epochs");
            sub->add_option("--val-fraction", rc.train.val_fraction,
                            "per-training validation fraction");
            sub->add_option_function<std::string>(
                   "--activation",
                   [&](const std::string& s) {
                       rc.train.activation = usage_guard([&] { return activation_from_string(s); });
                   },
                   "hidden-relu (default) or paper-literal")
                ->type_name("TEXT");
        };
        auto add_ensemble = [&](CLI::App* sub) {
            sub->add_option("--members", rc.ensemble_members, "ensemble size N");
            sub->add_option("--sample-fraction", rc.sample_fraction,
                            "per-member fraction of resampling units");
            sub->add_flag("--with-replacement", rc.with_replacement,
                          "sample units with replacement");
        };

        CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic flamelet library CSV");
        add_common(gen, /*with_data=*/false);
        gen->add_option("--flamelets", rc.synthetic.n_flamelets, "flamelet count before extinction");
        gen->add_option("--grid", rc.synthetic.grid_size, "grid points per flamelet");
        gen->add_option("--species", rc.synthetic.n_species, "species count");

        CLI::App* train = app.add_subcommand("train", "train the single model and the ensemble");
        add_common(train);
        add_strategy(train);
        add_training(train);
        add_ensemble(train);

        CLI::App* predict = app.add_subcommand("predict", "run a saved model over a dataset");
        add_common(predict);
        std::string model_path;
        predict->add_option("--model", model_path, "single.model or ensemble.model file");

        CLI::App* evaluate =
            app.add_subcommand("evaluate", "compare single vs ensemble on the stored holdout");
        add_common(evaluate);
        std::string run_dir;
        int top = 0;
        std::vector<std::string> profile_keys;
        bool force = false;
        double ci_multiplier = 1.96;
        evaluate->add_option("--run", run_dir, "training run directory (defaults to --out)");
        evaluate->add_option("--top", top, "keep only the worst N rows in grouped reports");
        evaluate->add_option("--profile", profile_keys,
                             "flamelet key to emit a per-point profile for (repeatable)");
        evaluate->add_flag("--force", force, "evaluate despite a dataset fingerprint mismatch");
        evaluate->add_option("--ci", ci_multiplier, "confidence interval multiplier");

        CLI::App* ablate = app.add_subcommand("ablate", "sweep ensemble sizes and pick N");
        add_common(ablate);
        add_strategy(ablate);
        add_training(ablate);
        add_ensemble(ablate);
        std::string range = "2..12";
        ablate->add_option("--range", range, "ensemble sizes to sweep, e.g. 2..12");

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            std::cerr << e.what() << "\n";
            std::cerr << "error_code=" << kExitUsage << "\n";
            return kExitUsage;
        }

        if (gen->parsed()) return cmd_gen_data(rc);
        if (train->parsed()) return cmd_train(rc);
        if (predict->parsed()) return cmd_predict(rc, model_path);
        if (evaluate->parsed()) {
            return cmd_evaluate(rc, run_dir, top, profile_keys, force, ci_multiplier);
        }
        if (ablate->parsed()) return cmd_ablate(rc, range);
        std::cerr << "no subcommand given\nerror_code=" << kExitUsage << "\n";
        return kExitUsage;
    } catch (const CliFailure& f) {
        std::cerr << f.message << "\n";
        std::cerr << "error_code=" << f.code << "\n";
        return f.code;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\nerror_code=" << kExitIo << "\n";
        return kExitIo;
    } catch (const SerializationError& e) {
        std::cerr << e.what() << "\nerror_code=" << kExitIo << "\n";
        return kExitIo;
    } catch (const TrainingError& e) {
        std::cerr << e.what() << "\nerror_code=" << kExitTraining << "\n";
        return kExitTraining;
    } catch (const ConsistencyError& e) {
        std::cerr << e.what() << "\nerror_code=" << kExitConsistency << "\n";
        return kExitConsistency;
    } catch (const DataError& e) {
        std::cerr << e.what() << "\nerror_code=" << kExitUsage << "\n";
        return kExitUsage;
    } catch (const DimensionError& e) {
        std::cerr << e.what() << "\nerror_code=" << kExitUsage << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\nerror_code=" << kExitIo << "\n";
        return kExitIo;
    }
}
