#include "flamekit/ensemble.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "flamekit/error.hpp"
#include "flamekit/fsio.hpp"
#include "flamekit/rng.hpp"
#include "model_json.hpp"

namespace flamekit {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kTagSample = 0x5A3B1E;

long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

// Sampled unit ids (indices into the unit list), sorted, with multiplicity.
std::vector<std::size_t> draw_units(std::size_t n_units, double fraction, bool with_replacement,
                                    SplitMix64& rng) {
    auto n_sample = static_cast<std::size_t>(round_half_up(fraction * static_cast<double>(n_units)));
    n_sample = std::max<std::size_t>(n_sample, 1);
    std::vector<std::size_t> picked;
    picked.reserve(n_sample);
    if (with_replacement) {
        for (std::size_t i = 0; i < n_sample; ++i) picked.push_back(rng.next_below(n_units));
    } else {
        std::vector<std::size_t> ids(n_units);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        fisher_yates(ids, rng);
        picked.assign(ids.begin(), ids.begin() + static_cast<long>(n_sample));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

}  // namespace

void EnsembleConfig::validate() const {
    if (n_members < 2) {
        throw TrainingError("InsufficientMembers: an ensemble needs at least 2 members, got " +
                            std::to_string(n_members));
    }
    if (!(sample_fraction > 0.0) || sample_fraction > 1.0) {
        throw TrainingError("sample_fraction must lie in (0, 1]");
    }
    base.validate();
}

std::uint64_t member_seed(std::uint64_t ensemble_seed, int index) {
    if (index < 0) throw ConsistencyError("member index must be non-negative");
    return ensemble_seed ^ (static_cast<std::uint64_t>(index) + 1) * 0x9E3779B97F4A7C15ULL;
}

MemberSample sample_member_data(std::span<const EncodedPoint> data, const EnsembleConfig& cfg,
                                int index) {
    cfg.validate();
    if (data.empty()) throw DataError("EmptyDataset: cannot sample member data from zero points");
    if (index < 0 || index >= cfg.n_members) {
        throw ConsistencyError("member index " + std::to_string(index) + " outside 0.." +
                               std::to_string(cfg.n_members - 1));
    }

    MemberSample out;
    out.manifest.member_index = index;
    out.manifest.seed = member_seed(cfg.seed, index);
    SplitMix64 rng(derive_seed(out.manifest.seed, kTagSample));

    if (cfg.strategy == Strategy::Flamelets) {
        const std::vector<double> keys = unique_keys(data);
        const std::vector<std::size_t> picked =
            draw_units(keys.size(), cfg.sample_fraction, cfg.with_replacement, rng);
        // Points grouped per sampled flamelet, each group in dataset order.
        for (std::size_t id : picked) {
            out.manifest.flamelet_keys.push_back(keys[id]);
            for (const auto& p : data) {
                if (p.flamelet_key == keys[id]) out.points.push_back(p);
            }
        }
    } else {
        const std::vector<std::size_t> picked =
            draw_units(data.size(), cfg.sample_fraction, cfg.with_replacement, rng);
        for (std::size_t id : picked) {
            out.manifest.point_indices.push_back(id);
            out.points.push_back(data[id]);
        }
    }
    out.manifest.n_points = out.points.size();
    return out;
}

void EnsembleModel::validate() const {
    config.validate();
    if (members.size() < 2) {
        throw TrainingError("InsufficientMembers: an ensemble needs at least 2 members, got " +
                            std::to_string(members.size()));
    }
    if (manifests.size() != members.size()) {
        throw ConsistencyError("ensemble has " + std::to_string(members.size()) + " members but " +
                               std::to_string(manifests.size()) + " manifests");
    }
    for (const auto& m : members) {
        m.validate();
        if (m.input_dim() != members.front().input_dim() ||
            m.output_dim() != members.front().output_dim()) {
            throw DimensionError("ensemble members disagree on input/output dimensions");
        }
    }
}

EnsembleModel train_ensemble(std::span<const EncodedPoint> data, const EnsembleConfig& cfg,
                             int n_threads) {
    cfg.validate();
    if (data.empty()) throw DataError("EmptyDataset: cannot train an ensemble on zero points");
    if (n_threads < 1) n_threads = 1;

    EnsembleModel ensemble;
    ensemble.config = cfg;
    ensemble.dataset_fingerprint = fingerprint(data);
    ensemble.members.resize(static_cast<std::size_t>(cfg.n_members));
    ensemble.manifests.resize(static_cast<std::size_t>(cfg.n_members));

    auto train_one = [&](int index) {
        MemberSample sample = sample_member_data(data, cfg, index);
        TrainConfig tc = cfg.base;
        tc.seed = sample.manifest.seed;
        try {
            ensemble.members[static_cast<std::size_t>(index)] = train_single(sample.points, tc);
        } catch (const std::exception& e) {
            throw TrainingError("member " + std::to_string(index) + ": " + e.what());
        }
        ensemble.manifests[static_cast<std::size_t>(index)] = std::move(sample.manifest);
    };

    if (n_threads == 1) {
        for (int i = 0; i < cfg.n_members; ++i) train_one(i);
    } else {
        // Members are independent, so a simple strided split is enough;
        // failures travel back through the futures.
        std::vector<std::future<void>> workers;
        const int stride = std::min(n_threads, cfg.n_members);
        workers.reserve(static_cast<std::size_t>(stride));
        for (int w = 0; w < stride; ++w) {
            workers.push_back(std::async(std::launch::async, [&, w] {
                for (int i = w; i < cfg.n_members; i += stride) train_one(i);
            }));
        }
        for (auto& f : workers) f.get();
    }
    return ensemble;
}

std::vector<std::vector<double>> predict_members(const EnsembleModel& ensemble,
                                                 std::span<const double> input) {
    std::vector<std::vector<double>> preds;
    preds.reserve(ensemble.members.size());
    for (const auto& m : ensemble.members) preds.push_back(forward(m, input));
    return preds;
}

std::vector<Eigen::MatrixXd> predict_members_batch(const EnsembleModel& ensemble,
                                                   const Eigen::MatrixXd& inputs) {
    std::vector<Eigen::MatrixXd> preds;
    preds.reserve(ensemble.members.size());
    for (const auto& m : ensemble.members) preds.push_back(forward_batch(m, inputs));
    return preds;
}

void save_ensemble(const EnsembleModel& ensemble, const std::string& path) {
    ensemble.validate();
    ordered_json j;
    j["format_version"] = 1;
    j["kind"] = "ensemble";
    ordered_json jc;
    jc["n_members"] = ensemble.config.n_members;
    jc["sample_fraction"] = ensemble.config.sample_fraction;
    jc["with_replacement"] = ensemble.config.with_replacement;
    jc["strategy"] = to_string(ensemble.config.strategy);
    jc["seed"] = ensemble.config.seed;
    jc["base"] = detail::train_config_to_json(ensemble.config.base);
    j["config"] = std::move(jc);
    j["dataset_fingerprint"] = ensemble.dataset_fingerprint;
    ordered_json manifests = ordered_json::array();
    for (const auto& m : ensemble.manifests) {
        ordered_json jm;
        jm["member_index"] = m.member_index;
        jm["seed"] = m.seed;
        jm["n_points"] = m.n_points;
        if (ensemble.config.strategy == Strategy::Flamelets) {
            jm["flamelet_keys"] = m.flamelet_keys;
        } else {
            jm["point_indices"] = m.point_indices;
        }
        manifests.push_back(std::move(jm));
    }
    j["manifests"] = std::move(manifests);
    ordered_json members = ordered_json::array();
    for (const auto& m : ensemble.members) members.push_back(detail::model_to_json(m));
    j["members"] = std::move(members);
    write_file_atomic(path, j.dump());
}

EnsembleModel load_ensemble(const std::string& path) {
    const std::string text = read_file(path);
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw SerializationError("Corrupted: JSON parse error at byte " + std::to_string(e.byte) +
                                 " in '" + path + "'");
    }
    if (!j.is_object() || !j.contains("format_version")) {
        throw SerializationError("Corrupted: ensemble document has no format_version field ('" +
                                 path + "')");
    }
    const auto version = j.at("format_version").get<long>();
    if (version != 1) {
        throw SerializationError("UnsupportedVersion: ensemble format_version " +
                                 std::to_string(version) + " (this build reads version 1)");
    }
    if (j.value("kind", std::string{}) != "ensemble") {
        throw SerializationError("Corrupted: document kind is not 'ensemble' ('" + path + "')");
    }
    EnsembleModel ensemble;
    try {
        const auto& jc = j.at("config");
        ensemble.config.n_members = jc.at("n_members").get<int>();
        ensemble.config.sample_fraction = jc.at("sample_fraction").get<double>();
        ensemble.config.with_replacement = jc.at("with_replacement").get<bool>();
        ensemble.config.strategy = strategy_from_string(jc.at("strategy").get<std::string>());
        ensemble.config.seed = jc.at("seed").get<std::uint64_t>();
        ensemble.config.base = detail::train_config_from_json(jc.at("base"));
        ensemble.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
        for (const auto& jm : j.at("manifests")) {
            MemberManifest m;
            m.member_index = jm.at("member_index").get<int>();
            m.seed = jm.at("seed").get<std::uint64_t>();
            m.n_points = jm.at("n_points").get<std::size_t>();
            if (jm.contains("flamelet_keys")) {
                m.flamelet_keys = jm.at("flamelet_keys").get<std::vector<double>>();
            }
            if (jm.contains("point_indices")) {
                m.point_indices = jm.at("point_indices").get<std::vector<std::size_t>>();
            }
            ensemble.manifests.push_back(std::move(m));
        }
    } catch (const ordered_json::exception& e) {
        throw SerializationError(std::string("Corrupted: ensemble document is incomplete (") +
                                 e.what() + ") in '" + path + "'");
    }
    const auto& jmembers = j.at("members");
    for (std::size_t i = 0; i < jmembers.size(); ++i) {
        try {
            ensemble.members.push_back(detail::model_from_json(jmembers[i]));
        } catch (const SerializationError& e) {
            throw SerializationError("member " + std::to_string(i) + ": " + e.what() + " in '" +
                                     path + "'");
        }
    }
    ensemble.validate();
    return ensemble;
}

}  // namespace flamekit
