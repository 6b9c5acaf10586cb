#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flamekit/network.hpp"
#include "flamekit/strategy.hpp"

namespace flamekit {

struct EnsembleConfig {
    int n_members = 8;
    double sample_fraction = 0.8;   // of resampling units, per member
    bool with_replacement = false;  // default: subsample without replacement
    Strategy strategy = Strategy::Flamelets;
    TrainConfig base;               // per-member settings; seed is overridden
    std::uint64_t seed = 0;

    void validate() const;
};

/// Distinct, reproducible seed for member `index` of an ensemble run.
std::uint64_t member_seed(std::uint64_t ensemble_seed, int index);

/// Record of what one member trained on. Exactly one of flamelet_keys /
/// point_indices is populated, depending on the resampling strategy;
/// entries are sorted and repeat with their sampling multiplicity.
struct MemberManifest {
    int member_index = 0;
    std::uint64_t seed = 0;
    std::vector<double> flamelet_keys;
    std::vector<std::size_t> point_indices;
    std::size_t n_points = 0;
};

struct MemberSample {
    std::vector<EncodedPoint> points;
    MemberManifest manifest;
};

/// Draws one member's training set. Resampling units are whole flamelets
/// or single points per cfg.strategy; a flamelet is always kept or
/// dropped atomically. Depends only on (cfg, data, index).
MemberSample sample_member_data(std::span<const EncodedPoint> data, const EnsembleConfig& cfg,
                                int index);

struct EnsembleModel {
    EnsembleConfig config;
    std::vector<Mlp> members;
    std::vector<MemberManifest> manifests;
    std::string dataset_fingerprint;

    int n_members() const { return static_cast<int>(members.size()); }
    void validate() const;
};

/// Trains cfg.n_members independent regressors on bagged resamples of
/// `data`. `n_threads` > 1 trains members concurrently; results are
/// identical either way because members never share random streams.
EnsembleModel train_ensemble(std::span<const EncodedPoint> data, const EnsembleConfig& cfg,
                             int n_threads = 1);

/// One denormalized prediction per member, in member order. Matches a
/// caller-side loop over forward() exactly.
std::vector<std::vector<double>> predict_members(const EnsembleModel& ensemble,
                                                 std::span<const double> input);

/// Batched flavor: one (output_dim x n_inputs) matrix per member.
std::vector<Eigen::MatrixXd> predict_members_batch(const EnsembleModel& ensemble,
                                                   const Eigen::MatrixXd& inputs);

/// Versioned JSON container embedding every member model. Round trips
/// are bit-exact; member-level problems name the member index.
void save_ensemble(const EnsembleModel& ensemble, const std::string& path);
EnsembleModel load_ensemble(const std::string& path);

}  // namespace flamekit
