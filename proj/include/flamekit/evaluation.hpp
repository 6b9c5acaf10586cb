#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flamekit/dataset.hpp"
#include "flamekit/ensemble.hpp"
#include "flamekit/network.hpp"

namespace flamekit {

/// Report rows are ordered S_e first, then the key source terms, matching
/// the tabulated presentation. report_target_order()[row] is the
/// corresponding column in EncodedPoint::targets.
const std::vector<std::string>& report_target_names();
const std::vector<int>& report_target_order();

/// Encoded points packed one per column (inputs: (p+1) x M, targets:
/// (k+1) x M) for the batched prediction paths.
Eigen::MatrixXd pack_inputs(std::span<const EncodedPoint> points);
Eigen::MatrixXd pack_targets(std::span<const EncodedPoint> points);

/// Row-wise mean absolute error in physical units; one entry per target,
/// in target (not report) order.
std::vector<double> mae_by_target(const Eigen::MatrixXd& preds, const Eigen::MatrixXd& truth);

struct FlameletErrorRow {
    double key = 0.0;
    std::size_t n_points = 0;
    double single_total = 0.0;    // sum of |S_e error| over the flamelet
    double ensemble_total = 0.0;
};

struct XposBinRow {
    double lo = 0.0, hi = 0.0;    // [lo,hi), last bin closed
    std::size_t n_points = 0;
    double single_total = 0.0;
    double ensemble_total = 0.0;
};

/// {0, 0.11, ..., 0.99, 1.0}: nine 0.11-wide bins plus a final
/// [0.99, 1.0] bin.
const std::vector<double>& default_xpos_edges();

/// Per-flamelet totals of |S_e error| for both models, sorted by the
/// single model's total, worst first. Predictions are packed one column
/// per holdout point, matching pack_inputs order.
std::vector<FlameletErrorRow> total_abs_error_by_flamelet(std::span<const EncodedPoint> holdout,
                                                          const Eigen::MatrixXd& single_preds,
                                                          const Eigen::MatrixXd& ensemble_preds);

/// Binned totals of |S_e error| over x_pos. Bins are [lo,hi) with the
/// last bin closed; edges must rise strictly and cover [0,1] exactly.
std::vector<XposBinRow> total_abs_error_by_xpos_bins(std::span<const EncodedPoint> holdout,
                                                     const Eigen::MatrixXd& single_preds,
                                                     const Eigen::MatrixXd& ensemble_preds,
                                                     const std::vector<double>& edges =
                                                         default_xpos_edges());

struct EvaluationReport {
    std::vector<std::string> target_names;  // report order
    std::vector<double> single_mae;
    std::vector<double> ensemble_mae;
    std::vector<int> winner;                // +1 ensemble, -1 single, 0 tie
    int ensemble_wins = 0;

    // Jensen columns: the ensemble-mean MSE can never exceed the average
    // member MSE; both sides are recorded and the inequality is enforced.
    std::vector<double> ensemble_mean_mse;
    std::vector<double> avg_member_mse;

    // Fraction of holdout truths inside mean +/- multiplier*std, per
    // target. Reported, never asserted.
    std::vector<double> coverage;
    std::vector<double> mean_ci_half_width;
    double ci_multiplier = 1.96;

    std::vector<FlameletErrorRow> by_flamelet;  // descending single_total
    std::vector<XposBinRow> by_xpos;

    Strategy strategy = Strategy::Flamelets;
    int n_members = 0;
    std::uint64_t single_seed = 0;
    std::uint64_t ensemble_seed = 0;
    std::string single_fingerprint;
    std::string ensemble_fingerprint;
    bool fingerprint_match = true;
    std::size_t n_holdout_points = 0;
};

/// Full single-vs-ensemble battery on a holdout set. Self-checks the
/// partition identities (grouped totals vs global total, 1e-9 relative)
/// and the Jensen inequality; a violation of either is a ConsistencyError
/// since both are mathematical identities. A training-fingerprint
/// mismatch between the models is recorded, not thrown.
EvaluationReport compare_models(const Mlp& single, const EnsembleModel& ensemble,
                                std::span<const EncodedPoint> holdout,
                                double ci_multiplier = 1.96);

struct AblationRow {
    int n_members = 0;
    std::vector<double> mae;      // report order
    int n_targets_beyond_5pct = 0;  // filled by the selection rule
};

struct AblationResult {
    std::vector<std::string> target_names;
    std::vector<AblationRow> rows;  // one per N, ascending
    int chosen_n = 0;
};

/// Holdout MAE for every ensemble size N in [n_min, n_max]. Members are
/// seeded by (seed, member_index) alone, so the N-member ensemble is a
/// prefix of the n_max-member one; a single training pass therefore
/// yields results identical to training each N separately. chosen_n is
/// the smallest N minimizing the number of targets whose MAE exceeds
/// that target's across-N minimum by more than 5%.
AblationResult ablation_study(std::span<const EncodedPoint> train_val,
                              std::span<const EncodedPoint> holdout, const EnsembleConfig& base,
                              int n_min = 2, int n_max = 12, int n_threads = 1);

struct ProfileRow {
    double x_pos = 0.0;
    // One entry per report target, in report order.
    std::vector<double> truth, single_pred, ens_mean, ci_low, ci_high;
};

/// Per-point prediction series along one flamelet (ascending x_pos) for
/// every target: truth, single prediction, ensemble mean and CI band.
std::vector<ProfileRow> flamelet_profile(const Mlp& single, const EnsembleModel& ensemble,
                                         std::span<const EncodedPoint> points, double key,
                                         double ci_multiplier = 1.96);

/// Report CSV emitters. Byte-deterministic; floating-point cells use
/// full-precision scientific notation. `top` = 0 keeps every row.
void write_mae_report_csv(const EvaluationReport& r, const std::string& path);
void write_flamelet_report_csv(const EvaluationReport& r, const std::string& path, int top = 0);
void write_xpos_report_csv(const EvaluationReport& r, const std::string& path, int top = 0);
void write_coverage_report_csv(const EvaluationReport& r, const std::string& path);
void write_ablation_csv(const AblationResult& r, const std::string& path);
void write_profile_csv(const std::vector<ProfileRow>& rows, const std::string& path);

}  // namespace flamekit
