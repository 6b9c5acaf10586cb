#include "flamekit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "flamekit/error.hpp"
#include "flamekit/fsio.hpp"
#include "flamekit/numfmt.hpp"
#include "flamekit/uncertainty.hpp"

namespace flamekit {

namespace {

constexpr double kPartitionRelTol = 1e-9;
constexpr double kJensenRelTol = 1e-9;

int se_target_index() { return kNumKeyTerms; }  // S_e is the last target column

// Per-flamelet and per-bin groupings cover every holdout point exactly
// once, so their totals must reproduce the global total to rounding.
void check_partition_identity(double grouped, double global, const std::string& grouping) {
    const double tol = kPartitionRelTol * std::max(1.0, std::max(std::abs(grouped), std::abs(global)));
    if (std::abs(grouped - global) > tol) {
        throw ConsistencyError("partition identity violated: " + grouping + " totals sum to " +
                               format_double_sci(grouped) + " but the global total is " +
                               format_double_sci(global));
    }
}

std::size_t bin_index(double x, const std::vector<double>& edges) {
    if (!(x >= edges.front()) || !(x <= edges.back())) {
        throw DataError("x_pos " + format_double(x) + " outside [" + format_double(edges.front()) +
                        ", " + format_double(edges.back()) + "]");
    }
    // Half-open [lo,hi) bins; the final bin also owns its upper edge.
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    const auto idx = static_cast<std::size_t>(it - edges.begin());
    if (idx == 0) return 0;                          // x == edges.front()
    if (idx >= edges.size()) return edges.size() - 2;  // x == edges.back()
    return idx - 1;
}

void validate_edges(const std::vector<double>& edges) {
    if (edges.size() < 2) throw DataError("bin edges need at least two entries");
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) throw DataError("bin edges must be strictly increasing");
    }
    if (edges.front() != 0.0 || edges.back() != 1.0) {
        throw DataError("bin edges must cover [0, 1] exactly");
    }
}

std::string winner_label(int w) { return w > 0 ? "ensemble" : (w < 0 ? "single" : "tie"); }

std::vector<double> reorder_to_report(const std::vector<double>& by_target) {
    const auto& order = report_target_order();
    std::vector<double> out(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) out[r] = by_target[static_cast<std::size_t>(order[r])];
    return out;
}

}  // namespace

const std::vector<std::string>& report_target_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        n.emplace_back("S_e");
        for (const auto& s : kKeyTermNames) n.push_back("Sdot_" + s);
        return n;
    }();
    return names;
}

const std::vector<int>& report_target_order() {
    static const std::vector<int> order = [] {
        std::vector<int> o;
        o.push_back(kNumKeyTerms);  // S_e first
        for (int t = 0; t < kNumKeyTerms; ++t) o.push_back(t);
        return o;
    }();
    return order;
}

Eigen::MatrixXd pack_inputs(std::span<const EncodedPoint> points) {
    if (points.empty()) throw DataError("EmptyDataset: no points to pack");
    const auto dim = static_cast<Eigen::Index>(points.front().input.size());
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (static_cast<Eigen::Index>(points[i].input.size()) != dim) {
            throw DimensionError("encoded points disagree on input width");
        }
        for (Eigen::Index j = 0; j < dim; ++j) {
            m(j, static_cast<Eigen::Index>(i)) = points[i].input[static_cast<std::size_t>(j)];
        }
    }
    return m;
}

Eigen::MatrixXd pack_targets(std::span<const EncodedPoint> points) {
    if (points.empty()) throw DataError("EmptyDataset: no points to pack");
    const auto dim = static_cast<Eigen::Index>(points.front().targets.size());
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (static_cast<Eigen::Index>(points[i].targets.size()) != dim) {
            throw DimensionError("encoded points disagree on target width");
        }
        for (Eigen::Index j = 0; j < dim; ++j) {
            m(j, static_cast<Eigen::Index>(i)) = points[i].targets[static_cast<std::size_t>(j)];
        }
    }
    return m;
}

std::vector<double> mae_by_target(const Eigen::MatrixXd& preds, const Eigen::MatrixXd& truth) {
    if (preds.rows() != truth.rows() || preds.cols() != truth.cols()) {
        throw DimensionError("prediction and truth matrices must share a shape");
    }
    if (preds.cols() < 1) throw DataError("EmptyDataset: MAE needs at least one sample");
    const Eigen::VectorXd mae = (preds - truth).cwiseAbs().rowwise().mean();
    return {mae.data(), mae.data() + mae.size()};
}

const std::vector<double>& default_xpos_edges() {
    static const std::vector<double> edges = {0.0,  0.11, 0.22, 0.33, 0.44, 0.55,
                                              0.66, 0.77, 0.88, 0.99, 1.0};
    return edges;
}

std::vector<FlameletErrorRow> total_abs_error_by_flamelet(std::span<const EncodedPoint> holdout,
                                                          const Eigen::MatrixXd& single_preds,
                                                          const Eigen::MatrixXd& ensemble_preds) {
    const Eigen::MatrixXd truth = pack_targets(holdout);
    if (single_preds.cols() != truth.cols() || ensemble_preds.cols() != truth.cols()) {
        throw DimensionError("predictions do not cover every holdout point");
    }
    const int se = se_target_index();
    std::map<double, FlameletErrorRow> by_key;
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        auto& row = by_key[holdout[i].flamelet_key];
        row.key = holdout[i].flamelet_key;
        row.n_points += 1;
        row.single_total += std::abs(single_preds(se, c) - truth(se, c));
        row.ensemble_total += std::abs(ensemble_preds(se, c) - truth(se, c));
    }
    std::vector<FlameletErrorRow> rows;
    rows.reserve(by_key.size());
    for (const auto& [key, row] : by_key) rows.push_back(row);
    // Tables list the worst flamelets first (by the single model); ties
    // keep ascending key order.
    std::stable_sort(rows.begin(), rows.end(),
                     [](const FlameletErrorRow& a, const FlameletErrorRow& b) {
                         return a.single_total > b.single_total;
                     });
    return rows;
}

std::vector<XposBinRow> total_abs_error_by_xpos_bins(std::span<const EncodedPoint> holdout,
                                                     const Eigen::MatrixXd& single_preds,
                                                     const Eigen::MatrixXd& ensemble_preds,
                                                     const std::vector<double>& edges) {
    validate_edges(edges);
    const Eigen::MatrixXd truth = pack_targets(holdout);
    if (single_preds.cols() != truth.cols() || ensemble_preds.cols() != truth.cols()) {
        throw DimensionError("predictions do not cover every holdout point");
    }
    const int se = se_target_index();
    std::vector<XposBinRow> bins(edges.size() - 1);
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        bins[b].lo = edges[b];
        bins[b].hi = edges[b + 1];
    }
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        auto& bin = bins[bin_index(holdout[i].x_pos, edges)];
        bin.n_points += 1;
        bin.single_total += std::abs(single_preds(se, c) - truth(se, c));
        bin.ensemble_total += std::abs(ensemble_preds(se, c) - truth(se, c));
    }
    return bins;
}

EvaluationReport compare_models(const Mlp& single, const EnsembleModel& ensemble,
                                std::span<const EncodedPoint> holdout, double ci_multiplier) {
    if (holdout.empty()) throw DataError("EmptyDataset: cannot evaluate on zero holdout points");
    if (ci_multiplier < 0.0) throw DataError("confidence interval multiplier must be non-negative");

    const Eigen::MatrixXd inputs = pack_inputs(holdout);
    const Eigen::MatrixXd truth = pack_targets(holdout);
    if (single.input_dim() != inputs.rows() || single.output_dim() != truth.rows()) {
        throw DimensionError("single model does not match the holdout encoding");
    }

    const Eigen::MatrixXd single_preds = forward_batch(single, inputs);
    const std::vector<Eigen::MatrixXd> member_preds = predict_members_batch(ensemble, inputs);
    const Eigen::MatrixXd ens_mean = posterior_mean(member_preds);
    const Eigen::MatrixXd ens_std = posterior_stddev(member_preds);

    EvaluationReport r;
    r.target_names = report_target_names();
    r.ci_multiplier = ci_multiplier;
    r.strategy = ensemble.config.strategy;
    r.n_members = ensemble.n_members();
    r.single_seed = single.seed;
    r.ensemble_seed = ensemble.config.seed;
    r.single_fingerprint = single.meta.dataset_fingerprint;
    r.ensemble_fingerprint = ensemble.dataset_fingerprint;
    r.fingerprint_match = r.single_fingerprint == r.ensemble_fingerprint;
    r.n_holdout_points = holdout.size();

    r.single_mae = reorder_to_report(mae_by_target(single_preds, truth));
    r.ensemble_mae = reorder_to_report(mae_by_target(ens_mean, truth));
    r.winner.resize(r.target_names.size(), 0);
    for (std::size_t i = 0; i < r.winner.size(); ++i) {
        if (r.ensemble_mae[i] < r.single_mae[i]) {
            r.winner[i] = 1;
            ++r.ensemble_wins;
        } else if (r.ensemble_mae[i] > r.single_mae[i]) {
            r.winner[i] = -1;
        }
    }

    // Jensen inequality per target: MSE of the mean prediction cannot
    // exceed the mean of member MSEs. Violations can only come from a
    // bug, so treat them as hard failures.
    const Eigen::VectorXd mean_mse = (ens_mean - truth).array().square().rowwise().mean();
    Eigen::VectorXd avg_mse = Eigen::VectorXd::Zero(truth.rows());
    for (const auto& p : member_preds) {
        avg_mse += ((p - truth).array().square().rowwise().mean()).matrix();
    }
    avg_mse /= static_cast<double>(member_preds.size());
    for (Eigen::Index t = 0; t < mean_mse.size(); ++t) {
        if (mean_mse(t) > avg_mse(t) * (1.0 + kJensenRelTol) + 1e-300) {
            throw ConsistencyError("ensemble-mean MSE exceeds average member MSE on target " +
                                   std::to_string(t) + " (" + format_double_sci(mean_mse(t)) +
                                   " > " + format_double_sci(avg_mse(t)) + ")");
        }
    }
    r.ensemble_mean_mse =
        reorder_to_report({mean_mse.data(), mean_mse.data() + mean_mse.size()});
    r.avg_member_mse = reorder_to_report({avg_mse.data(), avg_mse.data() + avg_mse.size()});

    // Coverage of the CI band, per target, plus its mean half width.
    const auto n_cols = truth.cols();
    std::vector<double> cover(static_cast<std::size_t>(truth.rows()), 0.0);
    std::vector<double> half_width(static_cast<std::size_t>(truth.rows()), 0.0);
    for (Eigen::Index t = 0; t < truth.rows(); ++t) {
        long inside = 0;
        for (Eigen::Index c = 0; c < n_cols; ++c) {
            const double half = ci_multiplier * ens_std(t, c);
            half_width[static_cast<std::size_t>(t)] += half;
            if (std::abs(truth(t, c) - ens_mean(t, c)) <= half) ++inside;
        }
        cover[static_cast<std::size_t>(t)] = static_cast<double>(inside) / static_cast<double>(n_cols);
        half_width[static_cast<std::size_t>(t)] /= static_cast<double>(n_cols);
    }
    r.coverage = reorder_to_report(cover);
    r.mean_ci_half_width = reorder_to_report(half_width);

    // Grouped |S_e| error totals: by flamelet key and by x_pos bin, each
    // checked against the global total.
    const int se = se_target_index();
    double single_global = 0.0, ens_global = 0.0;
    for (Eigen::Index c = 0; c < truth.cols(); ++c) {
        single_global += std::abs(single_preds(se, c) - truth(se, c));
        ens_global += std::abs(ens_mean(se, c) - truth(se, c));
    }
    r.by_flamelet = total_abs_error_by_flamelet(holdout, single_preds, ens_mean);
    r.by_xpos = total_abs_error_by_xpos_bins(holdout, single_preds, ens_mean);
    double grouped_single = 0.0, grouped_ens = 0.0;
    for (const auto& row : r.by_flamelet) {
        grouped_single += row.single_total;
        grouped_ens += row.ensemble_total;
    }
    check_partition_identity(grouped_single, single_global, "flamelet-grouped single-model");
    check_partition_identity(grouped_ens, ens_global, "flamelet-grouped ensemble");
    grouped_single = grouped_ens = 0.0;
    for (const auto& bin : r.by_xpos) {
        grouped_single += bin.single_total;
        grouped_ens += bin.ensemble_total;
    }
    check_partition_identity(grouped_single, single_global, "x_pos-binned single-model");
    check_partition_identity(grouped_ens, ens_global, "x_pos-binned ensemble");
    return r;
}

AblationResult ablation_study(std::span<const EncodedPoint> train_val,
                              std::span<const EncodedPoint> holdout, const EnsembleConfig& base,
                              int n_min, int n_max, int n_threads) {
    if (n_min < 2) throw DataError("ablation range must start at N >= 2");
    if (n_max < n_min) throw DataError("ablation range is empty (n_max < n_min)");
    if (holdout.empty()) throw DataError("EmptyDataset: ablation needs holdout points");

    EnsembleConfig cfg = base;
    cfg.n_members = n_max;
    EnsembleModel full;
    try {
        full = train_ensemble(train_val, cfg, n_threads);
    } catch (const TrainingError& e) {
        throw TrainingError("ablation sweep (N=" + std::to_string(n_min) + ".." +
                            std::to_string(n_max) + "): " + e.what());
    }

    const Eigen::MatrixXd inputs = pack_inputs(holdout);
    const Eigen::MatrixXd truth = pack_targets(holdout);
    const std::vector<Eigen::MatrixXd> member_preds = predict_members_batch(full, inputs);

    AblationResult result;
    result.target_names = report_target_names();

    // The N-member ensemble mean is the running prefix mean over members.
    Eigen::MatrixXd running = Eigen::MatrixXd::Zero(truth.rows(), truth.cols());
    for (int n = 1; n <= n_max; ++n) {
        running += member_preds[static_cast<std::size_t>(n - 1)];
        if (n < n_min) continue;
        const Eigen::MatrixXd mean = running / static_cast<double>(n);
        AblationRow row;
        row.n_members = n;
        row.mae = reorder_to_report(mae_by_target(mean, truth));
        result.rows.push_back(std::move(row));
    }

    // Selection rule: smallest N minimizing how many targets sit more
    // than 5% above that target's best MAE across the sweep.
    const std::size_t n_targets = result.target_names.size();
    std::vector<double> best(n_targets, std::numeric_limits<double>::infinity());
    for (const auto& row : result.rows) {
        for (std::size_t t = 0; t < n_targets; ++t) best[t] = std::min(best[t], row.mae[t]);
    }
    int best_count = std::numeric_limits<int>::max();
    for (auto& row : result.rows) {
        row.n_targets_beyond_5pct = 0;
        for (std::size_t t = 0; t < n_targets; ++t) {
            if (row.mae[t] > 1.05 * best[t]) ++row.n_targets_beyond_5pct;
        }
        if (row.n_targets_beyond_5pct < best_count) {
            best_count = row.n_targets_beyond_5pct;
            result.chosen_n = row.n_members;
        }
    }
    return result;
}

std::vector<ProfileRow> flamelet_profile(const Mlp& single, const EnsembleModel& ensemble,
                                         std::span<const EncodedPoint> points, double key,
                                         double ci_multiplier) {
    std::vector<EncodedPoint> selected;
    for (const auto& p : points) {
        if (p.flamelet_key == key) selected.push_back(p);
    }
    if (selected.empty()) {
        throw DataError("flamelet key " + format_double(key) + " not present in the evaluated set");
    }
    std::stable_sort(selected.begin(), selected.end(),
                     [](const EncodedPoint& a, const EncodedPoint& b) { return a.x_pos < b.x_pos; });

    const Eigen::MatrixXd inputs = pack_inputs(selected);
    const Eigen::MatrixXd truth = pack_targets(selected);
    const Eigen::MatrixXd single_preds = forward_batch(single, inputs);
    const std::vector<Eigen::MatrixXd> member_preds = predict_members_batch(ensemble, inputs);
    const Eigen::MatrixXd mean = posterior_mean(member_preds);
    const Eigen::MatrixXd stddev = posterior_stddev(member_preds);

    const auto& order = report_target_order();
    std::vector<ProfileRow> rows(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        ProfileRow& row = rows[i];
        row.x_pos = selected[i].x_pos;
        for (int t : order) {
            const auto ti = static_cast<Eigen::Index>(t);
            const double half = ci_multiplier * stddev(ti, c);
            row.truth.push_back(truth(ti, c));
            row.single_pred.push_back(single_preds(ti, c));
            row.ens_mean.push_back(mean(ti, c));
            row.ci_low.push_back(mean(ti, c) - half);
            row.ci_high.push_back(mean(ti, c) + half);
        }
    }
    return rows;
}

void write_mae_report_csv(const EvaluationReport& r, const std::string& path) {
    std::string out = "target,single_mae,ensemble_mae,winner\n";
    for (std::size_t i = 0; i < r.target_names.size(); ++i) {
        out += r.target_names[i] + ',' + format_double_sci(r.single_mae[i]) + ',' +
               format_double_sci(r.ensemble_mae[i]) + ',' + winner_label(r.winner[i]) + '\n';
    }
    write_file_atomic(path, out);
}

void write_flamelet_report_csv(const EvaluationReport& r, const std::string& path, int top) {
    std::string out = "flame_key,n_points,single_total_abs_err,ensemble_total_abs_err,winner\n";
    std::size_t n_rows = r.by_flamelet.size();
    if (top > 0) n_rows = std::min(n_rows, static_cast<std::size_t>(top));
    for (std::size_t i = 0; i < n_rows; ++i) {
        const auto& row = r.by_flamelet[i];
        const int w = row.ensemble_total < row.single_total
                          ? 1
                          : (row.ensemble_total > row.single_total ? -1 : 0);
        out += format_double_sci(row.key) + ',' + std::to_string(row.n_points) + ',' +
               format_double_sci(row.single_total) + ',' + format_double_sci(row.ensemble_total) +
               ',' + winner_label(w) + '\n';
    }
    write_file_atomic(path, out);
}

void write_xpos_report_csv(const EvaluationReport& r, const std::string& path, int top) {
    std::string out = "x_lo,x_hi,n_points,single_total_abs_err,ensemble_total_abs_err,winner\n";
    std::size_t n_rows = r.by_xpos.size();
    if (top > 0) n_rows = std::min(n_rows, static_cast<std::size_t>(top));
    for (std::size_t i = 0; i < n_rows; ++i) {
        const auto& row = r.by_xpos[i];
        const int w = row.ensemble_total < row.single_total
                          ? 1
                          : (row.ensemble_total > row.single_total ? -1 : 0);
        out += format_double_sci(row.lo) + ',' + format_double_sci(row.hi) + ',' +
               std::to_string(row.n_points) + ',' + format_double_sci(row.single_total) + ',' +
               format_double_sci(row.ensemble_total) + ',' + winner_label(w) + '\n';
    }
    write_file_atomic(path, out);
}

void write_coverage_report_csv(const EvaluationReport& r, const std::string& path) {
    std::string out = "target,fraction_within_ci,mean_ci_half_width,ci_multiplier,n_members\n";
    for (std::size_t i = 0; i < r.target_names.size(); ++i) {
        out += r.target_names[i] + ',' + format_double_sci(r.coverage[i]) + ',' +
               format_double_sci(r.mean_ci_half_width[i]) + ',' +
               format_double_sci(r.ci_multiplier) + ',' + std::to_string(r.n_members) + '\n';
    }
    write_file_atomic(path, out);
}

void write_ablation_csv(const AblationResult& r, const std::string& path) {
    std::string out = "n_members";
    for (const auto& name : r.target_names) out += ",mae_" + name;
    out += ",n_targets_beyond_5pct,chosen\n";
    for (const auto& row : r.rows) {
        out += std::to_string(row.n_members);
        for (double v : row.mae) out += ',' + format_double_sci(v);
        out += ',' + std::to_string(row.n_targets_beyond_5pct) + ',' +
               (row.n_members == r.chosen_n ? std::string("1") : std::string("0")) + '\n';
    }
    write_file_atomic(path, out);
}

void write_profile_csv(const std::vector<ProfileRow>& rows, const std::string& path) {
    const auto& names = report_target_names();
    std::string out = "x_pos";
    for (const auto& n : names) {
        out += ",truth_" + n + ",single_" + n + ",mean_" + n + ",ci_low_" + n + ",ci_high_" + n;
    }
    out += '\n';
    for (const auto& row : rows) {
        out += format_double_sci(row.x_pos);
        for (std::size_t t = 0; t < names.size(); ++t) {
            out += ',' + format_double_sci(row.truth[t]) + ',' + format_double_sci(row.single_pred[t]) +
                   ',' + format_double_sci(row.ens_mean[t]) + ',' + format_double_sci(row.ci_low[t]) +
                   ',' + format_double_sci(row.ci_high[t]);
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace flamekit
