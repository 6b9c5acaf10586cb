#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace flamekit {

/// Component-wise statistics across N member predictions of one input.
struct PosteriorSummary {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    double multiplier = 1.96;
    int n_members = 0;
};

/// Mean across members; accepts N >= 1.
std::vector<double> posterior_mean(const std::vector<std::vector<double>>& member_preds);

/// Sample standard deviation across members (N - 1 in the denominator);
/// fewer than 2 members is an InsufficientMembers error.
std::vector<double> posterior_stddev(const std::vector<std::vector<double>>& member_preds);

/// mean +/- multiplier * stddev per component; the default multiplier
/// 1.96 gives a 95% interval under a normal approximation.
PosteriorSummary confidence_interval(const std::vector<std::vector<double>>& member_preds,
                                     double multiplier = 1.96);

/// Batched flavors over per-member (output_dim x n_inputs) matrices.
Eigen::MatrixXd posterior_mean(const std::vector<Eigen::MatrixXd>& member_preds);
Eigen::MatrixXd posterior_stddev(const std::vector<Eigen::MatrixXd>& member_preds);

}  // namespace flamekit
