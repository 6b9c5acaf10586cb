#include "flamekit/uncertainty.hpp"

#include <cmath>
#include <string>

#include "flamekit/error.hpp"

namespace flamekit {

namespace {

std::size_t checked_width(const std::vector<std::vector<double>>& preds) {
    if (preds.empty()) throw DataError("EmptyDataset: no member predictions");
    const std::size_t width = preds.front().size();
    if (width == 0) throw DimensionError("member predictions must be non-empty vectors");
    for (const auto& p : preds) {
        if (p.size() != width) {
            throw DimensionError("member predictions disagree on output width");
        }
    }
    return width;
}

void require_two_members(std::size_t n) {
    if (n < 2) {
        throw ConsistencyError(
            "InsufficientMembers: spread statistics need at least 2 member predictions, got " +
            std::to_string(n));
    }
}

}  // namespace

std::vector<double> posterior_mean(const std::vector<std::vector<double>>& member_preds) {
    const std::size_t width = checked_width(member_preds);
    std::vector<double> mean(width, 0.0);
    for (const auto& p : member_preds) {
        for (std::size_t j = 0; j < width; ++j) mean[j] += p[j];
    }
    for (auto& v : mean) v /= static_cast<double>(member_preds.size());
    return mean;
}

std::vector<double> posterior_stddev(const std::vector<std::vector<double>>& member_preds) {
    const std::size_t width = checked_width(member_preds);
    require_two_members(member_preds.size());
    const std::vector<double> mean = posterior_mean(member_preds);
    std::vector<double> acc(width, 0.0);
    for (const auto& p : member_preds) {
        for (std::size_t j = 0; j < width; ++j) {
            const double d = p[j] - mean[j];
            acc[j] += d * d;
        }
    }
    const double denom = static_cast<double>(member_preds.size()) - 1.0;
    for (auto& v : acc) v = std::sqrt(v / denom);
    return acc;
}

PosteriorSummary confidence_interval(const std::vector<std::vector<double>>& member_preds,
                                     double multiplier) {
    if (multiplier < 0.0) throw DataError("confidence interval multiplier must be non-negative");
    PosteriorSummary s;
    s.multiplier = multiplier;
    s.n_members = static_cast<int>(member_preds.size());
    s.mean = posterior_mean(member_preds);
    s.stddev = posterior_stddev(member_preds);
    s.ci_low.resize(s.mean.size());
    s.ci_high.resize(s.mean.size());
    for (std::size_t j = 0; j < s.mean.size(); ++j) {
        s.ci_low[j] = s.mean[j] - multiplier * s.stddev[j];
        s.ci_high[j] = s.mean[j] + multiplier * s.stddev[j];
    }
    return s;
}

Eigen::MatrixXd posterior_mean(const std::vector<Eigen::MatrixXd>& member_preds) {
    if (member_preds.empty()) throw DataError("EmptyDataset: no member predictions");
    Eigen::MatrixXd mean = member_preds.front();
    for (std::size_t i = 1; i < member_preds.size(); ++i) {
        if (member_preds[i].rows() != mean.rows() || member_preds[i].cols() != mean.cols()) {
            throw DimensionError("member predictions disagree on matrix shape");
        }
        mean += member_preds[i];
    }
    return mean / static_cast<double>(member_preds.size());
}

Eigen::MatrixXd posterior_stddev(const std::vector<Eigen::MatrixXd>& member_preds) {
    require_two_members(member_preds.size());
    const Eigen::MatrixXd mean = posterior_mean(member_preds);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(mean.rows(), mean.cols());
    for (const auto& p : member_preds) {
        acc.array() += (p - mean).array().square();
    }
    return (acc / (static_cast<double>(member_preds.size()) - 1.0)).cwiseSqrt();
}

}  // namespace flamekit
