#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "flamekit/error.hpp"
#include "flamekit/uncertainty.hpp"

using namespace flamekit;

using Preds = std::vector<std::vector<double>>;

// Hand oracle for the two-member case {1, 3}:
//   mean = (1 + 3) / 2                       = 2
//   var  = ((1-2)^2 + (3-2)^2) / (2 - 1)     = 2
//   std  = sqrt(2)                           = 1.4142135623730951
//   CI   = 2 -/+ 1.96 * sqrt(2)              = (-0.7718585822512664,
//                                                4.7718585822512664)
TEST_CASE("two-member posterior matches hand-computed values to 1e-12") {
    const Preds members{{1.0}, {3.0}};
    const std::vector<double> mean = posterior_mean(members);
    const std::vector<double> stddev = posterior_stddev(members);
    const PosteriorSummary s = confidence_interval(members, 1.96);

    REQUIRE(mean.size() == 1);
    CHECK(mean[0] == 2.0);
    CHECK(std::abs(stddev[0] - std::sqrt(2.0)) <= 1e-12);
    CHECK(std::abs(s.ci_low[0] - (-0.7718585822512664)) <= 1e-12);
    CHECK(std::abs(s.ci_high[0] - 4.7718585822512664) <= 1e-12);
    CHECK(s.mean == mean);
    CHECK(s.stddev == stddev);
    CHECK(s.multiplier == 1.96);
    CHECK(s.n_members == 2);
}

TEST_CASE("posterior statistics on a four-member sample") {
    // mean = (0.5 + 1.5 + 2.5 + 4.5) / 4 = 2.25
    // var  = (1.75^2 + 0.75^2 + 0.25^2 + 2.25^2) / 3 = 8.75 / 3
    const Preds members{{0.5}, {1.5}, {2.5}, {4.5}};
    CHECK(posterior_mean(members)[0] == doctest::Approx(2.25).epsilon(1e-15));
    CHECK(posterior_stddev(members)[0] ==
          doctest::Approx(std::sqrt(8.75 / 3.0)).epsilon(1e-15));
}

TEST_CASE("statistics are computed per output component") {
    // Component 0: {1, 3}; component 1: {10, 30}; component 2: {-2, -2}.
    const Preds members{{1.0, 10.0, -2.0}, {3.0, 30.0, -2.0}};
    const std::vector<double> mean = posterior_mean(members);
    const std::vector<double> stddev = posterior_stddev(members);
    REQUIRE(mean.size() == 3);
    CHECK(mean[0] == 2.0);
    CHECK(mean[1] == 20.0);
    CHECK(mean[2] == -2.0);
    CHECK(stddev[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(stddev[1] == doctest::Approx(std::sqrt(200.0)).epsilon(1e-15));
    CHECK(stddev[2] == 0.0);
}

TEST_CASE("confidence interval is symmetric around the mean") {
    const Preds members{{-3.0}, {0.25}, {7.5}, {2.0}, {-1.0}};
    const PosteriorSummary s = confidence_interval(members, 1.96);
    CHECK(s.ci_high[0] - s.mean[0] == doctest::Approx(s.mean[0] - s.ci_low[0]).epsilon(1e-12));
    CHECK(s.ci_high[0] - s.ci_low[0] ==
          doctest::Approx(2.0 * 1.96 * posterior_stddev(members)[0]).epsilon(1e-12));
}

TEST_CASE("constant member predictions collapse to zero spread") {
    const Preds members{{4.25}, {4.25}, {4.25}};
    CHECK(posterior_stddev(members)[0] == 0.0);
    const PosteriorSummary s = confidence_interval(members, 1.96);
    CHECK(s.ci_low[0] == s.ci_high[0]);
    CHECK(s.ci_low[0] == 4.25);
}

TEST_CASE("spread statistics require at least two members") {
    const Preds one{{2.0}};
    CHECK(posterior_mean(one)[0] == 2.0);  // mean is fine with one member
    CHECK_THROWS_AS(posterior_stddev(one), ConsistencyError);
    CHECK_THROWS_AS(confidence_interval(one, 1.96), ConsistencyError);
    CHECK_THROWS_WITH_AS(posterior_stddev(one), doctest::Contains("InsufficientMembers"),
                         ConsistencyError);
}

TEST_CASE("empty member list and ragged widths are rejected") {
    CHECK_THROWS_AS(posterior_mean(Preds{}), DataError);
    CHECK_THROWS_AS(posterior_mean(Preds{{1.0, 2.0}, {1.0}}), DimensionError);
    CHECK_THROWS_AS(posterior_stddev(Preds{{1.0}, {1.0, 2.0}}), DimensionError);
}

TEST_CASE("negative interval multiplier is rejected") {
    const Preds members{{1.0}, {3.0}};
    CHECK_THROWS_AS(confidence_interval(members, -1.0), DataError);
    // multiplier 0 degenerates to the mean and is allowed
    const PosteriorSummary s = confidence_interval(members, 0.0);
    CHECK(s.ci_low[0] == s.ci_high[0]);
    CHECK(s.ci_low[0] == 2.0);
}

TEST_CASE("matrix overloads agree with the vector path entrywise") {
    Eigen::MatrixXd a(2, 4), b(2, 4), c(2, 4);
    a << 1, 2, 3, 4, -1, -2, -3, -4;
    b << 2, 4, 6, 8, 0, 1, 0, 1;
    c << 0, 0, 0, 0, 5, 5, 5, 5;
    const std::vector<Eigen::MatrixXd> members{a, b, c};

    const Eigen::MatrixXd mean = posterior_mean(members);
    const Eigen::MatrixXd stddev = posterior_stddev(members);
    REQUIRE(mean.rows() == 2);
    REQUIRE(mean.cols() == 4);
    for (int r = 0; r < 2; ++r) {
        for (int col = 0; col < 4; ++col) {
            const Preds sample{{a(r, col)}, {b(r, col)}, {c(r, col)}};
            CHECK(mean(r, col) == doctest::Approx(posterior_mean(sample)[0]).epsilon(1e-15));
            CHECK(stddev(r, col) ==
                  doctest::Approx(posterior_stddev(sample)[0]).epsilon(1e-15));
        }
    }
}

TEST_CASE("matrix overloads reject mismatched member shapes") {
    const std::vector<Eigen::MatrixXd> members{Eigen::MatrixXd::Zero(2, 3),
                                               Eigen::MatrixXd::Zero(3, 2)};
    CHECK_THROWS_AS(posterior_mean(members), DimensionError);
}

TEST_CASE("matrix spread requires two members as well") {
    const std::vector<Eigen::MatrixXd> members{Eigen::MatrixXd::Zero(2, 2)};
    CHECK_THROWS_AS(posterior_stddev(members), ConsistencyError);
}
