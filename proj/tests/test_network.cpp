#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flamekit/dataset.hpp"
#include "flamekit/error.hpp"
#include "flamekit/fsio.hpp"
#include "flamekit/network.hpp"
#include "flamekit/rng.hpp"

using namespace flamekit;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    const fs::path dir = fs::temp_directory_path() / "flamekit_test_network";
    fs::create_directories(dir);
    return dir;
}

std::vector<EncodedPoint> random_points(int input_dim, int output_dim, int n,
                                        std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<EncodedPoint> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) {
        p.input.resize(static_cast<std::size_t>(input_dim));
        p.targets.resize(static_cast<std::size_t>(output_dim));
        for (auto& v : p.input) v = rng.uniform(-1.0, 1.0);
        for (auto& v : p.targets) v = rng.uniform(-1.0, 1.0);
        p.flamelet_key = 1.0;
        p.x_pos = rng.uniform(0.0, 1.0);
    }
    return pts;
}

// Plain-loop reimplementation of the forward pass, used as the oracle:
// normalize, per-layer affine + activation, denormalize. No Eigen math.
std::vector<double> forward_oracle(const Mlp& m, const std::vector<double>& input) {
    std::vector<double> a(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        a[i] = (input[i] - m.norm.input_mean(static_cast<Eigen::Index>(i))) /
               m.norm.input_std(static_cast<Eigen::Index>(i));
    }
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        const auto& w = m.weights[l];
        const auto& b = m.biases[l];
        std::vector<double> next(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            double acc = b(r);
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                acc += w(r, c) * a[static_cast<std::size_t>(c)];
            }
            next[static_cast<std::size_t>(r)] = acc;
        }
        const bool last = l + 1 == m.weights.size();
        const bool relu_here =
            m.activation == Activation::HiddenRelu ? !last : last;
        if (relu_here) {
            for (auto& v : next) v = v > 0.0 ? v : 0.0;
        }
        a = std::move(next);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = a[i] * m.norm.target_std(static_cast<Eigen::Index>(i)) +
               m.norm.target_mean(static_cast<Eigen::Index>(i));
    }
    return a;
}

}  // namespace

TEST_CASE("make_mlp: He-uniform bounds, zero biases, seed determinism") {
    const std::vector<int> dims{5, 16, 8};
    const Mlp a = make_mlp(dims, Activation::HiddenRelu, 42);
    const Mlp b = make_mlp(dims, Activation::HiddenRelu, 42);
    const Mlp c = make_mlp(dims, Activation::HiddenRelu, 43);

    REQUIRE(a.weights.size() == 2);
    CHECK(a.weights[0].rows() == 16);
    CHECK(a.weights[0].cols() == 5);
    CHECK(a.weights[1].rows() == 8);
    CHECK(a.weights[1].cols() == 16);
    CHECK(a.n_parameters() == 5 * 16 + 16 + 16 * 8 + 8);

    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(a.weights[l].cols()));
        CHECK(a.weights[l].cwiseAbs().maxCoeff() <= bound);
        CHECK(a.biases[l].cwiseAbs().maxCoeff() == 0.0);
        // same seed, bit-identical
        CHECK((a.weights[l].array() == b.weights[l].array()).all());
    }
    // different seed differs
    CHECK((a.weights[0].array() != c.weights[0].array()).any());
}

TEST_CASE("fit_norm_stats: hand-computed mean and population std") {
    std::vector<EncodedPoint> pts(2);
    pts[0].input = {0.0, 2.0};
    pts[1].input = {2.0, 4.0};
    pts[0].targets = {1.0, 1.0};
    pts[1].targets = {3.0, 5.0};
    const NormStats s = fit_norm_stats(pts);
    // means {1,3}; population std {1,1}; target means {2,3}, stds {1,2}
    CHECK(s.input_mean(0) == 1.0);
    CHECK(s.input_mean(1) == 3.0);
    CHECK(s.input_std(0) == 1.0);
    CHECK(s.input_std(1) == 1.0);
    CHECK(s.target_mean(0) == 2.0);
    CHECK(s.target_mean(1) == 3.0);
    CHECK(s.target_std(0) == 1.0);
    CHECK(s.target_std(1) == 2.0);
}

TEST_CASE("fit_norm_stats floors a constant column's std at 1e-12") {
    std::vector<EncodedPoint> pts(3);
    for (auto& p : pts) {
        p.input = {7.5};
        p.targets = {-4.0};
    }
    const NormStats s = fit_norm_stats(pts);
    CHECK(s.input_std(0) == 1e-12);
    CHECK(s.target_std(0) == 1e-12);
    CHECK(s.input_mean(0) == 7.5);
}

TEST_CASE("forward matches a plain-loop oracle on random models") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Mlp m = make_mlp({3, 6, 4, 2}, Activation::HiddenRelu, seed);
        // Non-trivial normalization to exercise both ends.
        m.norm.input_mean << 0.5, -1.0, 2.0;
        m.norm.input_std << 2.0, 0.5, 1.5;
        m.norm.target_mean << 10.0, -3.0;
        m.norm.target_std << 4.0, 0.25;

        SplitMix64 rng(seed * 977);
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<double> x{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                                  rng.uniform(-2.0, 2.0)};
            const std::vector<double> got = forward(m, x);
            const std::vector<double> want = forward_oracle(m, x);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("activation placement differs between the two modes") {
    // Same weights in both modes: hidden-relu leaves the (affine) output
    // free to go negative; paper-literal clips the output at 0 instead.
    Mlp hidden = make_mlp({2, 3, 2}, Activation::HiddenRelu, 9);
    Mlp literal = hidden;
    literal.activation = Activation::PaperLiteral;

    const std::vector<double> x{0.3, -0.8};
    const std::vector<double> yh = forward(hidden, x);
    const std::vector<double> yl = forward(literal, x);
    for (double v : yl) CHECK(v >= 0.0);  // output ReLU clips
    CHECK(forward_oracle(hidden, x)[0] == doctest::Approx(yh[0]).epsilon(1e-12));
    CHECK(forward_oracle(literal, x)[0] == doctest::Approx(yl[0]).epsilon(1e-12));
}

TEST_CASE("forward_batch agrees with per-point forward") {
    const Mlp m = make_mlp({4, 8, 3}, Activation::HiddenRelu, 17);
    const std::vector<EncodedPoint> pts = random_points(4, 3, 7, 31);
    Eigen::MatrixXd inputs(4, 7);
    for (int c = 0; c < 7; ++c) {
        for (int r = 0; r < 4; ++r) {
            inputs(r, c) = pts[static_cast<std::size_t>(c)].input[static_cast<std::size_t>(r)];
        }
    }
    const Eigen::MatrixXd batch = forward_batch(m, inputs);
    REQUIRE(batch.rows() == 3);
    REQUIRE(batch.cols() == 7);
    for (int c = 0; c < 7; ++c) {
        const std::vector<double> one = forward(m, pts[static_cast<std::size_t>(c)].input);
        for (int r = 0; r < 3; ++r) {
            CHECK(batch(r, c) == doctest::Approx(one[static_cast<std::size_t>(r)])
                                     .epsilon(1e-12));
        }
    }
}

TEST_CASE("loss_mse: hand values and dimension guard") {
    const std::vector<double> pred{1.0, 2.0};
    const std::vector<double> target{0.0, 0.0};
    CHECK(loss_mse(pred, target) == 2.5);  // (1 + 4) / 2
    CHECK(loss_mse(target, target) == 0.0);
    CHECK_THROWS_AS(loss_mse(pred, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("backward gradients match independent central differences") {
    // Oracle: perturb every parameter by +/-h directly and difference
    // batch_loss; compare against backward()'s analytic gradients.
    for (auto activation : {Activation::HiddenRelu, Activation::PaperLiteral}) {
        Mlp m = make_mlp({3, 5, 2}, activation, 123);
        const std::vector<EncodedPoint> batch = random_points(3, 2, 6, 321);
        const BackwardResult res = backward(m, batch);
        CHECK(res.loss == doctest::Approx(batch_loss(m, batch)).epsilon(1e-12));

        const double h = 1e-5;
        double max_rel = 0.0;
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r) {
                for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c) {
                    Mlp probe = m;
                    probe.weights[l](r, c) += h;
                    const double up = batch_loss(probe, batch);
                    probe.weights[l](r, c) -= 2.0 * h;
                    const double down = batch_loss(probe, batch);
                    const double numeric = (up - down) / (2.0 * h);
                    const double analytic = res.grads.weights[l](r, c);
                    const double denom =
                        std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
                    max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
                }
            }
            for (Eigen::Index r = 0; r < m.biases[l].size(); ++r) {
                Mlp probe = m;
                probe.biases[l](r) += h;
                const double up = batch_loss(probe, batch);
                probe.biases[l](r) -= 2.0 * h;
                const double down = batch_loss(probe, batch);
                const double numeric = (up - down) / (2.0 * h);
                const double analytic = res.grads.biases[l](r);
                const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
                max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
            }
        }
        CHECK(max_rel <= 1e-4);
    }
}

TEST_CASE("gradient_check reports the same verdict as the oracle") {
    const Mlp m = make_mlp({4, 6, 3}, Activation::HiddenRelu, 77);
    const std::vector<EncodedPoint> batch = random_points(4, 3, 8, 770);
    const GradCheckReport rep = gradient_check(m, batch, 1e-5, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_error <= 1e-4);
    CHECK(rep.h == 1e-5);
    CHECK(rep.tol == 1e-4);
    CHECK(rep.n_parameters == m.n_parameters());
}

TEST_CASE("adam_step: hand-computed two-step trajectory, constant gradient") {
    // With g = 1 everywhere, bias correction makes each update exactly
    // lr / (1 + eps) for every step.
    Mlp m = make_mlp({1, 1}, Activation::HiddenRelu, 3);
    const double w0 = m.weights[0](0, 0);
    AdamState st = AdamState::zeros_like(m);
    Gradients g;
    g.weights = {Eigen::MatrixXd::Ones(1, 1)};
    g.biases = {Eigen::VectorXd::Ones(1)};

    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double step_size = lr / (1.0 + eps);

    adam_step(m, g, st, 1, lr, b1, b2, eps);
    CHECK(st.step == 1);
    CHECK(m.weights[0](0, 0) == doctest::Approx(w0 - step_size).epsilon(1e-14));
    CHECK(m.biases[0](0) == doctest::Approx(-step_size).epsilon(1e-14));

    adam_step(m, g, st, 2, lr, b1, b2, eps);
    CHECK(st.step == 2);
    CHECK(m.weights[0](0, 0) == doctest::Approx(w0 - 2.0 * step_size).epsilon(1e-13));

    // Step counter is strict: t must equal state.step + 1.
    CHECK_THROWS_AS(adam_step(m, g, st, 2, lr, b1, b2, eps), ConsistencyError);
    CHECK_THROWS_AS(adam_step(m, g, st, 4, lr, b1, b2, eps), ConsistencyError);
}

TEST_CASE("train_single: deterministic, meta populated, loss drops") {
    // Easy smooth task: y = 2*x0 + x1.
    SplitMix64 rng(2024);
    std::vector<EncodedPoint> data(120);
    for (auto& p : data) {
        const double x0 = rng.uniform(-1.0, 1.0);
        const double x1 = rng.uniform(-1.0, 1.0);
        p.input = {x0, x1};
        p.targets = {2.0 * x0 + x1};
        p.flamelet_key = 1.0;
        p.x_pos = 0.5;
    }
    TrainConfig cfg;
    cfg.hidden_dims = {8};
    cfg.batch_size = 16;
    cfg.max_epochs = 60;
    cfg.patience = 60;
    cfg.learning_rate = 5e-3;
    cfg.seed = 11;

    const Mlp a = train_single(data, cfg);
    const Mlp b = train_single(data, cfg);
    CHECK(a.meta.epochs_run >= 1);
    CHECK(a.meta.best_epoch >= 1);
    CHECK(a.meta.best_epoch <= a.meta.epochs_run);
    CHECK(a.meta.val_history.size() == static_cast<std::size_t>(a.meta.epochs_run));
    CHECK(a.meta.best_val_loss ==
          *std::min_element(a.meta.val_history.begin(), a.meta.val_history.end()));
    CHECK(a.meta.best_val_loss < a.meta.val_history.front());
    CHECK(!a.meta.dataset_fingerprint.empty());

    // Bit-exact reproducibility across runs.
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        CHECK((a.weights[l].array() == b.weights[l].array()).all());
        CHECK((a.biases[l].array() == b.biases[l].array()).all());
    }

    TrainConfig other = cfg;
    other.seed = 12;
    const Mlp c = train_single(data, other);
    CHECK((a.weights[0].array() != c.weights[0].array()).any());

    // The fit is actually good on this trivial task: truth at the probe is 0.
    const std::vector<double> probe{0.25, -0.5};
    CHECK(std::abs(forward(a, probe)[0]) < 0.2);
}

TEST_CASE("train_single: early stopping halts before max_epochs on a flat task") {
    // Constant target: the first epochs already reach the floor, so the
    // patience counter must end training well before max_epochs.
    SplitMix64 rng(99);
    std::vector<EncodedPoint> data(80);
    for (auto& p : data) {
        p.input = {rng.uniform(-1.0, 1.0)};
        p.targets = {3.0};
        p.flamelet_key = 1.0;
        p.x_pos = 0.1;
    }
    TrainConfig cfg;
    cfg.hidden_dims = {4};
    cfg.batch_size = 8;
    cfg.max_epochs = 400;
    cfg.patience = 5;
    cfg.seed = 4;
    const Mlp m = train_single(data, cfg);
    CHECK(m.meta.epochs_run < cfg.max_epochs);
    CHECK(m.meta.epochs_run >= m.meta.best_epoch);
}

TEST_CASE("train_single rejects degenerate configurations") {
    std::vector<EncodedPoint> none;
    TrainConfig cfg;
    cfg.hidden_dims = {4};
    CHECK_THROWS_WITH_AS(train_single(none, cfg), doctest::Contains("EmptyDataset"), DataError);

    std::vector<EncodedPoint> two = random_points(2, 1, 2, 8);
    TrainConfig starve;
    starve.hidden_dims = {4};
    starve.val_fraction = 0.999;  // val split swallows everything
    CHECK_THROWS_AS(train_single(two, starve), TrainingError);

    std::vector<EncodedPoint> few = random_points(2, 1, 20, 9);
    TrainConfig big;
    big.hidden_dims = {4};
    big.batch_size = 512;  // larger than the training portion
    CHECK_THROWS_WITH_AS(train_single(few, big), doctest::Contains("batch"), TrainingError);

    TrainConfig bad;
    bad.hidden_dims = {0};
    CHECK_THROWS_AS(bad.validate(), DimensionError);
    TrainConfig bad2;
    bad2.val_fraction = 1.5;
    CHECK_THROWS_AS(bad2.validate(), TrainingError);
}

TEST_CASE("training diverges loudly rather than silently") {
    std::vector<EncodedPoint> data = random_points(2, 2, 64, 5150);
    TrainConfig cfg;
    cfg.hidden_dims = {8};
    cfg.learning_rate = 1e155;  // guaranteed overflow
    cfg.batch_size = 16;
    cfg.max_epochs = 10;
    cfg.seed = 2;
    CHECK_THROWS_WITH_AS(train_single(data, cfg), doctest::Contains("non-finite"),
                         TrainingError);
}

TEST_CASE("model serialization round trips bit-exactly") {
    std::vector<EncodedPoint> data = random_points(3, 2, 90, 2718);
    TrainConfig cfg;
    cfg.hidden_dims = {6, 4};
    cfg.batch_size = 16;
    cfg.max_epochs = 8;
    cfg.seed = 6;
    const Mlp m = train_single(data, cfg);

    const fs::path path = test_dir() / "round_trip.model";
    save_model(m, path.string());
    const Mlp loaded = load_model(path.string());

    // Same document when re-serialized…
    CHECK(model_to_json_string(m) == model_to_json_string(loaded));
    const fs::path path2 = test_dir() / "round_trip2.model";
    save_model(loaded, path2.string());
    CHECK(read_file(path.string()) == read_file(path2.string()));

    // …and bit-identical predictions.
    const std::vector<EncodedPoint> probes = random_points(3, 2, 5, 999);
    for (const auto& p : probes) {
        const auto a = forward(m, p.input);
        const auto b = forward(loaded, p.input);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }

    // Meta and config survive.
    CHECK(loaded.meta.epochs_run == m.meta.epochs_run);
    CHECK(loaded.meta.best_epoch == m.meta.best_epoch);
    CHECK(loaded.meta.best_val_loss == m.meta.best_val_loss);
    CHECK(loaded.meta.dataset_fingerprint == m.meta.dataset_fingerprint);
    CHECK(loaded.config.hidden_dims == m.config.hidden_dims);
    CHECK(loaded.seed == m.seed);
}

TEST_CASE("loading rejects corrupted and unsupported files") {
    const fs::path dir = test_dir();

    const fs::path garbage = dir / "garbage.model";
    write_file_atomic(garbage.string(), "{definitely not json");
    CHECK_THROWS_WITH_AS(load_model(garbage.string()),
                         doctest::Contains("Corrupted: JSON parse error at byte"),
                         SerializationError);

    // A well-formed document with the wrong version number.
    const Mlp m = make_mlp({2, 3, 1}, Activation::HiddenRelu, 1);
    std::string doc = model_to_json_string(m);
    const std::string needle = "\"format_version\":1";
    const auto pos = doc.find(needle);
    REQUIRE(pos != std::string::npos);
    doc.replace(pos, needle.size(), "\"format_version\":2");
    const fs::path versioned = dir / "versioned.model";
    write_file_atomic(versioned.string(), doc);
    CHECK_THROWS_WITH_AS(load_model(versioned.string()),
                         doctest::Contains("UnsupportedVersion"), SerializationError);
    CHECK_THROWS_WITH_AS(load_model(versioned.string()),
                         doctest::Contains("this build reads version 1"), SerializationError);

    // Wrong kind token.
    std::string wrong_kind = model_to_json_string(m);
    const std::string kind_needle = "\"kind\":\"mlp\"";
    const auto kpos = wrong_kind.find(kind_needle);
    REQUIRE(kpos != std::string::npos);
    wrong_kind.replace(kpos, kind_needle.size(), "\"kind\":\"zzz\"");
    const fs::path wrong = dir / "wrong_kind.model";
    write_file_atomic(wrong.string(), wrong_kind);
    CHECK_THROWS_AS(load_model(wrong.string()), SerializationError);

    // Missing file is an I/O failure, not a parse failure.
    CHECK_THROWS_AS(load_model((dir / "no_such.model").string()), IoError);
}

TEST_CASE("activation names round trip") {
    CHECK(to_string(Activation::HiddenRelu) == "hidden-relu");
    CHECK(to_string(Activation::PaperLiteral) == "paper-literal");
    CHECK(activation_from_string("hidden-relu") == Activation::HiddenRelu);
    CHECK(activation_from_string("paper-literal") == Activation::PaperLiteral);
    CHECK_THROWS_AS(activation_from_string("tanh"), DataError);
}
