#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flamekit/dataset.hpp"
#include "flamekit/ensemble.hpp"
#include "flamekit/error.hpp"
#include "flamekit/evaluation.hpp"
#include "flamekit/network.hpp"
#include "flamekit/strategy.hpp"
#include "flamekit/uncertainty.hpp"

namespace py = pybind11;
using namespace flamekit;

namespace {

/// Encoded sample sets travel through python as an opaque handle, so the
/// exact bytes the C++ pipeline hashes and trains on are never re-derived
/// from a lossy numpy round trip.
struct EncodedSet {
    std::vector<EncodedPoint> points;
};

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

/// (n, d) numpy rows -> one-point-per-column matrix. 1-D input counts as
/// a single row.
Eigen::MatrixXd columns_from_rows(const DoubleArray& a, Eigen::Index expected_dim,
                                  const char* what) {
    py::ssize_t n = 0, d = 0;
    if (a.ndim() == 1) {
        n = 1;
        d = a.shape(0);
    } else if (a.ndim() == 2) {
        n = a.shape(0);
        d = a.shape(1);
    } else {
        throw DimensionError(std::string(what) + " must be a 1-D or 2-D array");
    }
    if (d != expected_dim) {
        throw DimensionError(std::string(what) + " has " + std::to_string(d) +
                             " columns, expected " + std::to_string(expected_dim));
    }
    Eigen::MatrixXd m(d, n);
    const double* ptr = a.data();
    for (py::ssize_t i = 0; i < n; ++i) {
        for (py::ssize_t j = 0; j < d; ++j) m(j, i) = ptr[i * d + j];
    }
    return m;
}

/// One-point-per-column matrix -> (n, k) numpy rows.
py::array_t<double> rows_from_columns(const Eigen::MatrixXd& m) {
    py::array_t<double> out({static_cast<py::ssize_t>(m.cols()),
                             static_cast<py::ssize_t>(m.rows())});
    auto r = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < r.shape(0); ++i) {
        for (py::ssize_t j = 0; j < r.shape(1); ++j) {
            r(i, j) = m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        }
    }
    return out;
}

py::array_t<double> vector_to_numpy(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

TrainConfig make_train_config(const std::vector<int>& hidden_dims, double learning_rate,
                              int batch_size, int max_epochs, int patience, double val_fraction,
                              const std::string& activation, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.hidden_dims = hidden_dims;
    cfg.learning_rate = learning_rate;
    cfg.batch_size = batch_size;
    cfg.max_epochs = max_epochs;
    cfg.patience = patience;
    cfg.val_fraction = val_fraction;
    cfg.activation = activation_from_string(activation);
    cfg.seed = seed;
    return cfg;
}

py::dict summary_to_dict(const PosteriorSummary& s) {
    py::dict d;
    d["mean"] = vector_to_numpy(s.mean);
    d["stddev"] = vector_to_numpy(s.stddev);
    d["ci_low"] = vector_to_numpy(s.ci_low);
    d["ci_high"] = vector_to_numpy(s.ci_high);
    d["multiplier"] = s.multiplier;
    d["n_members"] = s.n_members;
    return d;
}

py::dict report_to_dict(const EvaluationReport& r) {
    py::dict d;
    d["target_names"] = r.target_names;
    d["single_mae"] = vector_to_numpy(r.single_mae);
    d["ensemble_mae"] = vector_to_numpy(r.ensemble_mae);
    d["winner"] = r.winner;
    d["ensemble_wins"] = r.ensemble_wins;
    d["ensemble_mean_mse"] = vector_to_numpy(r.ensemble_mean_mse);
    d["avg_member_mse"] = vector_to_numpy(r.avg_member_mse);
    d["coverage"] = vector_to_numpy(r.coverage);
    d["mean_ci_half_width"] = vector_to_numpy(r.mean_ci_half_width);
    d["ci_multiplier"] = r.ci_multiplier;
    py::list by_flamelet;
    for (const auto& row : r.by_flamelet) {
        py::dict e;
        e["key"] = row.key;
        e["n_points"] = row.n_points;
        e["single_total"] = row.single_total;
        e["ensemble_total"] = row.ensemble_total;
        by_flamelet.append(e);
    }
    d["by_flamelet"] = by_flamelet;
    py::list by_xpos;
    for (const auto& row : r.by_xpos) {
        py::dict e;
        e["lo"] = row.lo;
        e["hi"] = row.hi;
        e["n_points"] = row.n_points;
        e["single_total"] = row.single_total;
        e["ensemble_total"] = row.ensemble_total;
        by_xpos.append(e);
    }
    d["by_xpos"] = by_xpos;
    d["strategy"] = to_string(r.strategy);
    d["n_members"] = r.n_members;
    d["fingerprint_match"] = r.fingerprint_match;
    d["n_holdout_points"] = r.n_holdout_points;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Flamelet surrogate pipeline: synthetic libraries, deep-ensemble "
              "training and uncertainty-aware evaluation.";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<SerializationError>(m, "SerializationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
    py::register_exception<ConsistencyError>(m, "ConsistencyError", PyExc_RuntimeError);

    // ---- datasets ------------------------------------------------------
    py::class_<FlameletDataset>(m, "Dataset", "A flamelet library: species table plus solutions.")
        .def_property_readonly("n_points", &FlameletDataset::n_points)
        .def_property_readonly("n_flamelets",
                               [](const FlameletDataset& d) { return d.flamelets.size(); })
        .def_property_readonly("species_names",
                               [](const FlameletDataset& d) { return d.species.names; })
        .def_property_readonly("flamelet_keys",
                               [](const FlameletDataset& d) {
                                   std::vector<double> keys;
                                   keys.reserve(d.flamelets.size());
                                   for (const auto& f : d.flamelets) keys.push_back(f.key);
                                   return vector_to_numpy(keys);
                               })
        .def("__repr__", [](const FlameletDataset& d) {
            return "<flamekit.Dataset: " + std::to_string(d.flamelets.size()) + " flamelets, " +
                   std::to_string(d.n_points()) + " points>";
        });

    m.def(
        "generate_synthetic",
        [](int n_flamelets, int grid_size, int n_species, std::uint64_t seed) {
            SyntheticConfig cfg;
            cfg.n_flamelets = n_flamelets;
            cfg.grid_size = grid_size;
            cfg.n_species = n_species;
            return generate_synthetic(cfg, seed);
        },
        py::arg("n_flamelets") = 100, py::arg("grid_size") = 299, py::arg("n_species") = 53,
        py::arg("seed") = 0, "Deterministic synthetic flamelet library with analytic truth.");

    m.def("load_csv", [](const std::string& path) { return load_csv(path); }, py::arg("path"));
    m.def("save_csv", &save_csv, py::arg("dataset"), py::arg("path"));

    // ---- encoding and splits --------------------------------------------
    py::class_<EncodedSet>(m, "EncodedSet",
                           "Encoded regression samples (inputs, targets, provenance).")
        .def("__len__", [](const EncodedSet& s) { return s.points.size(); })
        .def("inputs",
             [](const EncodedSet& s) { return rows_from_columns(pack_inputs(s.points)); },
             "Inputs as an (n, p+1) array.")
        .def("targets",
             [](const EncodedSet& s) { return rows_from_columns(pack_targets(s.points)); },
             "Targets as an (n, k+1) array, S_e last.")
        .def("flamelet_keys",
             [](const EncodedSet& s) {
                 std::vector<double> keys;
                 keys.reserve(s.points.size());
                 for (const auto& p : s.points) keys.push_back(p.flamelet_key);
                 return vector_to_numpy(keys);
             })
        .def("x_pos",
             [](const EncodedSet& s) {
                 std::vector<double> xs;
                 xs.reserve(s.points.size());
                 for (const auto& p : s.points) xs.push_back(p.x_pos);
                 return vector_to_numpy(xs);
             })
        .def("fingerprint", [](const EncodedSet& s) { return fingerprint(s.points); })
        .def("__repr__", [](const EncodedSet& s) {
            return "<flamekit.EncodedSet: " + std::to_string(s.points.size()) + " points>";
        });

    m.def(
        "encode",
        [](const FlameletDataset& ds, int p, const std::string& encoder_path) {
            const EncoderWeights w = encoder_path.empty() ? identity_encoder(ds.species, p)
                                                          : load_encoder_weights(encoder_path);
            return EncodedSet{encode(ds, w)};
        },
        py::arg("dataset"), py::arg("p") = 4, py::arg("encoder_path") = std::string(),
        "Encode a dataset with the identity encoder, or with weights from a file.");

    m.def(
        "split_holdout",
        [](const EncodedSet& s, const std::string& strategy, double fraction, std::uint64_t seed) {
            SplitResult r = split_holdout(s.points, strategy_from_string(strategy), fraction, seed);
            return py::make_tuple(EncodedSet{std::move(r.train_val)},
                                  EncodedSet{std::move(r.holdout)});
        },
        py::arg("points"), py::arg("strategy") = "flamelets", py::arg("fraction") = 0.2,
        py::arg("seed") = 0,
        "Split into (train_val, holdout); flamelet units move atomically.");

    // ---- single model ---------------------------------------------------
    py::class_<Mlp>(m, "Model", "A trained feed-forward regressor.")
        .def_property_readonly("input_dim", &Mlp::input_dim)
        .def_property_readonly("output_dim", &Mlp::output_dim)
        .def_property_readonly("n_parameters", &Mlp::n_parameters)
        .def_property_readonly("seed", [](const Mlp& m_) { return m_.seed; })
        .def_property_readonly("activation",
                               [](const Mlp& m_) { return to_string(m_.activation); })
        .def_property_readonly("epochs_run", [](const Mlp& m_) { return m_.meta.epochs_run; })
        .def_property_readonly("best_epoch", [](const Mlp& m_) { return m_.meta.best_epoch; })
        .def_property_readonly("best_val_loss",
                               [](const Mlp& m_) { return m_.meta.best_val_loss; })
        .def_property_readonly("val_history",
                               [](const Mlp& m_) { return vector_to_numpy(m_.meta.val_history); })
        .def_property_readonly("dataset_fingerprint",
                               [](const Mlp& m_) { return m_.meta.dataset_fingerprint; })
        .def(
            "predict",
            [](const Mlp& m_, const DoubleArray& inputs) -> py::object {
                const bool one = inputs.ndim() == 1;
                const Eigen::MatrixXd cols = columns_from_rows(inputs, m_.input_dim(), "inputs");
                const Eigen::MatrixXd preds = forward_batch(m_, cols);
                if (one) {
                    std::vector<double> row(static_cast<std::size_t>(preds.rows()));
                    for (Eigen::Index j = 0; j < preds.rows(); ++j) {
                        row[static_cast<std::size_t>(j)] = preds(j, 0);
                    }
                    return vector_to_numpy(row);
                }
                return rows_from_columns(preds);
            },
            py::arg("inputs"), "Predict (n, k+1) outputs for (n, p+1) inputs.")
        .def("save", [](const Mlp& m_, const std::string& path) { save_model(m_, path); },
             py::arg("path"))
        .def("__repr__", [](const Mlp& m_) {
            std::string dims;
            for (std::size_t i = 0; i < m_.layer_dims.size(); ++i) {
                dims += (i ? "x" : "") + std::to_string(m_.layer_dims[i]);
            }
            return "<flamekit.Model: " + dims + ", " + std::to_string(m_.n_parameters()) +
                   " parameters>";
        });

    m.def(
        "train_single",
        [](const EncodedSet& data, const std::vector<int>& hidden_dims, double learning_rate,
           int batch_size, int max_epochs, int patience, double val_fraction,
           const std::string& activation, std::uint64_t seed) {
            const TrainConfig cfg = make_train_config(hidden_dims, learning_rate, batch_size,
                                                      max_epochs, patience, val_fraction,
                                                      activation, seed);
            py::gil_scoped_release release;
            return train_single(data.points, cfg);
        },
        py::arg("data"), py::arg("hidden_dims") = std::vector<int>{64, 128, 64},
        py::arg("learning_rate") = 1e-3, py::arg("batch_size") = 256, py::arg("max_epochs") = 400,
        py::arg("patience") = 25, py::arg("val_fraction") = 0.1,
        py::arg("activation") = "hidden-relu", py::arg("seed") = 0,
        "Train one regressor; deterministic in the seed.");

    m.def("load_model", &load_model, py::arg("path"));

    // ---- ensemble --------------------------------------------------------
    py::class_<EnsembleModel>(m, "Ensemble", "A deep ensemble of independently bagged models.")
        .def_property_readonly("n_members", &EnsembleModel::n_members)
        .def_property_readonly("strategy",
                               [](const EnsembleModel& e) { return to_string(e.config.strategy); })
        .def_property_readonly("seed", [](const EnsembleModel& e) { return e.config.seed; })
        .def_property_readonly("dataset_fingerprint",
                               [](const EnsembleModel& e) { return e.dataset_fingerprint; })
        .def_property_readonly("member_seeds",
                               [](const EnsembleModel& e) {
                                   std::vector<std::uint64_t> seeds;
                                   for (const auto& man : e.manifests) seeds.push_back(man.seed);
                                   return seeds;
                               })
        .def_property_readonly("members",
                               [](const EnsembleModel& e) { return e.members; })
        .def(
            "predict_members",
            [](const EnsembleModel& e, const DoubleArray& inputs) {
                if (e.members.empty()) throw DataError("EmptyDataset: ensemble has no members");
                const Eigen::MatrixXd cols =
                    columns_from_rows(inputs, e.members.front().input_dim(), "inputs");
                const auto preds = predict_members_batch(e, cols);
                const auto n_m = static_cast<py::ssize_t>(preds.size());
                const auto n = static_cast<py::ssize_t>(cols.cols());
                const auto k = static_cast<py::ssize_t>(preds.front().rows());
                py::array_t<double> out({n_m, n, k});
                auto r = out.mutable_unchecked<3>();
                for (py::ssize_t mi = 0; mi < n_m; ++mi) {
                    for (py::ssize_t i = 0; i < n; ++i) {
                        for (py::ssize_t j = 0; j < k; ++j) {
                            r(mi, i, j) = preds[static_cast<std::size_t>(mi)](
                                static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                        }
                    }
                }
                return out;
            },
            py::arg("inputs"), "Per-member predictions as an (m, n, k+1) array.")
        .def(
            "posterior",
            [](const EnsembleModel& e, const DoubleArray& inputs, double multiplier) {
                if (e.members.empty()) throw DataError("EmptyDataset: ensemble has no members");
                const Eigen::MatrixXd cols =
                    columns_from_rows(inputs, e.members.front().input_dim(), "inputs");
                const auto preds = predict_members_batch(e, cols);
                const Eigen::MatrixXd mean = posterior_mean(preds);
                const Eigen::MatrixXd stddev = posterior_stddev(preds);
                py::dict d;
                d["mean"] = rows_from_columns(mean);
                d["stddev"] = rows_from_columns(stddev);
                d["ci_low"] = rows_from_columns(mean - multiplier * stddev);
                d["ci_high"] = rows_from_columns(mean + multiplier * stddev);
                d["multiplier"] = multiplier;
                d["n_members"] = e.n_members();
                return d;
            },
            py::arg("inputs"), py::arg("multiplier") = 1.96,
            "Posterior mean, spread and confidence band over the members.")
        .def("save",
             [](const EnsembleModel& e, const std::string& path) { save_ensemble(e, path); },
             py::arg("path"))
        .def("__repr__", [](const EnsembleModel& e) {
            return "<flamekit.Ensemble: " + std::to_string(e.n_members()) + " members, " +
                   to_string(e.config.strategy) + " units>";
        });

    m.def(
        "train_ensemble",
        [](const EncodedSet& data, int n_members, double sample_fraction, bool with_replacement,
           const std::string& strategy, std::uint64_t seed, int threads,
           const std::vector<int>& hidden_dims, double learning_rate, int batch_size,
           int max_epochs, int patience, double val_fraction, const std::string& activation) {
            EnsembleConfig cfg;
            cfg.n_members = n_members;
            cfg.sample_fraction = sample_fraction;
            cfg.with_replacement = with_replacement;
            cfg.strategy = strategy_from_string(strategy);
            cfg.base = make_train_config(hidden_dims, learning_rate, batch_size, max_epochs,
                                         patience, val_fraction, activation, seed);
            cfg.seed = seed;
            py::gil_scoped_release release;
            return train_ensemble(data.points, cfg, threads);
        },
        py::arg("data"), py::arg("n_members") = 8, py::arg("sample_fraction") = 0.8,
        py::arg("with_replacement") = false, py::arg("strategy") = "flamelets",
        py::arg("seed") = 0, py::arg("threads") = 1,
        py::arg("hidden_dims") = std::vector<int>{64, 128, 64}, py::arg("learning_rate") = 1e-3,
        py::arg("batch_size") = 256, py::arg("max_epochs") = 400, py::arg("patience") = 25,
        py::arg("val_fraction") = 0.1, py::arg("activation") = "hidden-relu",
        "Train a bagged deep ensemble; member i is seeded by (seed, i) alone.");

    m.def("load_ensemble", &load_ensemble, py::arg("path"));
    m.def("member_seed", &member_seed, py::arg("ensemble_seed"), py::arg("index"),
          "The reproducible training seed of one ensemble member.");

    // ---- posterior statistics over explicit member predictions -----------
    m.def(
        "posterior_mean",
        [](const std::vector<std::vector<double>>& preds) {
            return vector_to_numpy(posterior_mean(preds));
        },
        py::arg("member_predictions"));
    m.def(
        "posterior_stddev",
        [](const std::vector<std::vector<double>>& preds) {
            return vector_to_numpy(posterior_stddev(preds));
        },
        py::arg("member_predictions"), "Bessel-corrected spread; needs >= 2 members.");
    m.def(
        "confidence_interval",
        [](const std::vector<std::vector<double>>& preds, double multiplier) {
            return summary_to_dict(confidence_interval(preds, multiplier));
        },
        py::arg("member_predictions"), py::arg("multiplier") = 1.96);

    // ---- evaluation -------------------------------------------------------
    m.def(
        "compare_models",
        [](const Mlp& single, const EnsembleModel& ensemble, const EncodedSet& holdout,
           double ci_multiplier) {
            return report_to_dict(compare_models(single, ensemble, holdout.points, ci_multiplier));
        },
        py::arg("single"), py::arg("ensemble"), py::arg("holdout"),
        py::arg("ci_multiplier") = 1.96,
        "Single-vs-ensemble battery; self-checks partition and Jensen identities.");

    m.def(
        "ablation_study",
        [](const EncodedSet& train_val, const EncodedSet& holdout, int n_min, int n_max,
           double sample_fraction, bool with_replacement, const std::string& strategy,
           std::uint64_t seed, int threads, const std::vector<int>& hidden_dims,
           double learning_rate, int batch_size, int max_epochs, int patience,
           double val_fraction, const std::string& activation) {
            EnsembleConfig base;
            base.sample_fraction = sample_fraction;
            base.with_replacement = with_replacement;
            base.strategy = strategy_from_string(strategy);
            base.base = make_train_config(hidden_dims, learning_rate, batch_size, max_epochs,
                                          patience, val_fraction, activation, seed);
            base.seed = seed;
            AblationResult result;
            {
                py::gil_scoped_release release;
                result = ablation_study(train_val.points, holdout.points, base, n_min, n_max,
                                        threads);
            }
            py::dict d;
            d["target_names"] = result.target_names;
            py::list rows;
            for (const auto& row : result.rows) {
                py::dict e;
                e["n_members"] = row.n_members;
                e["mae"] = vector_to_numpy(row.mae);
                e["n_targets_beyond_5pct"] = row.n_targets_beyond_5pct;
                rows.append(e);
            }
            d["rows"] = rows;
            d["chosen_n"] = result.chosen_n;
            return d;
        },
        py::arg("train_val"), py::arg("holdout"), py::arg("n_min") = 2, py::arg("n_max") = 12,
        py::arg("sample_fraction") = 0.8, py::arg("with_replacement") = false,
        py::arg("strategy") = "flamelets", py::arg("seed") = 0, py::arg("threads") = 1,
        py::arg("hidden_dims") = std::vector<int>{64, 128, 64}, py::arg("learning_rate") = 1e-3,
        py::arg("batch_size") = 256, py::arg("max_epochs") = 400, py::arg("patience") = 25,
        py::arg("val_fraction") = 0.1, py::arg("activation") = "hidden-relu",
        "Holdout MAE for every ensemble size in [n_min, n_max], plus the chosen N.");
}
