#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flamekit/strategy.hpp"

namespace flamekit {

/// Number of key species whose source terms are regression targets.
inline constexpr int kNumKeyTerms = 7;

/// Fixed key-term order used everywhere: columns, targets, reports.
inline const std::array<std::string, kNumKeyTerms> kKeyTermNames = {
    "O2", "CO", "CO2", "H2O", "OH", "H2", "CH4"};

/// Species list with per-species heats of formation (energy per unit mass).
struct SpeciesTable {
    std::vector<std::string> names;
    std::vector<double> heats_of_formation;

    std::size_t size() const { return names.size(); }
    /// Index of a species name, or -1 when absent.
    int index_of(const std::string& name) const;
    void validate() const;
};

/// One grid point of a flamelet solution.
struct FlameletPoint {
    double x_pos = 0.0;   // dimensionless axial coordinate in [0,1]
    double z_mix = 0.0;   // mixture fraction in [0,1]
    std::vector<double> mass_fractions;           // length s, sums to 1
    std::array<double, kNumKeyTerms> source_terms{};  // order kKeyTermNames
    double source_energy = 0.0;
};

/// A steady flamelet solution tagged by its strain rate (the flamelet key).
struct Flamelet {
    double key = 0.0;  // strain rate, 1/s
    std::vector<FlameletPoint> points;  // sorted by x_pos, strictly increasing
    bool extinguished = false;
};

struct FlameletDataset {
    SpeciesTable species;
    std::vector<Flamelet> flamelets;

    std::size_t n_points() const;
    void validate() const;
};

/// Fixed s x p matrix mapping species mass fractions to progress variables.
struct EncoderWeights {
    std::vector<std::string> species_names;  // row order
    std::vector<std::vector<double>> w;      // s rows, p columns
    int p = 0;

    void validate() const;
};

/// One regression sample: input C = C_pv (+) Z_mix, targets = key terms + S_e.
struct EncodedPoint {
    std::vector<double> input;    // length p+1
    std::vector<double> targets;  // length kNumKeyTerms+1, S_e last
    double flamelet_key = 0.0;
    double x_pos = 0.0;
};

/// Parameters of the synthetic flamelet-library generator.
///
/// The profiles are analytic stand-ins for a chemistry solve: mass
/// fractions are smooth bumps over a mixing backbone, key source terms
/// are sums of Gaussian bumps in x_pos, and everything is damped by a
/// per-flamelet extinction factor exp(-extinction_decay*j) jittered by
/// +-extinction_jitter. Flamelets whose factor falls below
/// extinction_threshold are dropped, which with the defaults removes
/// roughly 45 of 100 flames.
struct SyntheticConfig {
    int n_flamelets = 100;
    int grid_size = 299;
    int n_species = 53;
    double base_strain = 1e-4;        // key of flamelet j is base_strain / 0.99^j
    double extinction_decay = 0.05;   // per-flamelet-index decay rate
    double extinction_jitter = 0.15;  // relative jitter on the extinction factor
    double extinction_threshold = 0.064;

    void validate() const;
};

/// Row counts observed while loading a CSV file.
struct LoadInfo {
    std::size_t rows_total = 0;
    std::size_t rows_extinguished = 0;  // excluded from the dataset
};

/// Reads the fixed-schema flamelet CSV (see README for the column list).
/// Rows flagged extinguished are excluded; `info`, when given, reports how
/// many. Points are grouped by flame_key and sorted by x_pos.
FlameletDataset load_csv(const std::string& path, LoadInfo* info = nullptr);

/// Writes the dataset in the same fixed schema. load_csv(save_csv(d))
/// reproduces every numeric field bit-exactly.
void save_csv(const FlameletDataset& dataset, const std::string& path);

/// Deterministic-in-seed synthetic flamelet library with exact analytic
/// ground truth (S_e is the dot product of the key source terms with the
/// key species' heats of formation).
FlameletDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// C_pv = Y x W per point; input = C_pv (+) z_mix; targets copied.
std::vector<EncodedPoint> encode(const FlameletDataset& dataset, const EncoderWeights& w);

struct SplitResult {
    std::vector<EncodedPoint> train_val;
    std::vector<EncodedPoint> holdout;
    /// Unit ids assigned to the holdout side: flamelet keys under
    /// Strategy::Flamelets, point indices under Strategy::Points.
    std::vector<double> holdout_keys;
    std::vector<std::uint64_t> holdout_indices;
};

/// Splits off round(fraction * units) holdout units. The unit is a whole
/// flamelet (all its points co-travel) or a single point, per strategy.
/// Unit order is shuffled by Fisher-Yates under `seed`; both sides keep
/// the original point order.
SplitResult split_holdout(const std::vector<EncodedPoint>& points, Strategy strategy,
                          double fraction, std::uint64_t seed);

/// Re-applies a persisted holdout assignment (from SplitResult ids).
SplitResult split_by_holdout_units(const std::vector<EncodedPoint>& points, Strategy strategy,
                                   const std::vector<double>& holdout_keys,
                                   const std::vector<std::uint64_t>& holdout_indices);

/// Builtin encoder: progress variable i is the mass fraction of species i
/// (the first p species columns).
EncoderWeights identity_encoder(const SpeciesTable& species, int p = 4);

/// Encoder weights file: first line "# species: a,b,c", then s rows of p
/// comma-separated values.
EncoderWeights load_encoder_weights(const std::string& path);
void save_encoder_weights(const EncoderWeights& w, const std::string& path);

/// FNV-1a over every input/target/key/x_pos byte, as a fixed-width hex
/// string. Identifies the exact encoded sample set a model was fit on.
std::string fingerprint(std::span<const EncodedPoint> points);

/// Ascending unique flamelet keys present in a sample set.
std::vector<double> unique_keys(std::span<const EncodedPoint> points);

/// Sum of key-term source rates weighted by their heats of formation.
/// The species table must contain every key species.
double source_energy_from_terms(const std::array<double, kNumKeyTerms>& terms,
                                const SpeciesTable& species);

}  // namespace flamekit
