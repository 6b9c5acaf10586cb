#include "flamekit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <unordered_set>

#include "flamekit/error.hpp"
#include "flamekit/fsio.hpp"
#include "flamekit/numfmt.hpp"
#include "flamekit/rng.hpp"

namespace flamekit {

namespace {

constexpr double kMassFractionTol = 1e-6;

const std::string kHeatsSidecarPrefix = "# heats_of_formation: ";

std::vector<std::string> split_line(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> split_nonempty_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t pos = text.find('\n', start);
        std::string line = pos == std::string::npos ? text.substr(start)
                                                    : text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(std::move(line));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return lines;
}

std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

double gaussian_bump(double x, double center, double width) {
    const double t = (x - center) / width;
    return std::exp(-t * t);
}

}  // namespace

int SpeciesTable::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

void SpeciesTable::validate() const {
    if (names.empty()) throw DataError("species table has no species");
    if (heats_of_formation.size() != names.size()) {
        throw DataError("heats_of_formation length does not match species count");
    }
    if (names.size() < static_cast<std::size_t>(kNumKeyTerms)) {
        throw DataError("species table smaller than the key-term count");
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) throw DataError("empty species name");
        if (!seen.insert(n).second) throw DataError("duplicate species name '" + n + "'");
    }
}

std::size_t FlameletDataset::n_points() const {
    std::size_t n = 0;
    for (const auto& f : flamelets) n += f.points.size();
    return n;
}

void FlameletDataset::validate() const {
    species.validate();
    const std::size_t s = species.size();
    std::set<double> keys;
    for (const auto& f : flamelets) {
        if (f.key <= 0.0) throw DataError("flamelet key must be positive");
        if (!keys.insert(f.key).second) {
            throw DataError("duplicate flamelet key " + format_double(f.key));
        }
        if (f.extinguished) throw DataError("extinguished flamelet present after filtering");
        if (f.points.empty()) throw DataError("flamelet with no points");
        double prev_x = -1.0;
        for (const auto& pt : f.points) {
            if (pt.x_pos < 0.0 || pt.x_pos > 1.0) throw DataError("x_pos outside [0,1]");
            if (pt.x_pos <= prev_x) throw DataError("x_pos not strictly increasing");
            prev_x = pt.x_pos;
            if (pt.z_mix < 0.0 || pt.z_mix > 1.0) throw DataError("z_mix outside [0,1]");
            if (pt.mass_fractions.size() != s) {
                throw DimensionError("mass fraction vector length does not match species count");
            }
            double sum = 0.0;
            for (double y : pt.mass_fractions) {
                if (y < 0.0 || y > 1.0) throw DataError("mass fraction outside [0,1]");
                sum += y;
            }
            if (std::abs(sum - 1.0) > kMassFractionTol) {
                throw DataError("MassFractionSum: mass fractions sum to " + format_double(sum));
            }
        }
    }
}

void EncoderWeights::validate() const {
    if (w.empty()) throw DataError("encoder weight matrix is empty");
    if (p < 1) throw DataError("encoder embedding dimension must be >= 1");
    if (static_cast<std::size_t>(p) >= w.size()) {
        throw DataError("encoder embedding dimension must be smaller than the species count");
    }
    for (const auto& row : w) {
        if (row.size() != static_cast<std::size_t>(p)) {
            throw DimensionError("ragged encoder weight matrix");
        }
        for (double v : row) {
            if (!std::isfinite(v)) throw DataError("non-finite encoder weight");
        }
    }
    if (!species_names.empty() && species_names.size() != w.size()) {
        throw DimensionError("encoder species list length does not match row count");
    }
}

void SyntheticConfig::validate() const {
    if (n_flamelets < 2) throw DataError("n_flamelets must be >= 2");
    if (grid_size < 3) throw DataError("grid_size must be >= 3");
    if (n_species < 9) throw DataError("n_species must be >= 9");
    if (base_strain <= 0.0) throw DataError("base_strain must be positive");
    if (extinction_decay < 0.0) throw DataError("extinction_decay must be >= 0");
    if (extinction_jitter < 0.0 || extinction_jitter >= 1.0) {
        throw DataError("extinction_jitter must be in [0,1)");
    }
    if (extinction_threshold < 0.0) throw DataError("extinction_threshold must be >= 0");
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> expected_header(const std::vector<std::string>& species_names) {
    std::vector<std::string> cols = {"flame_key", "x_pos", "z_mix", "extinguished"};
    for (const auto& n : species_names) cols.push_back("Y_" + n);
    for (const auto& t : kKeyTermNames) cols.push_back("Sdot_" + t);
    cols.push_back("S_e");
    return cols;
}

}  // namespace

FlameletDataset load_csv(const std::string& path, LoadInfo* info) {
    const std::string text = read_file(path);
    std::vector<std::string> lines = split_nonempty_lines(text);
    if (lines.empty()) throw DataError("EmptyDataset: '" + path + "' has no header");

    std::size_t line_idx = 0;
    std::vector<double> sidecar_heats;
    bool have_heats = false;
    if (lines[0].rfind(kHeatsSidecarPrefix, 0) == 0) {
        const std::string payload = lines[0].substr(kHeatsSidecarPrefix.size());
        for (const auto& field : split_line(payload, ',')) {
            sidecar_heats.push_back(parse_double(field, "heats_of_formation sidecar"));
        }
        have_heats = true;
        line_idx = 1;
        if (lines.size() == 1) throw DataError("EmptyDataset: '" + path + "' has no header");
    }

    const std::vector<std::string> header = split_line(lines[line_idx], ',');
    ++line_idx;

    // Recover the species list from the Y_ block, then demand the header is
    // exactly the fixed schema for that list.
    static const std::vector<std::string> kLead = {"flame_key", "x_pos", "z_mix", "extinguished"};
    for (std::size_t i = 0; i < kLead.size(); ++i) {
        if (i >= header.size() || header[i] != kLead[i]) {
            throw DataError("missing column '" + kLead[i] + "' in header of '" + path + "'");
        }
    }
    std::vector<std::string> species_names;
    std::size_t col = kLead.size();
    while (col < header.size() && header[col].rfind("Y_", 0) == 0) {
        species_names.push_back(header[col].substr(2));
        ++col;
    }
    if (species_names.empty()) throw DataError("no Y_<species> columns in '" + path + "'");
    const std::vector<std::string> expect = expected_header(species_names);
    if (header.size() < expect.size()) {
        throw DataError("missing column '" + expect[header.size()] + "' in header of '" + path + "'");
    }
    if (header.size() > expect.size()) {
        throw DataError("unexpected extra column '" + header[expect.size()] + "' in '" + path + "'");
    }
    for (std::size_t i = 0; i < expect.size(); ++i) {
        if (header[i] != expect[i]) {
            throw DataError("unexpected column '" + header[i] + "' (expected '" + expect[i] +
                            "') in '" + path + "'");
        }
    }

    const std::size_t s = species_names.size();
    if (have_heats && sidecar_heats.size() != s) {
        throw DataError("heats_of_formation sidecar length does not match species count");
    }

    if (line_idx >= lines.size()) {
        throw DataError("EmptyDataset: '" + path + "' contains a header but no rows");
    }

    FlameletDataset ds;
    ds.species.names = species_names;
    ds.species.heats_of_formation =
        have_heats ? sidecar_heats : std::vector<double>(s, 0.0);

    struct Group {
        Flamelet flamelet;
        std::vector<std::size_t> row_of_point;
    };
    std::vector<Group> groups;  // order of first appearance

    LoadInfo local;
    std::size_t row = 0;  // 1-based data row counter
    for (; line_idx < lines.size(); ++line_idx) {
        ++row;
        const std::vector<std::string> fields = split_line(lines[line_idx], ',');
        if (fields.size() != expect.size()) {
            throw DataError("row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(expect.size()));
        }
        const std::string ctx = "row " + std::to_string(row);
        ++local.rows_total;

        const double key = parse_double(fields[0], ctx + " flame_key");
        FlameletPoint pt;
        pt.x_pos = parse_double(fields[1], ctx + " x_pos");
        pt.z_mix = parse_double(fields[2], ctx + " z_mix");
        const long ext = parse_long(fields[3], ctx + " extinguished");
        if (ext != 0 && ext != 1) {
            throw DataError(ctx + ": extinguished flag must be 0 or 1");
        }
        pt.mass_fractions.resize(s);
        double sum = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            pt.mass_fractions[i] = parse_double(fields[4 + i], ctx + " Y_" + species_names[i]);
            sum += pt.mass_fractions[i];
        }
        if (std::abs(sum - 1.0) > kMassFractionTol) {
            throw DataError("MassFractionSum at row " + std::to_string(row) +
                            ": mass fractions sum to " + format_double(sum));
        }
        for (int t = 0; t < kNumKeyTerms; ++t) {
            pt.source_terms[static_cast<std::size_t>(t)] =
                parse_double(fields[4 + s + static_cast<std::size_t>(t)],
                             ctx + " Sdot_" + kKeyTermNames[static_cast<std::size_t>(t)]);
        }
        pt.source_energy = parse_double(fields[4 + s + kNumKeyTerms], ctx + " S_e");

        if (ext == 1) {
            ++local.rows_extinguished;
            continue;
        }

        Group* group = nullptr;
        for (auto& g : groups) {
            if (g.flamelet.key == key) {
                group = &g;
                break;
            }
        }
        if (group == nullptr) {
            groups.push_back(Group{});
            group = &groups.back();
            group->flamelet.key = key;
        }
        group->flamelet.points.push_back(std::move(pt));
        group->row_of_point.push_back(row);
    }

    if (local.rows_total == local.rows_extinguished) {
        throw DataError("EmptyDataset: every row of '" + path + "' is extinguished");
    }

    for (auto& g : groups) {
        std::vector<std::size_t> order(g.flamelet.points.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return g.flamelet.points[a].x_pos < g.flamelet.points[b].x_pos;
        });
        std::vector<FlameletPoint> sorted;
        sorted.reserve(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (i > 0 && g.flamelet.points[order[i]].x_pos ==
                             g.flamelet.points[order[i - 1]].x_pos) {
                throw DataError("duplicate (flame_key, x_pos) = (" +
                                format_double(g.flamelet.key) + ", " +
                                format_double(g.flamelet.points[order[i]].x_pos) + ") at row " +
                                std::to_string(g.row_of_point[order[i]]));
            }
            sorted.push_back(std::move(g.flamelet.points[order[i]]));
        }
        g.flamelet.points = std::move(sorted);
        ds.flamelets.push_back(std::move(g.flamelet));
    }

    ds.validate();
    if (info != nullptr) *info = local;
    return ds;
}

void save_csv(const FlameletDataset& dataset, const std::string& path) {
    dataset.validate();
    std::string out;
    out.reserve(dataset.n_points() * 32 * (dataset.species.size() + 12));

    out += kHeatsSidecarPrefix;
    for (std::size_t i = 0; i < dataset.species.size(); ++i) {
        if (i > 0) out += ',';
        out += format_double(dataset.species.heats_of_formation[i]);
    }
    out += '\n';

    const std::vector<std::string> header = expected_header(dataset.species.names);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i > 0) out += ',';
        out += header[i];
    }
    out += '\n';

    for (const auto& f : dataset.flamelets) {
        const std::string key_str = format_double(f.key);
        for (const auto& pt : f.points) {
            out += key_str;
            out += ',';
            out += format_double(pt.x_pos);
            out += ',';
            out += format_double(pt.z_mix);
            out += ",0";
            for (double y : pt.mass_fractions) {
                out += ',';
                out += format_double(y);
            }
            for (double v : pt.source_terms) {
                out += ',';
                out += format_double(v);
            }
            out += ',';
            out += format_double(pt.source_energy);
            out += '\n';
        }
    }
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

// Normalized logistic, mapping [0,1] onto [0,1] with z(0)=0, z(1)=1.
double z_mix_map(double x) {
    const double steepness = 6.0;
    auto raw = [&](double t) { return 1.0 / (1.0 + std::exp(-steepness * (t - 0.5))); };
    const double lo = raw(0.0);
    const double hi = raw(1.0);
    return (raw(x) - lo) / (hi - lo);
}

SpeciesTable synthetic_species(int n_species) {
    // Key species plus the N2 closure species first, then inert fillers.
    // Heats of formation are per unit mass (J/kg), gas phase.
    SpeciesTable table;
    table.names = {"CH4", "O2", "N2", "H2", "H2O", "CO", "CO2", "OH"};
    table.heats_of_formation = {-4.667e6, 0.0, 0.0, 0.0, -1.3423e7, -3.946e6, -8.941e6, 2.292e6};
    for (int i = static_cast<int>(table.names.size()); i < n_species; ++i) {
        table.names.push_back("SP_" + std::to_string(i + 1));
        table.heats_of_formation.push_back(0.0);
    }
    return table;
}

struct FillerProfile {
    double center;
    double width;
    double amplitude;
};

}  // namespace

FlameletDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();

    FlameletDataset ds;
    ds.species = synthetic_species(config.n_species);
    const int s = config.n_species;
    const int n_named = 8;  // CH4, O2, N2, H2, H2O, CO, CO2, OH

    SplitMix64 rng_profile(derive_seed(seed, 0xF17Eu));
    std::vector<FillerProfile> fillers;
    for (int i = n_named; i < s; ++i) {
        FillerProfile fp;
        fp.center = rng_profile.uniform(0.15, 0.85);
        fp.width = rng_profile.uniform(0.04, 0.18);
        fp.amplitude = rng_profile.uniform(2e-5, 4e-4);
        fillers.push_back(fp);
    }

    SplitMix64 rng_ext(derive_seed(seed, 0xE07u));
    const int n = config.n_flamelets;
    for (int j = 0; j < n; ++j) {
        const double key = config.base_strain / std::pow(0.99, j);
        const double jitter =
            rng_ext.uniform(-config.extinction_jitter, config.extinction_jitter);
        const double raw_ext = std::exp(-config.extinction_decay * j) * (1.0 + jitter);
        if (raw_ext < config.extinction_threshold) continue;  // extinguished, dropped
        // Burning intensity saturates at the unstrained flame; without the
        // cap a positive jitter at low strain pushes CH4/O2 negative.
        const double ext = std::min(raw_ext, 1.0);

        // Flame front drifts toward the oxidizer side and thins as the
        // strain rate grows.
        const double frac = n > 1 ? static_cast<double>(j) / (n - 1) : 0.0;
        const double xf = 0.35 + 0.08 * frac;
        const double w0 = 0.05 * (1.0 - 0.35 * frac);

        Flamelet fl;
        fl.key = key;
        fl.points.reserve(static_cast<std::size_t>(config.grid_size));
        for (int g = 0; g < config.grid_size; ++g) {
            const double x = static_cast<double>(g) / (config.grid_size - 1);
            FlameletPoint pt;
            pt.x_pos = x;
            pt.z_mix = z_mix_map(x);
            const double z = pt.z_mix;

            pt.mass_fractions.assign(static_cast<std::size_t>(s), 0.0);
            pt.mass_fractions[0] = 0.23 * z * (1.0 - 0.92 * ext * gaussian_bump(x, xf, 0.18));
            pt.mass_fractions[1] =
                0.233 * (1.0 - z) * (1.0 - 0.92 * ext * gaussian_bump(x, xf - 0.05, 0.15));
            pt.mass_fractions[3] = 0.006 * ext * gaussian_bump(x, xf - 0.06, 0.12);
            pt.mass_fractions[4] = 0.11 * ext * gaussian_bump(x, xf + 0.02, 0.20);
            pt.mass_fractions[5] = 0.05 * ext * gaussian_bump(x, xf - 0.03, 0.12);
            pt.mass_fractions[6] = 0.12 * ext * gaussian_bump(x, xf, 0.22);
            pt.mass_fractions[7] = 0.012 * ext * gaussian_bump(x, xf + 0.01, 0.10);
            for (std::size_t i = 0; i < fillers.size(); ++i) {
                pt.mass_fractions[n_named + i] =
                    fillers[i].amplitude * ext *
                    gaussian_bump(x, fillers[i].center, fillers[i].width);
            }
            double sum_others = 0.0;
            for (std::size_t i = 0; i < pt.mass_fractions.size(); ++i) {
                if (i != 2) sum_others += pt.mass_fractions[i];
            }
            pt.mass_fractions[2] = 1.0 - sum_others;  // N2 closes the balance

            pt.source_terms[0] = -ext * (820.0 * gaussian_bump(x, xf - 0.02, 1.0 * w0) +
                                         180.0 * gaussian_bump(x, xf + 0.06, 1.6 * w0));
            pt.source_terms[1] = ext * (410.0 * gaussian_bump(x, xf - 0.03, 0.8 * w0) -
                                        250.0 * gaussian_bump(x, xf + 0.05, 1.3 * w0));
            pt.source_terms[2] = ext * 540.0 * gaussian_bump(x, xf + 0.01, 1.1 * w0);
            pt.source_terms[3] = ext * 640.0 * gaussian_bump(x, xf, 1.2 * w0);
            pt.source_terms[4] = ext * (95.0 * gaussian_bump(x, xf + 0.03, 0.6 * w0) -
                                        40.0 * gaussian_bump(x, xf - 0.05, 1.0 * w0));
            pt.source_terms[5] = ext * (60.0 * gaussian_bump(x, xf - 0.05, 0.7 * w0) -
                                        35.0 * gaussian_bump(x, xf + 0.03, 1.0 * w0));
            pt.source_terms[6] = -ext * 450.0 * gaussian_bump(x, xf, 0.9 * w0);

            pt.source_energy = source_energy_from_terms(pt.source_terms, ds.species);
            fl.points.push_back(std::move(pt));
        }
        ds.flamelets.push_back(std::move(fl));
    }

    if (ds.flamelets.empty()) {
        throw DataError("every synthetic flamelet extinguished; lower extinction_threshold");
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Encoding and splitting
// ---------------------------------------------------------------------------

std::vector<EncodedPoint> encode(const FlameletDataset& dataset, const EncoderWeights& w) {
    w.validate();
    const std::size_t s = dataset.species.size();
    if (w.w.size() != s) {
        throw DimensionError("encoder weight rows (" + std::to_string(w.w.size()) +
                             ") do not match species count (" + std::to_string(s) + ")");
    }
    if (!w.species_names.empty() && w.species_names != dataset.species.names) {
        throw DataError("encoder species order does not match the dataset species list");
    }
    const int p = w.p;

    std::vector<EncodedPoint> out;
    out.reserve(dataset.n_points());
    for (const auto& f : dataset.flamelets) {
        for (const auto& pt : f.points) {
            EncodedPoint ep;
            ep.input.assign(static_cast<std::size_t>(p) + 1, 0.0);
            for (std::size_t i = 0; i < s; ++i) {
                const double y = pt.mass_fractions[i];
                if (y != 0.0) {
                    for (int q = 0; q < p; ++q) {
                        ep.input[static_cast<std::size_t>(q)] +=
                            y * w.w[i][static_cast<std::size_t>(q)];
                    }
                }
            }
            ep.input[static_cast<std::size_t>(p)] = pt.z_mix;
            ep.targets.reserve(kNumKeyTerms + 1);
            ep.targets.assign(pt.source_terms.begin(), pt.source_terms.end());
            ep.targets.push_back(pt.source_energy);
            ep.flamelet_key = f.key;
            ep.x_pos = pt.x_pos;
            out.push_back(std::move(ep));
        }
    }
    return out;
}

std::vector<double> unique_keys(std::span<const EncodedPoint> points) {
    std::vector<double> keys;
    keys.reserve(64);
    for (const auto& pt : points) keys.push_back(pt.flamelet_key);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

namespace {

SplitResult partition_by_key_set(const std::vector<EncodedPoint>& points,
                                 std::vector<double> holdout_keys) {
    std::sort(holdout_keys.begin(), holdout_keys.end());
    SplitResult res;
    res.holdout_keys = holdout_keys;
    for (const auto& pt : points) {
        const bool in_holdout =
            std::binary_search(holdout_keys.begin(), holdout_keys.end(), pt.flamelet_key);
        (in_holdout ? res.holdout : res.train_val).push_back(pt);
    }
    return res;
}

SplitResult partition_by_index_set(const std::vector<EncodedPoint>& points,
                                   std::vector<std::uint64_t> holdout_indices) {
    std::sort(holdout_indices.begin(), holdout_indices.end());
    SplitResult res;
    res.holdout_indices = holdout_indices;
    std::vector<bool> mask(points.size(), false);
    for (std::uint64_t idx : holdout_indices) {
        if (idx >= points.size()) {
            throw ConsistencyError("holdout point index " + std::to_string(idx) +
                                   " outside dataset of " + std::to_string(points.size()) +
                                   " points");
        }
        mask[static_cast<std::size_t>(idx)] = true;
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        (mask[i] ? res.holdout : res.train_val).push_back(points[i]);
    }
    return res;
}

}  // namespace

SplitResult split_holdout(const std::vector<EncodedPoint>& points, Strategy strategy,
                          double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw DataError("holdout fraction must be in (0,1)");
    }
    if (points.empty()) throw DataError("cannot split an empty sample set");

    SplitMix64 rng(derive_seed(seed, 0x5B117u));
    if (strategy == Strategy::Flamelets) {
        std::vector<double> keys = unique_keys(points);
        const std::size_t n_holdout = round_half_up(fraction * static_cast<double>(keys.size()));
        if (n_holdout == 0 || n_holdout >= keys.size()) {
            throw DataError("holdout fraction " + format_double(fraction) +
                            " would leave one side of the flamelet split empty");
        }
        fisher_yates(keys, rng);
        keys.resize(n_holdout);
        return partition_by_key_set(points, std::move(keys));
    }

    std::vector<std::uint64_t> idx(points.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t n_holdout = round_half_up(fraction * static_cast<double>(idx.size()));
    if (n_holdout == 0 || n_holdout >= idx.size()) {
        throw DataError("holdout fraction " + format_double(fraction) +
                        " would leave one side of the point split empty");
    }
    fisher_yates(idx, rng);
    idx.resize(n_holdout);
    return partition_by_index_set(points, std::move(idx));
}

SplitResult split_by_holdout_units(const std::vector<EncodedPoint>& points, Strategy strategy,
                                   const std::vector<double>& holdout_keys,
                                   const std::vector<std::uint64_t>& holdout_indices) {
    if (strategy == Strategy::Flamelets) {
        const std::vector<double> present = unique_keys(points);
        for (double k : holdout_keys) {
            if (!std::binary_search(present.begin(), present.end(), k)) {
                throw ConsistencyError("holdout flamelet key " + format_double(k) +
                                       " not present in the dataset");
            }
        }
        return partition_by_key_set(points, holdout_keys);
    }
    return partition_by_index_set(points, holdout_indices);
}

// ---------------------------------------------------------------------------
// Encoder weights
// ---------------------------------------------------------------------------

EncoderWeights identity_encoder(const SpeciesTable& species, int p) {
    species.validate();
    if (p < 1 || static_cast<std::size_t>(p) >= species.size()) {
        throw DataError("identity encoder needs 1 <= p < species count");
    }
    EncoderWeights w;
    w.species_names = species.names;
    w.p = p;
    w.w.assign(species.size(), std::vector<double>(static_cast<std::size_t>(p), 0.0));
    for (int i = 0; i < p; ++i) {
        w.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
    }
    return w;
}

EncoderWeights load_encoder_weights(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines = split_nonempty_lines(text);
    static const std::string kPrefix = "# species: ";
    if (lines.empty() || lines[0].rfind(kPrefix, 0) != 0) {
        throw DataError("encoder file '" + path + "' must start with '# species: ...'");
    }
    EncoderWeights w;
    w.species_names = split_line(lines[0].substr(kPrefix.size()), ',');
    for (std::size_t li = 1; li < lines.size(); ++li) {
        std::vector<double> row;
        for (const auto& field : split_line(lines[li], ',')) {
            row.push_back(parse_double(field, "encoder row " + std::to_string(li)));
        }
        w.w.push_back(std::move(row));
    }
    if (w.w.empty()) throw DataError("encoder file '" + path + "' has no weight rows");
    w.p = static_cast<int>(w.w[0].size());
    if (w.w.size() != w.species_names.size()) {
        throw DimensionError("encoder file '" + path + "': " + std::to_string(w.w.size()) +
                             " rows but " + std::to_string(w.species_names.size()) +
                             " species names");
    }
    w.validate();
    return w;
}

void save_encoder_weights(const EncoderWeights& w, const std::string& path) {
    w.validate();
    if (w.species_names.empty()) {
        throw DataError("encoder weights need species names to be saved");
    }
    std::string out = "# species: ";
    for (std::size_t i = 0; i < w.species_names.size(); ++i) {
        if (i > 0) out += ',';
        out += w.species_names[i];
    }
    out += '\n';
    for (const auto& row : w.w) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Fingerprint and source energy
// ---------------------------------------------------------------------------

namespace {

void fnv1a_feed(std::uint64_t& h, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFFu;
        h *= 1099511628211ULL;
    }
}

}  // namespace

std::string fingerprint(std::span<const EncodedPoint> points) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& pt : points) {
        for (double v : pt.input) fnv1a_feed(h, v);
        for (double v : pt.targets) fnv1a_feed(h, v);
        fnv1a_feed(h, pt.flamelet_key);
        fnv1a_feed(h, pt.x_pos);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

double source_energy_from_terms(const std::array<double, kNumKeyTerms>& terms,
                                const SpeciesTable& species) {
    double se = 0.0;
    for (int t = 0; t < kNumKeyTerms; ++t) {
        const int idx = species.index_of(kKeyTermNames[static_cast<std::size_t>(t)]);
        if (idx < 0) {
            throw DataError("species table lacks key species '" +
                            kKeyTermNames[static_cast<std::size_t>(t)] + "'");
        }
        se += terms[static_cast<std::size_t>(t)] *
              species.heats_of_formation[static_cast<std::size_t>(idx)];
    }
    return se;
}

}  // namespace flamekit
