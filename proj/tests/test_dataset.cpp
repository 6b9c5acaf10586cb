#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "flamekit/dataset.hpp"
#include "flamekit/error.hpp"
#include "flamekit/fsio.hpp"

using namespace flamekit;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    const fs::path dir = fs::temp_directory_path() / "flamekit_test_dataset";
    fs::create_directories(dir);
    return dir;
}

SyntheticConfig tiny_config() {
    SyntheticConfig c;
    c.n_flamelets = 10;
    c.grid_size = 24;
    c.n_species = 12;
    return c;
}

}  // namespace

TEST_CASE("synthetic generator: scale, ordering and physical validity") {
    // Seed 1 with default parameters keeps exactly 55 of 100 flames.
    const FlameletDataset ds = generate_synthetic(SyntheticConfig{}, 1);
    CHECK(ds.flamelets.size() == 55);
    CHECK(ds.n_points() == 55 * 299);
    CHECK(ds.species.size() == 53);

    double prev_key = 0.0;
    for (const auto& f : ds.flamelets) {
        CHECK(f.key > prev_key);  // strictly increasing strain rates
        prev_key = f.key;
        CHECK(f.points.size() == 299);
        CHECK(!f.extinguished);

        CHECK(f.points.front().x_pos == 0.0);
        CHECK(f.points.back().x_pos == 1.0);
        CHECK(f.points.front().z_mix == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(f.points.back().z_mix == doctest::Approx(1.0).epsilon(1e-12));

        double prev_x = -1.0;
        for (const auto& p : f.points) {
            CHECK(p.x_pos > prev_x);
            prev_x = p.x_pos;
            double sum = 0.0;
            for (double y : p.mass_fractions) {
                CHECK(y >= 0.0);
                CHECK(y <= 1.0);
                sum += y;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("flamelet keys follow the geometric strain sequence") {
    // Key of flame j (before extinction filtering) is base/0.99^j, so each
    // surviving key must be base/0.99^j for some integer j, in order.
    const SyntheticConfig cfg = tiny_config();
    const FlameletDataset ds = generate_synthetic(cfg, 3);
    for (const auto& f : ds.flamelets) {
        const double j = std::log(cfg.base_strain / f.key) / std::log(0.99);
        CHECK(std::abs(j - std::round(j)) < 1e-9);
        CHECK(std::round(j) >= 0);
        CHECK(std::round(j) < cfg.n_flamelets);
    }
}

TEST_CASE("synthetic S_e equals the heats-of-formation dot product") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 5);
    // Independent recomputation: look up each key species by name.
    for (const auto& f : ds.flamelets) {
        for (const auto& p : f.points) {
            double acc = 0.0;
            for (int t = 0; t < kNumKeyTerms; ++t) {
                const int idx = ds.species.index_of(kKeyTermNames[static_cast<std::size_t>(t)]);
                REQUIRE(idx >= 0);
                acc += p.source_terms[static_cast<std::size_t>(t)] *
                       ds.species.heats_of_formation[static_cast<std::size_t>(idx)];
            }
            const double denom = std::max(1.0, std::abs(acc));
            CHECK(std::abs(p.source_energy - acc) / denom <= 1e-12);
        }
    }
}

TEST_CASE("generator is deterministic in the seed and every seed is valid") {
    const FlameletDataset a = generate_synthetic(tiny_config(), 17);
    const FlameletDataset b = generate_synthetic(tiny_config(), 17);
    REQUIRE(a.flamelets.size() == b.flamelets.size());
    const auto ea = encode(a, identity_encoder(a.species));
    const auto eb = encode(b, identity_encoder(b.species));
    CHECK(fingerprint(ea) == fingerprint(eb));

    const FlameletDataset c = generate_synthetic(tiny_config(), 18);
    const auto ec = encode(c, identity_encoder(c.species));
    CHECK(fingerprint(ea) != fingerprint(ec));

    // validate() accepts the generator's output across many seeds; this
    // guards the mass-fraction bounds under extinction jitter.
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        CHECK_NOTHROW(generate_synthetic(tiny_config(), seed).validate());
    }
}

TEST_CASE("CSV round trip reproduces every numeric field bit-exactly") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 7);
    const fs::path path = test_dir() / "round_trip.csv";
    save_csv(ds, path.string());

    LoadInfo info;
    const FlameletDataset loaded = load_csv(path.string(), &info);
    CHECK(info.rows_total == ds.n_points());
    CHECK(info.rows_extinguished == 0);
    REQUIRE(loaded.flamelets.size() == ds.flamelets.size());
    CHECK(loaded.species.names == ds.species.names);
    CHECK(loaded.species.heats_of_formation == ds.species.heats_of_formation);

    for (std::size_t i = 0; i < ds.flamelets.size(); ++i) {
        const auto& fa = ds.flamelets[i];
        const auto& fb = loaded.flamelets[i];
        CHECK(fa.key == fb.key);
        REQUIRE(fa.points.size() == fb.points.size());
        for (std::size_t j = 0; j < fa.points.size(); ++j) {
            CHECK(fa.points[j].x_pos == fb.points[j].x_pos);
            CHECK(fa.points[j].z_mix == fb.points[j].z_mix);
            CHECK(fa.points[j].mass_fractions == fb.points[j].mass_fractions);
            CHECK(fa.points[j].source_terms == fb.points[j].source_terms);
            CHECK(fa.points[j].source_energy == fb.points[j].source_energy);
        }
    }

    // Saving the loaded copy gives byte-identical output.
    const fs::path path2 = test_dir() / "round_trip2.csv";
    save_csv(loaded, path2.string());
    CHECK(read_file(path.string()) == read_file(path2.string()));
}

// Minimal valid schema: the seven key species and nothing else.
const char* kTinyCsvHeader =
    "# heats_of_formation: 0,0,0,0,0,0,0\n"
    "flame_key,x_pos,z_mix,extinguished,Y_O2,Y_CO,Y_CO2,Y_H2O,Y_OH,Y_H2,Y_CH4,"
    "Sdot_O2,Sdot_CO,Sdot_CO2,Sdot_H2O,Sdot_OH,Sdot_H2,Sdot_CH4,S_e\n";
const char* kTinyCsvY = "0.4,0.1,0.1,0.1,0.1,0.1,0.1";

TEST_CASE("load_csv failure modes") {
    const fs::path dir = test_dir();
    CHECK_THROWS_AS(load_csv((dir / "missing.csv").string()), IoError);

    // Truncated row.
    write_file_atomic((dir / "short_row.csv").string(),
                      std::string(kTinyCsvHeader) + "1,0,0,0,0.5,0.5\n");
    CHECK_THROWS_AS(load_csv((dir / "short_row.csv").string()), DataError);

    // Non-numeric cell.
    write_file_atomic((dir / "bad_cell.csv").string(),
                      std::string(kTinyCsvHeader) + "1,0,0,0,oops,0.1,0.1,0.1,0.1,0.1,0.1," +
                          "0,0,0,0,0,0,0,0\n");
    CHECK_THROWS_AS(load_csv((dir / "bad_cell.csv").string()), DataError);

    // Header without the mandatory prefix columns.
    write_file_atomic((dir / "bad_header.csv").string(),
                      "# heats_of_formation: 0\n"
                      "wrong,header\n1,2\n");
    CHECK_THROWS_AS(load_csv((dir / "bad_header.csv").string()), DataError);
}

TEST_CASE("extinguished rows are counted and excluded") {
    std::string csv = kTinyCsvHeader;
    csv += std::string("1,0,0,0,") + kTinyCsvY + ",0,0,0,0,0,0,0,0\n";
    csv += std::string("1,1,1,0,") + kTinyCsvY + ",0,0,0,0,0,0,0,0\n";
    csv += std::string("2,0,0,1,") + kTinyCsvY + ",0,0,0,0,0,0,0,0\n";
    csv += std::string("2,1,1,1,") + kTinyCsvY + ",0,0,0,0,0,0,0,0\n";
    write_file_atomic((test_dir() / "ext.csv").string(), csv);
    LoadInfo info;
    const FlameletDataset ds = load_csv((test_dir() / "ext.csv").string(), &info);
    CHECK(info.rows_total == 4);
    CHECK(info.rows_extinguished == 2);
    REQUIRE(ds.flamelets.size() == 1);
    CHECK(ds.flamelets[0].key == 1.0);
}

TEST_CASE("identity encoder: layout and value mapping") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 2);
    const EncoderWeights enc = identity_encoder(ds.species);
    CHECK(enc.p == 4);
    CHECK(enc.species_names == ds.species.names);

    const std::vector<EncodedPoint> pts = encode(ds, enc);
    CHECK(pts.size() == ds.n_points());

    std::size_t i = 0;
    for (const auto& f : ds.flamelets) {
        for (const auto& p : f.points) {
            const EncodedPoint& e = pts[i++];
            REQUIRE(e.input.size() == 5);   // p + 1
            REQUIRE(e.targets.size() == 8);  // k + 1
            // Identity weights: progress variables are the first 4 species.
            for (int c = 0; c < 4; ++c) {
                CHECK(e.input[static_cast<std::size_t>(c)] ==
                      p.mass_fractions[static_cast<std::size_t>(c)]);
            }
            CHECK(e.input[4] == p.z_mix);
            for (int t = 0; t < kNumKeyTerms; ++t) {
                CHECK(e.targets[static_cast<std::size_t>(t)] ==
                      p.source_terms[static_cast<std::size_t>(t)]);
            }
            CHECK(e.targets[7] == p.source_energy);  // S_e last
            CHECK(e.flamelet_key == f.key);
            CHECK(e.x_pos == p.x_pos);
        }
    }
}

TEST_CASE("non-identity encoder weights mix species columns") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 2);
    EncoderWeights enc;
    enc.species_names = ds.species.names;
    enc.p = 2;
    enc.w.assign(ds.species.size(), std::vector<double>(2, 0.0));
    enc.w[0][0] = 1.0;
    enc.w[1][0] = 2.0;  // c0 = Y0 + 2*Y1
    enc.w[3][1] = -1.0;  // c1 = -Y3

    const std::vector<EncodedPoint> pts = encode(ds, enc);
    const auto& p0 = ds.flamelets[0].points[0];
    CHECK(pts[0].input.size() == 3);
    CHECK(pts[0].input[0] ==
          doctest::Approx(p0.mass_fractions[0] + 2.0 * p0.mass_fractions[1]).epsilon(1e-15));
    CHECK(pts[0].input[1] == doctest::Approx(-p0.mass_fractions[3]).epsilon(1e-15));
    CHECK(pts[0].input[2] == p0.z_mix);
}

TEST_CASE("encoder weights file round trip") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 2);
    const EncoderWeights enc = identity_encoder(ds.species, 3);
    const fs::path path = test_dir() / "encoder.txt";
    save_encoder_weights(enc, path.string());
    const EncoderWeights loaded = load_encoder_weights(path.string());
    CHECK(loaded.p == enc.p);
    CHECK(loaded.species_names == enc.species_names);
    CHECK(loaded.w == enc.w);
    CHECK_THROWS_AS(load_encoder_weights((test_dir() / "nope.txt").string()), IoError);
}

TEST_CASE("encode rejects an encoder for a different species set") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 2);
    SyntheticConfig other = tiny_config();
    other.n_species = 14;
    const FlameletDataset ds2 = generate_synthetic(other, 2);
    const EncoderWeights enc2 = identity_encoder(ds2.species);
    CHECK_THROWS_AS(encode(ds, enc2), DimensionError);
}

TEST_CASE("flamelet split: counts, atomicity, order, reproducibility") {
    const FlameletDataset ds = generate_synthetic(SyntheticConfig{}, 1);  // 55 flames
    const std::vector<EncodedPoint> pts = encode(ds, identity_encoder(ds.species));

    const SplitResult s = split_holdout(pts, Strategy::Flamelets, 0.2, 7);
    CHECK(s.holdout_keys.size() == 11);  // round(0.2 * 55)
    CHECK(s.holdout.size() == 11 * 299);
    CHECK(s.train_val.size() == 44 * 299);
    CHECK(s.holdout_indices.empty());

    // Atomicity: no key appears on both sides.
    const std::vector<double> train_keys = unique_keys(s.train_val);
    const std::vector<double> hold_keys = unique_keys(s.holdout);
    CHECK(train_keys.size() == 44);
    CHECK(hold_keys.size() == 11);
    for (double k : hold_keys) {
        CHECK(!std::binary_search(train_keys.begin(), train_keys.end(), k));
    }
    CHECK(hold_keys == s.holdout_keys);  // persisted ids are the sorted keys

    // Original point order is preserved on both sides.
    auto ordered = [&](const std::vector<EncodedPoint>& side) {
        std::size_t pos = 0;
        for (const auto& e : side) {
            while (pos < pts.size() &&
                   (pts[pos].flamelet_key != e.flamelet_key || pts[pos].x_pos != e.x_pos)) {
                ++pos;
            }
            if (pos == pts.size()) return false;
            ++pos;
        }
        return true;
    };
    CHECK(ordered(s.train_val));
    CHECK(ordered(s.holdout));

    // Deterministic in seed, different across seeds.
    const SplitResult again = split_holdout(pts, Strategy::Flamelets, 0.2, 7);
    CHECK(again.holdout_keys == s.holdout_keys);
    const SplitResult other = split_holdout(pts, Strategy::Flamelets, 0.2, 8);
    CHECK(other.holdout_keys != s.holdout_keys);
}

TEST_CASE("points split: exact count and preserved order") {
    const FlameletDataset ds = generate_synthetic(SyntheticConfig{}, 1);
    const std::vector<EncodedPoint> pts = encode(ds, identity_encoder(ds.species));
    REQUIRE(pts.size() == 16445);

    const SplitResult s = split_holdout(pts, Strategy::Points, 0.2, 7);
    CHECK(s.holdout.size() == 3289);  // round(0.2 * 16445)
    CHECK(s.train_val.size() == 16445 - 3289);
    CHECK(s.holdout_keys.empty());
    CHECK(s.holdout_indices.size() == 3289);
    CHECK(std::is_sorted(s.holdout_indices.begin(), s.holdout_indices.end()));

    // holdout[i] is exactly pts[holdout_indices[i]].
    for (std::size_t i = 0; i < s.holdout_indices.size(); ++i) {
        const auto& a = s.holdout[i];
        const auto& b = pts[static_cast<std::size_t>(s.holdout_indices[i])];
        CHECK(a.input == b.input);
        CHECK(a.targets == b.targets);
        CHECK(a.flamelet_key == b.flamelet_key);
    }
}

TEST_CASE("split_by_holdout_units reproduces a recorded split") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 4);
    const std::vector<EncodedPoint> pts = encode(ds, identity_encoder(ds.species));

    for (Strategy strat : {Strategy::Flamelets, Strategy::Points}) {
        const SplitResult s = split_holdout(pts, strat, 0.2, 21);
        const SplitResult r =
            split_by_holdout_units(pts, strat, s.holdout_keys, s.holdout_indices);
        CHECK(r.train_val.size() == s.train_val.size());
        CHECK(r.holdout.size() == s.holdout.size());
        CHECK(fingerprint(r.holdout) == fingerprint(s.holdout));
        CHECK(fingerprint(r.train_val) == fingerprint(s.train_val));
    }
}

TEST_CASE("split rejects out-of-range fractions") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 4);
    const std::vector<EncodedPoint> pts = encode(ds, identity_encoder(ds.species));
    CHECK_THROWS_AS(split_holdout(pts, Strategy::Flamelets, 0.0, 1), DataError);
    CHECK_THROWS_AS(split_holdout(pts, Strategy::Flamelets, 1.0, 1), DataError);
    CHECK_THROWS_AS(split_holdout(pts, Strategy::Flamelets, -0.3, 1), DataError);
}

TEST_CASE("fingerprint is sensitive to any field change") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 4);
    std::vector<EncodedPoint> pts = encode(ds, identity_encoder(ds.species));
    const std::string base = fingerprint(pts);
    CHECK(base.size() == 16);  // fixed-width hex

    auto mutated = pts;
    mutated[0].input[0] += 1e-300;
    CHECK(fingerprint(mutated) != base);
    mutated = pts;
    mutated.back().targets.back() = -mutated.back().targets.back();
    CHECK(fingerprint(mutated) != base);
    mutated = pts;
    mutated[1].x_pos += 1e-12;
    CHECK(fingerprint(mutated) != base);
}

TEST_CASE("unique_keys returns sorted distinct flamelet keys") {
    const FlameletDataset ds = generate_synthetic(tiny_config(), 4);
    const std::vector<EncodedPoint> pts = encode(ds, identity_encoder(ds.species));
    const std::vector<double> keys = unique_keys(pts);
    CHECK(keys.size() == ds.flamelets.size());
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    const std::set<double> dedup(keys.begin(), keys.end());
    CHECK(dedup.size() == keys.size());
}

TEST_CASE("source_energy_from_terms validates the species table") {
    SpeciesTable missing;
    missing.names = {"O2", "CO"};  // lacks most key species
    missing.heats_of_formation = {0.0, 0.0};
    std::array<double, kNumKeyTerms> terms{};
    CHECK_THROWS_AS(source_energy_from_terms(terms, missing), DataError);
}
