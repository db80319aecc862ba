#include "doctest.h"

#include <fstream>
#include <random>

#include "strokeval/error.hpp"
#include "strokeval/phenotype.hpp"
#include "support/synth.hpp"

using namespace strokeval;

namespace {

// Labeling given per-lesion voxel counts; only sizes and grid matter to the pattern rules.
LesionLabeling sized(std::vector<std::int64_t> voxels, double spacing_mm = 1.0) {
    LesionLabeling l;
    l.grid = Grid{{1, 1, 1}, {spacing_mm, spacing_mm, spacing_mm}};
    l.lesion_count = static_cast<std::int32_t>(voxels.size());
    for (const auto v : voxels) {
        l.lesion_voxels.push_back(v);
        l.lesion_volumes_ml.push_back(l.grid.volume_ml(v));
    }
    l.total_volume_ml = l.grid.volume_ml(l.total_voxels());
    return l;
}

struct Fixture {
    const char* name;
    std::vector<std::int64_t> voxels;  // 1 voxel = 0.001 ml unless spacing given
    double spacing;
    StrokePattern expected;
    int rule;
};

// 5 atlas boxes along x, 4 voxels wide each, plus a 2-voxel background slab.
TerritoryAtlas box_atlas(double spacing_mm = 10.0) {
    TerritoryAtlas a;
    a.grid = Grid{{22, 4, 4}, {spacing_mm, spacing_mm, spacing_mm}};
    a.labels.assign(a.grid.size(), 0);
    for (std::int64_t z = 0; z < 4; ++z)
        for (std::int64_t y = 0; y < 4; ++y)
            for (std::int64_t x = 0; x < 20; ++x) a.labels[a.grid.index(x, y, z)] = static_cast<std::int32_t>(x / 4 + 1);
    a.legend = {{1, Territory::MCA}, {2, Territory::ACA}, {3, Territory::PCA}, {4, Territory::Cerebellum},
                {5, Territory::PonsMedulla}};
    return a;
}

// Sets n voxels inside atlas box `box` (0-based).
void put_in_box(VoxelMask& m, int box, int n) {
    int placed = 0;
    for (std::int64_t z = 0; z < 4 && placed < n; ++z)
        for (std::int64_t y = 0; y < 4 && placed < n; ++y)
            for (std::int64_t x = 4 * box; x < 4 * box + 4 && placed < n; ++x, ++placed) m.set(x, y, z, true);
}

}  // namespace

TEST_SUITE("phenotype") {

TEST_CASE("stroke-pattern clause boundaries") {
    const std::vector<Fixture> fixtures{
        {"empty scan", {}, 1.0, StrokePattern::NoIschemia, 1},
        {"single lesion", {1234}, 1.0, StrokePattern::SVI, 2},
        {"9.6 ml + 0.4 ml, largest 96%", {9600, 400}, 1.0, StrokePattern::SVI, 2},
        {"largest exactly 95%", {9500, 500}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"largest 95% + 0.01%", {9501, 499}, 1.0, StrokePattern::SVI, 2},
        {"largest 95% - 0.01%", {9499, 501}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"4 lesions totalling 4.0 ml", {1000, 1000, 1000, 1000}, 1.0, StrokePattern::ScatteredInfarcts, 3},
        {"3 lesions, largest exactly 60%, 10 ml", {6000, 2000, 2000}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"3 lesions, largest 60% - 0.01%, 10 ml", {5999, 2001, 2000}, 1.0, StrokePattern::ScatteredInfarcts, 3},
        {"3 lesions, largest 60% + 0.01%, 10 ml", {6001, 2000, 1999}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"3 lesions, 80%, total exactly 5 ml", {4000, 500, 500}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"3 lesions, 80%, total 4.999 ml", {3999, 500, 500}, 1.0, StrokePattern::ScatteredInfarcts, 3},
        {"3 lesions, 80%, total 5.001 ml", {4001, 500, 500}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"2 small equal lesions", {1000, 1000}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"3 small lesions", {700, 700, 600}, 1.0, StrokePattern::ScatteredInfarcts, 3},
        {"2 lesions 50% each, large", {15000, 15000}, 1.0, StrokePattern::SVIWithScattered, 4},
        {"2 lesions 70/30, 30 ml", {21000, 9000}, 1.0, StrokePattern::SVIWithScattered, 4},
        // dominance beats the small-total clause when both would fire
        {"precedence: >95% with 3 lesions under 5 ml", {4800, 10, 10}, 1.0, StrokePattern::SVI, 2},
        {"5 lesions, largest 95.8%, 12 ml", {11500, 125, 125, 125, 125}, 1.0,
         StrokePattern::SVI, 2},
        {"2 mm voxels: 625 voxels is exactly 5 ml", {500, 63, 62}, 2.0, StrokePattern::SVIWithScattered, 4},
        {"2 mm voxels: 624 voxels is under 5 ml", {500, 62, 62}, 2.0, StrokePattern::ScatteredInfarcts, 3},
    };
    CHECK(fixtures.size() >= 12);
    for (const auto& f : fixtures) {
        CAPTURE(f.name);
        const auto call = classify_pattern(sized(f.voxels, f.spacing));
        CHECK(call.label == f.expected);
        CHECK(call.rule == f.rule);
        CHECK(call.lesion_count == static_cast<std::int64_t>(f.voxels.size()));
    }
    const auto evidence = classify_pattern(sized({9600, 400}));
    CHECK(evidence.largest_fraction == doctest::Approx(0.96));
    CHECK(evidence.total_volume_ml == doctest::Approx(10.0));
}

TEST_CASE("stroke pattern from real masks") {
    VoxelMask m(Grid{{30, 30, 10}, {1, 1, 1}});
    synth::fill_box(m, 0, 0, 0, 10, 10, 10);      // 1000
    synth::fill_box(m, 20, 0, 0, 22, 2, 2);       // 8
    synth::fill_box(m, 20, 20, 0, 22, 22, 2);     // 8
    const auto call = classify_pattern(connected_components(m));
    CHECK(call.lesion_count == 3);
    CHECK(call.label == StrokePattern::SVI);  // 1000 / 1016 = 98.4%

    VoxelMask scattered(Grid{{30, 30, 10}, {1, 1, 1}});
    for (int k = 0; k < 5; ++k) synth::fill_box(scattered, 5 * k, 0, 0, 5 * k + 3, 3, 3);
    CHECK(classify_pattern(connected_components(scattered)).label == StrokePattern::ScatteredInfarcts);
    CHECK(classify_pattern(connected_components(VoxelMask(m.grid()))).label == StrokePattern::NoIschemia);
}

TEST_CASE("ratio clauses are scale invariant when totals stay at or above 5 ml") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::int64_t> size(1, 4000);
    std::uniform_int_distribution<int> count(1, 6);
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::int64_t> v(count(rng));
        for (auto& x : v) x = size(rng);
        const std::int64_t k = 2 + trial % 4;
        std::vector<std::int64_t> scaled(v);
        for (auto& x : scaled) x *= k;
        const auto a = classify_pattern(sized(v)), b = classify_pattern(sized(scaled));
        CHECK(b.total_volume_ml >= a.total_volume_ml);
        if (a.total_volume_ml >= 5.0) {
            CHECK(a.label == b.label);
            ++checked;
        }
        // deterministic and total
        CHECK(classify_pattern(sized(v)).label == a.label);
    }
    CHECK(checked > 100);
}

TEST_CASE("pattern names roundtrip") {
    for (const auto p : kStrokePatterns) CHECK(stroke_pattern_from_string(to_string(p)) == p);
    CHECK_FALSE(stroke_pattern_from_string("Lacunar").has_value());
}

TEST_CASE("territory: argmax over boxes of known volume") {
    const auto atlas = box_atlas();  // 10 mm voxels: 1 voxel = 1 ml
    VoxelMask m(atlas.grid);
    put_in_box(m, 0, 10);
    put_in_box(m, 2, 2);
    const auto a = territory_assignment(connected_components(m), atlas);
    CHECK(a.territory == Territory::MCA);
    CHECK_FALSE(a.tie);
    CHECK(a.load(Territory::MCA) == 10.0);
    CHECK(a.load(Territory::PCA) == 2.0);
    CHECK(a.load(Territory::ACA) == 0.0);

    VoxelMask m2(atlas.grid);
    put_in_box(m2, 2, 3);
    put_in_box(m2, 3, 3);
    put_in_box(m2, 4, 1);
    const auto b = territory_assignment(connected_components(m2), atlas);
    CHECK(b.territory == Territory::PCA);
    CHECK(b.tie);

    VoxelMask m3(atlas.grid);
    put_in_box(m3, 4, 7);
    put_in_box(m3, 1, 6);
    CHECK(territory_assignment(connected_components(m3), atlas).territory == Territory::PonsMedulla);
}

TEST_CASE("territory: one lesion spanning two boxes loads both") {
    const auto atlas = box_atlas();
    VoxelMask m(atlas.grid);
    synth::fill_box(m, 2, 0, 0, 7, 1, 1);  // x 2..6: 2 voxels in MCA, 3 in ACA
    const auto l = connected_components(m);
    CHECK(l.lesion_count == 1);
    const auto a = territory_assignment(l, atlas);
    CHECK(a.load_voxels[0] == 2);
    CHECK(a.load_voxels[1] == 3);
    CHECK(a.territory == Territory::ACA);
}

TEST_CASE("territory: loads never exceed the lesion volume") {
    const auto atlas = box_atlas(1.0);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = synth::random_mask(atlas.grid, 0.2, rng);
        const auto l = connected_components(m);
        const auto a = territory_assignment(l, atlas);
        double sum = 0.0;
        std::int64_t inside = 0;
        for (std::size_t i = 0; i < l.label_map.size(); ++i) inside += (l.label_map[i] > 0 && atlas.labels[i] > 0);
        for (const auto t : kTerritories) {
            CHECK(a.load(t) >= 0.0);
            CHECK(a.load(t) <= a.load(a.territory));
            sum += a.load(t);
        }
        CHECK(sum <= l.total_volume_ml + 1e-12);
        CHECK(sum == doctest::Approx(atlas.grid.volume_ml(inside)));
    }
}

TEST_CASE("territory errors") {
    const auto atlas = box_atlas();
    try {
        (void)territory_assignment(connected_components(VoxelMask(atlas.grid)), atlas);
        FAIL("expected NoLesionLoad");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoLesionLoad);
    }
    VoxelMask outside(atlas.grid);
    synth::fill_box(outside, 20, 0, 0, 22, 2, 2);
    CHECK_THROWS_AS((void)territory_assignment(connected_components(outside), atlas), Error);

    VoxelMask small(synth::cube(4));
    small.set(0, 0, 0, true);
    try {
        (void)territory_assignment(connected_components(small), atlas);
        FAIL("expected GridMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::GridMismatch);
    }

    auto bad = atlas;
    bad.labels[0] = 9;
    try {
        bad.validate();
        FAIL("expected UnknownAtlasLabel");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownAtlasLabel);
    }
}

TEST_CASE("legend parsing and atlas loading") {
    const auto legend = parse_legend(R"({"1": "MCA", "2": "ACA", "3": "PCA", "4": "Cerebellum", "5": "PonsMedulla"})");
    CHECK(legend.size() == 5);
    CHECK(legend.at(4) == Territory::Cerebellum);
    CHECK_THROWS_AS(parse_legend(R"({"1": "Thalamus"})"), Error);
    CHECK_THROWS_AS(parse_legend(R"({"x": "MCA"})"), Error);
    CHECK_THROWS_AS(parse_legend(R"({"0": "MCA"})"), Error);
    CHECK_THROWS_AS(parse_legend("[1, 2]"), Error);
    CHECK_THROWS_AS(parse_legend("{"), Error);

    const auto ref = box_atlas(2.0);
    synth::TempDir dir;
    std::vector<double> values(ref.labels.begin(), ref.labels.end());
    write_volume(VolumeHeader::make(ref.grid, Datatype::Int16), values, dir / "atlas.nii.gz");
    std::ofstream(dir / "legend.json") << R"({"1": "MCA", "2": "ACA", "3": "PCA", "4": "Cerebellum", "5": "PonsMedulla"})";
    const auto loaded = load_atlas(dir / "atlas.nii.gz", dir / "legend.json");
    CHECK(loaded.labels == ref.labels);
    CHECK(loaded.legend == ref.legend);
    CHECK(same_grid(loaded.grid, ref.grid));

    std::ofstream(dir / "short.json") << R"({"1": "MCA"})";
    CHECK_THROWS_AS((void)load_atlas(dir / "atlas.nii.gz", dir / "short.json"), Error);
}

TEST_CASE("classification report") {
    const std::vector<std::string> classes{"SVI", "ScatteredInfarcts", "SVIWithScattered"};

    SUBCASE("perfect predictions") {
        const std::vector<std::string> t{"SVI", "SVIWithScattered", "ScatteredInfarcts", "SVI"};
        const auto r = classification_report(t, t, classes);
        CHECK(r.balanced_accuracy == 1.0);
        CHECK(r.accuracy == 1.0);
        for (const double f : r.f1) CHECK(f == 1.0);
    }
    SUBCASE("recalls 1.0 and 0.5") {
        const std::vector<std::string> cls{"a", "b"};
        const std::vector<std::string> t{"a", "a", "b", "b"}, p{"a", "a", "a", "b"};
        const auto r = classification_report(t, p, cls);
        CHECK(r.recall == std::vector<double>{1.0, 0.5});
        CHECK(r.balanced_accuracy == 0.75);
        CHECK(r.accuracy == 0.75);
        CHECK(r.precision[0] == doctest::Approx(2.0 / 3.0));
        CHECK(r.f1[0] == doctest::Approx(0.8));        // 2*2 / (4 + 1 + 0)
        CHECK(r.f1[1] == doctest::Approx(2.0 / 3.0));  // 2*1 / (2 + 0 + 1)
        CHECK(r.count(1, 0) == 1);
        CHECK(r.support == std::vector<std::int64_t>{2, 2});
    }
    SUBCASE("class without truth instances is excluded and flagged") {
        const std::vector<std::string> t{"SVI", "SVI", "SVIWithScattered"},
            p{"SVI", "ScatteredInfarcts", "SVIWithScattered"};
        const auto r = classification_report(t, p, classes);
        CHECK(r.excluded_from_balanced == std::vector<std::string>{"ScatteredInfarcts"});
        CHECK(r.balanced_accuracy == 0.75);
        CHECK(r.f1[1] == 0.0);
    }
    SUBCASE("brute-force confusion oracle on random 3-class labels") {
        std::mt19937_64 rng(86);
        std::uniform_int_distribution<int> pick(0, 2);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::string> t(150), p(150);
            for (std::size_t i = 0; i < t.size(); ++i) {
                t[i] = classes[pick(rng)];
                p[i] = pick(rng) == 0 ? classes[pick(rng)] : t[i];
            }
            const auto r = classification_report(t, p, classes);
            double recall_sum = 0;
            for (std::size_t c = 0; c < 3; ++c) {
                std::int64_t tp = 0, fp = 0, fn = 0;
                for (std::size_t i = 0; i < t.size(); ++i) {
                    tp += t[i] == classes[c] && p[i] == classes[c];
                    fp += t[i] != classes[c] && p[i] == classes[c];
                    fn += t[i] == classes[c] && p[i] != classes[c];
                }
                for (std::size_t d = 0; d < 3; ++d) {
                    std::int64_t n = 0;
                    for (std::size_t i = 0; i < t.size(); ++i) n += t[i] == classes[c] && p[i] == classes[d];
                    CHECK(r.count(c, d) == n);
                }
                CHECK(r.f1[c] == doctest::Approx(2.0 * tp / double(2 * tp + fp + fn)).epsilon(1e-14));
                recall_sum += double(tp) / double(tp + fn);
            }
            CHECK(r.balanced_accuracy == doctest::Approx(recall_sum / 3.0).epsilon(1e-14));
            const auto self = classification_report(t, t, classes);
            CHECK(self.balanced_accuracy == 1.0);
        }
    }
    SUBCASE("errors") {
        const std::vector<std::string> one{"SVI"}, two{"SVI", "SVI"}, unknown{"Lacunar"};
        try {
            (void)classification_report(one, two, classes);
            FAIL("expected LengthMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::LengthMismatch);
        }
        CHECK_THROWS_AS((void)classification_report(unknown, one, classes), Error);
    }
}

}  // TEST_SUITE
