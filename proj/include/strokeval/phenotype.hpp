#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strokeval/components.hpp"
#include "strokeval/grid.hpp"

namespace strokeval {

// ---------------------------------------------------------------------------
// stroke pattern

enum class StrokePattern { NoIschemia, SVI, ScatteredInfarcts, SVIWithScattered };

inline constexpr std::array<StrokePattern, 4> kStrokePatterns{
    StrokePattern::NoIschemia, StrokePattern::SVI, StrokePattern::ScatteredInfarcts, StrokePattern::SVIWithScattered};

std::string_view to_string(StrokePattern pattern) noexcept;
std::optional<StrokePattern> stroke_pattern_from_string(std::string_view name) noexcept;

struct PatternCall {
    StrokePattern label = StrokePattern::NoIschemia;
    int rule = 1;  // 1-based index of the rule that fired
    double largest_fraction = 0.0;
    std::int64_t lesion_count = 0;
    double total_volume_ml = 0.0;
};

// Rules, first match wins:
//   1. total volume 0                                   -> NoIschemia
//   2. largest lesion > 95% of total volume             -> SVI
//   3. >= 3 lesions and (largest < 60% or total < 5 ml) -> ScatteredInfarcts
//   4. otherwise                                        -> SVIWithScattered
// Only lesion_voxels and grid are consulted; fractions are compared on
// integer voxel counts so the 95% and 60% boundaries are exact.
PatternCall classify_pattern(const LesionLabeling& labeling);

// ---------------------------------------------------------------------------
// vascular territory

enum class Territory { MCA, ACA, PCA, Cerebellum, PonsMedulla };

inline constexpr std::array<Territory, 5> kTerritories{Territory::MCA, Territory::ACA, Territory::PCA,
                                                       Territory::Cerebellum, Territory::PonsMedulla};

std::string_view to_string(Territory territory) noexcept;
std::optional<Territory> territory_from_string(std::string_view name) noexcept;

// Territory label map already registered to mask space. Label 0 is
// background; every other label must appear in the legend.
struct TerritoryAtlas {
    Grid grid;
    std::vector<std::int32_t> labels;
    std::map<std::int32_t, Territory> legend;

    void validate() const;
};

// Legend JSON: {"1": "MCA", "2": "ACA", ...}
std::map<std::int32_t, Territory> parse_legend(std::string_view json_text);
TerritoryAtlas load_atlas(const std::filesystem::path& label_map, const std::filesystem::path& legend_json);

struct TerritoryAssignment {
    Territory territory = Territory::MCA;
    std::array<std::int64_t, 5> load_voxels{};
    std::array<double, 5> load_ml{};
    bool tie = false;

    double load(Territory t) const { return load_ml[static_cast<std::size_t>(t)]; }
};

// Voxel-wise lesion load per territory; the territory with the largest load
// wins, exact ties go to the earliest territory in enum order with tie=true.
// NoLesionLoad when no lesion voxel falls inside any territory.
TerritoryAssignment territory_assignment(const LesionLabeling& labeling, const TerritoryAtlas& atlas);

// ---------------------------------------------------------------------------
// multi-class classification metrics

struct ClassificationReport {
    std::vector<std::string> classes;
    std::vector<std::int64_t> confusion;   // truth row x predicted column
    std::vector<std::int64_t> support;     // truth count per class
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;                // 2TP / (2TP + FP + FN), 0 when undefined
    std::vector<std::string> excluded_from_balanced;  // classes with no truth instances
    double balanced_accuracy = 0.0;        // mean recall over classes with support
    double accuracy = 0.0;

    std::int64_t count(std::size_t truth, std::size_t predicted) const {
        return confusion[truth * classes.size() + predicted];
    }
};

ClassificationReport classification_report(std::span<const std::string> truth, std::span<const std::string> predicted,
                                            std::span<const std::string> classes);

}  // namespace strokeval
