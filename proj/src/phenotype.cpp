#include "strokeval/phenotype.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "strokeval/error.hpp"
#include "strokeval/nifti.hpp"

namespace strokeval {

std::string_view to_string(StrokePattern pattern) noexcept {
    switch (pattern) {
        case StrokePattern::NoIschemia: return "NoIschemia";
        case StrokePattern::SVI: return "SVI";
        case StrokePattern::ScatteredInfarcts: return "ScatteredInfarcts";
        case StrokePattern::SVIWithScattered: return "SVIWithScattered";
    }
    return "";
}

std::optional<StrokePattern> stroke_pattern_from_string(std::string_view name) noexcept {
    for (const auto p : kStrokePatterns) {
        if (to_string(p) == name) return p;
    }
    return std::nullopt;
}

PatternCall classify_pattern(const LesionLabeling& labeling) {
    PatternCall call;
    const std::int64_t total = labeling.total_voxels();
    const std::int64_t largest = labeling.largest_lesion_voxels();
    call.lesion_count = static_cast<std::int64_t>(labeling.lesion_voxels.size());
    call.total_volume_ml = labeling.grid.volume_ml(total);
    call.largest_fraction = total > 0 ? static_cast<double>(largest) / static_cast<double>(total) : 0.0;

    if (total == 0) {
        call.label = StrokePattern::NoIschemia;
        call.rule = 1;
    } else if (largest * 100 > total * 95) {
        call.label = StrokePattern::SVI;
        call.rule = 2;
    } else if (call.lesion_count >= 3 && (largest * 100 < total * 60 || call.total_volume_ml < 5.0)) {
        call.label = StrokePattern::ScatteredInfarcts;
        call.rule = 3;
    } else {
        call.label = StrokePattern::SVIWithScattered;
        call.rule = 4;
    }
    return call;
}

std::string_view to_string(Territory territory) noexcept {
    switch (territory) {
        case Territory::MCA: return "MCA";
        case Territory::ACA: return "ACA";
        case Territory::PCA: return "PCA";
        case Territory::Cerebellum: return "Cerebellum";
        case Territory::PonsMedulla: return "PonsMedulla";
    }
    return "";
}

std::optional<Territory> territory_from_string(std::string_view name) noexcept {
    for (const auto t : kTerritories) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

void TerritoryAtlas::validate() const {
    if (labels.size() != grid.size()) throw Error(ErrorCode::InvalidArgument, "atlas label map does not match its grid");
    for (const auto l : labels) {
        if (l != 0 && !legend.contains(l)) {
            throw Error(ErrorCode::UnknownAtlasLabel, "atlas label " + std::to_string(l) + " missing from legend");
        }
    }
}

std::map<std::int32_t, Territory> parse_legend(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("legend is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "legend must be a JSON object");
    std::map<std::int32_t, Territory> legend;
    for (const auto& [key, value] : doc.items()) {
        std::int32_t label = 0;
        try {
            std::size_t used = 0;
            label = std::stoi(key, &used);
            if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidArgument, "legend key '" + key + "' is not an integer label");
        }
        if (label == 0) throw Error(ErrorCode::InvalidArgument, "legend label 0 is reserved for background");
        if (!value.is_string()) throw Error(ErrorCode::InvalidArgument, "legend value for " + key + " is not a string");
        const auto territory = territory_from_string(value.get<std::string>());
        if (!territory) {
            throw Error(ErrorCode::UnknownAtlasLabel, "unknown territory name '" + value.get<std::string>() + "'");
        }
        legend[label] = *territory;
    }
    return legend;
}

TerritoryAtlas load_atlas(const std::filesystem::path& label_map, const std::filesystem::path& legend_json) {
    std::ifstream in(legend_json);
    if (!in) throw Error(ErrorCode::Io, "cannot open legend " + legend_json.string());
    std::stringstream text;
    text << in.rdbuf();

    const Volume volume = read_volume(label_map);
    TerritoryAtlas atlas;
    atlas.grid = volume.header.grid();
    atlas.legend = parse_legend(text.str());
    const auto values = volume.values();
    atlas.labels.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::round(values[i]);
        if (std::abs(values[i] - v) > 1e-3) {
            throw Error(ErrorCode::UnknownAtlasLabel, "non-integer atlas label " + std::to_string(values[i]));
        }
        atlas.labels[i] = static_cast<std::int32_t>(v);
    }
    atlas.validate();
    return atlas;
}

TerritoryAssignment territory_assignment(const LesionLabeling& labeling, const TerritoryAtlas& atlas) {
    require_same_grid(labeling.grid, atlas.grid, "territory atlas");
    TerritoryAssignment out;
    for (std::size_t i = 0; i < labeling.label_map.size(); ++i) {
        const auto atlas_label = atlas.labels[i];
        if (atlas_label == 0) continue;
        const auto it = atlas.legend.find(atlas_label);
        if (it == atlas.legend.end()) {
            throw Error(ErrorCode::UnknownAtlasLabel, "atlas label " + std::to_string(atlas_label) + " missing from legend");
        }
        if (labeling.label_map[i] > 0) ++out.load_voxels[static_cast<std::size_t>(it->second)];
    }
    for (std::size_t t = 0; t < kTerritories.size(); ++t) out.load_ml[t] = labeling.grid.volume_ml(out.load_voxels[t]);

    const auto best = std::max_element(out.load_voxels.begin(), out.load_voxels.end());
    if (*best == 0) throw Error(ErrorCode::NoLesionLoad, "no lesion voxel lies inside any vascular territory");
    out.territory = kTerritories[static_cast<std::size_t>(best - out.load_voxels.begin())];
    out.tie = std::count(out.load_voxels.begin(), out.load_voxels.end(), *best) > 1;
    return out;
}

ClassificationReport classification_report(std::span<const std::string> truth, std::span<const std::string> predicted,
                                            std::span<const std::string> classes) {
    if (truth.size() != predicted.size()) {
        throw Error(ErrorCode::LengthMismatch, "truth and predicted label lists differ in length");
    }
    if (truth.empty()) throw Error(ErrorCode::EmptyInput, "no labels to evaluate");
    if (classes.empty()) throw Error(ErrorCode::EmptyInput, "no classes given");

    ClassificationReport r;
    r.classes.assign(classes.begin(), classes.end());
    const std::size_t nc = r.classes.size();
    auto index_of = [&](const std::string& label) {
        const auto it = std::find(r.classes.begin(), r.classes.end(), label);
        if (it == r.classes.end()) throw Error(ErrorCode::UnknownClass, "label '" + label + "' is not a listed class");
        return static_cast<std::size_t>(it - r.classes.begin());
    };
    r.confusion.assign(nc * nc, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++r.confusion[index_of(truth[i]) * nc + index_of(predicted[i])];
    }

    r.support.assign(nc, 0);
    r.precision.assign(nc, 0.0);
    r.recall.assign(nc, 0.0);
    r.f1.assign(nc, 0.0);
    std::int64_t correct = 0;
    double recall_sum = 0.0;
    std::size_t recall_classes = 0;
    for (std::size_t c = 0; c < nc; ++c) {
        std::int64_t tp = r.count(c, c), fn = 0, fp = 0;
        for (std::size_t o = 0; o < nc; ++o) {
            if (o == c) continue;
            fn += r.count(c, o);
            fp += r.count(o, c);
        }
        correct += tp;
        r.support[c] = tp + fn;
        if (tp + fp > 0) r.precision[c] = static_cast<double>(tp) / static_cast<double>(tp + fp);
        if (tp + fn > 0) {
            r.recall[c] = static_cast<double>(tp) / static_cast<double>(tp + fn);
            recall_sum += r.recall[c];
            ++recall_classes;
        } else {
            r.excluded_from_balanced.push_back(r.classes[c]);
        }
        if (2 * tp + fp + fn > 0) r.f1[c] = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
    r.balanced_accuracy = recall_classes > 0 ? recall_sum / static_cast<double>(recall_classes) : 0.0;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    return r;
}

}  // namespace strokeval
