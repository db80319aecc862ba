#pragma once

#include <cstdint>
#include <vector>

#include "strokeval/grid.hpp"
#include "strokeval/nifti.hpp"

namespace strokeval {

// Voxel neighbourhood used to decide whether two foreground voxels touch:
// faces (6), faces+edges (18) or faces+edges+corners (26).
enum class Connectivity : int { Six = 6, Eighteen = 18, TwentySix = 26 };

constexpr Connectivity kDefaultConnectivity = Connectivity::TwentySix;

// Throws InvalidArgument for anything other than 6, 18 or 26.
Connectivity connectivity_from_int(int value);

enum class LabelingStrategy { UnionFind, FloodFill };

// Lesion instances of a mask. Labels are 1..lesion_count, numbered in the
// raster order (x fastest) of each component's first voxel; 0 is background.
struct LesionLabeling {
    Grid grid;
    std::vector<std::int32_t> label_map;
    std::int32_t lesion_count = 0;
    std::vector<std::int64_t> lesion_voxels;      // indexed by label - 1
    std::vector<double> lesion_volumes_ml;        // indexed by label - 1
    double total_volume_ml = 0.0;

    std::int64_t total_voxels() const noexcept;
    // 0 when empty
    std::int64_t largest_lesion_voxels() const noexcept;
};

LesionLabeling connected_components(const VoxelMask& mask, Connectivity conn = kDefaultConnectivity,
                                    LabelingStrategy strategy = LabelingStrategy::UnionFind);

double mask_volume_ml(const VoxelMask& mask);

}  // namespace strokeval
