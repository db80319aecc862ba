#pragma once

#include <cstdint>

#include "strokeval/components.hpp"
#include "strokeval/nifti.hpp"

namespace strokeval {

// Per-case record of the four challenge metrics plus the quantities they derive from.
struct CaseMetrics {
    double dsc = 0.0;
    double avd_ml = 0.0;
    double lesion_f1 = 0.0;
    std::int64_t ald = 0;
    double gt_volume_ml = 0.0;
    double pred_volume_ml = 0.0;
    std::int64_t gt_lesion_count = 0;
    std::int64_t pred_lesion_count = 0;
    std::int64_t lesion_tp = 0;
    std::int64_t lesion_fp = 0;
    std::int64_t lesion_fn = 0;
};

struct LesionDetection {
    double f1 = 0.0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const VoxelMask& gt, const VoxelMask& pred);

// |V(pred) - V(gt)| in ml.
double avd(const VoxelMask& gt, const VoxelMask& pred);

// Lesion-level detection with any-voxel overlap matching. A GT lesion is a
// true positive when at least one of its voxels is predicted; a predicted
// lesion is a false positive when none of its voxels lies in GT foreground.
// F1 = 2TP / (2TP + FP + FN), 1.0 when both labelings are empty.
LesionDetection lesion_f1(const LesionLabeling& gt, const LesionLabeling& pred);

std::int64_t ald(const LesionLabeling& gt, const LesionLabeling& pred);

CaseMetrics evaluate_case(const VoxelMask& gt, const VoxelMask& pred, Connectivity conn = kDefaultConnectivity);

// Same, reusing a GT labeling computed with the same connectivity.
CaseMetrics evaluate_case(const VoxelMask& gt, const LesionLabeling& gt_labels, const VoxelMask& pred,
                          Connectivity conn = kDefaultConnectivity);

}  // namespace strokeval
