#include "strokeval/metrics.hpp"

#include <cstdlib>

#include "strokeval/error.hpp"

namespace strokeval {

double dice(const VoxelMask& gt, const VoxelMask& pred) {
    require_same_grid(gt.grid(), pred.grid(), "dice");
    std::int64_t a = 0, b = 0, both = 0;
    const auto g = gt.voxels();
    const auto p = pred.voxels();
    for (std::size_t i = 0; i < g.size(); ++i) {
        a += g[i];
        b += p[i];
        both += g[i] & p[i];
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double avd(const VoxelMask& gt, const VoxelMask& pred) {
    require_same_grid(gt.grid(), pred.grid(), "avd");
    return std::abs(mask_volume_ml(pred) - mask_volume_ml(gt));
}

LesionDetection lesion_f1(const LesionLabeling& gt, const LesionLabeling& pred) {
    require_same_grid(gt.grid, pred.grid, "lesion_f1");
    std::vector<char> gt_hit(static_cast<std::size_t>(gt.lesion_count), 0);
    std::vector<char> pred_hit(static_cast<std::size_t>(pred.lesion_count), 0);
    for (std::size_t i = 0; i < gt.label_map.size(); ++i) {
        const auto lg = gt.label_map[i];
        const auto lp = pred.label_map[i];
        if (lg > 0 && lp > 0) {
            gt_hit[static_cast<std::size_t>(lg - 1)] = 1;
            pred_hit[static_cast<std::size_t>(lp - 1)] = 1;
        }
    }
    LesionDetection out;
    for (const char h : gt_hit) (h ? out.tp : out.fn) += 1;
    for (const char h : pred_hit) out.fp += h ? 0 : 1;
    const auto denom = 2 * out.tp + out.fp + out.fn;
    out.f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(out.tp) / static_cast<double>(denom);
    return out;
}

std::int64_t ald(const LesionLabeling& gt, const LesionLabeling& pred) {
    return std::llabs(static_cast<long long>(gt.lesion_count) - pred.lesion_count);
}

CaseMetrics evaluate_case(const VoxelMask& gt, const VoxelMask& pred, Connectivity conn) {
    require_same_grid(gt.grid(), pred.grid(), "evaluate_case");
    return evaluate_case(gt, connected_components(gt, conn), pred, conn);
}

CaseMetrics evaluate_case(const VoxelMask& gt, const LesionLabeling& gt_labels, const VoxelMask& pred,
                          Connectivity conn) {
    require_same_grid(gt.grid(), pred.grid(), "evaluate_case");
    const auto pred_labels = connected_components(pred, conn);
    const auto detection = lesion_f1(gt_labels, pred_labels);

    CaseMetrics m;
    m.dsc = dice(gt, pred);
    m.gt_volume_ml = gt_labels.total_volume_ml;
    m.pred_volume_ml = pred_labels.total_volume_ml;
    m.avd_ml = std::abs(m.pred_volume_ml - m.gt_volume_ml);
    m.lesion_f1 = detection.f1;
    m.lesion_tp = detection.tp;
    m.lesion_fp = detection.fp;
    m.lesion_fn = detection.fn;
    m.gt_lesion_count = gt_labels.lesion_count;
    m.pred_lesion_count = pred_labels.lesion_count;
    m.ald = ald(gt_labels, pred_labels);
    return m;
}

}  // namespace strokeval
