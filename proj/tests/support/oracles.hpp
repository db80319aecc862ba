#pragma once

// Independent reference implementations used only by tests. They favour
// obviousness over speed and share no code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "strokeval/components.hpp"
#include "strokeval/nifti.hpp"

namespace oracle {

using strokeval::Connectivity;
using strokeval::Grid;
using strokeval::VoxelMask;

struct Voxel {
    std::int64_t x, y, z;
};

inline Voxel coords(const Grid& g, std::size_t i) {
    const auto x = static_cast<std::int64_t>(i) % g.dims[0];
    const auto y = (static_cast<std::int64_t>(i) / g.dims[0]) % g.dims[1];
    const auto z = static_cast<std::int64_t>(i) / (g.dims[0] * g.dims[1]);
    return {x, y, z};
}

// Neighbour definition straight from the geometry: Chebyshev distance 1 and
// Manhattan distance <= 1 (6), <= 2 (18) or <= 3 (26).
inline bool adjacent(const Voxel& a, const Voxel& b, Connectivity conn) {
    const auto dx = std::llabs(a.x - b.x), dy = std::llabs(a.y - b.y), dz = std::llabs(a.z - b.z);
    if (std::max({dx, dy, dz}) != 1) return false;
    const auto manhattan = dx + dy + dz;
    switch (conn) {
        case Connectivity::Six: return manhattan <= 1;
        case Connectivity::Eighteen: return manhattan <= 2;
        case Connectivity::TwentySix: return manhattan <= 3;
    }
    return false;
}

// Components as sets of voxel indices via iterated minimum-label propagation
// over all foreground pairs. Quadratic; only for small grids.
inline std::vector<std::set<std::size_t>> components(const VoxelMask& mask, Connectivity conn) {
    const Grid& g = mask.grid();
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) fg.push_back(i);
    }
    std::vector<std::vector<std::size_t>> nbrs(fg.size());
    for (std::size_t a = 0; a < fg.size(); ++a) {
        const Voxel va = coords(g, fg[a]);
        for (std::size_t b = a + 1; b < fg.size(); ++b) {
            const Voxel vb = coords(g, fg[b]);
            if (std::llabs(va.z - vb.z) > 1) {
                if (vb.z > va.z + 1) break;  // fg is sorted by index, so by z
                continue;
            }
            if (adjacent(va, vb, conn)) {
                nbrs[a].push_back(b);
                nbrs[b].push_back(a);
            }
        }
    }
    std::vector<std::size_t> label(fg.size());
    for (std::size_t a = 0; a < fg.size(); ++a) label[a] = a;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t a = 0; a < fg.size(); ++a) {
            for (const auto b : nbrs[a]) {
                if (label[b] < label[a]) {
                    label[a] = label[b];
                    changed = true;
                }
            }
        }
    }
    std::map<std::size_t, std::set<std::size_t>> groups;
    for (std::size_t a = 0; a < fg.size(); ++a) groups[label[a]].insert(fg[a]);
    std::vector<std::set<std::size_t>> out;
    for (auto& [_, s] : groups) out.push_back(std::move(s));
    return out;
}

struct Metrics {
    double dsc, avd_ml, f1;
    std::int64_t ald, tp, fp, fn;
};

inline std::set<std::size_t> foreground(const VoxelMask& m) {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i]) s.insert(i);
    }
    return s;
}

inline bool intersects(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    for (const auto v : a) {
        if (b.contains(v)) return true;
    }
    return false;
}

inline Metrics metrics(const VoxelMask& gt, const VoxelMask& pred, Connectivity conn) {
    const auto A = foreground(gt), B = foreground(pred);
    std::vector<std::size_t> both;
    std::set_intersection(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(both));
    Metrics m{};
    m.dsc = (A.empty() && B.empty()) ? 1.0 : 2.0 * double(both.size()) / double(A.size() + B.size());
    const double mm3 = gt.grid().voxel_volume_mm3();
    m.avd_ml = std::abs(double(B.size()) * mm3 / 1000.0 - double(A.size()) * mm3 / 1000.0);

    const auto gc = components(gt, conn), pc = components(pred, conn);
    // full overlap table
    std::vector<std::vector<bool>> overlap(gc.size(), std::vector<bool>(pc.size(), false));
    for (std::size_t i = 0; i < gc.size(); ++i) {
        for (std::size_t j = 0; j < pc.size(); ++j) overlap[i][j] = intersects(gc[i], pc[j]);
    }
    for (std::size_t i = 0; i < gc.size(); ++i) {
        const bool hit = std::any_of(overlap[i].begin(), overlap[i].end(), [](bool b) { return b; });
        (hit ? m.tp : m.fn) += 1;
    }
    for (std::size_t j = 0; j < pc.size(); ++j) {
        bool hit = false;
        for (std::size_t i = 0; i < gc.size(); ++i) hit = hit || overlap[i][j];
        if (!hit) ++m.fp;
    }
    const auto denom = 2 * m.tp + m.fp + m.fn;
    m.f1 = denom == 0 ? 1.0 : 2.0 * double(m.tp) / double(denom);
    m.ald = std::llabs(std::int64_t(gc.size()) - std::int64_t(pc.size()));
    return m;
}

// Two-sided exact signed-rank p by listing all 2^n sign patterns.
inline double signed_rank_enumeration(const std::vector<double>& diffs) {
    std::vector<double> d;
    for (const double v : diffs) {
        if (v != 0.0) d.push_back(v);
    }
    const std::size_t n = d.size();
    if (n == 0) return 1.0;
    // average ranks of |d| computed by counting
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(d[j]) < std::abs(d[i])) ++less;
            else if (std::abs(d[j]) == std::abs(d[i])) ++equal;
        }
        rank[i] = less + (equal + 1.0) / 2.0;
    }
    double observed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] > 0) observed += rank[i];
    }
    std::int64_t le = 0, ge = 0;
    const std::uint64_t patterns = 1ull << n;
    for (std::uint64_t bits = 0; bits < patterns; ++bits) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (bits >> i & 1u) w += rank[i];
        }
        if (w <= observed + 1e-9) ++le;
        if (w >= observed - 1e-9) ++ge;
    }
    return std::min(1.0, 2.0 * double(std::min(le, ge)) / double(patterns));
}

// Two-sided exact rank-sum p for untied samples by listing every way of
// choosing |a| of the pooled ranks. Only for small pooled sizes.
inline double rank_sum_enumeration(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = pooled.size();
    std::vector<int> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        int r = 1;
        for (std::size_t j = 0; j < n; ++j) r += pooled[j] < pooled[i] ? 1 : 0;
        rank[i] = r;
    }
    int observed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) observed += rank[i];
    std::int64_t le = 0, ge = 0, all = 0;
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
        if (static_cast<std::size_t>(__builtin_popcount(bits)) != a.size()) continue;
        int s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (bits >> i & 1u) s += static_cast<int>(i) + 1;
        }
        ++all;
        le += s <= observed;
        ge += s >= observed;
    }
    return std::min(1.0, 2.0 * double(std::min(le, ge)) / double(all));
}

}  // namespace oracle
