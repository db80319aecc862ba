#include "strokeval/components.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "strokeval/error.hpp"

namespace strokeval {

namespace {

struct Offset {
    int dx, dy, dz;
};

bool in_neighbourhood(int dx, int dy, int dz, Connectivity conn) {
    const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
    if (nonzero == 0) return false;
    switch (conn) {
        case Connectivity::Six: return nonzero == 1;
        case Connectivity::Eighteen: return nonzero <= 2;
        case Connectivity::TwentySix: return true;
    }
    return false;
}

std::vector<Offset> neighbourhood(Connectivity conn, bool backward_only) {
    std::vector<Offset> out;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (!in_neighbourhood(dx, dy, dz, conn)) continue;
                const bool backward = dz < 0 || (dz == 0 && dy < 0) || (dz == 0 && dy == 0 && dx < 0);
                if (backward_only && !backward) continue;
                out.push_back({dx, dy, dz});
            }
        }
    }
    return out;
}

class DisjointSet {
public:
    std::int32_t make() {
        parent_.push_back(static_cast<std::int32_t>(parent_.size()));
        return parent_.back();
    }

    std::int32_t find(std::int32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // smaller id becomes the root so results do not depend on union order
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent_[b] = a;
        else parent_[a] = b;
    }

private:
    std::vector<std::int32_t> parent_;
};

void label_union_find(const VoxelMask& mask, Connectivity conn, std::vector<std::int32_t>& labels) {
    const Grid& g = mask.grid();
    const auto nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const auto offsets = neighbourhood(conn, true);
    std::vector<std::ptrdiff_t> linear(offsets.size());
    for (std::size_t k = 0; k < offsets.size(); ++k) {
        linear[k] = (static_cast<std::ptrdiff_t>(offsets[k].dz) * ny + offsets[k].dy) * nx + offsets[k].dx;
    }
    const auto voxels = mask.voxels();

    // provisional labels are stored +1 so that 0 stays background
    DisjointSet sets;
    for (std::int64_t z = 0; z < nz; ++z) {
        for (std::int64_t y = 0; y < ny; ++y) {
            const bool interior_yz = z > 0 && y > 0 && y + 1 < ny;
            for (std::int64_t x = 0; x < nx; ++x) {
                const std::size_t i = g.index(x, y, z);
                if (!voxels[i]) continue;
                std::int32_t current = 0;
                const bool interior = interior_yz && x > 0 && x + 1 < nx;
                for (std::size_t k = 0; k < offsets.size(); ++k) {
                    if (!interior) {
                        const auto qx = x + offsets[k].dx, qy = y + offsets[k].dy, qz = z + offsets[k].dz;
                        if (qx < 0 || qx >= nx || qy < 0 || qy >= ny || qz < 0 || qz >= nz) continue;
                    }
                    const std::int32_t other = labels[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + linear[k])];
                    if (other == 0) continue;
                    if (current == 0) current = other;
                    else if (current != other) sets.unite(current - 1, other - 1);
                }
                labels[i] = current != 0 ? current : sets.make() + 1;
            }
        }
    }

    // resolve to final ids in order of first appearance
    std::vector<std::int32_t> final_id;
    std::int32_t next = 0;
    for (auto& l : labels) {
        if (l == 0) continue;
        const std::int32_t root = sets.find(l - 1);
        if (static_cast<std::size_t>(root) >= final_id.size()) final_id.resize(static_cast<std::size_t>(root) + 1, 0);
        if (final_id[static_cast<std::size_t>(root)] == 0) final_id[static_cast<std::size_t>(root)] = ++next;
        l = final_id[static_cast<std::size_t>(root)];
    }
}

void label_flood_fill(const VoxelMask& mask, Connectivity conn, std::vector<std::int32_t>& labels) {
    const Grid& g = mask.grid();
    const auto nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const auto offsets = neighbourhood(conn, false);
    const auto voxels = mask.voxels();
    std::vector<std::array<std::int64_t, 3>> stack;
    std::int32_t next = 0;
    for (std::int64_t z = 0; z < nz; ++z) {
        for (std::int64_t y = 0; y < ny; ++y) {
            for (std::int64_t x = 0; x < nx; ++x) {
                const std::size_t seed = g.index(x, y, z);
                if (!voxels[seed] || labels[seed] != 0) continue;
                const std::int32_t id = ++next;
                labels[seed] = id;
                stack.push_back({x, y, z});
                while (!stack.empty()) {
                    const auto [px, py, pz] = stack.back();
                    stack.pop_back();
                    for (const auto& o : offsets) {
                        const auto qx = px + o.dx, qy = py + o.dy, qz = pz + o.dz;
                        if (qx < 0 || qx >= nx || qy < 0 || qy >= ny || qz < 0 || qz >= nz) continue;
                        const std::size_t q = g.index(qx, qy, qz);
                        if (voxels[q] && labels[q] == 0) {
                            labels[q] = id;
                            stack.push_back({qx, qy, qz});
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Connectivity connectivity_from_int(int value) {
    switch (value) {
        case 6: return Connectivity::Six;
        case 18: return Connectivity::Eighteen;
        case 26: return Connectivity::TwentySix;
        default: throw Error(ErrorCode::InvalidArgument, "connectivity must be 6, 18 or 26, got " + std::to_string(value));
    }
}

std::int64_t LesionLabeling::total_voxels() const noexcept {
    return std::accumulate(lesion_voxels.begin(), lesion_voxels.end(), std::int64_t{0});
}

std::int64_t LesionLabeling::largest_lesion_voxels() const noexcept {
    return lesion_voxels.empty() ? 0 : *std::max_element(lesion_voxels.begin(), lesion_voxels.end());
}

LesionLabeling connected_components(const VoxelMask& mask, Connectivity conn, LabelingStrategy strategy) {
    LesionLabeling out;
    out.grid = mask.grid();
    out.label_map.assign(mask.size(), 0);
    if (strategy == LabelingStrategy::UnionFind) {
        label_union_find(mask, conn, out.label_map);
    } else {
        label_flood_fill(mask, conn, out.label_map);
    }

    std::int32_t count = 0;
    for (const auto l : out.label_map) count = std::max(count, l);
    out.lesion_count = count;
    out.lesion_voxels.assign(static_cast<std::size_t>(count), 0);
    for (const auto l : out.label_map) {
        if (l > 0) ++out.lesion_voxels[static_cast<std::size_t>(l - 1)];
    }
    out.lesion_volumes_ml.reserve(out.lesion_voxels.size());
    for (const auto n : out.lesion_voxels) out.lesion_volumes_ml.push_back(out.grid.volume_ml(n));
    out.total_volume_ml = out.grid.volume_ml(out.total_voxels());
    return out;
}

double mask_volume_ml(const VoxelMask& mask) { return mask.grid().volume_ml(mask.foreground_count()); }

}  // namespace strokeval
