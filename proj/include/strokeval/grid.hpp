#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace strokeval {

// Voxel lattice shared by masks, label maps and atlases. Storage order is
// x-fastest, matching the on-disk NIfTI layout.
struct Grid {
    std::array<std::int64_t, 3> dims{1, 1, 1};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    }

    std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return static_cast<std::size_t>((z * dims[1] + y) * dims[0] + x);
    }

    double voxel_volume_mm3() const noexcept { return spacing_mm[0] * spacing_mm[1] * spacing_mm[2]; }
    double voxel_volume_ml() const noexcept { return voxel_volume_mm3() / 1000.0; }

    // Volume of `count` voxels. Multiplying before dividing keeps integral
    // mm3 totals exact (5000 voxels at 1 mm3 is exactly 5 ml).
    double volume_ml(std::int64_t count) const noexcept {
        return static_cast<double>(count) * voxel_volume_mm3() / 1000.0;
    }

    std::string describe() const;
};

// Same dims and spacing within a relative 1e-6 (spacings come from float32 headers).
bool same_grid(const Grid& a, const Grid& b) noexcept;

// Throws GridMismatch naming `what` when the grids differ.
void require_same_grid(const Grid& a, const Grid& b, const char* what);

}  // namespace strokeval
