#pragma once

// Mask overlays on 2-D slices for the rating study.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "strokeval/nifti.hpp"

namespace strokeval::render {

enum class Plane { Axial, Sagittal };

// Two axial slices and one sagittal slice, chosen from the union of both
// annotations so that either annotation of a case is shown at the same
// positions. Axial: the slice with the largest union area, then the largest
// slice at least max(1, nz/8) away. Sagittal: largest union area. Empty
// unions fall back to the central slices.
struct SliceChoice {
    std::array<std::int64_t, 2> axial{};
    std::int64_t sagittal = 0;
};

SliceChoice choose_slices(const VoxelMask& a, const VoxelMask& b);

struct Window {
    double low = 0.0;
    double high = 1.0;
};

// 1st to 99th percentile of the non-zero intensities; [0, 1] when there are none.
Window intensity_window(std::span<const double> values);

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, top row first
};

struct OverlayStyle {
    std::array<std::uint8_t, 3> color{255, 40, 40};
    double fill_alpha = 0.3;
    int min_size = 256;  // the longer side is upscaled to at least this many pixels
};

// Slice `index` of `plane`, resampled to square pixels (nearest neighbour)
// with superior and anterior at the top. `background` may be empty.
Image render_slice(const Grid& grid, std::span<const double> background, const Window& window, const VoxelMask& mask,
                   Plane plane, std::int64_t index, const OverlayStyle& style = {});

void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace strokeval::render
