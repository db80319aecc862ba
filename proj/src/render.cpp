#include "strokeval/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "strokeval/error.hpp"
#include "strokeval/stats.hpp"

namespace strokeval::render {

namespace {

struct PlaneAxes {
    int u;      // image column axis
    int v;      // image row axis, increasing upwards
    int normal;
};

PlaneAxes axes(Plane plane) {
    return plane == Plane::Axial ? PlaneAxes{0, 1, 2} : PlaneAxes{1, 2, 0};
}

// Foreground count of each slice along `axis` for the union of two masks.
std::vector<std::int64_t> union_profile(const VoxelMask& a, const VoxelMask& b, int axis) {
    const auto& d = a.grid().dims;
    std::vector<std::int64_t> out(static_cast<std::size_t>(d[axis]), 0);
    for (std::int64_t z = 0; z < d[2]; ++z)
        for (std::int64_t y = 0; y < d[1]; ++y)
            for (std::int64_t x = 0; x < d[0]; ++x) {
                const auto i = a.grid().index(x, y, z);
                if (a[i] || b[i]) ++out[static_cast<std::size_t>(axis == 0 ? x : axis == 1 ? y : z)];
            }
    return out;
}

std::int64_t argmax(const std::vector<std::int64_t>& v, std::int64_t exclude_center, std::int64_t exclude_radius) {
    std::int64_t best = -1;
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(v.size()); ++k) {
        if (exclude_center >= 0 && std::abs(k - exclude_center) < exclude_radius) continue;
        if (best < 0 || v[static_cast<std::size_t>(k)] > v[static_cast<std::size_t>(best)]) best = k;
    }
    return best;
}

}  // namespace

SliceChoice choose_slices(const VoxelMask& a, const VoxelMask& b) {
    require_same_grid(a.grid(), b.grid(), "annotation pair");
    const auto& d = a.grid().dims;
    SliceChoice out;
    const auto axial = union_profile(a, b, 2);
    const auto sagittal = union_profile(a, b, 0);
    const bool empty = std::all_of(axial.begin(), axial.end(), [](auto n) { return n == 0; });
    const std::int64_t gap = std::max<std::int64_t>(1, d[2] / 8);
    if (empty) {
        out.axial[0] = d[2] / 2;
        out.axial[1] = d[2] > 1 ? std::min(d[2] - 1, d[2] / 2 + gap) : 0;
        out.sagittal = d[0] / 2;
        return out;
    }
    out.axial[0] = argmax(axial, -1, 0);
    const auto second = argmax(axial, out.axial[0], gap);
    out.axial[1] = second >= 0 ? second : out.axial[0];
    if (out.axial[1] < out.axial[0]) std::swap(out.axial[0], out.axial[1]);
    out.sagittal = argmax(sagittal, -1, 0);
    return out;
}

Window intensity_window(std::span<const double> values) {
    std::vector<double> nonzero;
    for (const double v : values)
        if (v != 0.0 && std::isfinite(v)) nonzero.push_back(v);
    if (nonzero.empty()) return {};
    Window w{stats::percentile(nonzero, 1.0), stats::percentile(nonzero, 99.0)};
    if (!(w.high > w.low)) w.high = w.low + 1.0;
    return w;
}

Image render_slice(const Grid& grid, std::span<const double> background, const Window& window, const VoxelMask& mask,
                   Plane plane, std::int64_t index, const OverlayStyle& style) {
    require_same_grid(grid, mask.grid(), "rendering");
    if (!background.empty() && background.size() != grid.size()) {
        throw Error(ErrorCode::GridMismatch, "background volume size differs from the mask");
    }
    const auto ax = axes(plane);
    const auto nu = grid.dims[ax.u];
    const auto nv = grid.dims[ax.v];
    if (index < 0 || index >= grid.dims[ax.normal]) throw Error(ErrorCode::InvalidArgument, "slice index out of range");
    const double su = grid.spacing_mm[ax.u];
    const double sv = grid.spacing_mm[ax.v];
    const double pixel = std::min(su, sv);
    const auto w0 = std::max<std::int64_t>(1, std::llround(static_cast<double>(nu) * su / pixel));
    const auto h0 = std::max<std::int64_t>(1, std::llround(static_cast<double>(nv) * sv / pixel));
    const auto longest = std::max(w0, h0);
    const auto factor = std::clamp<std::int64_t>((style.min_size + longest - 1) / longest, 1, 16);

    Image img;
    img.width = static_cast<int>(w0 * factor);
    img.height = static_cast<int>(h0 * factor);
    const auto W = static_cast<std::int64_t>(img.width);
    const auto H = static_cast<std::int64_t>(img.height);

    auto voxel = [&](std::int64_t c, std::int64_t r) {
        const auto iu = std::min(nu - 1, (2 * c + 1) * nu / (2 * W));
        const auto iv = nv - 1 - std::min(nv - 1, (2 * r + 1) * nv / (2 * H));
        std::array<std::int64_t, 3> p{};
        p[ax.u] = iu;
        p[ax.v] = iv;
        p[ax.normal] = index;
        return grid.index(p[0], p[1], p[2]);
    };
    std::vector<std::size_t> lookup(static_cast<std::size_t>(W * H));
    for (std::int64_t r = 0; r < H; ++r)
        for (std::int64_t c = 0; c < W; ++c) lookup[static_cast<std::size_t>(r * W + c)] = voxel(c, r);
    auto inside = [&](std::int64_t c, std::int64_t r) {
        if (c < 0 || r < 0 || c >= W || r >= H) return false;
        return mask[lookup[static_cast<std::size_t>(r * W + c)]] != 0;
    };

    img.rgb.resize(static_cast<std::size_t>(W * H * 3));
    const double span = window.high - window.low;
    for (std::int64_t r = 0; r < H; ++r) {
        for (std::int64_t c = 0; c < W; ++c) {
            const auto i = lookup[static_cast<std::size_t>(r * W + c)];
            double g = 0.0;
            if (!background.empty()) g = std::clamp((background[i] - window.low) / span, 0.0, 1.0) * 255.0;
            std::array<double, 3> px{g, g, g};
            if (mask[i]) {
                const bool edge = !inside(c - 1, r) || !inside(c + 1, r) || !inside(c, r - 1) || !inside(c, r + 1);
                for (int k = 0; k < 3; ++k) {
                    px[k] = edge ? style.color[k] : (1.0 - style.fill_alpha) * g + style.fill_alpha * style.color[k];
                }
            }
            auto* out = &img.rgb[static_cast<std::size_t>((r * W + c) * 3)];
            for (int k = 0; k < 3; ++k) out[k] = static_cast<std::uint8_t>(std::lround(px[k]));
        }
    }
    return img;
}

void write_png(const Image& image, const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw Error(ErrorCode::Io, "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error(ErrorCode::Io, "PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < image.height; ++r) {
        png_write_row(png, const_cast<png_bytep>(&image.rgb[static_cast<std::size_t>(r) * image.width * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw Error(ErrorCode::Io, "cannot finish " + path.string());
}

}  // namespace strokeval::render
