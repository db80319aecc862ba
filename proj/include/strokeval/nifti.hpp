#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "strokeval/grid.hpp"

namespace strokeval {

enum class Datatype : std::int16_t {
    UInt8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
};

enum class Endianness { Little, Big };

int bytes_per_sample(Datatype type) noexcept;
bool is_supported_datatype(std::int16_t code) noexcept;

using Affine = std::array<std::array<double, 4>, 4>;

// The full 348-byte NIfTI-1 header, kept field by field so that a volume
// read and written back reproduces the original bytes.
struct VolumeHeader {
    std::array<char, 10> data_type{};
    std::array<char, 18> db_name{};
    std::int32_t extents = 0;
    std::int16_t session_error = 0;
    char regular = 'r';
    char dim_info = 0;
    std::array<std::int16_t, 8> dim{3, 1, 1, 1, 1, 1, 1, 1};
    float intent_p1 = 0, intent_p2 = 0, intent_p3 = 0;
    std::int16_t intent_code = 0;
    Datatype datatype = Datatype::UInt8;
    std::int16_t bitpix = 8;
    std::int16_t slice_start = 0;
    std::array<float, 8> pixdim{1, 1, 1, 1, 1, 1, 1, 1};
    float vox_offset = 352;
    float scl_slope = 0, scl_inter = 0;
    std::int16_t slice_end = 0;
    char slice_code = 0;
    char xyzt_units = 2;  // mm
    float cal_max = 0, cal_min = 0;
    float slice_duration = 0, toffset = 0;
    std::int32_t glmax = 0, glmin = 0;
    std::array<char, 80> descrip{};
    std::array<char, 24> aux_file{};
    std::int16_t qform_code = 0, sform_code = 0;
    float quatern_b = 0, quatern_c = 0, quatern_d = 0;
    float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
    std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
    std::array<char, 16> intent_name{};
    std::array<char, 4> magic{'n', '+', '1', '\0'};

    // Bytes between the header and vox_offset (extender flag plus any
    // extensions), or trailing .hdr bytes for paired files.
    std::vector<std::byte> extension{std::byte{0}, std::byte{0}, std::byte{0}, std::byte{0}};

    Endianness endianness = Endianness::Little;

    static VolumeHeader make(const Grid& grid, Datatype type);

    Grid grid() const;
    std::array<std::int64_t, 3> spatial_dims() const;
    std::array<double, 3> spacing_mm() const;
    double voxel_volume_ml() const { return grid().voxel_volume_ml(); }
    std::size_t voxel_count() const { return grid().size(); }
    bool single_file() const noexcept { return magic[1] == '+'; }

    // srow rows when sform_code > 0, otherwise the spacing diagonal.
    Affine affine() const;

    bool operator==(const VolumeHeader&) const = default;
};

// A decoded volume. `stored` holds the on-disk sample values widened to
// double, which is lossless for every supported datatype; values() applies
// the scl_slope/scl_inter scaling.
struct Volume {
    VolumeHeader header;
    std::vector<double> stored;

    std::vector<double> values() const;
};

// Decode / encode the 348-byte header block. Endianness is inferred from the
// sizeof_hdr field on decode and taken from header.endianness on encode.
VolumeHeader decode_header(std::span<const std::byte> bytes);
std::array<std::byte, 348> encode_header(const VolumeHeader& header);

Volume read_volume(const std::filesystem::path& path);

// Writes .nii, .nii.gz, or a .hdr/.img pair (optionally .hdr.gz/.img.gz),
// chosen by the path suffix.
void write_volume(const VolumeHeader& header, std::span<const double> stored,
                  const std::filesystem::path& path);
inline void write_volume(const Volume& volume, const std::filesystem::path& path) {
    write_volume(volume.header, volume.stored, path);
}

constexpr double kDefaultBinarizeTolerance = 1e-3;

class VoxelMask {
public:
    VoxelMask() = default;
    explicit VoxelMask(const Grid& grid);
    VoxelMask(VolumeHeader header, std::vector<std::uint8_t> voxels);

    const Grid& grid() const noexcept { return grid_; }
    const VolumeHeader& header() const noexcept { return header_; }

    std::span<const std::uint8_t> voxels() const noexcept { return voxels_; }
    std::span<std::uint8_t> voxels() noexcept { return voxels_; }
    std::size_t size() const noexcept { return voxels_.size(); }

    std::uint8_t operator[](std::size_t i) const noexcept { return voxels_[i]; }
    void set(std::size_t i, bool on) noexcept { voxels_[i] = on ? 1 : 0; }
    void set(std::int64_t x, std::int64_t y, std::int64_t z, bool on) noexcept {
        voxels_[grid_.index(x, y, z)] = on ? 1 : 0;
    }
    bool at(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return voxels_[grid_.index(x, y, z)] != 0;
    }

    std::int64_t foreground_count() const noexcept;
    double voxel_volume_ml() const noexcept { return grid_.voxel_volume_ml(); }

    // u8 volume carrying this mask's header geometry (affine, descrip, ...).
    Volume to_volume() const;

private:
    VolumeHeader header_;
    Grid grid_;
    std::vector<std::uint8_t> voxels_;
};

// Snaps every sample to {0,1}; NonBinaryMask if any sample is further than
// `tolerance` from both.
VoxelMask mask_from_volume(const Volume& volume, double tolerance = kDefaultBinarizeTolerance);
VoxelMask read_mask(const std::filesystem::path& path, double tolerance = kDefaultBinarizeTolerance);
void write_mask(const VoxelMask& mask, const std::filesystem::path& path);

}  // namespace strokeval
