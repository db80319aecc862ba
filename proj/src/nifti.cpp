#include "strokeval/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "gzip.hpp"
#include "strokeval/error.hpp"

namespace strokeval {

namespace fs = std::filesystem;

namespace {

constexpr std::int32_t kHeaderSize = 348;

// ---------------------------------------------------------------------------
// explicit-endian scalar access

template <typename T>
T load(std::span<const std::byte> bytes, std::size_t offset, Endianness order) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<std::byte, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes.data() + offset, sizeof(T));
    const bool host_little = std::endian::native == std::endian::little;
    if ((order == Endianness::Little) != host_little) {
        std::reverse(raw.begin(), raw.end());
    }
    return std::bit_cast<T>(raw);
}

template <typename T>
void store(std::span<std::byte> bytes, std::size_t offset, T value, Endianness order) {
    auto raw = std::bit_cast<std::array<std::byte, sizeof(T)>>(value);
    const bool host_little = std::endian::native == std::endian::little;
    if ((order == Endianness::Little) != host_little) {
        std::reverse(raw.begin(), raw.end());
    }
    std::memcpy(bytes.data() + offset, raw.data(), sizeof(T));
}

template <std::size_t N>
void load_chars(std::span<const std::byte> bytes, std::size_t offset, std::array<char, N>& out) {
    std::memcpy(out.data(), bytes.data() + offset, N);
}

template <std::size_t N>
void store_chars(std::span<std::byte> bytes, std::size_t offset, const std::array<char, N>& in) {
    std::memcpy(bytes.data() + offset, in.data(), N);
}

template <typename T, std::size_t N>
void load_array(std::span<const std::byte> bytes, std::size_t offset, Endianness order,
                std::array<T, N>& out) {
    for (std::size_t i = 0; i < N; ++i) out[i] = load<T>(bytes, offset + i * sizeof(T), order);
}

template <typename T, std::size_t N>
void store_array(std::span<std::byte> bytes, std::size_t offset, Endianness order,
                 const std::array<T, N>& in) {
    for (std::size_t i = 0; i < N; ++i) store<T>(bytes, offset + i * sizeof(T), in[i], order);
}

// ---------------------------------------------------------------------------
// files

std::vector<std::byte> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw Error(ErrorCode::Io, "cannot read " + path.string());
    }
    return bytes;
}

std::vector<std::byte> read_maybe_gzip(const fs::path& path) {
    auto bytes = read_file(path);
    if (detail::is_gzip(bytes)) return detail::gunzip(bytes);
    return bytes;
}

void write_file(const fs::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct PathKind {
    bool paired = false;
    bool gz = false;
    fs::path header;
    fs::path image;
};

PathKind classify(const fs::path& path) {
    PathKind kind;
    std::string s = path.string();
    kind.gz = ends_with(s, ".gz");
    std::string stem = kind.gz ? s.substr(0, s.size() - 3) : s;
    const std::string sfx = kind.gz ? ".gz" : "";
    if (ends_with(stem, ".hdr") || ends_with(stem, ".img")) {
        kind.paired = true;
        const std::string base = stem.substr(0, stem.size() - 4);
        kind.header = base + ".hdr" + sfx;
        kind.image = base + ".img" + sfx;
    } else {
        kind.header = path;
    }
    return kind;
}

void validate_header(const VolumeHeader& h) {
    if (h.dim[0] < 3 || h.dim[0] > 7) {
        throw Error(ErrorCode::BadHeader, "dim[0] = " + std::to_string(h.dim[0]) +
                                              ", three spatial axes are required");
    }
    for (int axis = 1; axis <= 3; ++axis) {
        if (h.dim[axis] < 1) {
            throw Error(ErrorCode::BadHeader, "spatial dim[" + std::to_string(axis) + "] < 1");
        }
    }
    for (int axis = 4; axis <= h.dim[0]; ++axis) {
        if (h.dim[axis] != 1) {
            throw Error(ErrorCode::BadHeader, "non-spatial dim[" + std::to_string(axis) + "] = " +
                                                  std::to_string(h.dim[axis]) + ", only singleton is accepted");
        }
    }
    for (int axis = 1; axis <= 3; ++axis) {
        if (!(h.pixdim[axis] > 0.0f) || !std::isfinite(h.pixdim[axis])) {
            throw Error(ErrorCode::NonPositivePixdim,
                        "pixdim[" + std::to_string(axis) + "] = " + std::to_string(h.pixdim[axis]));
        }
    }
    if (!is_supported_datatype(static_cast<std::int16_t>(h.datatype))) {
        throw Error(ErrorCode::UnsupportedDatatype,
                    "datatype code " + std::to_string(static_cast<int>(h.datatype)));
    }
}

template <typename T>
void decode_samples(std::span<const std::byte> payload, Endianness order, std::vector<double>& out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<double>(load<T>(payload, i * sizeof(T), order));
    }
}

std::vector<double> decode_payload(const VolumeHeader& h, std::span<const std::byte> payload) {
    const std::size_t n = h.voxel_count();
    const auto bps = static_cast<std::size_t>(bytes_per_sample(h.datatype));
    if (payload.size() < n * bps) {
        throw Error(ErrorCode::TruncatedPayload, "declared " + std::to_string(n) + " samples (" +
                                                     std::to_string(n * bps) + " bytes), found " +
                                                     std::to_string(payload.size()) + " bytes");
    }
    std::vector<double> out(n);
    switch (h.datatype) {
        case Datatype::UInt8: decode_samples<std::uint8_t>(payload, h.endianness, out); break;
        case Datatype::Int16: decode_samples<std::int16_t>(payload, h.endianness, out); break;
        case Datatype::Int32: decode_samples<std::int32_t>(payload, h.endianness, out); break;
        case Datatype::Float32: decode_samples<float>(payload, h.endianness, out); break;
        case Datatype::Float64: decode_samples<double>(payload, h.endianness, out); break;
    }
    return out;
}

template <typename T>
void encode_samples(std::span<const double> samples, Endianness order, std::span<std::byte> out) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double v = samples[i];
        if constexpr (std::is_integral_v<T>) {
            if (!(v >= static_cast<double>(std::numeric_limits<T>::min()) &&
                  v <= static_cast<double>(std::numeric_limits<T>::max())) ||
                std::trunc(v) != v) {
                throw Error(ErrorCode::InvalidArgument,
                            "sample " + std::to_string(i) + " = " + std::to_string(v) +
                                " is not representable in the target integer datatype");
            }
        }
        store<T>(out, i * sizeof(T), static_cast<T>(v), order);
    }
}

std::vector<std::byte> encode_payload(const VolumeHeader& h, std::span<const double> samples) {
    std::vector<std::byte> out(samples.size() * static_cast<std::size_t>(bytes_per_sample(h.datatype)));
    switch (h.datatype) {
        case Datatype::UInt8: encode_samples<std::uint8_t>(samples, h.endianness, out); break;
        case Datatype::Int16: encode_samples<std::int16_t>(samples, h.endianness, out); break;
        case Datatype::Int32: encode_samples<std::int32_t>(samples, h.endianness, out); break;
        case Datatype::Float32: encode_samples<float>(samples, h.endianness, out); break;
        case Datatype::Float64: encode_samples<double>(samples, h.endianness, out); break;
    }
    return out;
}

std::size_t checked_offset(float vox_offset) {
    if (!(vox_offset >= 0.0f) || vox_offset > 1e9f) {
        throw Error(ErrorCode::BadHeader, "vox_offset = " + std::to_string(vox_offset));
    }
    return static_cast<std::size_t>(vox_offset);
}

}  // namespace

// ---------------------------------------------------------------------------

int bytes_per_sample(Datatype type) noexcept {
    switch (type) {
        case Datatype::UInt8: return 1;
        case Datatype::Int16: return 2;
        case Datatype::Int32: return 4;
        case Datatype::Float32: return 4;
        case Datatype::Float64: return 8;
    }
    return 0;
}

bool is_supported_datatype(std::int16_t code) noexcept {
    switch (code) {
        case 2: case 4: case 8: case 16: case 64: return true;
        default: return false;
    }
}

VolumeHeader VolumeHeader::make(const Grid& grid, Datatype type) {
    VolumeHeader h;
    h.dim = {3, 1, 1, 1, 1, 1, 1, 1};
    for (int a = 0; a < 3; ++a) {
        if (grid.dims[a] < 1 || grid.dims[a] > std::numeric_limits<std::int16_t>::max()) {
            throw Error(ErrorCode::InvalidArgument, "grid dimension out of NIfTI-1 range");
        }
        h.dim[a + 1] = static_cast<std::int16_t>(grid.dims[a]);
        h.pixdim[a + 1] = static_cast<float>(grid.spacing_mm[a]);
    }
    h.datatype = type;
    h.bitpix = static_cast<std::int16_t>(8 * bytes_per_sample(type));
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    return h;
}

std::array<std::int64_t, 3> VolumeHeader::spatial_dims() const {
    return {dim[1], dim[2], dim[3]};
}

std::array<double, 3> VolumeHeader::spacing_mm() const {
    return {pixdim[1], pixdim[2], pixdim[3]};
}

Grid VolumeHeader::grid() const { return Grid{spatial_dims(), spacing_mm()}; }

Affine VolumeHeader::affine() const {
    Affine a{};
    if (sform_code > 0) {
        for (int c = 0; c < 4; ++c) {
            a[0][c] = srow_x[c];
            a[1][c] = srow_y[c];
            a[2][c] = srow_z[c];
        }
    } else {
        for (int r = 0; r < 3; ++r) a[r][r] = pixdim[r + 1];
    }
    a[3][3] = 1.0;
    return a;
}

VolumeHeader decode_header(std::span<const std::byte> b) {
    if (b.size() < static_cast<std::size_t>(kHeaderSize)) {
        throw Error(ErrorCode::TruncatedPayload, "file shorter than the 348-byte header");
    }
    VolumeHeader h;
    if (load<std::int32_t>(b, 0, Endianness::Little) == kHeaderSize) {
        h.endianness = Endianness::Little;
    } else if (load<std::int32_t>(b, 0, Endianness::Big) == kHeaderSize) {
        h.endianness = Endianness::Big;
    } else {
        throw Error(ErrorCode::BadHeader, "sizeof_hdr is not 348 under either byte order");
    }
    const Endianness e = h.endianness;
    load_chars(b, 344, h.magic);
    const bool single = std::memcmp(h.magic.data(), "n+1\0", 4) == 0;
    const bool paired = std::memcmp(h.magic.data(), "ni1\0", 4) == 0;
    if (!single && !paired) throw Error(ErrorCode::BadMagic, "magic is neither n+1 nor ni1");

    load_chars(b, 4, h.data_type);
    load_chars(b, 14, h.db_name);
    h.extents = load<std::int32_t>(b, 32, e);
    h.session_error = load<std::int16_t>(b, 36, e);
    h.regular = static_cast<char>(b[38]);
    h.dim_info = static_cast<char>(b[39]);
    load_array(b, 40, e, h.dim);
    h.intent_p1 = load<float>(b, 56, e);
    h.intent_p2 = load<float>(b, 60, e);
    h.intent_p3 = load<float>(b, 64, e);
    h.intent_code = load<std::int16_t>(b, 68, e);
    h.datatype = static_cast<Datatype>(load<std::int16_t>(b, 70, e));
    h.bitpix = load<std::int16_t>(b, 72, e);
    h.slice_start = load<std::int16_t>(b, 74, e);
    load_array(b, 76, e, h.pixdim);
    h.vox_offset = load<float>(b, 108, e);
    h.scl_slope = load<float>(b, 112, e);
    h.scl_inter = load<float>(b, 116, e);
    h.slice_end = load<std::int16_t>(b, 120, e);
    h.slice_code = static_cast<char>(b[122]);
    h.xyzt_units = static_cast<char>(b[123]);
    h.cal_max = load<float>(b, 124, e);
    h.cal_min = load<float>(b, 128, e);
    h.slice_duration = load<float>(b, 132, e);
    h.toffset = load<float>(b, 136, e);
    h.glmax = load<std::int32_t>(b, 140, e);
    h.glmin = load<std::int32_t>(b, 144, e);
    load_chars(b, 148, h.descrip);
    load_chars(b, 228, h.aux_file);
    h.qform_code = load<std::int16_t>(b, 252, e);
    h.sform_code = load<std::int16_t>(b, 254, e);
    h.quatern_b = load<float>(b, 256, e);
    h.quatern_c = load<float>(b, 260, e);
    h.quatern_d = load<float>(b, 264, e);
    h.qoffset_x = load<float>(b, 268, e);
    h.qoffset_y = load<float>(b, 272, e);
    h.qoffset_z = load<float>(b, 276, e);
    load_array(b, 280, e, h.srow_x);
    load_array(b, 296, e, h.srow_y);
    load_array(b, 312, e, h.srow_z);
    load_chars(b, 328, h.intent_name);
    h.extension.clear();
    return h;
}

std::array<std::byte, 348> encode_header(const VolumeHeader& h) {
    std::array<std::byte, 348> out{};
    std::span<std::byte> b(out);
    const Endianness e = h.endianness;
    store<std::int32_t>(b, 0, kHeaderSize, e);
    store_chars(b, 4, h.data_type);
    store_chars(b, 14, h.db_name);
    store<std::int32_t>(b, 32, h.extents, e);
    store<std::int16_t>(b, 36, h.session_error, e);
    b[38] = static_cast<std::byte>(h.regular);
    b[39] = static_cast<std::byte>(h.dim_info);
    store_array(b, 40, e, h.dim);
    store<float>(b, 56, h.intent_p1, e);
    store<float>(b, 60, h.intent_p2, e);
    store<float>(b, 64, h.intent_p3, e);
    store<std::int16_t>(b, 68, h.intent_code, e);
    store<std::int16_t>(b, 70, static_cast<std::int16_t>(h.datatype), e);
    store<std::int16_t>(b, 72, h.bitpix, e);
    store<std::int16_t>(b, 74, h.slice_start, e);
    store_array(b, 76, e, h.pixdim);
    store<float>(b, 108, h.vox_offset, e);
    store<float>(b, 112, h.scl_slope, e);
    store<float>(b, 116, h.scl_inter, e);
    store<std::int16_t>(b, 120, h.slice_end, e);
    b[122] = static_cast<std::byte>(h.slice_code);
    b[123] = static_cast<std::byte>(h.xyzt_units);
    store<float>(b, 124, h.cal_max, e);
    store<float>(b, 128, h.cal_min, e);
    store<float>(b, 132, h.slice_duration, e);
    store<float>(b, 136, h.toffset, e);
    store<std::int32_t>(b, 140, h.glmax, e);
    store<std::int32_t>(b, 144, h.glmin, e);
    store_chars(b, 148, h.descrip);
    store_chars(b, 228, h.aux_file);
    store<std::int16_t>(b, 252, h.qform_code, e);
    store<std::int16_t>(b, 254, h.sform_code, e);
    store<float>(b, 256, h.quatern_b, e);
    store<float>(b, 260, h.quatern_c, e);
    store<float>(b, 264, h.quatern_d, e);
    store<float>(b, 268, h.qoffset_x, e);
    store<float>(b, 272, h.qoffset_y, e);
    store<float>(b, 276, h.qoffset_z, e);
    store_array(b, 280, e, h.srow_x);
    store_array(b, 296, e, h.srow_y);
    store_array(b, 312, e, h.srow_z);
    store_chars(b, 328, h.intent_name);
    store_chars(b, 344, h.magic);
    return out;
}

std::vector<double> Volume::values() const {
    std::vector<double> out(stored);
    const double slope = header.scl_slope;
    const double inter = header.scl_inter;
    if (slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0)) {
        for (double& v : out) v = v * slope + inter;
    }
    return out;
}

Volume read_volume(const fs::path& path) {
    const PathKind kind = classify(path);
    const auto header_bytes = read_maybe_gzip(kind.header);
    Volume vol;
    vol.header = decode_header(header_bytes);
    VolumeHeader& h = vol.header;
    validate_header(h);

    if (h.single_file()) {
        if (kind.paired) throw Error(ErrorCode::BadMagic, "n+1 magic in a .hdr/.img pair");
        const std::size_t offset = checked_offset(h.vox_offset);
        if (offset < static_cast<std::size_t>(kHeaderSize)) {
            throw Error(ErrorCode::BadHeader, "vox_offset inside the header");
        }
        if (header_bytes.size() < offset) {
            throw Error(ErrorCode::TruncatedPayload, "file ends before vox_offset");
        }
        h.extension.assign(header_bytes.begin() + kHeaderSize, header_bytes.begin() + static_cast<std::ptrdiff_t>(offset));
        vol.stored = decode_payload(h, std::span(header_bytes).subspan(offset));
    } else {
        if (!kind.paired) throw Error(ErrorCode::BadMagic, "ni1 magic requires a .hdr/.img pair");
        h.extension.assign(header_bytes.begin() + kHeaderSize, header_bytes.end());
        fs::path image = kind.image;
        if (!fs::exists(image)) {
            // tolerate mixed compression between the pair members
            std::string s = image.string();
            image = ends_with(s, ".gz") ? fs::path(s.substr(0, s.size() - 3)) : fs::path(s + ".gz");
        }
        const auto image_bytes = read_maybe_gzip(image);
        const std::size_t offset = checked_offset(h.vox_offset);
        if (image_bytes.size() < offset) throw Error(ErrorCode::TruncatedPayload, "image file ends before vox_offset");
        vol.stored = decode_payload(h, std::span(image_bytes).subspan(offset));
    }
    return vol;
}

void write_volume(const VolumeHeader& header, std::span<const double> stored, const fs::path& path) {
    validate_header(header);
    if (stored.size() != header.voxel_count()) {
        throw Error(ErrorCode::InvalidArgument, "sample count " + std::to_string(stored.size()) +
                                                    " does not match header dims (" +
                                                    std::to_string(header.voxel_count()) + ")");
    }
    const PathKind kind = classify(path);
    VolumeHeader h = header;
    h.bitpix = static_cast<std::int16_t>(8 * bytes_per_sample(h.datatype));
    const bool was_single = h.single_file();
    const auto payload = encode_payload(h, stored);

    if (!kind.paired) {
        h.magic = {'n', '+', '1', '\0'};
        if (h.extension.size() < 4) h.extension.resize(4, std::byte{0});
        const std::size_t min_offset = kHeaderSize + h.extension.size();
        if (!was_single || h.vox_offset < static_cast<float>(min_offset)) {
            h.vox_offset = static_cast<float>(min_offset);
        }
        const std::size_t offset = checked_offset(h.vox_offset);
        std::vector<std::byte> file(offset + payload.size(), std::byte{0});
        const auto hdr = encode_header(h);
        std::copy(hdr.begin(), hdr.end(), file.begin());
        std::copy(h.extension.begin(), h.extension.end(), file.begin() + kHeaderSize);
        std::copy(payload.begin(), payload.end(), file.begin() + static_cast<std::ptrdiff_t>(offset));
        write_file(kind.header, kind.gz ? detail::gzip(file) : file);
    } else {
        h.magic = {'n', 'i', '1', '\0'};
        if (was_single) {
            h.vox_offset = 0;
            h.extension.clear();
        }
        const std::size_t offset = checked_offset(h.vox_offset);
        std::vector<std::byte> hdr_file(kHeaderSize + h.extension.size());
        const auto hdr = encode_header(h);
        std::copy(hdr.begin(), hdr.end(), hdr_file.begin());
        std::copy(h.extension.begin(), h.extension.end(), hdr_file.begin() + kHeaderSize);
        std::vector<std::byte> img_file(offset + payload.size(), std::byte{0});
        std::copy(payload.begin(), payload.end(), img_file.begin() + static_cast<std::ptrdiff_t>(offset));
        write_file(kind.header, kind.gz ? detail::gzip(hdr_file) : hdr_file);
        write_file(kind.image, kind.gz ? detail::gzip(img_file) : img_file);
    }
}

// ---------------------------------------------------------------------------
// masks

VoxelMask::VoxelMask(const Grid& grid)
    : header_(VolumeHeader::make(grid, Datatype::UInt8)), grid_(header_.grid()), voxels_(grid_.size(), 0) {}

VoxelMask::VoxelMask(VolumeHeader header, std::vector<std::uint8_t> voxels)
    : header_(std::move(header)), grid_(header_.grid()), voxels_(std::move(voxels)) {
    if (voxels_.size() != grid_.size()) {
        throw Error(ErrorCode::InvalidArgument, "mask data length does not match grid");
    }
    for (auto& v : voxels_) {
        if (v > 1) throw Error(ErrorCode::NonBinaryMask, "mask voxel outside {0,1}");
    }
}

std::int64_t VoxelMask::foreground_count() const noexcept {
    std::int64_t n = 0;
    for (const auto v : voxels_) n += v;
    return n;
}

Volume VoxelMask::to_volume() const {
    Volume vol;
    vol.header = header_;
    vol.header.datatype = Datatype::UInt8;
    vol.header.bitpix = 8;
    vol.header.scl_slope = 1.0f;
    vol.header.scl_inter = 0.0f;
    vol.stored.assign(voxels_.begin(), voxels_.end());
    return vol;
}

VoxelMask mask_from_volume(const Volume& volume, double tolerance) {
    const auto values = volume.values();
    std::vector<std::uint8_t> voxels(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (std::abs(v) <= tolerance) {
            voxels[i] = 0;
        } else if (std::abs(v - 1.0) <= tolerance) {
            voxels[i] = 1;
        } else {
            std::ostringstream msg;
            msg << "sample " << i << " = " << v << " is not within " << tolerance
                << " of 0 or 1 (probabilistic map passed as a mask?)";
            throw Error(ErrorCode::NonBinaryMask, msg.str());
        }
    }
    return VoxelMask(volume.header, std::move(voxels));
}

VoxelMask read_mask(const fs::path& path, double tolerance) {
    return mask_from_volume(read_volume(path), tolerance);
}

void write_mask(const VoxelMask& mask, const fs::path& path) { write_volume(mask.to_volume(), path); }

}  // namespace strokeval
