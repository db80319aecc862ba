#include "gzip.hpp"

#include <zlib.h>

#include <limits>

#include "strokeval/error.hpp"

namespace strokeval::detail {

bool is_gzip(std::span<const std::byte> bytes) noexcept {
    return bytes.size() >= 2 && bytes[0] == std::byte{0x1f} && bytes[1] == std::byte{0x8b};
}

std::vector<std::byte> gunzip(std::span<const std::byte> compressed) {
    if (compressed.size() > std::numeric_limits<uInt>::max()) {
        throw Error(ErrorCode::Io, "gzip stream too large");
    }
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
        throw Error(ErrorCode::Io, "inflateInit2 failed");
    }
    std::vector<std::byte> out;
    out.reserve(compressed.size() * 4);
    std::byte chunk[1 << 16];

    zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    int rc = Z_OK;
    while (true) {
        zs.next_out = reinterpret_cast<Bytef*>(chunk);
        zs.avail_out = sizeof(chunk);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw Error(ErrorCode::Io, "corrupt gzip stream");
        }
        out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
        if (rc == Z_STREAM_END) {
            // concatenated members
            if (zs.avail_in > 0 && is_gzip({reinterpret_cast<const std::byte*>(zs.next_in), zs.avail_in})) {
                inflateReset(&zs);
                continue;
            }
            break;
        }
        if (zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw Error(ErrorCode::TruncatedPayload, "gzip stream ended early");
        }
    }
    inflateEnd(&zs);
    return out;
}

std::vector<std::byte> gzip(std::span<const std::byte> raw) {
    if (raw.size() > std::numeric_limits<uInt>::max()) {
        throw Error(ErrorCode::Io, "payload too large for gzip");
    }
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error(ErrorCode::Io, "deflateInit2 failed");
    }
    std::vector<std::byte> out(deflateBound(&zs, static_cast<uLong>(raw.size())) + 32);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(raw.data()));
    zs.avail_in = static_cast<uInt>(raw.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) {
        throw Error(ErrorCode::Io, "deflate failed");
    }
    out.resize(zs.total_out);
    return out;
}

}  // namespace strokeval::detail
