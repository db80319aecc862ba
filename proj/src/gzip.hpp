#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace strokeval::detail {

bool is_gzip(std::span<const std::byte> bytes) noexcept;

// Inflates every concatenated member of a gzip stream.
std::vector<std::byte> gunzip(std::span<const std::byte> compressed);

// Deterministic gzip (mtime 0, no file name) so identical inputs give identical files.
std::vector<std::byte> gzip(std::span<const std::byte> raw);

}  // namespace strokeval::detail
