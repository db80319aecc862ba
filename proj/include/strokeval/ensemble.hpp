#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "strokeval/nifti.hpp"

namespace strokeval {

// Votes per voxel, in [0, K].
std::vector<std::uint16_t> vote_count_map(std::span<const VoxelMask> stack);

// Strict-majority fusion: a voxel is foreground when at least floor(K/2)+1 of
// the K inputs mark it (two of three for the usual top-3 ensemble). Even-K
// ties are background. The output takes the first input's header.
VoxelMask majority_vote(std::span<const VoxelMask> stack);

inline std::int64_t majority_threshold(std::size_t k) noexcept { return static_cast<std::int64_t>(k / 2 + 1); }

}  // namespace strokeval
