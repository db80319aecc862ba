#include "strokeval/ensemble.hpp"

#include <limits>

#include "strokeval/error.hpp"

namespace strokeval {

namespace {

void validate_stack(std::span<const VoxelMask> stack) {
    if (stack.empty()) throw Error(ErrorCode::EmptyStack, "majority vote needs at least one mask");
    if (stack.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw Error(ErrorCode::InvalidArgument, "too many masks in the vote stack");
    }
    for (std::size_t k = 1; k < stack.size(); ++k) {
        require_same_grid(stack[0].grid(), stack[k].grid(), "vote stack");
    }
}

}  // namespace

std::vector<std::uint16_t> vote_count_map(std::span<const VoxelMask> stack) {
    validate_stack(stack);
    std::vector<std::uint16_t> counts(stack[0].size(), 0);
    for (const auto& mask : stack) {
        const auto v = mask.voxels();
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = static_cast<std::uint16_t>(counts[i] + v[i]);
    }
    return counts;
}

VoxelMask majority_vote(std::span<const VoxelMask> stack) {
    const auto counts = vote_count_map(stack);
    const auto threshold = majority_threshold(stack.size());
    std::vector<std::uint8_t> fused(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) fused[i] = counts[i] >= threshold ? 1 : 0;
    VolumeHeader header = stack[0].header();
    header.datatype = Datatype::UInt8;
    header.bitpix = 8;
    header.scl_slope = 1.0f;
    header.scl_inter = 0.0f;
    return VoxelMask(std::move(header), std::move(fused));
}

}  // namespace strokeval
