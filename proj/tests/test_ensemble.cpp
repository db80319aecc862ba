#include "doctest.h"

#include <algorithm>
#include <random>

#include "strokeval/ensemble.hpp"
#include "strokeval/error.hpp"
#include "support/synth.hpp"

using namespace strokeval;

namespace {

bool equal(const VoxelMask& a, const VoxelMask& b) {
    return std::equal(a.voxels().begin(), a.voxels().end(), b.voxels().begin(), b.voxels().end());
}

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("K=3 truth table over all 8 vote patterns") {
    // One voxel per pattern; pattern bits say which method voted.
    const Grid g{{8, 1, 1}, {1, 1, 1}};
    std::vector<VoxelMask> stack(3, VoxelMask(g));
    for (int pattern = 0; pattern < 8; ++pattern) {
        for (int k = 0; k < 3; ++k) stack[k].set(pattern, (pattern >> k & 1) != 0);
    }
    const auto fused = majority_vote(stack);
    const auto counts = vote_count_map(stack);
    for (int pattern = 0; pattern < 8; ++pattern) {
        const int votes = __builtin_popcount(pattern);
        CAPTURE(pattern);
        CHECK(counts[pattern] == votes);
        CHECK(fused[pattern] == (votes >= 2 ? 1 : 0));
    }
    // named rows
    CHECK(fused[0b011] == 1);  // (1,1,0)
    CHECK(fused[0b001] == 0);  // (1,0,0)
}

TEST_CASE("threshold is floor(K/2)+1, even ties vote background") {
    CHECK(majority_threshold(1) == 1);
    CHECK(majority_threshold(2) == 2);
    CHECK(majority_threshold(3) == 2);
    CHECK(majority_threshold(4) == 3);
    CHECK(majority_threshold(5) == 3);

    const Grid g{{1, 1, 1}, {1, 1, 1}};
    std::vector<VoxelMask> four(4, VoxelMask(g));
    four[0].set(0, true);
    four[1].set(0, true);
    CHECK(majority_vote(four)[0] == 0);
    four[2].set(0, true);
    CHECK(majority_vote(four)[0] == 1);
}

TEST_CASE("vote count map") {
    const Grid g = synth::cube(3);
    VoxelMask ones(g);
    synth::fill_box(ones, 0, 0, 0, 3, 3, 3);
    std::vector<VoxelMask> all_ones(3, ones);
    for (auto c : vote_count_map(all_ones)) CHECK(c == 3);
    std::vector<VoxelMask> zeros(3, VoxelMask(g));
    for (auto c : vote_count_map(zeros)) CHECK(c == 0);

    VoxelMask dissent = ones;
    dissent.set(1, 1, 1, false);
    dissent.set(0, 0, 0, false);
    std::vector<VoxelMask> stack{ones, dissent, ones};
    const auto counts = vote_count_map(stack);
    CHECK(counts[g.index(1, 1, 1)] == 2);
    CHECK(counts[g.index(0, 0, 0)] == 2);
    CHECK(counts[g.index(2, 2, 2)] == 3);
}

TEST_CASE("errors") {
    std::vector<VoxelMask> empty;
    try {
        (void)majority_vote(empty);
        FAIL("expected EmptyStack");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyStack);
    }
    std::vector<VoxelMask> mixed{VoxelMask(synth::cube(3)), VoxelMask(synth::cube(4))};
    try {
        (void)majority_vote(mixed);
        FAIL("expected GridMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::GridMismatch);
    }
    CHECK_THROWS_AS((void)vote_count_map(mixed), Error);
}

TEST_CASE("idempotence, permutation invariance, monotonicity and K=1 identity on random stacks") {
    std::mt19937_64 rng(77);
    const Grid g{{9, 8, 7}, {1, 1, 1}};
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 1 + static_cast<std::size_t>(trial % 6);
        std::vector<VoxelMask> stack;
        for (std::size_t i = 0; i < k; ++i) stack.push_back(synth::random_mask(g, 0.4, rng));
        const auto fused = majority_vote(stack);

        std::vector<VoxelMask> same(k, stack[0]);
        CHECK(equal(majority_vote(same), stack[0]));

        auto shuffled = stack;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(equal(majority_vote(shuffled), fused));

        auto grown = stack;
        const auto which = rng() % k;
        const auto voxel = rng() % g.size();
        grown[which].set(voxel, true);
        const auto fused_grown = majority_vote(grown);
        bool lost = false;
        for (std::size_t i = 0; i < g.size(); ++i) lost = lost || (fused[i] && !fused_grown[i]);
        CHECK_FALSE(lost);

        std::vector<VoxelMask> single{stack[0]};
        CHECK(equal(majority_vote(single), stack[0]));
    }
}

}  // TEST_SUITE
