#pragma once

#include "antler/voxel.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace antler {

/// One record of the balanced 4D sampling array: voxel index plus occupancy bit.
struct SampleEntry {
    VoxelIndex idx{0, 0, 0};
    std::uint8_t bit = 0;
};

/// Fixed-length balanced selection of tensor entries: all occupied triples
/// (b=1) plus unoccupied triples (b=0) drawn preferentially from the
/// 26-connected shell around the occupied set.
struct BalancedSample {
    std::vector<SampleEntry> entries;
    GridSpec grid;

    std::size_t size() const { return entries.size(); }
    std::size_t ones_count() const;

    /// Checks length, distinctness, in-range indices, and bit consistency
    /// against the source tensor.
    void validate_against(const BinaryVoxelTensor& source) const;
};

/// Sample capacity rule: 2 * max occupancy count over the dataset.
/// Throws on an empty sequence or nonpositive counts.
std::size_t compute_mr(const std::vector<std::size_t>& occupancy_counts);

/// Converts a sparse binary tensor into a BalancedSample of length m_r:
/// every occupied triple with b=1, then m_i shell zeros (uniform without
/// replacement from the Chebyshev-distance-1 neighborhood, topped up from
/// uniform random zeros if the shell is too small), then uniform random
/// zeros to fill m_r. All triples distinct; deterministic per seed.
/// Throws if m_r < 2*|occupied| or there are not enough unoccupied voxels.
BalancedSample balanced_sample(const BinaryVoxelTensor& tensor, std::size_t m_r,
                               std::uint64_t seed);

/// 26-connected unoccupied shell of the occupied set, lexicographic order.
std::vector<VoxelIndex> chebyshev_shell(const BinaryVoxelTensor& tensor);

/// Interchange: CSV "i,j,k,b" with m_r rows plus GridSpec sidecar JSON.
void save_balanced_sample(const BalancedSample& s, const std::filesystem::path& csv_path,
                          const std::filesystem::path& sidecar_json_path);
BalancedSample load_balanced_sample(const std::filesystem::path& csv_path,
                                    const std::filesystem::path& sidecar_json_path);

} // namespace antler
