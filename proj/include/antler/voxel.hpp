#pragma once

#include "antler/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <unordered_set>
#include <vector>

namespace antler {

using VoxelIndex = std::array<std::int32_t, 3>;

struct VoxelIndexHash {
    std::size_t operator()(const VoxelIndex& v) const {
        // 21 bits per axis is plenty below the 1024 dim cap
        std::uint64_t k = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[0])) << 42) ^
                          (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[1])) << 21) ^
                          static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[2]));
        k ^= k >> 33;
        k *= 0xff51afd7ed558ccdULL;
        k ^= k >> 33;
        return static_cast<std::size_t>(k);
    }
};

using VoxelSet = std::unordered_set<VoxelIndex, VoxelIndexHash>;

/// Axis-aligned grid over a bounding box with per-axis voxel counts.
struct GridSpec {
    Box3 box;
    std::array<std::int32_t, 3> dims{1, 1, 1};

    double edge(int axis) const { return box.extent(axis) / dims[axis]; }
    void validate() const;

    /// Bin a point: half-open cells [lo, hi) with the topmost cell closed
    /// on its upper face. Throws if the point lies outside the box.
    VoxelIndex bin(const Vec3& p) const;

    /// Center of a voxel.
    Vec3 center(const VoxelIndex& v) const;
};

/// Sparse binary occupancy tensor: the set of voxel cells containing at
/// least one measurement point.
struct BinaryVoxelTensor {
    GridSpec grid;
    VoxelSet occupied;

    std::size_t count() const { return occupied.size(); }

    /// Occupied triples in lexicographic order.
    std::vector<VoxelIndex> sorted_occupied() const;
};

/// Maps every point of the cloud onto the grid. Throws (naming the point
/// index) if a point falls outside the grid box.
BinaryVoxelTensor voxelize(const PointCloud& cloud, const GridSpec& grid);

/// Grid-resolution selection: starting from initial_dims, doubles all dims
/// until the occupancy count equals the number of distinct points, or any
/// dim would exceed max_dim. Returns the first grid achieving equality,
/// else the largest grid tried. The box defaults to the cloud's own
/// bounding box with the given margin; passing `shared_box` voxelizes on a
/// caller-provided volume instead (it must contain the cloud).
GridSpec select_grid(const PointCloud& cloud,
                     std::array<std::int32_t, 3> initial_dims = {100, 100, 100},
                     std::int32_t max_dim = 1024, double margin = 0.05,
                     const Box3* shared_box = nullptr);

/// Sparse-tensor interchange: CSV "i,j,k" plus sidecar JSON of the GridSpec.
void save_voxel_tensor(const BinaryVoxelTensor& t, const std::filesystem::path& csv_path,
                       const std::filesystem::path& sidecar_json_path);
BinaryVoxelTensor load_voxel_tensor(const std::filesystem::path& csv_path,
                                    const std::filesystem::path& sidecar_json_path);

/// GridSpec JSON helpers shared with the sampler interchange.
std::string grid_to_json(const GridSpec& g);
GridSpec grid_from_json(const std::string& text);

} // namespace antler
