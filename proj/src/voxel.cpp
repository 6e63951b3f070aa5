#include "antler/voxel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace antler {

void GridSpec::validate() const {
    for (int k = 0; k < 3; ++k) {
        if (dims[k] < 1) throw std::runtime_error("GridSpec: dims must be >= 1");
        if (!(box.extent(k) > 0.0)) throw std::runtime_error("GridSpec: box extent must be positive");
    }
}

VoxelIndex GridSpec::bin(const Vec3& p) const {
    VoxelIndex idx;
    for (int k = 0; k < 3; ++k) {
        if (p[k] < box.lower[k] || p[k] > box.upper[k])
            throw std::runtime_error("GridSpec::bin: point outside grid box");
        double t = (p[k] - box.lower[k]) / edge(k);
        std::int32_t i = static_cast<std::int32_t>(std::floor(t));
        // topmost cell is closed on its upper face
        if (i >= dims[k]) i = dims[k] - 1;
        if (i < 0) i = 0;
        idx[k] = i;
    }
    return idx;
}

Vec3 GridSpec::center(const VoxelIndex& v) const {
    Vec3 c;
    for (int k = 0; k < 3; ++k) c[k] = box.lower[k] + (v[k] + 0.5) * edge(k);
    return c;
}

std::vector<VoxelIndex> BinaryVoxelTensor::sorted_occupied() const {
    std::vector<VoxelIndex> out(occupied.begin(), occupied.end());
    std::sort(out.begin(), out.end());
    return out;
}

BinaryVoxelTensor voxelize(const PointCloud& cloud, const GridSpec& grid) {
    grid.validate();
    BinaryVoxelTensor tensor;
    tensor.grid = grid;
    tensor.occupied.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        try {
            tensor.occupied.insert(grid.bin(cloud.points[i]));
        } catch (const std::exception&) {
            throw std::runtime_error("voxelize: point " + std::to_string(i) + " of '" +
                                     cloud.sample_id + "' lies outside the grid box");
        }
    }
    return tensor;
}

namespace {

struct Vec3BitsHash {
    std::size_t operator()(const Vec3& p) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](double v) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            h ^= bits;
            h *= 0x100000001b3ULL;
        };
        mix(p.x);
        mix(p.y);
        mix(p.z);
        return static_cast<std::size_t>(h);
    }
};

std::size_t distinct_point_count(const PointCloud& cloud) {
    std::unordered_set<Vec3, Vec3BitsHash> set;
    set.reserve(cloud.size());
    for (const Vec3& p : cloud.points) set.insert(p);
    return set.size();
}

} // namespace

GridSpec select_grid(const PointCloud& cloud, std::array<std::int32_t, 3> initial_dims,
                     std::int32_t max_dim, double margin, const Box3* shared_box) {
    cloud.validate();
    std::int32_t max_initial = 1;
    for (int k = 0; k < 3; ++k) {
        if (initial_dims[k] < 1) throw std::runtime_error("select_grid: initial dims must be >= 1");
        max_initial = std::max(max_initial, initial_dims[k]);
    }
    if (max_dim < max_initial) throw std::runtime_error("select_grid: max_dim below initial dims");

    const std::size_t target = distinct_point_count(cloud);
    GridSpec grid;
    grid.box = shared_box ? *shared_box : bounding_box(cloud, margin);
    grid.dims = initial_dims;
    while (true) {
        const BinaryVoxelTensor t = voxelize(cloud, grid);
        if (t.count() == target) return grid;
        bool can_double = true;
        for (int k = 0; k < 3; ++k)
            if (2 * grid.dims[k] > max_dim) can_double = false;
        if (!can_double) return grid;
        for (int k = 0; k < 3; ++k) grid.dims[k] *= 2;
    }
}

std::string grid_to_json(const GridSpec& g) {
    nlohmann::json j;
    j["box"]["lower"] = {g.box.lower.x, g.box.lower.y, g.box.lower.z};
    j["box"]["upper"] = {g.box.upper.x, g.box.upper.y, g.box.upper.z};
    j["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
    return j.dump(2);
}

GridSpec grid_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    GridSpec g;
    for (int k = 0; k < 3; ++k) {
        g.box.lower[k] = j.at("box").at("lower").at(k).get<double>();
        g.box.upper[k] = j.at("box").at("upper").at(k).get<double>();
        g.dims[k] = j.at("dims").at(k).get<std::int32_t>();
    }
    g.validate();
    return g;
}

void save_voxel_tensor(const BinaryVoxelTensor& t, const std::filesystem::path& csv_path,
                       const std::filesystem::path& sidecar_json_path) {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << "i,j,k\n";
    for (const VoxelIndex& v : t.sorted_occupied())
        csv << v[0] << "," << v[1] << "," << v[2] << "\n";

    std::ofstream side(sidecar_json_path, std::ios::binary);
    if (!side) throw std::runtime_error("cannot write " + sidecar_json_path.string());
    side << grid_to_json(t.grid) << "\n";
}

BinaryVoxelTensor load_voxel_tensor(const std::filesystem::path& csv_path,
                                    const std::filesystem::path& sidecar_json_path) {
    std::ifstream side(sidecar_json_path);
    if (!side) throw std::runtime_error("cannot open " + sidecar_json_path.string());
    std::ostringstream ss;
    ss << side.rdbuf();

    BinaryVoxelTensor t;
    t.grid = grid_from_json(ss.str());

    std::ifstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open " + csv_path.string());
    std::string line;
    std::getline(csv, line); // header
    std::size_t line_no = 1;
    while (std::getline(csv, line)) {
        ++line_no;
        if (line.empty()) continue;
        VoxelIndex v;
        char c1, c2;
        std::istringstream ls(line);
        if (!(ls >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',')
            throw std::runtime_error(csv_path.string() + ": bad row at line " + std::to_string(line_no));
        for (int k = 0; k < 3; ++k)
            if (v[k] < 0 || v[k] >= t.grid.dims[k])
                throw std::runtime_error(csv_path.string() + ": index out of range at line " +
                                         std::to_string(line_no));
        if (!t.occupied.insert(v).second)
            throw std::runtime_error(csv_path.string() + ": duplicate triple at line " +
                                     std::to_string(line_no));
    }
    return t;
}

} // namespace antler
