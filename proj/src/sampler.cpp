#include "antler/sampler.hpp"

#include "antler/rng.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace antler {

std::size_t BalancedSample::ones_count() const {
    std::size_t n = 0;
    for (const SampleEntry& e : entries) n += e.bit;
    return n;
}

void BalancedSample::validate_against(const BinaryVoxelTensor& source) const {
    VoxelSet seen;
    seen.reserve(entries.size());
    for (const SampleEntry& e : entries) {
        for (int k = 0; k < 3; ++k)
            if (e.idx[k] < 0 || e.idx[k] >= grid.dims[k])
                throw std::runtime_error("BalancedSample: index out of range");
        if (!seen.insert(e.idx).second)
            throw std::runtime_error("BalancedSample: duplicate triple");
        const bool occ = source.occupied.count(e.idx) > 0;
        if (occ != (e.bit == 1))
            throw std::runtime_error("BalancedSample: bit disagrees with source tensor");
    }
    if (ones_count() != source.count())
        throw std::runtime_error("BalancedSample: ones count differs from source occupancy");
}

std::size_t compute_mr(const std::vector<std::size_t>& occupancy_counts) {
    if (occupancy_counts.empty())
        throw std::runtime_error("compute_mr: empty occupancy count sequence");
    std::size_t mx = 0;
    for (std::size_t c : occupancy_counts) {
        if (c == 0) throw std::runtime_error("compute_mr: occupancy counts must be positive");
        mx = std::max(mx, c);
    }
    return 2 * mx;
}

std::vector<VoxelIndex> chebyshev_shell(const BinaryVoxelTensor& tensor) {
    VoxelSet shell;
    const auto& dims = tensor.grid.dims;
    for (const VoxelIndex& v : tensor.occupied) {
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj)
                for (int dk = -1; dk <= 1; ++dk) {
                    if (di == 0 && dj == 0 && dk == 0) continue;
                    VoxelIndex n{v[0] + di, v[1] + dj, v[2] + dk};
                    if (n[0] < 0 || n[0] >= dims[0] || n[1] < 0 || n[1] >= dims[1] ||
                        n[2] < 0 || n[2] >= dims[2])
                        continue;
                    if (tensor.occupied.count(n)) continue;
                    shell.insert(n);
                }
    }
    std::vector<VoxelIndex> out(shell.begin(), shell.end());
    std::sort(out.begin(), out.end());
    return out;
}

BalancedSample balanced_sample(const BinaryVoxelTensor& tensor, std::size_t m_r,
                               std::uint64_t seed) {
    const std::size_t m_i = tensor.count();
    if (m_i == 0) throw std::runtime_error("balanced_sample: tensor has no occupied voxels");
    if (m_r < 2 * m_i)
        throw std::runtime_error("balanced_sample: m_r=" + std::to_string(m_r) +
                                 " below capacity 2*" + std::to_string(m_i));
    const auto& dims = tensor.grid.dims;
    const std::uint64_t total = static_cast<std::uint64_t>(dims[0]) * dims[1] * dims[2];
    const std::uint64_t zeros_available = total - m_i;
    const std::size_t zeros_needed = m_r - m_i;
    if (zeros_available == 0)
        throw std::runtime_error("balanced_sample: tensor is fully occupied, no zero entries exist");
    if (zeros_available < zeros_needed)
        throw std::runtime_error("balanced_sample: only " + std::to_string(zeros_available) +
                                 " unoccupied voxels for " + std::to_string(zeros_needed) +
                                 " zero slots");

    Rng rng(seed);
    BalancedSample out;
    out.grid = tensor.grid;
    out.entries.reserve(m_r);

    VoxelSet chosen;
    chosen.reserve(m_r);

    // phase a: all occupied triples, lexicographic
    for (const VoxelIndex& v : tensor.sorted_occupied()) {
        out.entries.push_back({v, 1});
        chosen.insert(v);
    }

    // phase b: m_i shell zeros (or the whole shell when it is smaller)
    const std::vector<VoxelIndex> shell = chebyshev_shell(tensor);
    const std::size_t from_shell = std::min(m_i, shell.size());
    for (std::size_t pos : rng.sample_without_replacement(shell.size(), from_shell)) {
        out.entries.push_back({shell[pos], 0});
        chosen.insert(shell[pos]);
    }

    // phase b deficit plus phase c: uniform random zeros, deduplicated
    std::size_t remaining = m_r - out.entries.size();
    if (zeros_available < 2 * static_cast<std::uint64_t>(zeros_needed)) {
        // grid nearly exhausted: enumerate the unoccupied complement instead
        // of rejection sampling
        std::vector<VoxelIndex> pool;
        pool.reserve(static_cast<std::size_t>(zeros_available));
        for (std::int32_t i = 0; i < dims[0]; ++i)
            for (std::int32_t j = 0; j < dims[1]; ++j)
                for (std::int32_t k = 0; k < dims[2]; ++k) {
                    VoxelIndex v{i, j, k};
                    if (!tensor.occupied.count(v) && !chosen.count(v)) pool.push_back(v);
                }
        if (pool.size() < remaining)
            throw std::runtime_error("balanced_sample: insufficient distinct zero voxels");
        for (std::size_t pos : rng.sample_without_replacement(pool.size(), remaining)) {
            out.entries.push_back({pool[pos], 0});
            chosen.insert(pool[pos]);
        }
    } else {
        while (remaining > 0) {
            VoxelIndex v{static_cast<std::int32_t>(rng.uniform_index(dims[0])),
                         static_cast<std::int32_t>(rng.uniform_index(dims[1])),
                         static_cast<std::int32_t>(rng.uniform_index(dims[2]))};
            if (tensor.occupied.count(v) || chosen.count(v)) continue;
            out.entries.push_back({v, 0});
            chosen.insert(v);
            --remaining;
        }
    }
    return out;
}

void save_balanced_sample(const BalancedSample& s, const std::filesystem::path& csv_path,
                          const std::filesystem::path& sidecar_json_path) {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << "i,j,k,b\n";
    for (const SampleEntry& e : s.entries)
        csv << e.idx[0] << "," << e.idx[1] << "," << e.idx[2] << "," << int(e.bit) << "\n";

    std::ofstream side(sidecar_json_path, std::ios::binary);
    if (!side) throw std::runtime_error("cannot write " + sidecar_json_path.string());
    side << grid_to_json(s.grid) << "\n";
}

BalancedSample load_balanced_sample(const std::filesystem::path& csv_path,
                                    const std::filesystem::path& sidecar_json_path) {
    std::ifstream side(sidecar_json_path);
    if (!side) throw std::runtime_error("cannot open " + sidecar_json_path.string());
    std::ostringstream ss;
    ss << side.rdbuf();

    BalancedSample s;
    s.grid = grid_from_json(ss.str());

    std::ifstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open " + csv_path.string());
    std::string line;
    std::getline(csv, line); // header
    std::size_t line_no = 1;
    while (std::getline(csv, line)) {
        ++line_no;
        if (line.empty()) continue;
        SampleEntry e;
        int b;
        char c1, c2, c3;
        std::istringstream ls(line);
        if (!(ls >> e.idx[0] >> c1 >> e.idx[1] >> c2 >> e.idx[2] >> c3 >> b) || c1 != ',' ||
            c2 != ',' || c3 != ',' || (b != 0 && b != 1))
            throw std::runtime_error(csv_path.string() + ": bad row at line " + std::to_string(line_no));
        e.bit = static_cast<std::uint8_t>(b);
        s.entries.push_back(e);
    }
    return s;
}

} // namespace antler
