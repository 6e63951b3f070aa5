#include "antler/xyz_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace antler {

namespace {

bool is_blank(const std::string& line) {
    for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

} // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

PointCloud parse_xyz(const std::string& text, const std::string& sample_id) {
    PointCloud cloud;
    cloud.sample_id = sample_id;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || is_blank(line)) continue;
        std::size_t first = line.find_first_not_of(" \t\r");
        if (line[first] == '#') continue;
        std::istringstream ls(line);
        Vec3 p;
        std::string extra;
        if (!(ls >> p.x >> p.y >> p.z) || (ls >> extra)) {
            throw std::runtime_error("parse_xyz: malformed line " + std::to_string(line_no) +
                                     (sample_id.empty() ? "" : " in '" + sample_id + "'"));
        }
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw std::runtime_error("parse_xyz: non-finite value on line " + std::to_string(line_no));
        }
        cloud.points.push_back(p);
    }
    if (cloud.points.empty())
        throw std::runtime_error("parse_xyz: no data lines" +
                                 (sample_id.empty() ? std::string() : " in '" + sample_id + "'"));
    return cloud;
}

std::string write_xyz(const PointCloud& cloud) {
    std::string out;
    out.reserve(cloud.points.size() * 24);
    for (const Vec3& p : cloud.points) {
        out += format_double(p.x);
        out += ' ';
        out += format_double(p.y);
        out += ' ';
        out += format_double(p.z);
        out += '\n';
    }
    return out;
}

PointCloud load_xyz_file(const std::filesystem::path& path, const std::string& sample_id) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open point file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_xyz(ss.str(), sample_id.empty() ? path.stem().string() : sample_id);
}

void save_xyz_file(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write point file: " + path.string());
    out << write_xyz(cloud);
}

Dataset load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
    const auto base = manifest_path.parent_path();

    Dataset ds;
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("manifest is empty: " + manifest_path.string());
    // header: sample_id,path,y_1,...,y_p
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() < 3)
            throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                     ": expected sample_id,path,y_1,...");
        std::vector<double> y;
        for (std::size_t i = 2; i < fields.size(); ++i) {
            try {
                std::size_t pos = 0;
                y.push_back(std::stod(fields[i], &pos));
                if (pos != fields[i].size()) throw std::invalid_argument("trailing chars");
            } catch (const std::exception&) {
                throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                         ": bad response value '" + fields[i] + "'");
            }
        }
        ds.samples.push_back(load_xyz_file(base / fields[1], fields[0]));
        ds.responses.push_back(std::move(y));
    }
    ds.validate();
    return ds;
}

std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                                   const std::string& manifest_name) {
    dataset.validate();
    std::filesystem::create_directories(dir);
    const auto manifest_path = dir / manifest_name;
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + manifest_path.string());
    out << "sample_id,path";
    for (std::size_t j = 0; j < dataset.response_dim(); ++j) out << ",y_" << (j + 1);
    out << "\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::string file = dataset.samples[i].sample_id + ".xyz";
        save_xyz_file(dataset.samples[i], dir / file);
        out << dataset.samples[i].sample_id << "," << file;
        for (double v : dataset.responses[i]) out << "," << format_double(v);
        out << "\n";
    }
    return manifest_path;
}

} // namespace antler
