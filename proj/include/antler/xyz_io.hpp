#pragma once

#include "antler/geometry.hpp"

#include <filesystem>
#include <string>

namespace antler {

/// Parses the .xyz text format: one "x y z" triple per line, '#' comments.
/// Throws with a 1-based line number on malformed lines and on documents
/// with zero data lines.
PointCloud parse_xyz(const std::string& text, const std::string& sample_id = "");

/// Inverse of parse_xyz: one line per point, shortest round-trip precision
/// (17 significant digits), space separated, trailing newline.
std::string write_xyz(const PointCloud& cloud);

PointCloud load_xyz_file(const std::filesystem::path& path, const std::string& sample_id = "");
void save_xyz_file(const PointCloud& cloud, const std::filesystem::path& path);

/// Dataset manifest: CSV with header "sample_id,path,y_1,...,y_p".
/// Paths are relative to the manifest's directory.
Dataset load_manifest(const std::filesystem::path& manifest_path);

/// Writes per-sample .xyz files plus manifest.csv into `dir`.
/// Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                                   const std::string& manifest_name = "manifest.csv");

/// Full round-trip formatting for one double (17 significant digits).
std::string format_double(double v);

} // namespace antler
