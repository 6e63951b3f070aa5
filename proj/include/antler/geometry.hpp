#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace antler {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    friend bool operator==(const Vec3& a, const Vec3& b) {
        return a.x == b.x && a.y == b.y && a.z == b.z;
    }
};

/// Unstructured point cloud of varying cardinality. Points keep file order.
struct PointCloud {
    std::vector<Vec3> points;
    std::string sample_id;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    /// Throws if the cloud is empty or contains non-finite coordinates.
    void validate() const;
};

/// Axis-aligned bounding box.
struct Box3 {
    Vec3 lower;
    Vec3 upper;

    double extent(int axis) const { return upper[axis] - lower[axis]; }
    bool contains(const Vec3& p) const {
        return p.x >= lower.x && p.x <= upper.x && p.y >= lower.y && p.y <= upper.y &&
               p.z >= lower.z && p.z <= upper.z;
    }
    /// Componentwise union of two boxes.
    static Box3 merged(const Box3& a, const Box3& b);
};

/// Clouds paired with per-sample response rows (one row of width p each).
struct Dataset {
    std::vector<PointCloud> samples;
    std::vector<std::vector<double>> responses;

    std::size_t size() const { return samples.size(); }
    std::size_t response_dim() const { return responses.empty() ? 0 : responses[0].size(); }

    /// Checks row count, uniform response width, and finiteness.
    void validate() const;
};

/// Componentwise min/max of the points, expanded by a relative margin per
/// axis. Degenerate (zero-extent) axes are expanded by +-epsilon instead.
/// Throws on an empty cloud.
Box3 bounding_box(const PointCloud& cloud, double margin = 0.05, double epsilon = 1e-6);

} // namespace antler
