#include "antler/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace antler {

void PointCloud::validate() const {
    if (points.empty())
        throw std::runtime_error("point cloud '" + sample_id + "' is empty");
    for (const Vec3& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw std::runtime_error("point cloud '" + sample_id + "' contains non-finite coordinates");
    }
}

Box3 Box3::merged(const Box3& a, const Box3& b) {
    Box3 out;
    for (int k = 0; k < 3; ++k) {
        out.lower[k] = std::min(a.lower[k], b.lower[k]);
        out.upper[k] = std::max(a.upper[k], b.upper[k]);
    }
    return out;
}

void Dataset::validate() const {
    if (responses.size() != samples.size())
        throw std::runtime_error("dataset: response row count does not match sample count");
    const std::size_t p = response_dim();
    for (std::size_t i = 0; i < responses.size(); ++i) {
        if (responses[i].size() != p)
            throw std::runtime_error("dataset: ragged response rows");
        for (double v : responses[i])
            if (!std::isfinite(v))
                throw std::runtime_error("dataset: non-finite response value");
    }
    for (const PointCloud& c : samples) c.validate();
}

Box3 bounding_box(const PointCloud& cloud, double margin, double epsilon) {
    if (cloud.empty()) throw std::runtime_error("bounding_box: empty cloud");
    Box3 box{cloud.points[0], cloud.points[0]};
    for (const Vec3& p : cloud.points) {
        for (int k = 0; k < 3; ++k) {
            box.lower[k] = std::min(box.lower[k], p[k]);
            box.upper[k] = std::max(box.upper[k], p[k]);
        }
    }
    for (int k = 0; k < 3; ++k) {
        const double extent = box.upper[k] - box.lower[k];
        if (extent > 0.0) {
            box.lower[k] -= margin * extent;
            box.upper[k] += margin * extent;
        } else {
            box.lower[k] -= epsilon;
            box.upper[k] += epsilon;
        }
    }
    return box;
}

} // namespace antler
