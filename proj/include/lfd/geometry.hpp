#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lfd/rng.hpp"

namespace lfd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// World-to-camera pinhole model: x_cam = R*X + t, pixel = dehom(K*x_cam).
struct PinholeCamera {
    Mat3 intrinsics = Mat3::Identity();
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int view_id = 0;

    void validate() const {
        if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
            throw InvariantError("camera rotation is not orthonormal");
        if (std::abs(rotation.determinant() - 1.0) > 1e-9)
            throw InvariantError("camera rotation determinant != +1");
        if (intrinsics(0, 0) <= 0 || intrinsics(1, 1) <= 0)
            throw InvariantError("camera focal entries must be positive");
        if (intrinsics(1, 0) != 0 || intrinsics(2, 0) != 0 || intrinsics(2, 1) != 0)
            throw InvariantError("camera intrinsics must be upper-triangular");
        if (intrinsics(2, 2) != 1.0)
            throw InvariantError("camera intrinsics must be normalized (K(2,2) == 1)");
    }

    Vec3 center() const { return -rotation.transpose() * translation; }

    // Camera-frame viewing ray through a pixel, scaled so ray.z() == 1;
    // the point at depth d along the ray is d * ray.
    Vec3 ray(const Vec2& pixel) const {
        // Closed-form inverse of the upper-triangular K with K(2,2) == 1.
        const double y = (pixel.y() - intrinsics(1, 2)) / intrinsics(1, 1);
        const double x = (pixel.x() - intrinsics(0, 2) - intrinsics(0, 1) * y) / intrinsics(0, 0);
        return Vec3(x, y, 1.0);
    }
};

struct DepthRange {
    double d_min = 0;
    double d_max = 0;

    void validate() const {
        if (!(0 < d_min && d_min < d_max))
            throw InvariantError("depth range requires 0 < d_min < d_max");
    }
};

// Plane attached to a superpixel: depth along camera z at the centroid plus a
// unit normal in the camera frame (facing the camera).
struct SuperpixelPlane {
    double depth = 0;
    Vec3 normal = Vec3(0, 0, -1);
};

inline Vec3 backproject(const PinholeCamera& cam, const Vec2& pixel, double depth) {
    const Vec3 cam_pt = depth * cam.ray(pixel);
    return cam.rotation.transpose() * (cam_pt - cam.translation);
}

// Returns (pixel, depth); depth is the camera-frame z of the point.
inline std::pair<Vec2, double> project(const PinholeCamera& cam, const Vec3& world) {
    const Vec3 cam_pt = cam.rotation * world + cam.translation;
    const Vec3 h = cam.intrinsics * cam_pt;
    return {Vec2(h.x() / h.z(), h.y() / h.z()), cam_pt.z()};
}

// Depth along the ray through query_pixel at which it meets the 3D plane
// anchored at (centroid, plane.depth). nullopt when the ray is parallel to
// the plane within tolerance.
inline std::optional<double> plane_depth_at(const PinholeCamera& cam, const SuperpixelPlane& plane,
                                            const Vec2& centroid, const Vec2& query_pixel) {
    const Vec3 anchor = plane.depth * cam.ray(centroid);
    const Vec3 v = cam.ray(query_pixel);
    const double denom = plane.normal.dot(v);
    if (std::abs(denom) <= 1e-9) return std::nullopt;
    return plane.normal.dot(anchor) / denom;
}

struct MappedPixel {
    Vec2 pixel;
    double depth;  // target camera frame z
};

// Plane-induced transfer of a reference pixel into a target camera.
// nullopt when the ray-plane intersection is degenerate or the point ends up
// behind the target camera; callers price such samples as invisible.
inline std::optional<MappedPixel> map_pixel_via_plane(const PinholeCamera& ref, const SuperpixelPlane& plane,
                                                      const Vec2& centroid, const Vec2& pixel,
                                                      const PinholeCamera& target) {
    const auto d = plane_depth_at(ref, plane, centroid, pixel);
    if (!d) return std::nullopt;
    const Vec3 world = backproject(ref, pixel, *d);
    const auto [tp, tz] = project(target, world);
    if (tz <= 0) return std::nullopt;
    return MappedPixel{tp, tz};
}

// Jittered inverse-depth sampling. The base grid has L uniform points in
// [1/d_max, 1/d_min]; each point gets an independent uniform jitter in
// [0, step), clamped at the near end so no depth drops below d_min.
template <typename Rng>
std::vector<double> sample_inverse_depths(const DepthRange& range, int levels, Rng& rng) {
    if (levels < 2) throw InvariantError("sample_inverse_depths requires at least 2 levels");
    range.validate();
    const double inv_lo = 1.0 / range.d_max;
    const double inv_hi = 1.0 / range.d_min;
    const double step = (inv_hi - inv_lo) / (levels - 1);
    std::vector<double> depths(levels);
    for (int k = 0; k < levels; ++k) {
        double inv = inv_lo + step * k + rng.next_double() * step;
        if (inv > inv_hi) inv = inv_hi;
        depths[k] = 1.0 / inv;
    }
    return depths;
}

}  // namespace lfd
