#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "lfd/geometry.hpp"
#include "lfd/io.hpp"
#include "lfd/parallel.hpp"
#include "lfd/superpixel.hpp"

namespace lfd {

struct SweepParams {
    int levels = 80;              // inverse-depth quantization levels L
    float tssd_threshold = 0.05f;  // T, squared scaled-LAB units
    int max_neighbors = 0;        // 0 = match against all other views

    void validate() const {
        if (levels < 2) throw InvalidParams("sweep levels must be >= 2");
        if (tssd_threshold <= 0) throw InvalidParams("tssd threshold must be > 0");
    }
};

// Optimization state: one plane per superpixel per view, plus the depth maps
// rasterized from those planes.
struct PlaneMap {
    std::vector<std::vector<SuperpixelPlane>> planes;  // [view][sp]
    std::vector<DepthMap> depth;                       // [view]
};

inline float tssd(const Color& ref, const Color& mapped, float threshold) {
    return std::min(threshold, color_dist2(ref, mapped));
}

// Inverse-depth quantization step of the sweep; reused as the default sigma
// scale and fusion tolerance.
inline double inverse_depth_step(const DepthRange& range, int levels) {
    return (1.0 / range.d_min - 1.0 / range.d_max) / (levels - 1);
}

// Depth at every pixel of every superpixel from its own plane; degenerate
// rays rasterize as invalid (0).
inline void rasterize(const MultiViewSet& mvs, const std::vector<SuperpixelGrid>& grids, PlaneMap& pm) {
    pm.depth.resize(mvs.num_views());
    for (int v = 0; v < mvs.num_views(); ++v) {
        const SuperpixelGrid& grid = grids[v];
        DepthMap& dm = pm.depth[v];
        dm = DepthMap(grid.width, grid.height, 0.f);
        const PinholeCamera& cam = mvs.cameras[v];
        for (int sp = 0; sp < grid.num_superpixels(); ++sp) {
            const SuperpixelPlane& plane = pm.planes[v][sp];
            const Vec2 centroid(grid.sp[sp].cx, grid.sp[sp].cy);
            const Vec3 anchor = plane.depth * cam.ray(centroid);
            const double num = plane.normal.dot(anchor);
            for (const std::int32_t p : grid.pixels[sp]) {
                const int x = p % grid.width, y = p / grid.width;
                const double denom = plane.normal.dot(cam.ray(Vec2(x, y)));
                dm.data[p] = std::abs(denom) <= 1e-9 ? 0.f : static_cast<float>(num / denom);
            }
        }
    }
}

// Views matched against `view` in Eq.-style cost accumulation: all others,
// or the max_neighbors nearest camera centers when set.
inline std::vector<int> matching_views(const MultiViewSet& mvs, int view, int max_neighbors) {
    std::vector<int> others;
    for (int i = 0; i < mvs.num_views(); ++i)
        if (i != view) others.push_back(i);
    if (max_neighbors > 0 && static_cast<int>(others.size()) > max_neighbors) {
        const Vec3 c = mvs.cameras[view].center();
        std::stable_sort(others.begin(), others.end(), [&](int a, int b) {
            return (mvs.cameras[a].center() - c).squaredNorm() < (mvs.cameras[b].center() - c).squaredNorm();
        });
        others.resize(max_neighbors);
        std::sort(others.begin(), others.end());
    }
    return others;
}

// Truncated SSD of a fronto-parallel plane hypothesis, accumulated over the
// superpixel area and the given target views. Samples that leave the target
// image or fall behind its camera cost exactly T.
inline double sweep_cost(const MultiViewSet& mvs, const std::vector<SuperpixelGrid>& grids, int view,
                         std::int32_t sp_id, double depth, const std::vector<int>& targets, float threshold) {
    const SuperpixelGrid& grid = grids[view];
    const PinholeCamera& cam = mvs.cameras[view];
    const ImageBuffer& ref_img = mvs.images[view];
    const SuperpixelPlane plane{depth, Vec3(0, 0, -1)};
    const Vec2 centroid(grid.sp[sp_id].cx, grid.sp[sp_id].cy);
    double cost = 0;
    for (const int t : targets) {
        const PinholeCamera& tcam = mvs.cameras[t];
        const ImageBuffer& timg = mvs.images[t];
        for (const std::int32_t p : grid.pixels[sp_id]) {
            const int x = p % grid.width, y = p / grid.width;
            const auto mapped = map_pixel_via_plane(cam, plane, centroid, Vec2(x, y), tcam);
            if (!mapped || !timg.contains(mapped->pixel.x(), mapped->pixel.y())) {
                cost += threshold;
                continue;
            }
            cost += tssd(ref_img.at(x, y), timg.bilinear(mapped->pixel.x(), mapped->pixel.y()), threshold);
        }
    }
    return cost;
}

// Jittered fronto-parallel sweep over the superpixels of one view. Each
// (view, superpixel) pair draws its own inverse-depth samples from a stream
// keyed by (seed, view, sp); ties at the argmin go to the smaller depth.
inline std::vector<SuperpixelPlane> sweep_view(const MultiViewSet& mvs, const std::vector<SuperpixelGrid>& grids,
                                               int view, const SweepParams& params, std::uint64_t seed,
                                               int workers = 1) {
    params.validate();
    mvs.range.validate();
    const std::vector<int> targets = matching_views(mvs, view, params.max_neighbors);
    std::vector<SuperpixelPlane> planes(grids[view].num_superpixels());
    parallel_for(planes.size(), workers, [&](std::size_t task) {
        const std::int32_t sp = static_cast<std::int32_t>(task);
        RandomStream rng = derive_stream(seed, static_cast<std::uint64_t>(view), static_cast<std::uint64_t>(sp));
        const std::vector<double> depths = sample_inverse_depths(mvs.range, params.levels, rng);
        double best_cost = 0;
        double best_depth = 0;
        bool first = true;
        // depths are sorted by inverse depth (descending depth); iterate so
        // that cost ties resolve to the smaller depth.
        for (auto it = depths.rbegin(); it != depths.rend(); ++it) {
            const double c = sweep_cost(mvs, grids, view, sp, *it, targets, params.tssd_threshold);
            if (first || c < best_cost || (c == best_cost && *it < best_depth)) {
                best_cost = c;
                best_depth = *it;
                first = false;
            }
        }
        planes[task] = SuperpixelPlane{best_depth, Vec3(0, 0, -1)};
    });
    return planes;
}

inline PlaneMap plane_sweep_init(const MultiViewSet& mvs, const std::vector<SuperpixelGrid>& grids,
                                 const SweepParams& params, std::uint64_t seed, int workers = 1) {
    PlaneMap pm;
    pm.planes.resize(mvs.num_views());
    for (int v = 0; v < mvs.num_views(); ++v) pm.planes[v] = sweep_view(mvs, grids, v, params, seed, workers);
    rasterize(mvs, grids, pm);
    return pm;
}

}  // namespace lfd
