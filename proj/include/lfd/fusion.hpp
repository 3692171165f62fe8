#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lfd/geometry.hpp"
#include "lfd/io.hpp"
#include "lfd/parallel.hpp"

namespace lfd {

struct DepthCandidate {
    float depth;      // reference camera frame
    int source_view;
};

// Per reference pixel: the depths that project there from any view.
struct CandidateRaster {
    int width = 0, height = 0;
    std::vector<std::vector<DepthCandidate>> lists;

    std::vector<DepthCandidate>& at(int x, int y) { return lists[static_cast<std::size_t>(y) * width + x]; }
    const std::vector<DepthCandidate>& at(int x, int y) const { return lists[static_cast<std::size_t>(y) * width + x]; }
};

// Splat every valid pixel of every view (the reference included) into the
// reference viewport with its reference-frame depth. Source views and pixels
// are scanned in order, so candidate lists have a deterministic layout.
inline CandidateRaster gather_candidates(int reference_view, const std::vector<DepthMap>& maps,
                                         const std::vector<PinholeCamera>& cameras) {
    const DepthMap& ref_map = maps[reference_view];
    CandidateRaster cr;
    cr.width = ref_map.width;
    cr.height = ref_map.height;
    cr.lists.assign(static_cast<std::size_t>(cr.width) * cr.height, {});
    const PinholeCamera& ref_cam = cameras[reference_view];
    for (std::size_t s = 0; s < maps.size(); ++s) {
        const DepthMap& src = maps[s];
        const PinholeCamera& scam = cameras[s];
        const Mat3 R = ref_cam.rotation * scam.rotation.transpose();
        const Vec3 t = ref_cam.translation - R * scam.translation;
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                const float d = src.at(x, y);
                if (d <= 0) continue;
                const Vec3 xr = R * (static_cast<double>(d) * scam.ray(Vec2(x, y))) + t;
                if (xr.z() <= 0) continue;
                const Vec3 h = ref_cam.intrinsics * xr;
                const int px = static_cast<int>(std::lround(h.x() / h.z()));
                const int py = static_cast<int>(std::lround(h.y() / h.z()));
                if (px < 0 || py < 0 || px >= cr.width || py >= cr.height) continue;
                cr.at(px, py).push_back({static_cast<float>(xr.z()), static_cast<int>(s)});
            }
        }
    }
    return cr;
}

// Stability counting in inverse depth: a candidate gains a point for every
// other candidate within epsilon and loses one for every other outside it.
// The smallest depth with non-negative stability wins; ties go to the
// smallest source view id.
inline DepthMap stability_fuse(const CandidateRaster& candidates, double epsilon, int workers = 1) {
    if (epsilon <= 0) throw InvariantError("fusion epsilon must be > 0");
    DepthMap out(candidates.width, candidates.height, 0.f);
    parallel_for(candidates.lists.size(), workers, [&](std::size_t i) {
        const auto& list = candidates.lists[i];
        if (list.empty()) return;
        float best_depth = 0;
        int best_view = 0;
        bool found = false;
        for (const auto& c : list) {
            int stability = 0;
            const double inv_c = 1.0 / c.depth;
            for (const auto& j : list) {
                if (&j == &c) continue;
                stability += std::abs(1.0 / j.depth - inv_c) <= epsilon ? 1 : -1;
            }
            if (stability < 0) continue;
            if (!found || c.depth < best_depth ||
                (c.depth == best_depth && c.source_view < best_view)) {
                best_depth = c.depth;
                best_view = c.source_view;
                found = true;
            }
        }
        if (found) out.data[i] = best_depth;
    });
    return out;
}

inline std::vector<DepthMap> fuse_all(const std::vector<DepthMap>& maps, const std::vector<PinholeCamera>& cameras,
                                      double epsilon, int workers = 1) {
    std::vector<DepthMap> out(maps.size());
    for (std::size_t v = 0; v < maps.size(); ++v)
        out[v] = stability_fuse(gather_candidates(static_cast<int>(v), maps, cameras), epsilon, workers);
    return out;
}

}  // namespace lfd
