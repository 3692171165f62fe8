#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lfd/geometry.hpp"
#include "lfd/parallel.hpp"
#include "lfd/superpixel.hpp"
#include "lfd/sweep.hpp"

namespace lfd {

struct EnergyParams {
    double sigma = 0;       // depth-consistency Gaussian width, inverse-depth units (0 = derive from sweep step)
    float alpha = 0.075f;   // color Gaussian width, scaled-LAB units (7.5 LAB)
    float eta = 0.5f;       // occlusion regularizer
    int size_init = 0;      // initial kernel extent in pixels (0 = min image dimension)
    int steps_init = 5;     // initial kernel step in superpixels
    int iterations = 5;
    int max_neighbors = 0;
    // Ablation switches; all on for the full energy.
    bool use_smoothness = true;
    bool use_consistency = true;
    bool use_occlusion = true;

    void validate() const {
        if (sigma < 0 || alpha <= 0 || eta < 0 || eta > 1) throw InvalidParams("bad energy params");
        if (steps_init <= 0 || size_init < 0 || iterations < 0) throw InvalidParams("bad kernel params");
    }
};

inline double depth_consistency(double d1, double d2, double sigma) {
    const double r = 1.0 / d1 - 1.0 / d2;
    return std::exp(-(r * r) / (2.0 * sigma * sigma));
}

// Immutable per-run tables shared by every energy evaluation.
struct RefineContext {
    const MultiViewSet* mvs = nullptr;
    const std::vector<SuperpixelGrid>* grids = nullptr;
    EnergyParams params;
    std::vector<std::vector<float>> min_nb_sim;    // [view][sp], for the occlusion term
    std::vector<std::vector<int>> targets;         // [view] matching views
    std::vector<std::vector<Mat3>> rel_rot;        // [view][target] R_t * R_rᵀ
    std::vector<std::vector<Vec3>> rel_trans;      // [view][target] t_t − R_rel t_r

    const PinholeCamera& cam(int v) const { return mvs->cameras[v]; }
    const SuperpixelGrid& grid(int v) const { return (*grids)[v]; }
};

inline RefineContext make_refine_context(const MultiViewSet& mvs, const std::vector<SuperpixelGrid>& grids,
                                         EnergyParams params, int sweep_levels) {
    params.validate();
    if (params.sigma == 0) params.sigma = 1.5 * inverse_depth_step(mvs.range, sweep_levels);
    if (params.size_init == 0) params.size_init = std::min(mvs.width(), mvs.height());
    RefineContext ctx;
    ctx.mvs = &mvs;
    ctx.grids = &grids;
    ctx.params = params;
    const int n = mvs.num_views();
    ctx.min_nb_sim.resize(n);
    ctx.targets.resize(n);
    ctx.rel_rot.assign(n, std::vector<Mat3>(n));
    ctx.rel_trans.assign(n, std::vector<Vec3>(n));
    for (int v = 0; v < n; ++v) {
        ctx.targets[v] = matching_views(mvs, v, params.max_neighbors);
        ctx.min_nb_sim[v].resize(grids[v].num_superpixels());
        for (int sp = 0; sp < grids[v].num_superpixels(); ++sp)
            ctx.min_nb_sim[v][sp] = min_neighbor_similarity(grids[v], sp, params.alpha);
        for (int t = 0; t < n; ++t) {
            if (t == v) continue;
            ctx.rel_rot[v][t] = mvs.cameras[t].rotation * mvs.cameras[v].rotation.transpose();
            ctx.rel_trans[v][t] = mvs.cameras[t].translation - ctx.rel_rot[v][t] * mvs.cameras[v].translation;
        }
    }
    return ctx;
}

// Color-weighted agreement between a candidate plane and the neighbors'
// current centroid depths (immediate8 ring). Degenerate extrapolations score
// zero for that neighbor.
inline double smoothness_term(const RefineContext& ctx, int view, std::int32_t sp_id,
                              const SuperpixelPlane& plane, const PlaneMap& snapshot) {
    const SuperpixelGrid& grid = ctx.grid(view);
    const PinholeCamera& cam = ctx.cam(view);
    const Vec2 centroid(grid.sp[sp_id].cx, grid.sp[sp_id].cy);
    const Color& ref_color = grid.sp[sp_id].mean_color;
    double wsum = 0, acc = 0;
    for (const std::int32_t nb : grid_neighbors(grid, sp_id, NeighborPattern::Immediate8)) {
        const double w = color_similarity(ref_color, grid.sp[nb].mean_color, ctx.params.alpha);
        wsum += w;
        const auto extrapolated = plane_depth_at(cam, plane, centroid, Vec2(grid.sp[nb].cx, grid.sp[nb].cy));
        if (!extrapolated || *extrapolated <= 0) continue;
        acc += w * depth_consistency(snapshot.planes[view][nb].depth, *extrapolated, ctx.params.sigma);
    }
    if (wsum <= 1e-30) return 1.0;  // every weight underflowed; no constraint
    return acc / wsum;
}

// Per-target-view statistics gathered in one pass over the member pixels.
struct ViewPairStats {
    double photo = 0;       // S_i
    double visibility = 0;  // V = S_i * mean visible-depth agreement
    double occlusion = 0;   // O
    int x_count = 0;
    bool y_nonempty = false;
};

inline ViewPairStats pair_stats(const RefineContext& ctx, int view, std::int32_t sp_id,
                                const SuperpixelPlane& plane, int target, const PlaneMap& snapshot) {
    const SuperpixelGrid& grid = ctx.grid(view);
    const SuperpixelGrid& tgrid = ctx.grid(target);
    const PinholeCamera& cam = ctx.cam(view);
    const Mat3& K_t = ctx.mvs->cameras[target].intrinsics;
    const Mat3& R = ctx.rel_rot[view][target];
    const Vec3& tr = ctx.rel_trans[view][target];
    const DepthMap& tdepth = snapshot.depth[target];
    const Color& ref_color = grid.sp[sp_id].mean_color;
    const Vec2 centroid(grid.sp[sp_id].cx, grid.sp[sp_id].cy);
    const Vec3 anchor = plane.depth * cam.ray(centroid);
    const double plane_num = plane.normal.dot(anchor);
    const double inv_two_sigma2 = 1.0 / (2.0 * ctx.params.sigma * ctx.params.sigma);
    const double inv_two_alpha2 = 1.0 / (2.0 * static_cast<double>(ctx.params.alpha) * ctx.params.alpha);

    double photo_sum = 0, vis_sum = 0;
    int x_count = 0;
    bool y_nonempty = false;
    std::int32_t cached_label = -1;
    double cached_w = 0;
    for (const std::int32_t p : grid.pixels[sp_id]) {
        const int x = p % grid.width, y = p / grid.width;
        const Vec3 v = cam.ray(Vec2(x, y));
        const double denom = plane.normal.dot(v);
        if (std::abs(denom) <= 1e-9) continue;  // degenerate ray: invisible
        const double s = plane_num / denom;
        if (s <= 0) continue;
        const Vec3 xt = R * (s * v) + tr;
        if (xt.z() <= 0) continue;  // behind the target camera
        const double u = (K_t(0, 0) * xt.x() + K_t(0, 1) * xt.y() + K_t(0, 2) * xt.z()) / xt.z();
        const double w = (K_t(1, 1) * xt.y() + K_t(1, 2) * xt.z()) / xt.z();
        const int px = static_cast<int>(std::lround(u));
        const int py = static_cast<int>(std::lround(w));
        if (px < 0 || py < 0 || px >= tgrid.width || py >= tgrid.height) continue;
        const std::int32_t tlab = tgrid.label(px, py);
        if (tlab != cached_label) {
            cached_label = tlab;
            cached_w = std::exp(-static_cast<double>(color_dist2(ref_color, tgrid.sp[tlab].mean_color)) * inv_two_alpha2);
        }
        photo_sum += cached_w;
        const float td = tdepth.at(px, py);
        if (td <= 0) continue;  // no target depth: not in X or Y
        // A pixel is visible when the candidate is at or in front of the
        // target's current estimate (small relative slack for rounding).
        if (xt.z() <= td * (1.0 + 1e-6)) {
            const double r = 1.0 / xt.z() - 1.0 / td;
            vis_sum += std::exp(-r * r * inv_two_sigma2);
            ++x_count;
        } else {
            y_nonempty = true;
        }
    }
    ViewPairStats st;
    st.photo = photo_sum / static_cast<double>(grid.pixels[sp_id].size());
    st.x_count = x_count;
    st.y_nonempty = y_nonempty;
    st.visibility = x_count > 0 ? st.photo * (vis_sum / x_count) : 0.0;
    if (ctx.params.use_occlusion && y_nonempty)
        st.occlusion = ctx.params.eta * (1.0 - ctx.min_nb_sim[view][sp_id]);
    return st;
}

inline double superpixel_photo_similarity(const RefineContext& ctx, int view, std::int32_t sp_id,
                                          const SuperpixelPlane& plane, int target, const PlaneMap& snapshot) {
    return pair_stats(ctx, view, sp_id, plane, target, snapshot).photo;
}

inline double visibility_term(const RefineContext& ctx, int view, std::int32_t sp_id,
                              const SuperpixelPlane& plane, int target, const PlaneMap& snapshot) {
    return pair_stats(ctx, view, sp_id, plane, target, snapshot).visibility;
}

inline double occlusion_term(const RefineContext& ctx, int view, std::int32_t sp_id,
                             const SuperpixelPlane& plane, int target, const PlaneMap& snapshot) {
    return pair_stats(ctx, view, sp_id, plane, target, snapshot).occlusion;
}

inline double consistency_term(const RefineContext& ctx, int view, std::int32_t sp_id,
                               const SuperpixelPlane& plane, const PlaneMap& snapshot) {
    const auto& targets = ctx.targets[view];
    if (targets.empty()) return 1.0;
    double acc = 0;
    for (const int t : targets) {
        const ViewPairStats st = pair_stats(ctx, view, sp_id, plane, t, snapshot);
        acc += st.visibility + st.occlusion;
    }
    return acc / static_cast<double>(targets.size());
}

inline double energy(const RefineContext& ctx, int view, std::int32_t sp_id, const SuperpixelPlane& plane,
                     const PlaneMap& snapshot) {
    double e = 1.0;
    if (ctx.params.use_smoothness) e *= smoothness_term(ctx, view, sp_id, plane, snapshot);
    if (ctx.params.use_consistency) e *= consistency_term(ctx, view, sp_id, plane, snapshot);
    return e;
}

// Normals of the triangles spanned by the reference centroid and each pair
// of consecutive ring neighbors (E, NE, ..., SE, wrapping), lifted at their
// snapshot centroid depths. Flipped to face the camera; degenerate triangles
// and missing ring positions are skipped.
inline std::vector<Vec3> normal_candidates(const RefineContext& ctx, int view, std::int32_t sp_id,
                                           const PlaneMap& snapshot) {
    const SuperpixelGrid& grid = ctx.grid(view);
    const PinholeCamera& cam = ctx.cam(view);
    static constexpr int kDir[8][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}};
    const int gx = grid.sp[sp_id].gx, gy = grid.sp[sp_id].gy;
    std::array<std::int32_t, 8> ring;
    for (int k = 0; k < 8; ++k) {
        const int nx = gx + kDir[k][0], ny = gy + kDir[k][1];
        ring[k] = (nx < 0 || ny < 0 || nx >= grid.grid_w || ny >= grid.grid_h) ? -1 : ny * grid.grid_w + nx;
    }
    auto lift = [&](std::int32_t id) -> Vec3 {
        return snapshot.planes[view][id].depth * cam.ray(Vec2(grid.sp[id].cx, grid.sp[id].cy));
    };
    const Vec3 ref_pt = lift(sp_id);
    const Vec3 ref_ray = cam.ray(Vec2(grid.sp[sp_id].cx, grid.sp[sp_id].cy));
    std::vector<Vec3> out;
    for (int k = 0; k < 8; ++k) {
        const std::int32_t a = ring[k], b = ring[(k + 1) % 8];
        if (a < 0 || b < 0) continue;
        Vec3 n = (lift(a) - ref_pt).cross(lift(b) - ref_pt);
        const double len = n.norm();
        if (len <= 1e-12) continue;
        n /= len;
        if (n.dot(ref_ray) > 0) n = -n;
        if (n.dot(ref_ray) >= 0) continue;  // still degenerate (normal ⟂ ray)
        out.push_back(n);
    }
    return out;
}

struct RefineStats {
    std::atomic<std::uint64_t> accepted{0};
    std::atomic<std::uint64_t> violations{0};  // accepted updates that failed the strict-improvement check
};

// One Jacobi round: every (view, superpixel) reads the frozen snapshot and
// writes its slot in a fresh buffer. Propagation over the Eq.-(4) kernel,
// then normal refinement; both accept only strict energy improvements
// measured against the snapshot.
inline PlaneMap refine_iteration(const RefineContext& ctx, const PlaneMap& state, int l, int workers = 1,
                                 RefineStats* stats = nullptr) {
    const MultiViewSet& mvs = *ctx.mvs;
    const int kernel_px = static_cast<int>(ctx.params.size_init / static_cast<double>(l));
    const int kernel_step = std::max(1, static_cast<int>(std::lround(ctx.params.steps_init / static_cast<double>(l))));
    const double max_consistency = ctx.params.use_occlusion ? 1.0 + ctx.params.eta : 1.0;

    PlaneMap out;
    out.planes.resize(mvs.num_views());
    std::vector<std::size_t> task_base(mvs.num_views() + 1, 0);
    for (int v = 0; v < mvs.num_views(); ++v) {
        out.planes[v].resize(ctx.grid(v).num_superpixels());
        task_base[v + 1] = task_base[v] + ctx.grid(v).num_superpixels();
    }

    parallel_for(task_base.back(), workers, [&](std::size_t task) {
        int v = 0;
        while (task >= task_base[v + 1]) ++v;
        const std::int32_t sp = static_cast<std::int32_t>(task - task_base[v]);
        const SuperpixelGrid& grid = ctx.grid(v);
        const PinholeCamera& cam = mvs.cameras[v];
        const Vec2 centroid(grid.sp[sp].cx, grid.sp[sp].cy);

        SuperpixelPlane current = state.planes[v][sp];
        double e_cur = energy(ctx, v, sp, current, state);

        auto accept_if_better = [&](const SuperpixelPlane& cand, double e) {
            if (!(e > e_cur)) return;
            if (stats) {
                stats->accepted.fetch_add(1, std::memory_order_relaxed);
                // Independent re-check of the strict-improvement contract.
                if (!(energy(ctx, v, sp, cand, state) > energy(ctx, v, sp, current, state)))
                    stats->violations.fetch_add(1, std::memory_order_relaxed);
            }
            current = cand;
            e_cur = e;
        };

        auto try_candidate = [&](const SuperpixelPlane& cand) {
            if (cand.depth == current.depth && cand.normal == current.normal) return;
            if (cand.depth < mvs.range.d_min || cand.depth > mvs.range.d_max) return;
            // Cheap upper bound first: E <= E_s * max(E_c).
            if (ctx.params.use_smoothness && ctx.params.use_consistency) {
                const double es = smoothness_term(ctx, v, sp, cand, state);
                if (es * max_consistency <= e_cur) return;
                const double e = es * consistency_term(ctx, v, sp, cand, state);
                accept_if_better(cand, e);
                return;
            }
            accept_if_better(cand, energy(ctx, v, sp, cand, state));
        };

        // Propagation: adopt a kernel neighbor's plane re-anchored at the
        // reference centroid.
        for (const std::int32_t nb :
             grid_neighbors(grid, sp, NeighborPattern::Kernel, kernel_px, kernel_step)) {
            const SuperpixelPlane& nb_plane = state.planes[v][nb];
            const Vec2 nb_centroid(grid.sp[nb].cx, grid.sp[nb].cy);
            const auto d = plane_depth_at(cam, nb_plane, nb_centroid, centroid);
            if (!d || *d <= 0) continue;
            try_candidate(SuperpixelPlane{*d, nb_plane.normal});
        }

        // Normal refinement: keep the depth, test the triangle normals.
        for (const Vec3& n : normal_candidates(ctx, v, sp, state))
            try_candidate(SuperpixelPlane{current.depth, n});

        out.planes[v][sp] = current;
    });
    return out;
}

inline PlaneMap run_refinement(const RefineContext& ctx, PlaneMap state, int workers = 1,
                               RefineStats* stats = nullptr) {
    for (int l = 1; l <= ctx.params.iterations; ++l) {
        state = refine_iteration(ctx, state, l, workers, stats);
        rasterize(*ctx.mvs, *ctx.grids, state);
    }
    return state;
}

}  // namespace lfd
