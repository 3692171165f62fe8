#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "lfd/fixtures.hpp"
#include "lfd/sweep.hpp"

using namespace lfd;

namespace {

std::vector<SuperpixelGrid> segment_all(const MultiViewSet& mvs, int size) {
    SlicParams p;
    p.size = size;
    std::vector<SuperpixelGrid> grids;
    for (const ImageBuffer& img : mvs.images) grids.push_back(slic_segment(img, p));
    return grids;
}

// Naive per-pixel sweep oracle. Exploits the fact that a fronto-parallel
// plane has constant depth, warps with backproject/project directly, and
// never calls sweep_cost or map_pixel_via_plane.
double oracle_sweep_best_depth(const MultiViewSet& mvs, const SuperpixelGrid& grid, int view, std::int32_t sp,
                               const SweepParams& params, std::uint64_t seed) {
    RandomStream rng = derive_stream(seed, static_cast<std::uint64_t>(view), static_cast<std::uint64_t>(sp));
    const std::vector<double> depths = sample_inverse_depths(mvs.range, params.levels, rng);
    double best_cost = 0, best_depth = 0;
    bool first = true;
    for (auto it = depths.rbegin(); it != depths.rend(); ++it) {
        const double d = *it;
        double cost = 0;
        for (int t = 0; t < mvs.num_views(); ++t) {
            if (t == view) continue;
            for (const std::int32_t p : grid.pixels[sp]) {
                const int x = p % grid.width, y = p / grid.width;
                const Vec3 world = backproject(mvs.cameras[view], Vec2(x, y), d);
                const auto [tp, tz] = project(mvs.cameras[t], world);
                if (tz <= 0 || !mvs.images[t].contains(tp.x(), tp.y())) {
                    cost += params.tssd_threshold;
                    continue;
                }
                const Color ref = mvs.images[view].at(x, y);
                const Color got = mvs.images[t].bilinear(tp.x(), tp.y());
                cost += std::min(params.tssd_threshold, color_dist2(ref, got));
            }
        }
        if (first || cost < best_cost || (cost == best_cost && d < best_depth)) {
            best_cost = cost;
            best_depth = d;
            first = false;
        }
    }
    return best_depth;
}

}  // namespace

TEST_CASE("tssd truncates at the threshold") {
    const Color a{0.1f, 0.2f, 0.3f};
    const Color b{0.15f, 0.2f, 0.3f};
    REQUIRE(tssd(a, b, 0.05f) == Catch::Approx(0.0025).margin(1e-7));
    REQUIRE(tssd(a, Color{0.9f, 0.9f, 0.9f}, 0.05f) == 0.05f);
    REQUIRE(tssd(a, a, 0.05f) == 0.f);
}

TEST_CASE("inverse_depth_step") {
    REQUIRE(inverse_depth_step(DepthRange{1, 2}, 3) == Catch::Approx(0.25));
    REQUIRE(inverse_depth_step(DepthRange{2, 4}, 2) == Catch::Approx(0.25));
}

TEST_CASE("matching_views selects all or nearest") {
    MultiViewSet mvs;
    mvs.cameras = make_rectified_rig(5, 100, 0.1, 64, 64);
    mvs.images.assign(5, ImageBuffer(4, 4));
    REQUIRE(matching_views(mvs, 2, 0) == std::vector<int>{0, 1, 3, 4});
    REQUIRE(matching_views(mvs, 2, 2) == std::vector<int>{1, 3});
    REQUIRE(matching_views(mvs, 0, 2) == std::vector<int>{1, 2});
    REQUIRE(matching_views(mvs, 4, 3) == std::vector<int>{1, 2, 3});
}

TEST_CASE("rasterize fronto and slanted planes") {
    MultiViewSet mvs;
    mvs.cameras = {make_pinhole(50, 8, 8, Vec3::Zero())};
    mvs.images = {ImageBuffer(16, 16, 0.5f)};
    mvs.range = DepthRange{1, 10};
    const auto grids = segment_all(mvs, 8);

    PlaneMap pm;
    pm.planes = {std::vector<SuperpixelPlane>(grids[0].num_superpixels(), SuperpixelPlane{4.0, Vec3(0, 0, -1)})};
    rasterize(mvs, grids, pm);
    for (const float d : pm.depth[0].data) REQUIRE(d == Catch::Approx(4.0).margin(1e-6));

    const SuperpixelPlane slanted{4.0, Vec3(-0.5, 0.1, -1).normalized()};
    for (auto& pl : pm.planes[0]) pl = slanted;
    rasterize(mvs, grids, pm);
    for (int sp = 0; sp < grids[0].num_superpixels(); ++sp) {
        const Vec2 c(grids[0].sp[sp].cx, grids[0].sp[sp].cy);
        for (const std::int32_t p : grids[0].pixels[sp]) {
            const int x = p % 16, y = p / 16;
            const auto d = plane_depth_at(mvs.cameras[0], slanted, c, Vec2(x, y));
            REQUIRE(pm.depth[0].data[p] == Catch::Approx(*d).margin(1e-5));
        }
    }
}

TEST_CASE("sweep_cost is minimized near the true wall depth") {
    const SceneSpec spec = wall_scene(2, 64, 48, 80, 0.4, 5.0);
    const RenderedScene scene = render_scene(spec);
    const auto grids = segment_all(scene.views, 8);
    const std::vector<int> targets{1};
    const std::int32_t sp = grids[0].label(32, 24);  // central superpixel
    const double c_true = sweep_cost(scene.views, grids, 0, sp, 5.0, targets, 0.05f);
    const double c_far = sweep_cost(scene.views, grids, 0, sp, 7.5, targets, 0.05f);
    const double c_near = sweep_cost(scene.views, grids, 0, sp, 3.0, targets, 0.05f);
    REQUIRE(c_true < 0.25 * c_far);
    REQUIRE(c_true < 0.25 * c_near);
}

TEST_CASE("samples leaving the target image cost exactly T") {
    // Disparity f*B/d = 100*1/0.1 = 1000 px, far beyond a 32 px image.
    MultiViewSet mvs;
    mvs.cameras = make_rectified_rig(2, 100, 1.0, 32, 32);
    mvs.images.assign(2, ImageBuffer(32, 32, 0.5f));
    mvs.range = DepthRange{0.05, 1};
    const auto grids = segment_all(mvs, 8);
    const float T = 0.05f;
    const double c = sweep_cost(mvs, grids, 0, 0, 0.1, {1}, T);
    REQUIRE(c == Catch::Approx(static_cast<double>(T) * grids[0].pixels[0].size()));
}

TEST_CASE("plane_sweep_init matches the naive oracle exactly") {
    const SceneSpec spec = staircase_scene(2, 48, 48, 60, 0.3);
    const RenderedScene scene = render_scene(spec);
    const auto grids = segment_all(scene.views, 8);
    SweepParams params;
    params.levels = 12;
    const std::uint64_t seed = 77;
    const PlaneMap pm = plane_sweep_init(scene.views, grids, params, seed);
    for (int v = 0; v < 2; ++v) {
        for (std::int32_t sp = 0; sp < grids[v].num_superpixels(); ++sp) {
            const double want = oracle_sweep_best_depth(scene.views, grids[v], v, sp, params, seed);
            REQUIRE(pm.planes[v][sp].depth == want);
            REQUIRE(pm.planes[v][sp].normal == Vec3(0, 0, -1));
        }
    }
}

TEST_CASE("plane_sweep_init recovers staircase depths") {
    const SceneSpec spec = staircase_scene(3, 96, 72, 80, 0.4);
    const RenderedScene scene = render_scene(spec);
    const auto grids = segment_all(scene.views, 10);
    SweepParams params;
    params.levels = 40;
    const PlaneMap pm = plane_sweep_init(scene.views, grids, params, 5);
    const double step = inverse_depth_step(scene.views.range, params.levels);
    // Score superpixels on a single surface away from the lateral borders;
    // edge columns are only half-visible in the other views and superpixels
    // straddling a depth step have no single correct answer.
    int good = 0, total = 0;
    const int margin = 10;
    for (std::int32_t sp = 0; sp < grids[1].num_superpixels(); ++sp) {
        const int cx = static_cast<int>(grids[1].sp[sp].cx);
        const int cy = static_cast<int>(grids[1].sp[sp].cy);
        if (cx < margin || cx >= scene.ground_truth[1].width - margin) continue;
        const float gt = scene.ground_truth[1].at(cx, cy);
        const float gl = scene.ground_truth[1].at(cx - 6, cy);
        const float gr = scene.ground_truth[1].at(cx + 6, cy);
        if (gt <= 0 || gl != gt || gr != gt) continue;
        ++total;
        if (std::abs(1.0 / pm.planes[1][sp].depth - 1.0 / gt) < 1.5 * step) ++good;
    }
    REQUIRE(total > 30);
    REQUIRE(static_cast<double>(good) / total > 0.9);
}

TEST_CASE("cost ties resolve to the smallest sampled depth") {
    // Two coincident cameras over uniform images: every depth warps a pixel
    // onto an identical color, so all costs are zero.
    MultiViewSet mvs;
    mvs.cameras = {make_pinhole(50, 8, 8, Vec3::Zero()), make_pinhole(50, 8, 8, Vec3::Zero())};
    mvs.cameras[1].view_id = 1;
    mvs.images.assign(2, ImageBuffer(16, 16, 0.3f));
    mvs.range = DepthRange{1, 2};
    const auto grids = segment_all(mvs, 8);
    SweepParams params;
    params.levels = 6;
    const std::uint64_t seed = 9;
    const PlaneMap pm = plane_sweep_init(mvs, grids, params, seed);
    for (int v = 0; v < 2; ++v)
        for (std::int32_t sp = 0; sp < grids[v].num_superpixels(); ++sp) {
            RandomStream rng = derive_stream(seed, static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(sp));
            const auto depths = sample_inverse_depths(mvs.range, params.levels, rng);
            REQUIRE(pm.planes[v][sp].depth == *std::min_element(depths.begin(), depths.end()));
        }
}

TEST_CASE("plane_sweep_init is deterministic across worker counts") {
    const SceneSpec spec = wall_scene(2, 48, 32, 60, 0.3, 5.0);
    const RenderedScene scene = render_scene(spec);
    const auto grids = segment_all(scene.views, 8);
    SweepParams params;
    params.levels = 8;
    const PlaneMap a = plane_sweep_init(scene.views, grids, params, 1, 1);
    const PlaneMap b = plane_sweep_init(scene.views, grids, params, 1, 4);
    for (int v = 0; v < 2; ++v) {
        REQUIRE(a.depth[v].data == b.depth[v].data);
        for (std::size_t sp = 0; sp < a.planes[v].size(); ++sp)
            REQUIRE(a.planes[v][sp].depth == b.planes[v][sp].depth);
    }
}
