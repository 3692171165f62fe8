#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lfd/fixtures.hpp"
#include "lfd/refine.hpp"

using namespace lfd;

namespace {

std::vector<SuperpixelGrid> segment_all(const MultiViewSet& mvs, int size) {
    SlicParams p;
    p.size = size;
    std::vector<SuperpixelGrid> grids;
    for (const ImageBuffer& img : mvs.images) grids.push_back(slic_segment(img, p));
    return grids;
}

// 24x24 single view over a block-colored image; 3x3 superpixels of size 8.
struct SingleViewRig {
    MultiViewSet mvs;
    std::vector<SuperpixelGrid> grids;

    explicit SingleViewRig(const std::array<Color, 9>& colors) {
        mvs.cameras = {make_pinhole(50, 12, 12, Vec3::Zero())};
        ImageBuffer img(24, 24);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) img.set(x, y, colors[(y / 8) * 3 + x / 8]);
        mvs.images = {img};
        mvs.range = DepthRange{1, 20};
        grids = segment_all(mvs, 8);
    }
};

PlaneMap fronto_map(const std::vector<SuperpixelGrid>& grids, const MultiViewSet& mvs, double depth) {
    PlaneMap pm;
    for (const SuperpixelGrid& g : grids)
        pm.planes.push_back(std::vector<SuperpixelPlane>(g.num_superpixels(), SuperpixelPlane{depth, Vec3(0, 0, -1)}));
    rasterize(mvs, grids, pm);
    return pm;
}

}  // namespace

TEST_CASE("depth_consistency hand values") {
    REQUIRE(depth_consistency(3.0, 3.0, 0.1) == Catch::Approx(1.0));
    // Inverse-depth residual 1/1 - 1/2 = 0.5 with sigma 0.5 -> exp(-1/2).
    REQUIRE(depth_consistency(1.0, 2.0, 0.5) == Catch::Approx(std::exp(-0.5)));
    REQUIRE(depth_consistency(2.0, 1.0, 0.5) == Catch::Approx(std::exp(-0.5)));
}

TEST_CASE("smoothness_term against hand-computed weighted average") {
    std::array<Color, 9> colors;
    colors.fill(Color{0.5f, 0.5f, 0.5f});
    SingleViewRig rig(colors);
    EnergyParams params;
    params.sigma = 0.05;
    const RefineContext ctx = make_refine_context(rig.mvs, rig.grids, params, 10);
    const PlaneMap snapshot = fronto_map(rig.grids, rig.mvs, 5.0);

    // Matching fronto candidate extrapolates the neighbors' own depth: 1.
    REQUIRE(smoothness_term(ctx, 0, 4, SuperpixelPlane{5.0, Vec3(0, 0, -1)}, snapshot) == Catch::Approx(1.0));
    // Uniform colors make every weight 1, so a fronto plane at depth d scores
    // the plain consistency between d and 5.
    const double got = smoothness_term(ctx, 0, 4, SuperpixelPlane{4.0, Vec3(0, 0, -1)}, snapshot);
    REQUIRE(got == Catch::Approx(depth_consistency(4.0, 5.0, params.sigma)));

    // One odd-colored neighbor discounts its disagreement.
    auto colors2 = colors;
    colors2[1] = Color{0.5f + 0.075f, 0.5f, 0.5f};  // weight exp(-1/2) vs center
    SingleViewRig rig2(colors2);
    const RefineContext ctx2 = make_refine_context(rig2.mvs, rig2.grids, params, 10);
    PlaneMap snap2 = fronto_map(rig2.grids, rig2.mvs, 5.0);
    snap2.planes[0][1].depth = 7.0;  // only the odd neighbor disagrees
    rasterize(rig2.mvs, rig2.grids, snap2);
    const double w_odd = std::exp(-0.5);
    const double expect = (7.0 * 1.0 + w_odd * depth_consistency(7.0, 5.0, params.sigma)) / (7.0 + w_odd);
    REQUIRE(smoothness_term(ctx2, 0, 4, SuperpixelPlane{5.0, Vec3(0, 0, -1)}, snap2) ==
            Catch::Approx(expect).margin(1e-6));
}

TEST_CASE("photo, visibility and consistency on coincident views") {
    MultiViewSet mvs;
    mvs.cameras = {make_pinhole(50, 12, 12, Vec3::Zero()), make_pinhole(50, 12, 12, Vec3::Zero())};
    mvs.cameras[1].view_id = 1;
    mvs.images.assign(2, ImageBuffer(24, 24, 0.4f));
    mvs.range = DepthRange{1, 20};
    const auto grids = segment_all(mvs, 8);
    EnergyParams params;
    params.sigma = 0.05;
    const RefineContext ctx = make_refine_context(mvs, grids, params, 10);
    const PlaneMap snapshot = fronto_map(grids, mvs, 5.0);

    const SuperpixelPlane agree{5.0, Vec3(0, 0, -1)};
    REQUIRE(superpixel_photo_similarity(ctx, 0, 4, agree, 1, snapshot) == Catch::Approx(1.0));
    REQUIRE(visibility_term(ctx, 0, 4, agree, 1, snapshot) == Catch::Approx(1.0));
    REQUIRE(consistency_term(ctx, 0, 4, agree, snapshot) == Catch::Approx(1.0));
    REQUIRE(energy(ctx, 0, 4, agree, snapshot) == Catch::Approx(1.0));

    // A nearer candidate stays in front of the target surface: still visible,
    // discounted by the inverse-depth Gaussian.
    const SuperpixelPlane nearer{4.0, Vec3(0, 0, -1)};
    const double g = depth_consistency(4.0, 5.0, params.sigma);
    REQUIRE(visibility_term(ctx, 0, 4, nearer, 1, snapshot) == Catch::Approx(g).margin(1e-9));

    // A farther candidate lands behind the target surface everywhere: the
    // visible set is empty and (with uniform colors) no occlusion credit.
    const SuperpixelPlane farther{7.0, Vec3(0, 0, -1)};
    REQUIRE(visibility_term(ctx, 0, 4, farther, 1, snapshot) == 0.0);
    REQUIRE(occlusion_term(ctx, 0, 4, farther, 1, snapshot) == 0.0);
    REQUIRE(consistency_term(ctx, 0, 4, farther, snapshot) == 0.0);
}

TEST_CASE("occlusion credit requires a color edge and an occluded sample") {
    MultiViewSet mvs;
    mvs.cameras = {make_pinhole(50, 12, 12, Vec3::Zero()), make_pinhole(50, 12, 12, Vec3::Zero())};
    mvs.cameras[1].view_id = 1;
    ImageBuffer img(24, 24, 0.4f);
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) img.set(x, y, Color{0.9f, 0.2f, 0.2f});  // center block pops
    mvs.images = {img, img};
    mvs.range = DepthRange{1, 20};
    const auto grids = segment_all(mvs, 8);
    EnergyParams params;
    params.sigma = 0.05;
    params.eta = 0.5f;
    const RefineContext ctx = make_refine_context(mvs, grids, params, 10);
    const PlaneMap snapshot = fronto_map(grids, mvs, 5.0);

    const float min_sim = min_neighbor_similarity(grids[0], 4, params.alpha);
    REQUIRE(min_sim < 0.1f);
    const SuperpixelPlane behind{7.0, Vec3(0, 0, -1)};
    const double occ = occlusion_term(ctx, 0, 4, behind, 1, snapshot);
    REQUIRE(occ == Catch::Approx(0.5 * (1.0 - min_sim)).margin(1e-6));
    // In front of the surface nothing is occluded: no credit.
    REQUIRE(occlusion_term(ctx, 0, 4, SuperpixelPlane{4.0, Vec3(0, 0, -1)}, 1, snapshot) == 0.0);
    // The switch disables the credit entirely.
    EnergyParams no_occ = params;
    no_occ.use_occlusion = false;
    const RefineContext ctx2 = make_refine_context(mvs, grids, no_occ, 10);
    REQUIRE(occlusion_term(ctx2, 0, 4, behind, 1, snapshot) == 0.0);
}

TEST_CASE("normal_candidates from fronto and slanted neighborhoods") {
    std::array<Color, 9> colors;
    colors.fill(Color{0.5f, 0.5f, 0.5f});
    SingleViewRig rig(colors);
    EnergyParams params;
    const RefineContext ctx = make_refine_context(rig.mvs, rig.grids, params, 10);

    // All centroids at depth 5 lie in the z = 5 plane.
    PlaneMap snapshot = fronto_map(rig.grids, rig.mvs, 5.0);
    auto cands = normal_candidates(ctx, 0, 4, snapshot);
    REQUIRE(cands.size() == 8);
    for (const Vec3& n : cands) REQUIRE((n - Vec3(0, 0, -1)).norm() < 1e-9);

    // Corner superpixel has 3 ring ids -> 2 consecutive pairs... only pairs
    // with both present survive; ring holes also break wrapping pairs.
    REQUIRE(normal_candidates(ctx, 0, 0, snapshot).size() == 2);

    // Centroid depths sampled from a slanted plane reproduce its normal.
    const Vec3 true_n = Vec3(-0.4, 0.2, -1).normalized();
    const SuperpixelPlane true_plane{5.0, true_n};
    const Vec2 anchor_px(rig.grids[0].sp[4].cx, rig.grids[0].sp[4].cy);
    for (int sp = 0; sp < 9; ++sp) {
        const Vec2 c(rig.grids[0].sp[sp].cx, rig.grids[0].sp[sp].cy);
        snapshot.planes[0][sp].depth = *plane_depth_at(rig.mvs.cameras[0], true_plane, anchor_px, c);
    }
    for (const Vec3& n : normal_candidates(ctx, 0, 4, snapshot)) REQUIRE((n - true_n).norm() < 1e-9);
}

TEST_CASE("refine_iteration repairs a corrupted superpixel by propagation") {
    const SceneSpec spec = wall_scene(3, 72, 48, 70, 0.35, 5.0);
    const RenderedScene scene = render_scene(spec);
    const auto grids = segment_all(scene.views, 8);
    EnergyParams params;
    const RefineContext ctx = make_refine_context(scene.views, grids, params, 40);
    PlaneMap state = fronto_map(grids, scene.views, 5.0);
    const std::int32_t victim = grids[1].label(36, 24);
    state.planes[1][victim].depth = 9.0;
    rasterize(scene.views, grids, state);

    RefineStats stats;
    const PlaneMap next = refine_iteration(ctx, state, 1, 1, &stats);
    REQUIRE(next.planes[1][victim].depth == Catch::Approx(5.0).margin(1e-9));
    REQUIRE(stats.violations.load() == 0);
    REQUIRE(stats.accepted.load() >= 1);
}

TEST_CASE("refinement is deterministic across worker counts") {
    const SceneSpec spec = staircase_scene(3, 72, 48, 60, 0.3);
    const RenderedScene scene = render_scene(spec);
    const auto grids = segment_all(scene.views, 8);
    EnergyParams params;
    params.iterations = 2;
    const RefineContext ctx = make_refine_context(scene.views, grids, params, 24);
    const PlaneMap init = plane_sweep_init(scene.views, grids, SweepParams{24, 0.05f, 0}, 3);
    const PlaneMap a = run_refinement(ctx, init, 1);
    const PlaneMap b = run_refinement(ctx, init, 4);
    for (int v = 0; v < 3; ++v) {
        REQUIRE(a.depth[v].data == b.depth[v].data);
        for (std::size_t sp = 0; sp < a.planes[v].size(); ++sp) {
            REQUIRE(a.planes[v][sp].depth == b.planes[v][sp].depth);
            REQUIRE(a.planes[v][sp].normal == b.planes[v][sp].normal);
        }
    }
}

TEST_CASE("refinement never accepts a non-improving update and does not hurt accuracy") {
    const SceneSpec spec = staircase_scene(3, 96, 72, 80, 0.4);
    const RenderedScene scene = render_scene(spec);
    const auto grids = segment_all(scene.views, 10);
    SweepParams sweep;
    sweep.levels = 30;
    const PlaneMap init = plane_sweep_init(scene.views, grids, sweep, 5);
    EnergyParams params;
    params.iterations = 3;
    const RefineContext ctx = make_refine_context(scene.views, grids, params, sweep.levels);
    RefineStats stats;
    const PlaneMap refined = run_refinement(ctx, init, 1, &stats);
    REQUIRE(stats.violations.load() == 0);

    auto median_err = [&](const PlaneMap& pm) {
        std::vector<double> errs;
        for (std::int32_t sp = 0; sp < grids[1].num_superpixels(); ++sp) {
            const int cx = static_cast<int>(grids[1].sp[sp].cx);
            const int cy = static_cast<int>(grids[1].sp[sp].cy);
            const float gt = scene.ground_truth[1].at(cx, cy);
            if (gt <= 0) continue;
            errs.push_back(std::abs(1.0 / pm.planes[1][sp].depth - 1.0 / gt));
        }
        std::sort(errs.begin(), errs.end());
        return errs[errs.size() / 2];
    };
    REQUIRE(median_err(refined) <= median_err(init) + 1e-9);
}
