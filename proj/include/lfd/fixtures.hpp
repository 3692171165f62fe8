#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lfd/geometry.hpp"
#include "lfd/image.hpp"
#include "lfd/io.hpp"
#include "lfd/rng.hpp"

namespace lfd {

// Procedural texture over in-plane coordinates: a checkerboard or seeded
// value noise with bilinear lattice interpolation. Noise blends per channel
// between color_a and color_b, so the pair sets both hue and contrast.
struct PatchTexture {
    enum class Kind { Checker, Noise } kind = Kind::Checker;
    double scale = 0.1;  // checker cell size / noise lattice spacing, world units
    Color color_a{0.9f, 0.9f, 0.9f};
    Color color_b{0.1f, 0.1f, 0.1f};
    std::uint64_t seed = 0;

    Color sample(double a, double b) const {
        if (kind == Kind::Checker) {
            const long long ia = static_cast<long long>(std::floor(a / scale));
            const long long ib = static_cast<long long>(std::floor(b / scale));
            return ((ia + ib) & 1) ? color_b : color_a;
        }
        const double fa = a / scale, fb = b / scale;
        const long long ia = static_cast<long long>(std::floor(fa));
        const long long ib = static_cast<long long>(std::floor(fb));
        const double ta = fa - ia, tb = fb - ib;
        auto lattice = [this](long long i, long long j, int c) {
            RandomStream rs = derive_stream(seed, static_cast<std::uint64_t>(i * 0x9E3779B9ll + c),
                                            static_cast<std::uint64_t>(j));
            return static_cast<float>(rs.next_double());
        };
        Color out;
        for (int c = 0; c < 3; ++c) {
            const double v00 = lattice(ia, ib, c), v10 = lattice(ia + 1, ib, c);
            const double v01 = lattice(ia, ib + 1, c), v11 = lattice(ia + 1, ib + 1, c);
            const double top = v00 + ta * (v10 - v00);
            const double bot = v01 + ta * (v11 - v01);
            const double v = top + tb * (bot - top);
            out[c] = static_cast<float>(color_a[c] + v * (color_b[c] - color_a[c]));
        }
        return out;
    }
};

// Textured planar rectangle: origin plus two orthonormal in-plane axes with
// half-extents. Plane normal is axis_u x axis_v.
struct ScenePatch {
    Vec3 origin = Vec3::Zero();
    Vec3 axis_u = Vec3(1, 0, 0);
    Vec3 axis_v = Vec3(0, 1, 0);
    double half_u = 1, half_v = 1;
    PatchTexture texture;

    Vec3 normal() const { return axis_u.cross(axis_v).normalized(); }
};

struct SceneSpec {
    std::vector<ScenePatch> patches;
    std::vector<PinholeCamera> cameras;
    int width = 0, height = 0;
    DepthRange range;

    void validate() const {
        if (cameras.size() < 2) throw InvariantError("scene needs at least 2 cameras");
        if (patches.empty()) throw InvariantError("scene needs at least 1 patch");
        range.validate();
    }
};

struct RenderedScene {
    MultiViewSet views;                 // RGB images in [0,1]
    std::vector<DepthMap> ground_truth;  // camera-frame depth; 0 where no patch is hit
};

inline RenderedScene render_scene(const SceneSpec& spec) {
    spec.validate();
    RenderedScene out;
    out.views.cameras = spec.cameras;
    out.views.range = spec.range;
    for (const PinholeCamera& cam : spec.cameras) {
        ImageBuffer img(spec.width, spec.height, 0.f);
        DepthMap gt(spec.width, spec.height, 0.f);
        const Vec3 center = cam.center();
        const Mat3 Rt = cam.rotation.transpose();
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const Vec3 dir = Rt * cam.ray(Vec2(x, y));  // camera z grows with the ray parameter
                double best_depth = 0;
                Color color{0, 0, 0};
                for (const ScenePatch& patch : spec.patches) {
                    const Vec3 n = patch.normal();
                    const double denom = n.dot(dir);
                    if (std::abs(denom) <= 1e-12) continue;
                    const double s = n.dot(patch.origin - center) / denom;
                    if (s <= 0) continue;
                    const Vec3 pt = center + s * dir;
                    const double a = (pt - patch.origin).dot(patch.axis_u);
                    const double b = (pt - patch.origin).dot(patch.axis_v);
                    if (std::abs(a) > patch.half_u || std::abs(b) > patch.half_v) continue;
                    if (best_depth == 0 || s < best_depth) {
                        best_depth = s;
                        color = patch.texture.sample(a, b);
                    }
                }
                gt.at(x, y) = static_cast<float>(best_depth);
                if (best_depth > 0) img.set(x, y, color);
            }
        }
        out.views.images.push_back(std::move(img));
        out.ground_truth.push_back(std::move(gt));
    }
    return out;
}

// ------------------------------------------------------------- rigs --------

inline PinholeCamera make_pinhole(double f, double cx, double cy, const Vec3& position) {
    PinholeCamera cam;
    cam.intrinsics << f, 0, cx, 0, f, cy, 0, 0, 1;
    cam.translation = -position;  // identity rotation
    return cam;
}

// Horizontal rectified rig: camera i at x = i * baseline, identity rotation.
inline std::vector<PinholeCamera> make_rectified_rig(int n, double f, double baseline, int width, int height) {
    std::vector<PinholeCamera> cams;
    for (int i = 0; i < n; ++i) {
        PinholeCamera cam = make_pinhole(f, width / 2.0, height / 2.0, Vec3(i * baseline, 0, 0));
        cam.view_id = i;
        cams.push_back(cam);
    }
    return cams;
}

// nx x ny camera grid in the z=0 plane, row-major view ids.
inline std::vector<PinholeCamera> make_grid_rig(int nx, int ny, double f, double baseline, int width, int height) {
    std::vector<PinholeCamera> cams;
    for (int gy = 0; gy < ny; ++gy)
        for (int gx = 0; gx < nx; ++gx) {
            PinholeCamera cam = make_pinhole(f, width / 2.0, height / 2.0, Vec3(gx * baseline, gy * baseline, 0));
            cam.view_id = gy * nx + gx;
            cams.push_back(cam);
        }
    return cams;
}

// ----------------------------------------------------------- datasets ------

// Writes images, ground-truth depth PFMs, and a manifest so the rendered
// scene can be consumed like any on-disk dataset.
inline void emit_dataset(const SceneSpec& spec, const RenderedScene& scene, const std::string& dir,
                         double rectified_baseline = 0) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path base(dir);
    std::ofstream mf(base / "manifest.txt");
    if (!mf) throw IoError("cannot write manifest in " + dir);
    const int n = static_cast<int>(spec.cameras.size());
    mf << "views = " << n << "\n";
    const double f = spec.cameras[0].intrinsics(0, 0);
    if (rectified_baseline > 0) {
        mf << "focal = " << f << "\n";
        mf << "baseline = " << rectified_baseline << "\n";
        mf << "cx = " << spec.cameras[0].intrinsics(0, 2) << "\n";
        mf << "cy = " << spec.cameras[0].intrinsics(1, 2) << "\n";
        mf << "disp_min = " << f * rectified_baseline / spec.range.d_max << "\n";
        mf << "disp_max = " << f * rectified_baseline / spec.range.d_min << "\n";
    } else {
        mf << "depth_min = " << spec.range.d_min << "\n";
        mf << "depth_max = " << spec.range.d_max << "\n";
        mf << "eval_focal = " << f << "\n";
    }
    mf << "gt_type = depth\n";
    mf.precision(17);
    for (int i = 0; i < n; ++i) {
        const std::string img_name = "view_" + std::to_string(i) + ".png";
        const std::string gt_name = "gt_" + std::to_string(i) + ".pfm";
        write_image_png(scene.views.images[i], (base / img_name).string());
        write_pfm(scene.ground_truth[i], (base / gt_name).string());
        mf << "image" << i << " = " << img_name << "\n";
        mf << "gt" << i << " = " << gt_name << "\n";
        if (rectified_baseline <= 0) {
            const PinholeCamera& cam = spec.cameras[i];
            mf << "K" << i << " =";
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) mf << " " << cam.intrinsics(r, c);
            mf << "\nR" << i << " =";
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) mf << " " << cam.rotation(r, c);
            mf << "\nt" << i << " = " << cam.translation.x() << " " << cam.translation.y() << " "
               << cam.translation.z() << "\n";
        }
    }
}

// ------------------------------------------------------ canned scenes ------

// Fronto-parallel patch centered on the optical axis of camera 0. Pixel
// fractions are relative to that view: (0.5, 0.5) is the image center.
inline ScenePatch fronto_patch(double cx_frac, double cy_frac, double d, double hu_frac, double hv_frac,
                               int width, int height, double f, const PatchTexture& tex) {
    ScenePatch p;
    p.origin = Vec3((cx_frac - 0.5) * width / f * d, (cy_frac - 0.5) * height / f * d, d);
    p.axis_u = Vec3(1, 0, 0);
    p.axis_v = Vec3(0, 1, 0);
    p.half_u = hu_frac * width / f * d;
    p.half_v = hv_frac * height / f * d;
    p.texture = tex;
    return p;
}

// Fronto-parallel textured wall covering the full frustum.
inline SceneSpec wall_scene(int n_views, int width, int height, double f, double baseline, double depth) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.cameras = make_rectified_rig(n_views, f, baseline, width, height);
    spec.range = DepthRange{depth * 0.5, depth * 2.0};
    PatchTexture tex;
    tex.kind = PatchTexture::Kind::Noise;
    tex.scale = 0.05 * depth;
    tex.seed = 7;
    tex.color_a = Color{0.25f, 0.32f, 0.40f};
    tex.color_b = Color{0.78f, 0.75f, 0.65f};
    // Generous overhang so every view is covered.
    spec.patches.push_back(fronto_patch(0.5, 0.5, depth, 1.0, 1.0, width, height, f, tex));
    spec.patches.back().half_u += baseline * n_views;
    return spec;
}

// Three fronto-parallel strips at staggered depths (left / middle / right)
// in front of a far back wall; nearer patches win in the overlap bands.
inline SceneSpec staircase_scene(int n_views, int width, int height, double f, double baseline) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.cameras = make_rectified_rig(n_views, f, baseline, width, height);
    const double depths[3] = {4.0, 6.0, 9.0};
    spec.range = DepthRange{3.0, 12.0};
    const Color strip_a[3] = {{0.45f, 0.25f, 0.20f}, {0.18f, 0.42f, 0.25f}, {0.20f, 0.30f, 0.50f}};
    const Color strip_b[3] = {{0.90f, 0.70f, 0.60f}, {0.62f, 0.88f, 0.68f}, {0.62f, 0.72f, 0.95f}};
    for (int k = 0; k < 3; ++k) {
        PatchTexture tex;
        tex.kind = PatchTexture::Kind::Noise;
        tex.scale = 0.04 * depths[k];
        tex.seed = 11 + static_cast<std::uint64_t>(k);
        tex.color_a = strip_a[k];
        tex.color_b = strip_b[k];
        ScenePatch p = fronto_patch((k + 0.5) / 3.0, 0.5, depths[k], 1.15 / 6.0, 0.8, width, height, f, tex);
        p.half_u += baseline;  // keep the strips gap-free across the rig
        spec.patches.push_back(p);
    }
    PatchTexture back;
    back.kind = PatchTexture::Kind::Noise;
    back.scale = 0.4;
    back.seed = 17;
    back.color_a = Color{0.22f, 0.22f, 0.25f};
    back.color_b = Color{0.60f, 0.60f, 0.65f};
    spec.patches.push_back(fronto_patch(0.5, 0.5, 11.0, 1.0, 1.0, width, height, f, back));
    spec.patches.back().half_u += baseline * n_views;
    return spec;
}

// One large plane tilted about the vertical axis by tilt_deg, textured.
inline SceneSpec slanted_scene(int n_views, int width, int height, double f, double baseline, double tilt_deg,
                               double center_depth = 6.0) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.cameras = make_rectified_rig(n_views, f, baseline, width, height);
    // Range tight around the depths the tilted plane actually spans so the
    // sweep quantization is fine enough to resolve the slope.
    spec.range = DepthRange{center_depth * 0.55, center_depth * 1.7};
    const double t = tilt_deg * M_PI / 180.0;
    ScenePatch p;
    p.origin = Vec3(0, 0, center_depth);
    p.axis_u = Vec3(std::cos(t), 0, std::sin(t));
    p.axis_v = Vec3(0, 1, 0);
    p.half_u = 3.0 * width / f * center_depth;
    p.half_v = 3.0 * height / f * center_depth;
    p.texture.kind = PatchTexture::Kind::Noise;
    p.texture.scale = 0.05 * center_depth;
    p.texture.seed = 23;
    p.texture.color_a = Color{0.40f, 0.45f, 0.40f};
    p.texture.color_b = Color{0.70f, 0.72f, 0.65f};
    spec.patches.push_back(p);
    return spec;
}

// Foreground square occluding a textured back wall.
inline SceneSpec occluder_scene(int n_views, int width, int height, double f, double baseline) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.cameras = make_rectified_rig(n_views, f, baseline, width, height);
    spec.range = DepthRange{2.0, 10.0};
    PatchTexture tex;
    tex.kind = PatchTexture::Kind::Noise;
    tex.scale = 0.3;
    tex.seed = 31;
    tex.color_a = Color{0.20f, 0.28f, 0.45f};
    tex.color_b = Color{0.65f, 0.70f, 0.85f};
    spec.patches.push_back(fronto_patch(0.5, 0.5, 8.0, 2.0, 2.0, width, height, f, tex));
    tex.scale = 0.08;
    tex.seed = 37;
    tex.color_a = Color{0.62f, 0.35f, 0.20f};
    tex.color_b = Color{0.98f, 0.75f, 0.55f};
    spec.patches.push_back(fronto_patch(0.5, 0.5, 3.0, 0.2, 0.25, width, height, f, tex));
    return spec;
}

// Cluttered benchmark-style scene: textured back wall, a slanted floor-like
// plane, several boxes at mixed depths, and a textureless panel.
inline SceneSpec cluttered_scene(int n_views, int width, int height, double f, double baseline) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.cameras = make_rectified_rig(n_views, f, baseline, width, height);
    spec.range = DepthRange{2.5, 12.0};
    auto fronto = [&](double cx_frac, double cy_frac, double d, double hu_frac, double hv_frac,
                      PatchTexture tex) { return fronto_patch(cx_frac, cy_frac, d, hu_frac, hv_frac, width, height, f, tex); };
    PatchTexture noise;
    noise.kind = PatchTexture::Kind::Noise;

    noise.scale = 0.35;
    noise.seed = 41;
    // Mild in-patch contrast over distinct base hues: superpixels interior
    // to a patch read as uniform regions, patch boundaries as color edges.
    noise.color_a = Color{0.38f, 0.42f, 0.46f};
    noise.color_b = Color{0.60f, 0.62f, 0.64f};
    spec.patches.push_back(fronto(0.5, 0.5, 11.0, 2.0, 2.0, noise));  // back wall

    // Slanted mid plane (like a sloped board).
    {
        ScenePatch p;
        const double d = 7.0;
        p.origin = Vec3(-0.20 * width / f * d, 0.12 * height / f * d, d);
        const double t = 35.0 * M_PI / 180.0;
        p.axis_u = Vec3(std::cos(t), 0, std::sin(t));
        p.axis_v = Vec3(0, 1, 0);
        p.half_u = 0.35 * width / f * d;
        p.half_v = 0.28 * height / f * d;
        p.texture.kind = PatchTexture::Kind::Noise;
        p.texture.scale = 0.22;
        p.texture.seed = 43;
        p.texture.color_a = Color{0.48f, 0.40f, 0.30f};
        p.texture.color_b = Color{0.70f, 0.60f, 0.44f};
        spec.patches.push_back(p);
    }

    noise.scale = 0.12;
    noise.seed = 47;
    noise.color_a = Color{0.62f, 0.35f, 0.30f};
    noise.color_b = Color{0.82f, 0.52f, 0.44f};
    spec.patches.push_back(fronto(0.68, 0.40, 5.2, 0.14, 0.20, noise));  // near box
    noise.scale = 0.16;
    noise.seed = 53;
    noise.color_a = Color{0.30f, 0.54f, 0.34f};
    noise.color_b = Color{0.52f, 0.76f, 0.54f};
    spec.patches.push_back(fronto(0.22, 0.30, 6.0, 0.16, 0.14, noise));  // second box
    noise.scale = 0.10;
    noise.seed = 59;
    noise.color_a = Color{0.30f, 0.40f, 0.60f};
    noise.color_b = Color{0.50f, 0.60f, 0.84f};
    spec.patches.push_back(fronto(0.50, 0.72, 4.2, 0.12, 0.10, noise));  // nearest box

    // Textureless panel: uniform color, tests smoothness propagation.
    PatchTexture flat;
    flat.kind = PatchTexture::Kind::Checker;
    flat.scale = 1e6;  // one giant cell = constant color
    flat.color_a = Color{0.55f, 0.55f, 0.6f};
    spec.patches.push_back(fronto(0.82, 0.70, 8.5, 0.09, 0.11, flat));
    return spec;
}

}  // namespace lfd
