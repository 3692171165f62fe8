#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lfd/geometry.hpp"
#include "lfd/image.hpp"
#include "lfd/io.hpp"

namespace lfd {

enum class Region : std::uint8_t { Nocc, All, Disc, Ignore };

struct EvalMask {
    int width = 0, height = 0;
    std::vector<Region> labels;

    EvalMask() = default;
    EvalMask(int w, int h, Region fill = Region::All)
        : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}
    Region& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    Region at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct EmptyRegion : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool in_region(Region label, Region region) {
    if (label == Region::Ignore) return false;
    switch (region) {
        case Region::All: return true;
        case Region::Nocc: return label == Region::Nocc || label == Region::Disc;
        case Region::Disc: return label == Region::Disc;
        default: return false;
    }
}

// Percentage of pixels in the region whose disparity error exceeds the
// threshold; invalid (<= 0 is not meaningful for disparity: NaN/0) estimates
// count as bad.
inline double bad_pixel_rate(const DepthMap& estimate, const DepthMap& truth, const EvalMask& mask,
                             Region region, double threshold) {
    std::size_t total = 0, bad = 0;
    for (int y = 0; y < truth.height; ++y) {
        for (int x = 0; x < truth.width; ++x) {
            if (!in_region(mask.at(x, y), region)) continue;
            ++total;
            const float est = estimate.at(x, y);
            if (!std::isfinite(est) || est == 0.f || std::abs(est - truth.at(x, y)) > threshold) ++bad;
        }
    }
    if (total == 0) throw EmptyRegion("evaluation region has no pixels");
    return 100.0 * static_cast<double>(bad) / static_cast<double>(total);
}

inline DepthMap depth_to_disparity(const DepthMap& depth, double focal, double baseline) {
    DepthMap out(depth.width, depth.height, 0.f);
    for (std::size_t i = 0; i < depth.data.size(); ++i)
        if (depth.data[i] > 0) out.data[i] = static_cast<float>(focal * baseline / depth.data[i]);
    return out;
}

inline DepthMap disparity_to_depth(const DepthMap& disp, double focal, double baseline) {
    DepthMap out(disp.width, disp.height, 0.f);
    for (std::size_t i = 0; i < disp.data.size(); ++i)
        if (disp.data[i] > 0) out.data[i] = static_cast<float>(focal * baseline / disp.data[i]);
    return out;
}

// Discontinuity region: pixels within `radius` of a ground-truth disparity
// jump larger than `jump` (Middlebury-style disc band).
inline void mark_disc(EvalMask& mask, const DepthMap& gt_disparity, double jump = 2.0, int radius = 9) {
    const int w = mask.width, h = mask.height;
    std::vector<char> edge(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float d = gt_disparity.at(x, y);
            if ((x + 1 < w && std::abs(gt_disparity.at(x + 1, y) - d) > jump) ||
                (y + 1 < h && std::abs(gt_disparity.at(x, y + 1) - d) > jump))
                edge[static_cast<std::size_t>(y) * w + x] = 1;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y) == Region::Ignore) continue;
            bool near = false;
            for (int dy = -radius; dy <= radius && !near; ++dy)
                for (int dx = -radius; dx <= radius && !near; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx >= 0 && ny >= 0 && nx < w && ny < h && edge[static_cast<std::size_t>(ny) * w + nx])
                        near = true;
                }
            if (near && mask.at(x, y) != Region::Ignore) mask.at(x, y) = Region::Disc;
        }
}

// Non-occluded labeling from ground-truth geometry: a pixel is occluded when
// its 3D point falls behind another view's ground truth at the projected
// location (tolerance in inverse depth). Pixels visible in every other view
// are Nocc; the rest stay All. Invalid ground truth becomes Ignore.
inline EvalMask compute_nocc_mask(const std::vector<DepthMap>& gt_depth, const std::vector<PinholeCamera>& cameras,
                                  int reference, double inv_depth_tol) {
    const DepthMap& ref = gt_depth[reference];
    EvalMask mask(ref.width, ref.height, Region::Nocc);
    const PinholeCamera& rcam = cameras[reference];
    for (int y = 0; y < ref.height; ++y) {
        for (int x = 0; x < ref.width; ++x) {
            const float d = ref.at(x, y);
            if (d <= 0) {
                mask.at(x, y) = Region::Ignore;
                continue;
            }
            const Vec3 world = backproject(rcam, Vec2(x, y), d);
            for (std::size_t i = 0; i < gt_depth.size(); ++i) {
                if (static_cast<int>(i) == reference) continue;
                const auto [tp, tz] = project(cameras[i], world);
                const int px = static_cast<int>(std::lround(tp.x()));
                const int py = static_cast<int>(std::lround(tp.y()));
                bool visible = false;
                if (tz > 0 && px >= 0 && py >= 0 && px < gt_depth[i].width && py < gt_depth[i].height) {
                    const float td = gt_depth[i].at(px, py);
                    visible = td > 0 && (1.0 / td - 1.0 / tz) <= inv_depth_tol;
                }
                if (!visible) {
                    mask.at(x, y) = Region::All;  // occluded somewhere
                    break;
                }
            }
        }
    }
    return mask;
}

// ------------------------------------------------------------- SSIM --------

namespace detail {
inline std::vector<float> luma_channel(const ImageBuffer& img) {
    std::vector<float> out(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float* p = img.data.data() + i * 3;
        out[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    }
    return out;
}
}  // namespace detail

// SSIM over the luma channel: 11x11 Gaussian window, sigma 1.5, K1=0.01,
// K2=0.03, dynamic range 1. When a validity mask is given, only windows
// centred on valid pixels contribute, and invalid samples are dropped from
// the window statistics.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, const std::vector<char>* valid = nullptr) {
    const int w = a.width, h = a.height;
    const auto la = detail::luma_channel(a);
    const auto lb = detail::luma_channel(b);
    constexpr int kHalf = 5;
    float win[11][11];
    {
        const float sigma = 1.5f;
        float sum = 0;
        for (int i = -kHalf; i <= kHalf; ++i)
            for (int j = -kHalf; j <= kHalf; ++j) {
                win[i + kHalf][j + kHalf] = std::exp(-(i * i + j * j) / (2.f * sigma * sigma));
                sum += win[i + kHalf][j + kHalf];
            }
        for (auto& row : win)
            for (float& v : row) v /= sum;
    }
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    double acc = 0;
    std::size_t count = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (valid && !(*valid)[static_cast<std::size_t>(y) * w + x]) continue;
            double wsum = 0, ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (int dy = -kHalf; dy <= kHalf; ++dy)
                for (int dx = -kHalf; dx <= kHalf; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::size_t idx = static_cast<std::size_t>(ny) * w + nx;
                    if (valid && !(*valid)[idx]) continue;
                    const double g = win[dy + kHalf][dx + kHalf];
                    wsum += g;
                    ma += g * la[idx];
                    mb += g * lb[idx];
                }
            if (wsum <= 0) continue;
            ma /= wsum;
            mb /= wsum;
            for (int dy = -kHalf; dy <= kHalf; ++dy)
                for (int dx = -kHalf; dx <= kHalf; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::size_t idx = static_cast<std::size_t>(ny) * w + nx;
                    if (valid && !(*valid)[idx]) continue;
                    const double g = win[dy + kHalf][dx + kHalf] / wsum;
                    va += g * (la[idx] - ma) * (la[idx] - ma);
                    vb += g * (lb[idx] - mb) * (lb[idx] - mb);
                    cov += g * (la[idx] - ma) * (lb[idx] - mb);
                }
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

// PSNR over all channels in dB; identical images report +inf.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b, const std::vector<char>* valid = nullptr) {
    double mse = 0;
    std::size_t n = 0;
    const std::size_t npx = static_cast<std::size_t>(a.width) * a.height;
    for (std::size_t i = 0; i < npx; ++i) {
        if (valid && !(*valid)[i]) continue;
        for (int c = 0; c < 3; ++c) {
            const double d = a.data[i * 3 + c] - b.data[i * 3 + c];
            mse += d * d;
        }
        n += 3;
    }
    if (n == 0) return 0;
    mse /= static_cast<double>(n);
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// ------------------------------------------------ forward-warp synthesis ---

struct SynthesizedView {
    ImageBuffer image;
    std::vector<char> valid;
};

// Forward-warp every valid source pixel into the target camera, keep samples
// whose target depth is within epsilon_z (inverse depth) of the nearest, and
// blend them with weights inversely proportional to camera distance.
inline SynthesizedView synthesize_view(const MultiViewSet& inputs, const std::vector<DepthMap>& depth_maps,
                                       const PinholeCamera& target, double epsilon_z, double epsilon_w = 1e-3) {
    const int w = inputs.width(), h = inputs.height();
    struct Sample {
        float inv_depth;
        float weight;
        Color color;
    };
    std::vector<std::vector<Sample>> buckets(static_cast<std::size_t>(w) * h);
    for (int s = 0; s < inputs.num_views(); ++s) {
        const DepthMap& dm = depth_maps[s];
        const PinholeCamera& scam = inputs.cameras[s];
        const Mat3 R = target.rotation * scam.rotation.transpose();
        const Vec3 t = target.translation - R * scam.translation;
        const float weight = static_cast<float>(1.0 / ((target.center() - scam.center()).norm() + epsilon_w));
        for (int y = 0; y < dm.height; ++y) {
            for (int x = 0; x < dm.width; ++x) {
                const float d = dm.at(x, y);
                if (d <= 0) continue;
                const Vec3 xt = R * (static_cast<double>(d) * scam.ray(Vec2(x, y))) + t;
                if (xt.z() <= 0) continue;
                const Vec3 hpt = target.intrinsics * xt;
                const int px = static_cast<int>(std::lround(hpt.x() / hpt.z()));
                const int py = static_cast<int>(std::lround(hpt.y() / hpt.z()));
                if (px < 0 || py < 0 || px >= w || py >= h) continue;
                buckets[static_cast<std::size_t>(py) * w + px].push_back(
                    {static_cast<float>(1.0 / xt.z()), weight, inputs.images[s].at(x, y)});
            }
        }
    }
    SynthesizedView out;
    out.image = ImageBuffer(w, h, 0.f);
    out.valid.assign(static_cast<std::size_t>(w) * h, 0);
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        const auto& list = buckets[i];
        if (list.empty()) continue;
        float near = 0;
        for (const auto& s : list) near = std::max(near, s.inv_depth);
        double wsum = 0, c0 = 0, c1 = 0, c2 = 0;
        for (const auto& s : list) {
            if (near - s.inv_depth > epsilon_z) continue;  // occluded sample
            wsum += s.weight;
            c0 += s.weight * s.color[0];
            c1 += s.weight * s.color[1];
            c2 += s.weight * s.color[2];
        }
        if (wsum <= 0) continue;
        out.image.data[i * 3 + 0] = static_cast<float>(c0 / wsum);
        out.image.data[i * 3 + 1] = static_cast<float>(c1 / wsum);
        out.image.data[i * 3 + 2] = static_cast<float>(c2 / wsum);
        out.valid[i] = 1;
    }
    return out;
}

}  // namespace lfd
