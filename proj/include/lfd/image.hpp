#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace lfd {

using Color = std::array<float, 3>;

inline float color_dist2(const Color& a, const Color& b) {
    const float d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
    return d0 * d0 + d1 * d1 + d2 * d2;
}

// Row-major 3-channel float raster. The channel meaning (RGB in [0,1] or
// scaled CIELAB) is the caller's contract; all arithmetic here is per-channel.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // width*height*3

    ImageBuffer() = default;
    ImageBuffer(int w, int h, float fill = 0.f) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    bool valid() const { return width > 0 && height > 0 && data.size() == static_cast<std::size_t>(width) * height * 3; }

    float* px(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const float* px(int x, int y) const { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }

    Color at(int x, int y) const {
        const float* p = px(x, y);
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, const Color& c) {
        float* p = px(x, y);
        p[0] = c[0]; p[1] = c[1]; p[2] = c[2];
    }

    bool contains(double x, double y) const {
        return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
    }

    // Bilinear sample; caller guarantees contains(x, y).
    Color bilinear(double x, double y) const {
        int x0 = static_cast<int>(std::floor(x));
        int y0 = static_cast<int>(std::floor(y));
        if (x0 >= width - 1) x0 = width - 2;
        if (y0 >= height - 1) y0 = height - 2;
        if (x0 < 0) x0 = 0;
        if (y0 < 0) y0 = 0;
        const float fx = static_cast<float>(x - x0);
        const float fy = static_cast<float>(y - y0);
        const float* p00 = px(x0, y0);
        const float* p10 = px(x0 + 1, y0);
        const float* p01 = px(x0, y0 + 1);
        const float* p11 = px(x0 + 1, y0 + 1);
        Color out;
        for (int c = 0; c < 3; ++c) {
            const float top = p00[c] + fx * (p10[c] - p00[c]);
            const float bot = p01[c] + fx * (p11[c] - p01[c]);
            out[c] = top + fy * (bot - top);
        }
        return out;
    }
};

namespace detail {
inline float srgb_to_linear(float v) {
    return v <= 0.04045f ? v / 12.92f : std::pow((v + 0.055f) / 1.055f, 2.4f);
}
inline float lab_f(float t) {
    constexpr float kEps = 216.f / 24389.f;
    constexpr float kKappa = 24389.f / 27.f;
    return t > kEps ? std::cbrt(t) : (kKappa * t + 16.f) / 116.f;
}
}  // namespace detail

// sRGB [0,1] -> CIELAB (D65), scaled by 1/100 so L lands in [0,1]. Keeping
// one scale for segmentation and energy lets alpha and T share units.
inline Color rgb_to_scaled_lab(const Color& rgb) {
    const float r = detail::srgb_to_linear(rgb[0]);
    const float g = detail::srgb_to_linear(rgb[1]);
    const float b = detail::srgb_to_linear(rgb[2]);
    // linear sRGB -> XYZ, normalized by D65 white.
    const float xr = (0.4124564f * r + 0.3575761f * g + 0.1804375f * b) / 0.95047f;
    const float yr = (0.2126729f * r + 0.7151522f * g + 0.0721750f * b);
    const float zr = (0.0193339f * r + 0.1191920f * g + 0.9503041f * b) / 1.08883f;
    const float fx = detail::lab_f(xr);
    const float fy = detail::lab_f(yr);
    const float fz = detail::lab_f(zr);
    return {(116.f * fy - 16.f) / 100.f, (500.f * (fx - fy)) / 100.f, (200.f * (fy - fz)) / 100.f};
}

inline ImageBuffer rgb_to_scaled_lab(const ImageBuffer& img) {
    ImageBuffer out(img.width, img.height);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) {
        const float* p = img.data.data() + i * 3;
        const Color lab = rgb_to_scaled_lab(Color{p[0], p[1], p[2]});
        float* q = out.data.data() + i * 3;
        q[0] = lab[0]; q[1] = lab[1]; q[2] = lab[2];
    }
    return out;
}

}  // namespace lfd
