#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lfd/image.hpp"
#include "lfd/parallel.hpp"

namespace lfd {

struct InvalidParams : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SlicParams {
    int size = 12;          // target spacing S in pixels
    float compactness = 10.f / 100.f;  // m, in the scaled-LAB units of the input image
    int iterations = 10;

    void validate() const {
        if (size < 4) throw InvalidParams("superpixel size must be >= 4");
        if (compactness <= 0) throw InvalidParams("compactness must be > 0");
        if (iterations < 1) throw InvalidParams("iterations must be >= 1");
    }
};

struct SuperpixelRecord {
    double cx = 0, cy = 0;  // centroid, pixel units
    Color mean_color{0, 0, 0};
    int pixel_count = 0;
    int gx = 0, gy = 0;
};

// Label raster plus per-superpixel statistics. Superpixel ids form the
// regular grid id = gy * grid_w + gx.
struct SuperpixelGrid {
    int width = 0, height = 0;
    int grid_w = 0, grid_h = 0;
    int cell_size = 0;  // SlicParams.size used to build the grid
    std::vector<std::int32_t> label_map;
    std::vector<SuperpixelRecord> sp;
    std::vector<std::vector<std::int32_t>> pixels;  // member pixel indices (row-major)

    int num_superpixels() const { return grid_w * grid_h; }
    std::int32_t label(int x, int y) const { return label_map[static_cast<std::size_t>(y) * width + x]; }
};

enum class NeighborPattern { Immediate8, Kernel };

namespace detail {

inline void recompute_stats(const ImageBuffer& image, SuperpixelGrid& grid) {
    const int n = grid.num_superpixels();
    std::vector<double> sx(n, 0), sy(n, 0), sc0(n, 0), sc1(n, 0), sc2(n, 0);
    std::vector<int> cnt(n, 0);
    grid.pixels.assign(n, {});
    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) {
            const std::int32_t id = grid.label(x, y);
            sx[id] += x;
            sy[id] += y;
            const Color c = image.at(x, y);
            sc0[id] += c[0];
            sc1[id] += c[1];
            sc2[id] += c[2];
            ++cnt[id];
            grid.pixels[id].push_back(static_cast<std::int32_t>(y) * grid.width + x);
        }
    }
    for (int id = 0; id < n; ++id) {
        auto& r = grid.sp[id];
        r.pixel_count = cnt[id];
        if (cnt[id] > 0) {
            r.cx = sx[id] / cnt[id];
            r.cy = sy[id] / cnt[id];
            r.mean_color = {static_cast<float>(sc0[id] / cnt[id]), static_cast<float>(sc1[id] / cnt[id]),
                            static_cast<float>(sc2[id] / cnt[id])};
        }
    }
}

// Relabel connected components that lost the vote for their id to the
// largest adjacent superpixel, keeping every superpixel 4-connected.
inline void enforce_connectivity(SuperpixelGrid& grid) {
    const int w = grid.width, h = grid.height;
    const std::size_t npx = static_cast<std::size_t>(w) * h;
    std::vector<std::int32_t> comp(npx, -1);
    struct Component {
        std::int32_t label;
        std::vector<std::int32_t> pixels;
    };
    std::vector<Component> comps;
    const int dx4[4] = {1, -1, 0, 0};
    const int dy4[4] = {0, 0, 1, -1};
    std::vector<std::int32_t> stack;
    for (std::size_t i = 0; i < npx; ++i) {
        if (comp[i] >= 0) continue;
        const std::int32_t cid = static_cast<std::int32_t>(comps.size());
        comps.push_back({grid.label_map[i], {}});
        stack.assign(1, static_cast<std::int32_t>(i));
        comp[i] = cid;
        while (!stack.empty()) {
            const std::int32_t p = stack.back();
            stack.pop_back();
            comps[cid].pixels.push_back(p);
            const int px = p % w, py = p / w;
            for (int k = 0; k < 4; ++k) {
                const int nx = px + dx4[k], ny = py + dy4[k];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
                if (comp[q] < 0 && grid.label_map[q] == comps[cid].label) {
                    comp[q] = cid;
                    stack.push_back(static_cast<std::int32_t>(q));
                }
            }
        }
    }
    // The largest component of each label keeps it (ties: first encountered).
    const int n = grid.num_superpixels();
    std::vector<std::int32_t> keeper(n, -1);
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const std::int32_t lab = comps[c].label;
        if (keeper[lab] < 0 || comps[c].pixels.size() > comps[keeper[lab]].pixels.size())
            keeper[lab] = static_cast<std::int32_t>(c);
    }
    std::vector<int> count(n, 0);
    std::vector<char> assigned(comps.size(), 0);
    std::vector<std::int32_t> merged(comps.size());
    for (std::size_t c = 0; c < comps.size(); ++c) {
        merged[c] = comps[c].label;
        if (static_cast<std::int32_t>(c) == keeper[comps[c].label]) {
            assigned[c] = 1;
            count[comps[c].label] += static_cast<int>(comps[c].pixels.size());
        }
    }
    // Merge orphans into an adjacent superpixel with the most pixels. An
    // orphan whose neighbors are all still-unassigned orphans waits for a
    // later round; every round assigns at least one (the image is connected).
    bool progress = true;
    while (progress) {
        progress = false;
        bool pending = false;
        for (std::size_t c = 0; c < comps.size(); ++c) {
            if (assigned[c]) continue;
            std::int32_t best = -1;
            for (const std::int32_t p : comps[c].pixels) {
                const int px = p % w, py = p / w;
                for (int k = 0; k < 4; ++k) {
                    const int nx = px + dx4[k], ny = py + dy4[k];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::int32_t nc = comp[static_cast<std::size_t>(ny) * w + nx];
                    if (nc == static_cast<std::int32_t>(c) || !assigned[nc]) continue;
                    const std::int32_t nl = merged[nc];
                    if (best < 0 || count[nl] > count[best] || (count[nl] == count[best] && nl < best)) best = nl;
                }
            }
            if (best < 0) {
                pending = true;
                continue;
            }
            merged[c] = best;
            assigned[c] = 1;
            progress = true;
            for (const std::int32_t p : comps[c].pixels) grid.label_map[p] = best;
            count[best] += static_cast<int>(comps[c].pixels.size());
        }
        if (!pending) break;
    }
}

}  // namespace detail

// SLIC over a 3-channel image (expected in scaled-LAB space). Deterministic:
// the pixel assignment scans candidate clusters in id order and breaks
// distance ties by spatial distance, then lowest id.
inline SuperpixelGrid slic_segment(const ImageBuffer& image, const SlicParams& params, int workers = 1) {
    params.validate();
    if (!image.valid()) throw InvalidParams("invalid image");
    if (image.width < params.size || image.height < params.size)
        throw InvalidParams("image smaller than superpixel size");

    SuperpixelGrid grid;
    grid.width = image.width;
    grid.height = image.height;
    grid.cell_size = params.size;
    const int S = params.size;
    grid.grid_w = (image.width + S - 1) / S;
    grid.grid_h = (image.height + S - 1) / S;
    const int n = grid.num_superpixels();
    grid.sp.assign(n, {});
    grid.label_map.assign(static_cast<std::size_t>(image.width) * image.height, 0);

    // Cluster centers start at the mean coordinate of each grid cell.
    struct Center {
        double cx, cy;
        Color color;
    };
    std::vector<Center> centers(n);
    for (int gy = 0; gy < grid.grid_h; ++gy) {
        for (int gx = 0; gx < grid.grid_w; ++gx) {
            const int x0 = gx * S, x1 = std::min(image.width, x0 + S);
            const int y0 = gy * S, y1 = std::min(image.height, y0 + S);
            Center& c = centers[gy * grid.grid_w + gx];
            c.cx = 0.5 * (x0 + x1 - 1);
            c.cy = 0.5 * (y0 + y1 - 1);
            c.color = image.at(static_cast<int>(c.cx), static_cast<int>(c.cy));
            grid.sp[gy * grid.grid_w + gx].gx = gx;
            grid.sp[gy * grid.grid_w + gx].gy = gy;
        }
    }

    const float spatial_w = params.compactness / static_cast<float>(S);
    for (int it = 0; it < params.iterations; ++it) {
        // Assignment: each pixel checks clusters whose grid cell lies within
        // +-2 cells (covers the 2S x 2S search window).
        parallel_for(static_cast<std::size_t>(image.height), workers, [&](std::size_t yy) {
            const int y = static_cast<int>(yy);
            for (int x = 0; x < image.width; ++x) {
                const Color pc = image.at(x, y);
                const int pgx = x / S, pgy = y / S;
                float best_d = 0;
                float best_spatial = 0;
                std::int32_t best_id = -1;
                for (int gy = std::max(0, pgy - 2); gy <= std::min(grid.grid_h - 1, pgy + 2); ++gy) {
                    for (int gx = std::max(0, pgx - 2); gx <= std::min(grid.grid_w - 1, pgx + 2); ++gx) {
                        const std::int32_t id = gy * grid.grid_w + gx;
                        const Center& c = centers[id];
                        const double ddx = x - c.cx, ddy = y - c.cy;
                        const float ds = static_cast<float>(std::sqrt(ddx * ddx + ddy * ddy));
                        if (ds > 2.f * S) continue;
                        const float dc = std::sqrt(color_dist2(pc, c.color));
                        const float d = dc + spatial_w * ds;
                        if (best_id < 0 || d < best_d || (d == best_d && ds < best_spatial)) {
                            best_d = d;
                            best_spatial = ds;
                            best_id = id;
                        }
                    }
                }
                grid.label_map[static_cast<std::size_t>(y) * image.width + x] = best_id;
            }
        });
        // Update: recompute centers from assignments (single pass, serial).
        std::vector<double> sx(n, 0), sy(n, 0), s0(n, 0), s1(n, 0), s2(n, 0);
        std::vector<int> cnt(n, 0);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                const std::int32_t id = grid.label(x, y);
                sx[id] += x;
                sy[id] += y;
                const Color c = image.at(x, y);
                s0[id] += c[0];
                s1[id] += c[1];
                s2[id] += c[2];
                ++cnt[id];
            }
        }
        for (int id = 0; id < n; ++id) {
            if (cnt[id] == 0) continue;  // keep the previous center
            centers[id].cx = sx[id] / cnt[id];
            centers[id].cy = sy[id] / cnt[id];
            centers[id].color = {static_cast<float>(s0[id] / cnt[id]), static_cast<float>(s1[id] / cnt[id]),
                                 static_cast<float>(s2[id] / cnt[id])};
        }
    }

    detail::enforce_connectivity(grid);

    // A cluster can end up empty after connectivity enforcement; give it back
    // the pixel nearest its grid-cell center so ids stay a bijection.
    {
        std::vector<int> cnt(n, 0);
        for (const std::int32_t l : grid.label_map) ++cnt[l];
        for (int id = 0; id < n; ++id) {
            if (cnt[id] > 0) continue;
            const int gx = grid.sp[id].gx, gy = grid.sp[id].gy;
            const int x = std::min(image.width - 1, gx * S + S / 2);
            const int y = std::min(image.height - 1, gy * S + S / 2);
            const std::int32_t old = grid.label(x, y);
            if (cnt[old] > 1) {
                // Donate a BFS-last pixel of the donor: it is a spanning-tree
                // leaf, so removing it keeps the donor 4-connected.
                std::vector<char> seen(static_cast<std::size_t>(image.width) * image.height, 0);
                std::vector<std::int32_t> queue{static_cast<std::int32_t>(y) * image.width + x};
                seen[queue[0]] = 1;
                std::int32_t last = queue[0];
                for (std::size_t head = 0; head < queue.size(); ++head) {
                    last = queue[head];
                    const int px = last % image.width, py = last / image.width;
                    const int nb[4][2] = {{px + 1, py}, {px - 1, py}, {px, py + 1}, {px, py - 1}};
                    for (const auto& q : nb) {
                        if (q[0] < 0 || q[1] < 0 || q[0] >= image.width || q[1] >= image.height) continue;
                        const std::int32_t qi = q[1] * image.width + q[0];
                        if (!seen[qi] && grid.label_map[qi] == old) {
                            seen[qi] = 1;
                            queue.push_back(qi);
                        }
                    }
                }
                grid.label_map[last] = id;
                --cnt[old];
                cnt[id] = 1;
            }
        }
    }

    detail::recompute_stats(image, grid);
    return grid;
}

// Neighbor ids for a superpixel. Immediate8 returns the <=8 grid-adjacent
// ids. Kernel adds directional samples along the 8 compass directions at
// multiples of step_sp out to a pixel radius of size_px. Deterministic order:
// immediate ring first, then direction-major, radius-minor.
inline std::vector<std::int32_t> grid_neighbors(const SuperpixelGrid& grid, std::int32_t sp_id,
                                                NeighborPattern pattern, int size_px = 0, int step_sp = 1) {
    const int gx = grid.sp[sp_id].gx, gy = grid.sp[sp_id].gy;
    std::vector<std::int32_t> out;
    // Ring order E, NE, N, NW, W, SW, S, SE (y grows downward).
    static constexpr int kDir[8][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}};
    for (const auto& d : kDir) {
        const int nx = gx + d[0], ny = gy + d[1];
        if (nx < 0 || ny < 0 || nx >= grid.grid_w || ny >= grid.grid_h) continue;
        out.push_back(ny * grid.grid_w + nx);
    }
    if (pattern == NeighborPattern::Kernel) {
        const int radius_sp = size_px / std::max(1, grid.cell_size);
        const int step = std::max(1, step_sp);
        for (const auto& d : kDir) {
            for (int r = step; r <= radius_sp; r += step) {
                if (std::abs(d[0]) * r <= 1 && std::abs(d[1]) * r <= 1) continue;  // already in the ring
                const int nx = gx + d[0] * r, ny = gy + d[1] * r;
                if (nx < 0 || ny < 0 || nx >= grid.grid_w || ny >= grid.grid_h) continue;
                const std::int32_t id = ny * grid.grid_w + nx;
                if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
            }
        }
    }
    return out;
}

// Color similarity weight of Gaussian width alpha (shared with the energy).
inline float color_similarity(const Color& c1, const Color& c2, float alpha) {
    return std::exp(-color_dist2(c1, c2) / (2.f * alpha * alpha));
}

// Minimum color similarity against the immediate8 neighbors; 1 when a
// superpixel sits in a uniform region, ~0 across a hard color edge.
inline float min_neighbor_similarity(const SuperpixelGrid& grid, std::int32_t sp_id, float alpha) {
    float m = 1.f;
    for (const std::int32_t nb : grid_neighbors(grid, sp_id, NeighborPattern::Immediate8))
        m = std::min(m, color_similarity(grid.sp[sp_id].mean_color, grid.sp[nb].mean_color, alpha));
    return m;
}

}  // namespace lfd
