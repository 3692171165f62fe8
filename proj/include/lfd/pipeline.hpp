#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lfd/eval.hpp"
#include "lfd/fusion.hpp"
#include "lfd/io.hpp"
#include "lfd/refine.hpp"
#include "lfd/superpixel.hpp"
#include "lfd/sweep.hpp"

namespace lfd {

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> k{"segment", "init", "refine", "fuse", "eval"};
    return k;
}

struct PipelineConfig {
    std::string manifest;
    std::string out_dir;
    SlicParams slic;
    SweepParams sweep;
    EnergyParams energy;
    double fusion_epsilon = 0;  // 0 = sweep inverse-depth step
    std::uint64_t seed = 0;
    int workers = 1;
    bool resume = false;
    int dump_every = 0;  // refine: persist every k-th iteration
    std::vector<std::string> stages = stage_order();

    void validate() const {
        if (manifest.empty()) throw InvalidParams("manifest path required");
        if (out_dir.empty()) throw InvalidParams("output directory required");
        if (fusion_epsilon < 0 || dump_every < 0) throw InvalidParams("bad pipeline params");
        if (stages.empty()) throw InvalidParams("no stages selected");
        for (const std::string& s : stages) {
            bool known = false;
            for (const std::string& k : stage_order()) known = known || k == s;
            if (!known) throw InvalidParams("unknown stage: " + s);
        }
        slic.validate();
        sweep.validate();
        energy.validate();
    }

    bool has_stage(const std::string& name) const {
        for (const std::string& s : stages)
            if (s == name) return true;
        return false;
    }
};

// Flat key=value config; every key mirrors a CLI flag. Unknown keys reject
// loudly so typos never silently fall back to defaults.
inline void apply_config_kv(PipelineConfig& cfg, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, val] : kv) {
        try {
            if (key == "manifest") cfg.manifest = val;
            else if (key == "out") cfg.out_dir = val;
            else if (key == "superpixel_size") cfg.slic.size = std::stoi(val);
            else if (key == "compactness") cfg.slic.compactness = std::stof(val);
            else if (key == "slic_iterations") cfg.slic.iterations = std::stoi(val);
            else if (key == "levels") cfg.sweep.levels = std::stoi(val);
            else if (key == "tssd_threshold") cfg.sweep.tssd_threshold = std::stof(val);
            else if (key == "max_neighbors") { cfg.sweep.max_neighbors = std::stoi(val); cfg.energy.max_neighbors = std::stoi(val); }
            else if (key == "sigma") cfg.energy.sigma = std::stod(val);
            else if (key == "alpha") cfg.energy.alpha = std::stof(val);
            else if (key == "eta") cfg.energy.eta = std::stof(val);
            else if (key == "kernel_size") cfg.energy.size_init = std::stoi(val);
            else if (key == "kernel_step") cfg.energy.steps_init = std::stoi(val);
            else if (key == "iterations") cfg.energy.iterations = std::stoi(val);
            else if (key == "use_smoothness") cfg.energy.use_smoothness = std::stoi(val) != 0;
            else if (key == "use_consistency") cfg.energy.use_consistency = std::stoi(val) != 0;
            else if (key == "use_occlusion") cfg.energy.use_occlusion = std::stoi(val) != 0;
            else if (key == "fusion_epsilon") cfg.fusion_epsilon = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "workers") cfg.workers = std::stoi(val);
            else if (key == "dump_every") cfg.dump_every = std::stoi(val);
            else if (key == "stages") {
                cfg.stages.clear();
                std::istringstream is(val);
                std::string s;
                while (std::getline(is, s, ',')) if (!s.empty()) cfg.stages.push_back(s);
            } else {
                throw InvalidParams("unknown config key: " + key);
            }
        } catch (const std::invalid_argument&) {
            throw InvalidParams("bad value for config key " + key + ": " + val);
        } catch (const std::out_of_range&) {
            throw InvalidParams("bad value for config key " + key + ": " + val);
        }
    }
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    PipelineConfig cfg;
    apply_config_kv(cfg, detail::parse_kv_file(path));
    return cfg;
}

struct StageTiming {
    std::string stage;
    int view;
    double ms;
};

struct EvalRow {
    int view;
    std::string region;
    double threshold;
    double bad_percent;
};

struct PipelineResult {
    std::vector<SuperpixelGrid> grids;
    PlaneMap init;
    PlaneMap refined;
    std::vector<DepthMap> fused;
    std::vector<StageTiming> timings;
    std::vector<EvalRow> metrics;
    std::string report;  // human-readable eval table
};

namespace detail {

inline std::string view_tag(int v) { return "v" + std::to_string(v); }

inline std::filesystem::path depth_path(const std::filesystem::path& dir, int view, int stage) {
    return dir / ("depth_" + view_tag(view) + "_stage" + std::to_string(stage) + ".pfm");
}

// Planes round-trip through hexfloat text so resume is bit exact.
inline void write_planes(const std::vector<SuperpixelPlane>& planes, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << planes.size() << "\n";
    f << std::hexfloat;
    for (const SuperpixelPlane& p : planes)
        f << p.depth << " " << p.normal.x() << " " << p.normal.y() << " " << p.normal.z() << "\n";
    if (!f) throw IoError("write failed: " + path);
}

inline std::vector<SuperpixelPlane> read_planes(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::size_t n = 0;
    f >> n;
    std::vector<SuperpixelPlane> planes(n);
    for (std::size_t i = 0; i < n; ++i) {
        // std::hexfloat extraction is unreliable pre-C++23; parse via strtod.
        std::string d, x, y, z;
        f >> d >> x >> y >> z;
        if (!f) throw ParseError("truncated plane file: " + path);
        planes[i].depth = std::strtod(d.c_str(), nullptr);
        planes[i].normal = Vec3(std::strtod(x.c_str(), nullptr), std::strtod(y.c_str(), nullptr),
                                std::strtod(z.c_str(), nullptr));
    }
    return planes;
}

inline void write_superpixel_stats(const SuperpixelGrid& grid, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "# id gx gy cx cy L a b count\n";
    f.precision(9);
    for (int id = 0; id < grid.num_superpixels(); ++id) {
        const SuperpixelRecord& r = grid.sp[id];
        f << id << " " << r.gx << " " << r.gy << " " << r.cx << " " << r.cy << " " << r.mean_color[0] << " "
          << r.mean_color[1] << " " << r.mean_color[2] << " " << r.pixel_count << "\n";
    }
}

// Rebuild a SuperpixelGrid from a persisted label map plus the image it was
// computed from; statistics are recomputed, grid shape comes from cell size.
inline SuperpixelGrid grid_from_labels(const ImageBuffer& image, std::vector<std::int32_t> labels, int cell_size) {
    SuperpixelGrid grid;
    grid.width = image.width;
    grid.height = image.height;
    grid.cell_size = cell_size;
    grid.grid_w = (image.width + cell_size - 1) / cell_size;
    grid.grid_h = (image.height + cell_size - 1) / cell_size;
    grid.label_map = std::move(labels);
    for (const std::int32_t l : grid.label_map)
        if (l < 0 || l >= grid.num_superpixels()) throw ParseError("label map does not fit the configured grid");
    grid.sp.assign(grid.num_superpixels(), {});
    for (int id = 0; id < grid.num_superpixels(); ++id) {
        grid.sp[id].gx = id % grid.grid_w;
        grid.sp[id].gy = id / grid.grid_w;
    }
    recompute_stats(image, grid);
    return grid;
}

inline double since_ms(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Bad pixels (threshold in the ground-truth domain) tinted red over the
// normalized inverse-depth rendering of the estimate.
inline ImageBuffer error_overlay(const DepthMap& estimate_domain, const DepthMap& gt_domain, const EvalMask& mask,
                                 double threshold, const DepthMap& depth_for_shading, const DepthRange& range) {
    ImageBuffer out(estimate_domain.width, estimate_domain.height, 0.f);
    const double inv_lo = 1.0 / range.d_max, inv_hi = 1.0 / range.d_min;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const float d = depth_for_shading.at(x, y);
            float g = 0.f;
            if (d > 0) g = static_cast<float>((1.0 / d - inv_lo) / (inv_hi - inv_lo));
            g = std::clamp(g, 0.f, 1.f);
            Color c{g, g, g};
            if (in_region(mask.at(x, y), Region::All)) {
                const float est = estimate_domain.at(x, y);
                if (!std::isfinite(est) || est == 0.f || std::abs(est - gt_domain.at(x, y)) > threshold)
                    c = Color{1.f, 0.15f * g, 0.15f * g};
            }
            out.set(x, y, c);
        }
    return out;
}

inline PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    namespace fs = std::filesystem;
    const fs::path dir(config.out_dir);
    fs::create_directories(dir);

    auto [ds, mvs] = load_dataset(config.manifest);
    const int n = mvs.num_views();
    std::vector<ImageBuffer> lab(n);
    for (int v = 0; v < n; ++v) lab[v] = rgb_to_scaled_lab(mvs.images[v]);
    MultiViewSet lab_mvs;
    lab_mvs.cameras = mvs.cameras;
    lab_mvs.images = lab;
    lab_mvs.range = mvs.range;

    PipelineResult result;
    std::ofstream stats(dir / "stats.jsonl", config.resume ? std::ios::app : std::ios::trunc);
    auto record = [&](const std::string& stage, int view, double ms) {
        result.timings.push_back({stage, view, ms});
    };

    // Configuration mistakes keep their type so the CLI can report them as
    // such; everything else surfaces as a stage failure with view context.
    auto guard = [&](const std::string& stage, int view, auto&& fn) {
        try {
            fn();
        } catch (const PipelineError&) {
            throw;
        } catch (const InvalidParams&) {
            throw;
        } catch (const std::exception& e) {
            throw PipelineError("stage " + stage + (view >= 0 ? " (view " + std::to_string(view) + ")" : "") +
                                ": " + e.what());
        }
    };

    // ------------------------------------------------------------ segment --
    const bool need_segment = config.has_stage("segment") || config.has_stage("init") ||
                              config.has_stage("refine") || config.has_stage("fuse");
    if (need_segment) {
        result.grids.resize(n);
        for (int v = 0; v < n; ++v) {
            guard("segment", v, [&] {
                const fs::path label_png = dir / ("labels_" + detail::view_tag(v) + ".png");
                const auto t0 = std::chrono::steady_clock::now();
                if (config.resume && fs::exists(label_png)) {
                    int w = 0, h = 0;
                    auto labels = read_label_png(label_png.string(), w, h);
                    if (w != mvs.width() || h != mvs.height())
                        throw ParseError("persisted label map size mismatch");
                    result.grids[v] = detail::grid_from_labels(lab[v], std::move(labels), config.slic.size);
                } else {
                    if (!config.has_stage("segment"))
                        throw InvalidParams("segment stage not selected and no persisted labels found");
                    result.grids[v] = slic_segment(lab[v], config.slic, config.workers);
                    write_label_png(result.grids[v].label_map, mvs.width(), mvs.height(), label_png.string());
                    detail::write_superpixel_stats(result.grids[v],
                                                   (dir / ("superpixels_" + detail::view_tag(v) + ".txt")).string());
                }
                record("segment", v, detail::since_ms(t0));
                stats << "{\"stage\":\"segment\",\"view\":" << v
                      << ",\"superpixels\":" << result.grids[v].num_superpixels() << "}\n";
            });
        }
    }

    const double sweep_step = inverse_depth_step(mvs.range, config.sweep.levels);
    const double epsilon = config.fusion_epsilon > 0 ? config.fusion_epsilon : sweep_step;

    // --------------------------------------------------------------- init --
    const bool need_init = config.has_stage("init") || config.has_stage("refine");
    if (need_init) {
        result.init.planes.resize(n);
        for (int v = 0; v < n; ++v) {
            guard("init", v, [&] {
                const fs::path planes_txt = dir / ("planes_" + detail::view_tag(v) + "_stage1.txt");
                const auto t0 = std::chrono::steady_clock::now();
                if (config.resume && fs::exists(planes_txt)) {
                    result.init.planes[v] = detail::read_planes(planes_txt.string());
                    if (static_cast<int>(result.init.planes[v].size()) != result.grids[v].num_superpixels())
                        throw ParseError("persisted plane count mismatch");
                } else {
                    if (!config.has_stage("init"))
                        throw InvalidParams("init stage not selected and no persisted planes found");
                    result.init.planes[v] = sweep_view(lab_mvs, result.grids, v, config.sweep, config.seed,
                                                      config.workers);
                    detail::write_planes(result.init.planes[v], planes_txt.string());
                }
                record("init", v, detail::since_ms(t0));
            });
        }
        guard("init", -1, [&] {
            rasterize(mvs, result.grids, result.init);
            for (int v = 0; v < n; ++v) {
                write_pfm(result.init.depth[v], detail::depth_path(dir, v, 1).string());
                write_depth_png(result.init.depth[v], mvs.range,
                                (dir / ("depth_" + detail::view_tag(v) + "_stage1.png")).string());
                stats << "{\"stage\":\"init\",\"view\":" << v << ",\"levels\":" << config.sweep.levels << "}\n";
            }
        });
    }

    // ------------------------------------------------------------- refine --
    if (config.has_stage("refine") || config.has_stage("fuse")) {
        bool resumed = false;
        if (config.resume) {
            bool all = true;
            for (int v = 0; v < n; ++v)
                all = all && fs::exists(dir / ("planes_" + detail::view_tag(v) + "_stage2.txt"));
            if (all) {
                guard("refine", -1, [&] {
                    result.refined.planes.resize(n);
                    for (int v = 0; v < n; ++v) {
                        result.refined.planes[v] =
                            detail::read_planes((dir / ("planes_" + detail::view_tag(v) + "_stage2.txt")).string());
                        if (static_cast<int>(result.refined.planes[v].size()) != result.grids[v].num_superpixels())
                            throw ParseError("persisted plane count mismatch");
                    }
                    rasterize(mvs, result.grids, result.refined);
                });
                resumed = true;
            }
        }
        if (!resumed) {
            if (!config.has_stage("refine"))
                throw InvalidParams("refine stage not selected and no persisted planes found");
            guard("refine", -1, [&] {
                const auto t0 = std::chrono::steady_clock::now();
                const RefineContext ctx =
                    make_refine_context(lab_mvs, result.grids, config.energy, config.sweep.levels);
                PlaneMap state = result.init;
                // The refinement snapshot rasters live in scene depth, which
                // is shared between the LAB and RGB view sets.
                for (int l = 1; l <= config.energy.iterations; ++l) {
                    state = refine_iteration(ctx, state, l, config.workers);
                    rasterize(mvs, result.grids, state);
                    if (config.dump_every > 0 && l % config.dump_every == 0 && l != config.energy.iterations) {
                        for (int v = 0; v < n; ++v) {
                            const std::string base =
                                "depth_" + detail::view_tag(v) + "_stage2_iter" + std::to_string(l);
                            write_pfm(state.depth[v], (dir / (base + ".pfm")).string());
                            write_depth_png(state.depth[v], mvs.range, (dir / (base + ".png")).string());
                        }
                    }
                }
                result.refined = std::move(state);
                const double total = detail::since_ms(t0);
                // Views are jointly coupled by cross-view terms; report the
                // amortized per-view cost.
                for (int v = 0; v < n; ++v) record("refine", v, total / n);
                for (int v = 0; v < n; ++v) {
                    detail::write_planes(result.refined.planes[v],
                                         (dir / ("planes_" + detail::view_tag(v) + "_stage2.txt")).string());
                    write_pfm(result.refined.depth[v], detail::depth_path(dir, v, 2).string());
                    write_depth_png(result.refined.depth[v], mvs.range,
                                    (dir / ("depth_" + detail::view_tag(v) + "_stage2.png")).string());
                    stats << "{\"stage\":\"refine\",\"view\":" << v
                          << ",\"iterations\":" << config.energy.iterations << "}\n";
                }
            });
        }
    }

    // --------------------------------------------------------------- fuse --
    if (config.has_stage("fuse") || config.has_stage("eval")) {
        bool resumed = false;
        if (config.resume && !config.has_stage("fuse")) {
            bool all = true;
            for (int v = 0; v < n; ++v) all = all && fs::exists(detail::depth_path(dir, v, 3));
            if (all) {
                guard("fuse", -1, [&] {
                    result.fused.resize(n);
                    for (int v = 0; v < n; ++v) result.fused[v] = read_pfm(detail::depth_path(dir, v, 3).string());
                });
                resumed = true;
            }
        }
        if (!resumed) {
            if (!config.has_stage("fuse"))
                throw InvalidParams("fuse stage not selected and no persisted fused maps found");
            result.fused.resize(n);
            for (int v = 0; v < n; ++v) {
                guard("fuse", v, [&] {
                    const auto t0 = std::chrono::steady_clock::now();
                    result.fused[v] = stability_fuse(gather_candidates(v, result.refined.depth, mvs.cameras),
                                                     epsilon, config.workers);
                    record("fuse", v, detail::since_ms(t0));
                    write_pfm(result.fused[v], detail::depth_path(dir, v, 3).string());
                    write_depth_png(result.fused[v], mvs.range,
                                    (dir / ("depth_" + detail::view_tag(v) + "_stage3.png")).string());
                    stats << "{\"stage\":\"fuse\",\"view\":" << v << ",\"epsilon\":" << epsilon << "}\n";
                });
            }
        }
    }

    // --------------------------------------------------------------- eval --
    if (config.has_stage("eval")) {
        std::ostringstream report;
        report << "view\tregion\tthreshold\tbad%\n";
        const bool disparity_domain = ds.focal > 0 && ds.baseline > 0;
        bool full_gt = !ds.gt_paths.empty();
        for (const std::string& p : ds.gt_paths) full_gt = full_gt && !p.empty();
        std::vector<DepthMap> gt_depth(n);
        if (full_gt) {
            for (int v = 0; v < n; ++v) {
                guard("eval", v, [&] {
                    DepthMap gt = read_pfm(ds.gt_paths[v]);
                    if (ds.gt_type == "disparity") gt = disparity_to_depth(gt, ds.focal, ds.baseline);
                    gt_depth[v] = std::move(gt);
                });
            }
        }
        for (int v = 0; v < n && full_gt; ++v) {
            guard("eval", v, [&] {
                const auto t0 = std::chrono::steady_clock::now();
                EvalMask mask = compute_nocc_mask(gt_depth, mvs.cameras, v, 2.0 * sweep_step);
                DepthMap est_dom = result.fused[v];
                DepthMap gt_dom = gt_depth[v];
                std::vector<double> thresholds;
                if (disparity_domain) {
                    est_dom = depth_to_disparity(est_dom, ds.focal, ds.baseline);
                    gt_dom = depth_to_disparity(gt_dom, ds.focal, ds.baseline);
                    mark_disc(mask, gt_dom);
                    thresholds = {0.5, 1.0, 2.0};
                } else {
                    // No disparity scale: compare inverse depths against the
                    // sweep quantization step instead.
                    est_dom = depth_to_disparity(est_dom, 1.0, 1.0);
                    gt_dom = depth_to_disparity(gt_dom, 1.0, 1.0);
                    thresholds = {sweep_step, 2 * sweep_step, 4 * sweep_step};
                }
                for (const std::string& region : {"nocc", "all", "disc"}) {
                    const Region r = region == "nocc" ? Region::Nocc : region == "all" ? Region::All : Region::Disc;
                    for (const double t : thresholds) {
                        double bad = -1;
                        try {
                            bad = bad_pixel_rate(est_dom, gt_dom, mask, r, t);
                        } catch (const EmptyRegion&) {
                            continue;  // e.g. no discontinuity pixels
                        }
                        result.metrics.push_back({v, region, t, bad});
                        report << v << "\t" << region << "\t" << t << "\t" << bad << "\n";
                        stats << "{\"stage\":\"eval\",\"view\":" << v << ",\"region\":\"" << region
                              << "\",\"threshold\":" << t << ",\"bad\":" << bad << "}\n";
                    }
                }
                const double t_ov = disparity_domain ? 1.0 : 2 * sweep_step;
                write_image_png(error_overlay(est_dom, gt_dom, mask, t_ov, result.fused[v], mvs.range),
                                (dir / ("eval_overlay_" + detail::view_tag(v) + ".png")).string());
                record("eval", v, detail::since_ms(t0));
            });
        }
        if (!full_gt) report << "# no ground truth in manifest; eval skipped\n";
        result.report = report.str();
        std::ofstream mf(dir / "metrics.txt");
        mf << result.report;
    }

    std::ofstream tf(dir / "timings.tsv");
    tf << "stage\tview\tms\n";
    for (const StageTiming& t : result.timings) tf << t.stage << "\t" << t.view << "\t" << t.ms << "\n";
    return result;
}

}  // namespace lfd
