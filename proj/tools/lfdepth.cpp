#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "lfd/fixtures.hpp"
#include "lfd/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct CommonArgs {
    std::string manifest;
    std::string out;
    std::string config_file;
    bool resume = false;
    // Parameter flags are collected as strings so that only flags the user
    // actually passed override the config file.
    std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* app, CommonArgs& args, bool needs_manifest = true) {
    auto* m = app->add_option("-m,--manifest", args.manifest, "dataset manifest file");
    if (needs_manifest) m->required();
    app->add_option("-o,--out", args.out, "output directory")->required();
    app->add_option("-c,--config", args.config_file, "key=value config file; CLI flags override it");
    app->add_flag("--resume", args.resume, "reuse artifacts already present in the output directory");
    auto kv = [&args](const std::string& key) {
        return [&args, key](const std::string& v) { args.overrides[key] = v; };
    };
    app->add_option_function<std::string>("--seed", kv("seed"), "RNG seed");
    app->add_option_function<std::string>("--workers", kv("workers"), "worker thread count");
    app->add_option_function<std::string>("--superpixel-size", kv("superpixel_size"), "target superpixel spacing, px");
    app->add_option_function<std::string>("--compactness", kv("compactness"), "SLIC compactness");
    app->add_option_function<std::string>("--slic-iterations", kv("slic_iterations"), "SLIC iteration count");
    app->add_option_function<std::string>("--levels", kv("levels"), "inverse-depth sweep levels");
    app->add_option_function<std::string>("--tssd-threshold", kv("tssd_threshold"), "photo cost truncation");
    app->add_option_function<std::string>("--max-neighbors", kv("max_neighbors"), "matched views per view, 0 = all");
    app->add_option_function<std::string>("--iterations", kv("iterations"), "refinement iterations");
    app->add_option_function<std::string>("--sigma", kv("sigma"), "depth-consistency width, inverse depth");
    app->add_option_function<std::string>("--alpha", kv("alpha"), "color similarity width");
    app->add_option_function<std::string>("--eta", kv("eta"), "occlusion regularizer");
    app->add_option_function<std::string>("--kernel-size", kv("kernel_size"), "initial kernel extent, px");
    app->add_option_function<std::string>("--kernel-step", kv("kernel_step"), "initial kernel step, superpixels");
    app->add_option_function<std::string>("--dump-every", kv("dump_every"), "persist intermediate refine iterations");
    app->add_option_function<std::string>("--fusion-epsilon", kv("fusion_epsilon"), "fusion tolerance, inverse depth");
}

lfd::PipelineConfig build_config(const CommonArgs& args, std::vector<std::string> stages) {
    lfd::PipelineConfig cfg;
    if (!args.config_file.empty()) cfg = lfd::load_pipeline_config(args.config_file);
    if (!args.manifest.empty()) cfg.manifest = args.manifest;
    if (!args.out.empty()) cfg.out_dir = args.out;
    cfg.resume = cfg.resume || args.resume;
    if (!stages.empty()) cfg.stages = std::move(stages);
    lfd::apply_config_kv(cfg, args.overrides);
    return cfg;
}

int run_stage_command(const CommonArgs& args, std::vector<std::string> stages, bool print_report = false) {
    const lfd::PipelineConfig cfg = build_config(args, std::move(stages));
    const lfd::PipelineResult result = lfd::run_pipeline(cfg);
    if (print_report) std::cout << result.report;
    return kExitOk;
}

int run_fixtures(const std::string& spec_path, const std::string& out) {
    const auto kv = lfd::detail::parse_kv_file(spec_path);
    auto get = [&](const std::string& key, const std::string& fallback) {
        const auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };
    const std::string scene = get("scene", "");
    const int views = std::stoi(get("views", "3"));
    const int width = std::stoi(get("width", "128"));
    const int height = std::stoi(get("height", "96"));
    const double focal = std::stod(get("focal", "100"));
    const double baseline = std::stod(get("baseline", "0.3"));
    lfd::SceneSpec spec;
    if (scene == "wall")
        spec = lfd::wall_scene(views, width, height, focal, baseline, std::stod(get("depth", "5")));
    else if (scene == "staircase")
        spec = lfd::staircase_scene(views, width, height, focal, baseline);
    else if (scene == "slanted")
        spec = lfd::slanted_scene(views, width, height, focal, baseline, std::stod(get("tilt", "30")),
                                  std::stod(get("center_depth", "6")));
    else if (scene == "occluder")
        spec = lfd::occluder_scene(views, width, height, focal, baseline);
    else if (scene == "cluttered")
        spec = lfd::cluttered_scene(views, width, height, focal, baseline);
    else
        throw lfd::InvalidParams("unknown scene kind: " + scene);
    const double rectified = std::stoi(get("rectified", "1")) != 0 ? baseline : 0.0;
    lfd::emit_dataset(spec, lfd::render_scene(spec), out, rectified);
    std::cout << "wrote " << views << "-view " << scene << " dataset to " << out << "\n";
    return kExitOk;
}

int run_synth(const CommonArgs& args, int target, int stage) {
    auto [ds, mvs] = lfd::load_dataset(args.manifest);
    if (target < 0 || target >= mvs.num_views()) throw lfd::InvalidParams("target view out of range");
    lfd::MultiViewSet inputs;
    inputs.range = mvs.range;
    std::vector<lfd::DepthMap> depths;
    for (int v = 0; v < mvs.num_views(); ++v) {
        if (v == target) continue;
        inputs.cameras.push_back(mvs.cameras[v]);
        inputs.images.push_back(mvs.images[v]);
        const fs::path pfm = fs::path(args.out) / ("depth_v" + std::to_string(v) + "_stage" +
                                                   std::to_string(stage) + ".pfm");
        depths.push_back(lfd::read_pfm(pfm.string()));
    }
    const double step = lfd::inverse_depth_step(mvs.range, 80);
    const lfd::SynthesizedView synth = lfd::synthesize_view(inputs, depths, mvs.cameras[target], 2 * step);
    const fs::path png = fs::path(args.out) / ("synth_v" + std::to_string(target) + ".png");
    lfd::write_image_png(synth.image, png.string());
    std::size_t valid = 0;
    for (const char v : synth.valid) valid += v != 0;
    std::cout << "synthesized view " << target << " -> " << png.string() << "\n"
              << "valid " << (100.0 * valid / synth.valid.size()) << "%\n"
              << "ssim " << lfd::ssim(synth.image, mvs.images[target], &synth.valid) << "\n"
              << "psnr " << lfd::psnr(synth.image, mvs.images[target], &synth.valid) << " dB\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"superpixel-plane multi-view depth estimation"};
    app.require_subcommand(1);

    CommonArgs seg_args, init_args, ref_args, fuse_args, eval_args, pipe_args, synth_args;
    std::string pipe_stages = "segment,init,refine,fuse,eval";
    std::string fix_spec, fix_out;
    int synth_target = 0, synth_stage = 3;

    auto* seg = app.add_subcommand("segment", "superpixel segmentation only");
    add_common(seg, seg_args);
    auto* init = app.add_subcommand("init", "plane sweep initialization (needs persisted labels or --resume off)");
    add_common(init, init_args);
    auto* ref = app.add_subcommand("refine", "plane refinement from persisted initialization");
    add_common(ref, ref_args);
    auto* fuse = app.add_subcommand("fuse", "cross-view fusion of persisted refined maps");
    add_common(fuse, fuse_args);
    auto* eval = app.add_subcommand("eval", "evaluate persisted fused maps against ground truth");
    add_common(eval, eval_args);
    auto* pipe = app.add_subcommand("pipeline", "run the selected stages in order");
    add_common(pipe, pipe_args);
    pipe->add_option("--stages", pipe_stages, "comma-separated subset of segment,init,refine,fuse,eval");
    auto* synth = app.add_subcommand("synth", "forward-warp a held-out view from persisted depth maps");
    add_common(synth, synth_args);
    synth->add_option("--target", synth_target, "view id to synthesize")->required();
    synth->add_option("--stage", synth_stage, "depth stage to consume (1..3)");
    auto* fix = app.add_subcommand("fixtures", "render a synthetic dataset from a scene spec file");
    fix->add_option("--spec", fix_spec, "key=value scene description")->required();
    fix->add_option("-o,--out", fix_out, "output dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*seg) return run_stage_command(seg_args, {"segment"});
        if (*init) {
            init_args.resume = true;
            return run_stage_command(init_args, {"init"});
        }
        if (*ref) {
            ref_args.resume = true;
            return run_stage_command(ref_args, {"refine"});
        }
        if (*fuse) {
            fuse_args.resume = true;
            return run_stage_command(fuse_args, {"fuse"});
        }
        if (*eval) {
            eval_args.resume = true;
            return run_stage_command(eval_args, {"eval"}, true);
        }
        if (*pipe) {
            pipe_args.overrides["stages"] = pipe_stages;
            return run_stage_command(pipe_args, {}, true);
        }
        if (*synth) return run_synth(synth_args, synth_target, synth_stage);
        if (*fix) return run_fixtures(fix_spec, fix_out);
    } catch (const lfd::InvalidParams& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
