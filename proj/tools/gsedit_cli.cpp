#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsedit/agt.hpp"
#include "gsedit/camera_io.hpp"
#include "gsedit/error.hpp"
#include "gsedit/fusion.hpp"
#include "gsedit/guidance.hpp"
#include "gsedit/image_io.hpp"
#include "gsedit/optimize.hpp"
#include "gsedit/pipeline.hpp"
#include "gsedit/ply_io.hpp"
#include "gsedit/render.hpp"
#include "gsedit/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gsedit;

namespace {

bool is_file(const fs::path& p) {
    std::error_code ec;
    return fs::is_regular_file(p, ec);
}

struct SynthArgs {
    fs::path out;
    SyntheticSpec spec;
    std::string colors = "random";
    bool fixture = false;
};

int run_synth(const SynthArgs& a) {
    if (a.fixture) {
        write_pipeline_fixture(a.out, a.spec.seed);
        std::cout << "wrote pipeline fixture to " << a.out.string() << "\n";
        return 0;
    }
    SyntheticSpec spec = a.spec;
    spec.colors = parse_color_scheme(a.colors);
    const auto [cloud, cameras] = make_synthetic_scene(spec);
    fs::create_directories(a.out);
    save_ply(cloud, a.out / "scene.ply");
    save_cameras(cameras, a.out / "cameras.json");
    std::cout << "wrote " << cloud.size() << " gaussians and " << cameras.size() << " cameras to "
              << a.out.string() << "\n";
    return 0;
}

struct RenderArgs {
    fs::path scene, cameras, out;
    int workers = 0;
};

int run_render(const RenderArgs& a) {
    const GaussianCloud cloud = load_ply(a.scene);
    const auto cameras = load_cameras(a.cameras);
    render_to_directory(cloud, cameras, a.out, resolve_workers(a.workers));
    std::cout << "rendered " << cameras.size() << " views to " << a.out.string() << "\n";
    return 0;
}

struct FuseArgs {
    fs::path cameras, views, out;
    FusionConfig fusion;
    std::vector<std::string> targets;
    int workers = 0;
};

int run_fuse(const FuseArgs& a) {
    const auto cameras = load_cameras(a.cameras);
    std::vector<ViewBundle> bundles;
    std::map<std::string, CameraView> by_id;
    for (const auto& c : cameras) {
        const fs::path rgb = a.views / (c.id + ".png");
        if (!is_file(rgb)) continue;
        ViewBundle b;
        b.camera_id = c.id;
        b.rgb = read_png(rgb);
        const fs::path depth = a.views / (c.id + ".depth.pfm");
        if (is_file(depth)) b.depth = read_pfm(depth);
        const fs::path mask = a.views / (c.id + ".mask.png");
        if (is_file(mask)) b.mask = read_mask_png(mask);
        const fs::path score = a.views / (c.id + ".score.json");
        if (is_file(score)) {
            json doc;
            std::ifstream(score) >> doc;
            b.score = doc.at("score").get<double>();
        }
        b.validate_against(c);
        by_id[c.id] = c;
        bundles.push_back(std::move(b));
    }
    if (bundles.empty()) throw ValidationError("no <camera_id>.png views found in " + a.views.string());

    std::size_t scored = 0;
    for (const auto& b : bundles) scored += b.score.has_value();
    const std::vector<ViewBundle> kept =
        scored == 0 ? bundles : rank_and_filter(bundles, a.fusion.keep_fraction);
    std::vector<std::pair<ViewBundle, CameraView>> sources;
    for (const auto& b : kept) sources.emplace_back(b, by_id.at(b.camera_id));

    std::vector<const ViewBundle*> targets;
    for (const auto& b : bundles) {
        if (a.targets.empty() || std::find(a.targets.begin(), a.targets.end(), b.camera_id) != a.targets.end()) {
            targets.push_back(&b);
        }
    }
    const fs::path dir = a.out / "fused";
    fs::create_directories(dir);
    parallel_for(targets.size(), resolve_workers(a.workers), [&](std::size_t i) {
        const ViewBundle& t = *targets[i];
        const auto [fused, coverage] = fuse_views_with_coverage(t, by_id.at(t.camera_id), sources, a.fusion);
        write_png(fused, dir / (t.camera_id + ".png"));
        write_mask_png(coverage, dir / (t.camera_id + ".coverage.png"));
    });
    std::cout << "fused " << targets.size() << " views from " << sources.size() << " sources into "
              << dir.string() << "\n";
    return 0;
}

struct EditArgs {
    fs::path source, fusion, out, work_dir;
    std::string provider = "true_noise_oracle";
    ProviderSpec spec;
    SamplerConfig sampler;
    GuidanceScales scales;
};

int run_edit_cmd(EditArgs a) {
    a.spec.kind = parse_mock_kind(a.provider);
    const Image source = read_png(a.source);
    const Image fusion = a.fusion.empty() ? source : read_png(a.fusion);
    const fs::path work = a.work_dir.empty() ? a.out.parent_path() / (a.out.stem().string() + ".provider") : a.work_dir;
    const Image edited = run_edit(source, fusion, a.spec, a.sampler, a.scales, work);
    if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
    write_png(edited, a.out);
    std::cout << "wrote " << a.out.string() << "\n";
    return 0;
}

struct WeightArgs {
    fs::path scene, cameras, attention, out;
};

int run_weight(const WeightArgs& a) {
    GaussianCloud cloud = load_ply(a.scene);
    const auto cameras = load_cameras(a.cameras);
    std::vector<RawAttention> raw;
    int h = 0, w = 0;
    for (const auto& c : cameras) {
        const fs::path p = a.attention / (c.id + ".attn.pfm");
        if (!is_file(p)) continue;
        Tensor map = read_pfm(p);
        if (map.channels() != 1) throw FormatError(p.string() + " must have one channel");
        if (raw.empty()) {
            h = c.height;
            w = c.width;
        } else if (c.height != h || c.width != w) {
            throw ContractError("attention weighting needs every camera at the same resolution");
        }
        raw.push_back({c.id, {std::move(map)}});
    }
    if (raw.empty()) throw ValidationError("no <camera_id>.attn.pfm maps found in " + a.attention.string());
    const AttentionStack stack = normalize_attention(raw, h, w);
    cloud.attention_weights = accumulate_attention(cloud, cameras, stack);
    save_ply(cloud, a.out);
    std::cout << "weighted " << cloud.size() << " gaussians from " << raw.size() << " views into " << a.out.string()
              << "\n";
    return 0;
}

struct TrimArgs {
    fs::path scene, weights, out;
    AgtConfig agt;
};

int run_trim(const TrimArgs& a) {
    GaussianCloud cloud = load_ply(a.scene);
    if (!a.weights.empty()) cloud.attention_weights = read_weights_sidecar(a.weights);
    if (!cloud.attention_weights) throw ValidationError("no attention weights: pass --weights or a weighted scene");
    if (cloud.attention_weights->size() != cloud.size()) {
        throw ValidationError("weights file has " + std::to_string(cloud.attention_weights->size()) +
                              " entries for " + std::to_string(cloud.size()) + " gaussians");
    }
    const ThresholdResult t = threshold_weights(*cloud.attention_weights, a.agt.w_thres);
    cloud.attention_weights = t.weights;
    cloud.frozen = t.frozen;
    const PruneResult pruned = prune_topk(cloud, t.weights, a.agt.k_percent);
    save_ply(pruned.cloud, a.out);
    std::size_t frozen = 0;
    for (bool f : *pruned.cloud.frozen) frozen += f;
    std::cout << "pruned " << pruned.pruned.size() << " of " << cloud.size() << " gaussians; " << frozen
              << " frozen; wrote " << a.out.string() << "\n";
    return 0;
}

struct OptimizeArgs {
    fs::path scene, cameras, targets, config, out;
    int epochs = -1;
    int max_iterations = -1;
    long long seed = -1;
    bool snapshots = false;
};

int run_optimize(const OptimizeArgs& a) {
    OptimizeConfig cfg;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw IoError("cannot open config '" + a.config.string() + "'");
        json doc;
        in >> doc;
        cfg = PipelineConfig::from_json(json{{"optimize", doc}}).optimize;
    }
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.max_iterations >= 0) cfg.max_iterations = a.max_iterations;
    if (a.seed >= 0) cfg.rng_seed = static_cast<std::uint64_t>(a.seed);

    const GaussianCloud cloud = load_ply(a.scene);
    const auto cameras = load_cameras(a.cameras);
    std::vector<Image> targets;
    for (const auto& c : cameras) targets.push_back(read_png(a.targets / (c.id + ".png")));
    const std::vector<bool> freeze = cloud.frozen ? *cloud.frozen : std::vector<bool>{};

    fs::create_directories(a.out);
    EpochCallback snapshot;
    if (a.snapshots) {
        snapshot = [&](int epoch, const GaussianCloud& current) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%02d", epoch);
            render_to_directory(current, cameras, a.out / "snapshots" / name, 1, cfg.render);
        };
    }
    const OptimizeResult result = optimize_scene(cloud, cameras, targets, freeze, cfg, {}, snapshot);
    save_ply(result.cloud, a.out / "edited.ply");
    std::ofstream csv(a.out / "loss.csv");
    csv << "iteration,view_id,l1,perceptual,total\n";
    for (const auto& r : result.history) {
        char line[256];
        std::snprintf(line, sizeof line, "%zu,%s,%.17g,%.17g,%.17g\n", r.iteration, r.view_id.c_str(), r.l1,
                      r.perceptual, r.total);
        csv << line;
    }
    std::cout << "ran " << result.history.size() << " iterations; wrote " << (a.out / "edited.ply").string() << "\n";
    return 0;
}

struct PipelineArgs {
    fs::path config;
    bool print_config = false;
};

int run_pipeline_cmd(const PipelineArgs& a) {
    if (a.print_config) {
        std::cout << PipelineConfig{}.to_json().dump(2) << "\n";
        return 0;
    }
    if (a.config.empty()) throw ValidationError("--config is required");
    const PipelineConfig cfg = load_pipeline_config(a.config);
    const PipelineResult result = run_pipeline(cfg);
    for (const auto& s : result.stages) {
        std::printf("%-13s %s %.2fs\n", s.name.c_str(), s.skipped ? "skipped" : "ran    ", s.seconds);
    }
    if (result.exit_code != 0) {
        std::cerr << "error: " << result.message << "\n";
    } else {
        std::cout << "wrote " << (cfg.paths.output / "edited.ply").string() << "\n";
    }
    return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Text-driven Gaussian splat editing toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic Gaussian scene and orbit cameras");
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--count", synth.spec.count, "Number of Gaussians")->capture_default_str();
    synth_cmd->add_option("--cameras", synth.spec.camera_count, "Number of orbit cameras")->capture_default_str();
    synth_cmd->add_option("--width", synth.spec.width, "Image width")->capture_default_str();
    synth_cmd->add_option("--height", synth.spec.height, "Image height")->capture_default_str();
    synth_cmd->add_option("--extent", synth.spec.extent, "Side of the cube holding the centers")->capture_default_str();
    synth_cmd->add_option("--radius", synth.spec.orbit_radius, "Orbit radius")->capture_default_str();
    synth_cmd->add_option("--colors", synth.colors, "random | uniform | gradient")->capture_default_str();
    synth_cmd->add_option("--seed", synth.spec.seed, "RNG seed")->capture_default_str();
    synth_cmd->add_flag("--fixture", synth.fixture,
                        "Write the end-to-end fixture (scene, cameras, masks, attention, scores, config)");

    RenderArgs rnd;
    auto* render_cmd = app.add_subcommand("render", "Render color PNG and depth PFM for every camera");
    render_cmd->add_option("--scene", rnd.scene, "Gaussian PLY")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--cameras", rnd.cameras, "Camera JSON")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--out", rnd.out, "Output directory")->required();
    render_cmd->add_option("--workers", rnd.workers, "Worker threads, 0 = logical cores")->capture_default_str();

    FuseArgs fuse;
    auto* fuse_cmd = app.add_subcommand("fuse", "Depth-warp and blend neighbor views into each target view");
    fuse_cmd->add_option("--cameras", fuse.cameras, "Camera JSON")->required()->check(CLI::ExistingFile);
    fuse_cmd->add_option("--views", fuse.views,
                         "Directory of <id>.png, <id>.depth.pfm, optional <id>.mask.png and <id>.score.json")
        ->required()
        ->check(CLI::ExistingDirectory);
    fuse_cmd->add_option("--out", fuse.out, "Output directory (writes fused/)")->required();
    fuse_cmd->add_option("--keep", fuse.fusion.keep_fraction, "Fraction of scored views kept")->capture_default_str();
    fuse_cmd->add_option("--n-adjacent", fuse.fusion.n_adjacent, "Adjacent views per target")->capture_default_str();
    fuse_cmd->add_option("--lambda", fuse.fusion.lambda, "Orientation weight in the view distance")
        ->capture_default_str();
    fuse_cmd->add_option("--target", fuse.targets, "Restrict to these target ids (repeatable)");
    fuse_cmd->add_option("--workers", fuse.workers, "Worker threads, 0 = logical cores")->capture_default_str();

    EditArgs edit;
    auto* edit_cmd = app.add_subcommand("edit", "Run the guided sampler on one image");
    edit_cmd->add_option("--source", edit.source, "Source PNG")->required()->check(CLI::ExistingFile);
    edit_cmd->add_option("--fusion", edit.fusion, "Fused PNG (defaults to the source)")->check(CLI::ExistingFile);
    edit_cmd->add_option("--out", edit.out, "Output PNG")->required();
    edit_cmd->add_option("--provider", edit.provider,
                         "constant_field | affine_of_conditioning | true_noise_oracle | external_process")
        ->capture_default_str();
    edit_cmd->add_option("--executable", edit.spec.executable, "External provider executable");
    edit_cmd->add_option("--prompt", edit.spec.prompt, "Edit instruction passed to the provider");
    edit_cmd->add_option("--constant", edit.spec.constant, "constant_field value")->capture_default_str();
    edit_cmd->add_option("--work-dir", edit.work_dir, "Provider scratch directory");
    edit_cmd->add_option("--steps", edit.sampler.steps, "Denoising steps")->capture_default_str();
    edit_cmd->add_option("--t-start", edit.sampler.t_start, "Start of the trajectory as a schedule fraction")
        ->capture_default_str();
    edit_cmd->add_flag("--random-t-start", edit.sampler.randomize_t_start, "Draw t_start from [t-min, t-max]");
    edit_cmd->add_option("--t-min", edit.sampler.t_min, "Lower bound of the random start")->capture_default_str();
    edit_cmd->add_option("--t-max", edit.sampler.t_max, "Upper bound of the random start")->capture_default_str();
    edit_cmd->add_option("--seed", edit.sampler.rng_seed, "Noise seed")->capture_default_str();
    edit_cmd->add_option("--text-scale", edit.scales.text, "Text guidance scale")->capture_default_str();
    edit_cmd->add_option("--fusion-scale", edit.scales.fusion, "Fused-image guidance scale")->capture_default_str();
    edit_cmd->add_option("--source-scale", edit.scales.source, "Source-image guidance scale")->capture_default_str();

    WeightArgs weight;
    auto* weight_cmd = app.add_subcommand("weight-attention", "Assign per-Gaussian attention weights");
    weight_cmd->add_option("--scene", weight.scene, "Gaussian PLY")->required()->check(CLI::ExistingFile);
    weight_cmd->add_option("--cameras", weight.cameras, "Camera JSON")->required()->check(CLI::ExistingFile);
    weight_cmd->add_option("--attention", weight.attention, "Directory of <id>.attn.pfm maps")
        ->required()
        ->check(CLI::ExistingDirectory);
    weight_cmd->add_option("--out", weight.out, "Output PLY (weights go to its sidecar)")->required();

    TrimArgs trim;
    auto* trim_cmd = app.add_subcommand("trim", "Threshold weights into a freeze mask and prune the top k%");
    trim_cmd->add_option("--scene", trim.scene, "Gaussian PLY")->required()->check(CLI::ExistingFile);
    trim_cmd->add_option("--weights", trim.weights, "Weights sidecar (defaults to the scene's own)")
        ->check(CLI::ExistingFile);
    trim_cmd->add_option("--k", trim.agt.k_percent, "Pruned share in percent")->capture_default_str();
    trim_cmd->add_option("--w-thres", trim.agt.w_thres, "Weights below this are frozen")->capture_default_str();
    trim_cmd->add_option("--out", trim.out, "Output PLY (freeze mask goes to its sidecar)")->required();

    OptimizeArgs opt;
    auto* opt_cmd = app.add_subcommand("optimize", "Fit unfrozen Gaussians to per-view target images");
    opt_cmd->add_option("--scene", opt.scene, "Gaussian PLY with optional freeze sidecar")
        ->required()
        ->check(CLI::ExistingFile);
    opt_cmd->add_option("--cameras", opt.cameras, "Camera JSON")->required()->check(CLI::ExistingFile);
    opt_cmd->add_option("--targets", opt.targets, "Directory of <id>.png targets")
        ->required()
        ->check(CLI::ExistingDirectory);
    opt_cmd->add_option("--config", opt.config, "JSON with optimizer settings")->check(CLI::ExistingFile);
    opt_cmd->add_option("--out", opt.out, "Output directory")->required();
    opt_cmd->add_option("--epochs", opt.epochs, "Override epochs (default 8)");
    opt_cmd->add_option("--max-iterations", opt.max_iterations, "Stop after this many iterations");
    opt_cmd->add_option("--seed", opt.seed, "View-order and densification seed (default 0)");
    opt_cmd->add_flag("--snapshots", opt.snapshots, "Render every view after each epoch");

    PipelineArgs pipe;
    auto* pipe_cmd = app.add_subcommand("pipeline", "Run every stage with manifest-based resume");
    pipe_cmd->add_option("--config", pipe.config, "Pipeline JSON config")->check(CLI::ExistingFile);
    pipe_cmd->add_flag("--print-config", pipe.print_config, "Print the default config and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*synth_cmd) return run_synth(synth);
        if (*render_cmd) return run_render(rnd);
        if (*fuse_cmd) return run_fuse(fuse);
        if (*edit_cmd) return run_edit_cmd(edit);
        if (*weight_cmd) return run_weight(weight);
        if (*trim_cmd) return run_trim(trim);
        if (*opt_cmd) return run_optimize(opt);
        if (*pipe_cmd) return run_pipeline_cmd(pipe);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return kExitProvider;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitStage;
}
