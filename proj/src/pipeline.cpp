#include "gsedit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "gsedit/agt.hpp"
#include "gsedit/camera_io.hpp"
#include "gsedit/error.hpp"
#include "gsedit/hashing.hpp"
#include "gsedit/image_io.hpp"
#include "gsedit/ply_io.hpp"
#include "gsedit/synthetic.hpp"

namespace gsedit {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
        if (!doc_.is_object()) throw ValidationError(where_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        used_.insert(key);
        const auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception& e) {
            throw ValidationError(where_ + "." + key + ": " + e.what());
        }
    }

    void get_path(const char* key, fs::path& out, const fs::path& base) {
        std::string s;
        get(key, s);
        if (s.empty()) return;
        fs::path p(s);
        out = p.is_absolute() || base.empty() ? p : base / p;
    }

    std::optional<ObjectReader> child(const char* key) {
        used_.insert(key);
        const auto it = doc_.find(key);
        if (it == doc_.end()) return std::nullopt;
        return ObjectReader(*it, where_ + "." + key);
    }

    void finish() const {
        for (const auto& [key, value] : doc_.items()) {
            if (!used_.count(key)) throw ValidationError("unknown key '" + where_ + "." + key + "'");
        }
    }

private:
    const json& doc_;
    std::string where_;
    std::set<std::string> used_;
};

const char* mock_kind_name(MockKind k) {
    switch (k) {
        case MockKind::ConstantField: return "constant_field";
        case MockKind::AffineOfConditioning: return "affine_of_conditioning";
        case MockKind::TrueNoiseOracle: return "true_noise_oracle";
        case MockKind::ExternalProcess: return "external_process";
    }
    return "true_noise_oracle";
}

void require_path(const fs::path& p, const char* field, bool directory) {
    if (p.empty()) return;
    std::error_code ec;
    const bool ok = directory ? fs::is_directory(p, ec) : fs::is_regular_file(p, ec);
    if (!ok) {
        throw ValidationError(std::string("paths.") + field + ": '" + p.string() + "' is not an existing " +
                              (directory ? "directory" : "file"));
    }
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc, const fs::path& base_dir) {
    PipelineConfig cfg;
    ObjectReader root(doc, "config");
    if (auto p = root.child("paths")) {
        p->get_path("scene", cfg.paths.scene, base_dir);
        p->get_path("cameras", cfg.paths.cameras, base_dir);
        p->get_path("images", cfg.paths.images, base_dir);
        p->get_path("depths", cfg.paths.depths, base_dir);
        p->get_path("masks", cfg.paths.masks, base_dir);
        p->get_path("attention", cfg.paths.attention, base_dir);
        p->get_path("scores", cfg.paths.scores, base_dir);
        p->get_path("output", cfg.paths.output, base_dir);
        p->finish();
    }
    if (auto g = root.child("guidance")) {
        g->get("text", cfg.guidance.text);
        g->get("fusion", cfg.guidance.fusion);
        g->get("source", cfg.guidance.source);
        g->finish();
    }
    if (auto s = root.child("sampler")) {
        s->get("steps", cfg.sampler.steps);
        s->get("t_start", cfg.sampler.t_start);
        s->get("randomize_t_start", cfg.sampler.randomize_t_start);
        s->get("t_min", cfg.sampler.t_min);
        s->get("t_max", cfg.sampler.t_max);
        s->finish();
    }
    if (auto s = root.child("schedule")) {
        s->get("steps", cfg.schedule.steps);
        s->get("beta_start", cfg.schedule.beta_start);
        s->get("beta_end", cfg.schedule.beta_end);
        s->finish();
    }
    if (auto f = root.child("fusion")) {
        f->get("keep_fraction", cfg.fusion.keep_fraction);
        f->get("n_adjacent", cfg.fusion.n_adjacent);
        f->get("lambda", cfg.fusion.lambda);
        f->get("z_near", cfg.fusion.z_near);
        f->finish();
    }
    if (auto a = root.child("agt")) {
        a->get("w_thres", cfg.agt.w_thres);
        a->get("k_percent", cfg.agt.k_percent);
        a->finish();
    }
    if (auto o = root.child("optimize")) {
        o->get("epochs", cfg.optimize.epochs);
        o->get("max_iterations", cfg.optimize.max_iterations);
        o->get("l1_weight", cfg.optimize.l1_weight);
        o->get("perceptual_weight", cfg.optimize.perceptual_weight);
        if (auto lr = o->child("lr")) {
            lr->get("position", cfg.optimize.lr.position);
            lr->get("color", cfg.optimize.lr.color);
            lr->get("opacity", cfg.optimize.lr.opacity);
            lr->get("log_scale", cfg.optimize.lr.log_scale);
            lr->get("rotation", cfg.optimize.lr.rotation);
            lr->finish();
        }
        if (auto a = o->child("adam")) {
            a->get("beta1", cfg.optimize.adam.beta1);
            a->get("beta2", cfg.optimize.adam.beta2);
            a->get("epsilon", cfg.optimize.adam.epsilon);
            a->finish();
        }
        if (auto d = o->child("densify")) {
            d->get("enabled", cfg.optimize.densify.enabled);
            d->get("interval", cfg.optimize.densify.interval);
            d->get("grad_threshold", cfg.optimize.densify.grad_threshold);
            d->get("clone_scale_fraction", cfg.optimize.densify.clone_scale_fraction);
            d->get("split_factor", cfg.optimize.densify.split_factor);
            d->get("min_opacity", cfg.optimize.densify.min_opacity);
            d->finish();
        }
        o->finish();
    }
    if (auto p = root.child("provider")) {
        std::string kind = mock_kind_name(cfg.provider.kind);
        p->get("kind", kind);
        cfg.provider.kind = parse_mock_kind(kind);
        p->get_path("executable", cfg.provider.executable, base_dir);
        p->get("prompt", cfg.provider.prompt);
        p->get("constant", cfg.provider.constant);
        p->get("affine_a", cfg.provider.affine.a);
        p->get("affine_b", cfg.provider.affine.b);
        p->finish();
    }
    root.get("rng_seed", cfg.rng_seed);
    root.get("workers", cfg.workers);
    root.finish();

    cfg.sampler.alpha_bar = linear_alpha_bar(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    cfg.sampler.rng_seed = cfg.rng_seed;
    cfg.optimize.rng_seed = cfg.rng_seed;
    return cfg;
}

json PipelineConfig::to_json() const {
    const auto& o = optimize;
    return json{
        {"paths",
         {{"scene", paths.scene.string()},
          {"cameras", paths.cameras.string()},
          {"images", paths.images.string()},
          {"depths", paths.depths.string()},
          {"masks", paths.masks.string()},
          {"attention", paths.attention.string()},
          {"scores", paths.scores.string()},
          {"output", paths.output.string()}}},
        {"guidance", {{"text", guidance.text}, {"fusion", guidance.fusion}, {"source", guidance.source}}},
        {"sampler",
         {{"steps", sampler.steps},
          {"t_start", sampler.t_start},
          {"randomize_t_start", sampler.randomize_t_start},
          {"t_min", sampler.t_min},
          {"t_max", sampler.t_max}}},
        {"schedule",
         {{"steps", schedule.steps}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}}},
        {"fusion",
         {{"keep_fraction", fusion.keep_fraction},
          {"n_adjacent", fusion.n_adjacent},
          {"lambda", fusion.lambda},
          {"z_near", fusion.z_near}}},
        {"agt", {{"w_thres", agt.w_thres}, {"k_percent", agt.k_percent}}},
        {"optimize",
         {{"epochs", o.epochs},
          {"max_iterations", o.max_iterations},
          {"l1_weight", o.l1_weight},
          {"perceptual_weight", o.perceptual_weight},
          {"lr",
           {{"position", o.lr.position},
            {"color", o.lr.color},
            {"opacity", o.lr.opacity},
            {"log_scale", o.lr.log_scale},
            {"rotation", o.lr.rotation}}},
          {"adam", {{"beta1", o.adam.beta1}, {"beta2", o.adam.beta2}, {"epsilon", o.adam.epsilon}}},
          {"densify",
           {{"enabled", o.densify.enabled},
            {"interval", o.densify.interval},
            {"grad_threshold", o.densify.grad_threshold},
            {"clone_scale_fraction", o.densify.clone_scale_fraction},
            {"split_factor", o.densify.split_factor},
            {"min_opacity", o.densify.min_opacity}}}}},
        {"provider",
         {{"kind", mock_kind_name(provider.kind)},
          {"executable", provider.executable.string()},
          {"prompt", provider.prompt},
          {"constant", provider.constant},
          {"affine_a", provider.affine.a},
          {"affine_b", provider.affine.b}}},
        {"rng_seed", rng_seed},
        {"workers", workers},
    };
}

void PipelineConfig::validate() const {
    if (paths.scene.empty()) throw ValidationError("paths.scene is required");
    if (paths.cameras.empty()) throw ValidationError("paths.cameras is required");
    if (paths.output.empty()) throw ValidationError("paths.output is required");
    require_path(paths.scene, "scene", false);
    require_path(paths.cameras, "cameras", false);
    require_path(paths.images, "images", true);
    require_path(paths.depths, "depths", true);
    require_path(paths.masks, "masks", true);
    require_path(paths.attention, "attention", true);
    require_path(paths.scores, "scores", false);
    if (paths.attention.empty() && paths.masks.empty()) {
        throw ValidationError("paths.attention or paths.masks is required to weight gaussians");
    }

    for (double s : {guidance.text, guidance.fusion, guidance.source}) {
        if (!std::isfinite(s)) throw ValidationError("guidance scales must be finite");
    }
    if (sampler.steps < 1) throw ValidationError("sampler.steps must be at least 1");
    if (schedule.steps < 2) throw ValidationError("schedule.steps must be at least 2");
    if (!(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1.0)) {
        throw ValidationError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
    }
    sampler.validate();
    if (!(fusion.keep_fraction > 0.0 && fusion.keep_fraction <= 1.0)) {
        throw ValidationError("fusion.keep_fraction must be in (0, 1]");
    }
    if (fusion.n_adjacent < 1) throw ValidationError("fusion.n_adjacent must be at least 1");
    if (!(fusion.lambda >= 0.0)) throw ValidationError("fusion.lambda must be nonnegative");
    if (!(fusion.z_near > 0.0)) throw ValidationError("fusion.z_near must be positive");
    if (!(agt.w_thres >= 0.0 && agt.w_thres <= 1.0)) throw ValidationError("agt.w_thres must be in [0, 1]");
    if (!(agt.k_percent >= 0.0 && agt.k_percent <= 100.0)) {
        throw ValidationError("agt.k_percent must be in [0, 100], got " + fmt_double(agt.k_percent));
    }
    optimize.validate();
    if (provider.kind == MockKind::ExternalProcess) {
        std::error_code ec;
        if (provider.executable.empty() || !fs::is_regular_file(provider.executable, ec)) {
            throw ValidationError("provider.executable must name an existing file for external_process");
        }
    }
    if (workers < 0) throw ValidationError("workers must be nonnegative");
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return PipelineConfig::from_json(doc, path.parent_path());
}

int resolve_workers(int configured) {
    if (const char* env = std::getenv("GSEDIT_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
        throw ValidationError(std::string("GSEDIT_WORKERS must be a positive integer, got '") + env + "'");
    }
    if (configured > 0) return configured;
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    std::vector<std::exception_ptr> errors(n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::mutex mutex;
        std::size_t next = 0;
        bool failed = false;
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                while (true) {
                    std::size_t i;
                    {
                        std::lock_guard lock(mutex);
                        if (failed || next >= n) return;
                        i = next++;
                    }
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(mutex);
                        errors[i] = std::current_exception();
                        failed = true;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt, std::uint64_t index) {
    // splitmix64 over the combined inputs
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1) + 0xbf58476d1ce4e5b9ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::map<std::string, double> read_scores(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scores '" + path.string() + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError("scores '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw FormatError("scores '" + path.string() + "' must be an object of id -> number");
    std::map<std::string, double> scores;
    for (const auto& [id, v] : doc.items()) {
        if (!v.is_number()) throw FormatError("score for '" + id + "' is not a number");
        scores[id] = v.get<double>();
    }
    return scores;
}

void render_to_directory(const GaussianCloud& cloud, const std::vector<CameraView>& cameras, const fs::path& dir,
                         int workers, const RenderOptions& opts) {
    fs::create_directories(dir);
    parallel_for(cameras.size(), workers, [&](std::size_t i) {
        const RenderOutput out = render(cloud, cameras[i], opts);
        write_png(out.rgb, dir / (cameras[i].id + ".png"));
        write_pfm(out.depth, dir / (cameras[i].id + ".depth.pfm"));
    });
}

Image run_edit(const Image& source, const Image& fusion, const ProviderSpec& spec, const SamplerConfig& sampler,
               const GuidanceScales& scales, const fs::path& work_dir) {
    ProviderPayloads payloads;
    payloads.source = source;
    payloads.fusion = fusion;
    payloads.prompt = spec.prompt;
    payloads.constant = spec.constant;
    payloads.affine_default = spec.affine;
    payloads.executable = spec.executable;
    payloads.work_dir = work_dir;
    auto provider = make_mock_provider(spec.kind, std::move(payloads));
    Image out = edit_image(*provider, sampler, source, scales);
    for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages = {"render",   "initial_edit", "filter", "fuse",
                                                    "mfg_edit", "weight",       "trim",   "optimize"};
    return stages;
}

namespace {

struct StageFailure : Error {
    std::string stage;
    int code;
    StageFailure(std::string s, int c, const std::string& what) : Error(what), stage(std::move(s)), code(c) {}
};

class Runner {
public:
    explicit Runner(const PipelineConfig& cfg) : cfg_(cfg), out_(cfg.paths.output) {
        fs::create_directories(out_);
        manifest_path_ = out_ / "manifest.json";
        std::ifstream in(manifest_path_);
        if (in) {
            try {
                json doc;
                in >> doc;
                for (const auto& s : doc.at("stages")) previous_[s.at("name").get<std::string>()] = s;
            } catch (const std::exception&) {
                previous_.clear();
            }
        }
        json hashed = cfg_.to_json();
        hashed.erase("workers");
        config_hash_ = sha256_hex(hashed.dump());
        workers_ = resolve_workers(cfg_.workers);
    }

    std::string rel(const fs::path& p) const {
        const auto r = p.lexically_relative(out_);
        if (!r.empty() && *r.begin() != "..") return r.generic_string();
        return p.generic_string();
    }

    /// Runs `body` unless the manifest proves its outputs are current.
    /// `body` returns the produced files.
    void stage(const std::string& name, const std::vector<fs::path>& inputs,
               const std::function<std::vector<fs::path>(const fs::path& dir)>& body) {
        StageRecord rec;
        rec.name = name;
        Sha256 key;
        key.update(name);
        key.update("\n");
        key.update(config_hash_);
        for (const auto& p : inputs) {
            const std::string h = sha256_file(p);
            rec.inputs[rel(p)] = h;
        }
        for (const auto& [p, h] : rec.inputs) {
            key.update("\n" + p + "=" + h);
        }
        rec.key = key.hex_digest();

        const auto it = previous_.find(name);
        if (it != previous_.end() && it->second.value("key", "") == rec.key && outputs_current(it->second)) {
            rec.skipped = true;
            rec.outputs = it->second.at("outputs").get<std::map<std::string, std::string>>();
            records_.push_back(std::move(rec));
            write_manifest();
            return;
        }

        const fs::path dir = out_ / name;
        const auto start = std::chrono::steady_clock::now();
        std::vector<fs::path> produced;
        try {
            fs::remove_all(dir);
            fs::create_directories(dir);
            produced = body(dir);
        } catch (const ProviderError& e) {
            throw StageFailure(name, kExitProvider, e.what());
        } catch (const std::exception& e) {
            throw StageFailure(name, kExitStage, e.what());
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        for (const auto& p : produced) rec.outputs[rel(p)] = sha256_file(p);
        previous_.erase(name);
        records_.push_back(std::move(rec));
        write_manifest();
    }

    const std::vector<StageRecord>& records() const { return records_; }
    const fs::path& out() const { return out_; }
    int workers() const { return workers_; }

private:
    bool outputs_current(const json& entry) const {
        try {
            for (const auto& [p, h] : entry.at("outputs").items()) {
                const fs::path full = fs::path(p).is_absolute() ? fs::path(p) : out_ / p;
                std::error_code ec;
                if (!fs::is_regular_file(full, ec) || sha256_file(full) != h.get<std::string>()) return false;
            }
            return true;
        } catch (const std::exception&) {
            return false;
        }
    }

    void write_manifest() const {
        json stages = json::array();
        for (const auto& r : records_) {
            stages.push_back({{"name", r.name},
                              {"key", r.key},
                              {"skipped", r.skipped},
                              {"seconds", r.seconds},
                              {"inputs", r.inputs},
                              {"outputs", r.outputs}});
        }
        const json doc = {{"config_hash", config_hash_}, {"stages", stages}};
        const fs::path tmp = manifest_path_.string() + ".tmp";
        {
            std::ofstream out(tmp);
            out << doc.dump(2) << "\n";
            if (!out) throw IoError("cannot write manifest '" + tmp.string() + "'");
        }
        fs::rename(tmp, manifest_path_);
    }

    const PipelineConfig& cfg_;
    fs::path out_;
    fs::path manifest_path_;
    std::string config_hash_;
    int workers_ = 1;
    std::map<std::string, json> previous_;
    std::vector<StageRecord> records_;
};

std::optional<fs::path> existing(const fs::path& dir, const std::string& file) {
    if (dir.empty()) return std::nullopt;
    const fs::path p = dir / file;
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) return p;
    return std::nullopt;
}

void write_loss_csv(const std::vector<LossRecord>& history, const fs::path& path) {
    std::ofstream out(path);
    out << "iteration,view_id,l1,perceptual,total\n";
    for (const auto& r : history) {
        out << r.iteration << "," << r.view_id << "," << fmt_double(r.l1) << "," << fmt_double(r.perceptual) << ","
            << fmt_double(r.total) << "\n";
    }
    if (!out) throw IoError("cannot write '" + path.string() + "'");
}

std::vector<fs::path> ply_with_sidecars(const fs::path& ply) {
    std::vector<fs::path> files{ply};
    for (const auto& p : {weights_sidecar_path(ply), frozen_sidecar_path(ply)}) {
        if (fs::exists(p)) files.push_back(p);
    }
    return files;
}

void run_stages(const PipelineConfig& cfg, Runner& runner) {
    const fs::path out = runner.out();
    const int workers = runner.workers();
    const auto cameras = load_cameras(cfg.paths.cameras);
    const std::size_t n = cameras.size();

    const auto view_files = [&](const fs::path& dir, const std::string& suffix) {
        std::vector<fs::path> files;
        for (const auto& c : cameras) files.push_back(dir / (c.id + suffix));
        return files;
    };
    const auto concat = [](std::vector<fs::path> a, const std::vector<fs::path>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };

    // render
    runner.stage("render", {cfg.paths.scene, cfg.paths.cameras}, [&](const fs::path& dir) {
        const GaussianCloud cloud = load_ply(cfg.paths.scene);
        render_to_directory(cloud, cameras, dir, workers, cfg.optimize.render);
        return concat(view_files(dir, ".png"), view_files(dir, ".depth.pfm"));
    });
    const auto sources = view_files(cfg.paths.images.empty() ? out / "render" : cfg.paths.images, ".png");
    const auto depths = cfg.paths.depths.empty() ? view_files(out / "render", ".depth.pfm")
                                                 : view_files(cfg.paths.depths, ".depth.pfm");
    std::vector<std::optional<fs::path>> masks(n);
    std::vector<fs::path> mask_inputs;
    for (std::size_t i = 0; i < n; ++i) {
        masks[i] = existing(cfg.paths.masks, cameras[i].id + ".png");
        if (masks[i]) mask_inputs.push_back(*masks[i]);
    }

    const auto edit_views = [&](const std::string& stage, std::uint64_t salt, const fs::path& dir,
                                const std::function<fs::path(std::size_t)>& fusion_of) {
        parallel_for(n, workers, [&](std::size_t i) {
            const Image source = read_png(sources[i]);
            const Image fusion = read_png(fusion_of(i));
            SamplerConfig sampler = cfg.sampler;
            sampler.rng_seed = derive_seed(cfg.rng_seed, salt, i);
            const Image edited = run_edit(source, fusion, cfg.provider, sampler, cfg.guidance,
                                          out / "provider_work" / stage / cameras[i].id);
            write_png(edited, dir / (cameras[i].id + ".png"));
        });
        return view_files(dir, ".png");
    };

    // initial_edit: the source image doubles as the fused condition
    runner.stage("initial_edit", concat({cfg.paths.cameras}, sources), [&](const fs::path& dir) {
        return edit_views("initial_edit", 1, dir, [&](std::size_t i) { return sources[i]; });
    });
    const auto initial = view_files(out / "initial_edit", ".png");

    // filter
    std::vector<fs::path> filter_inputs = initial;
    if (!cfg.paths.scores.empty()) filter_inputs.push_back(cfg.paths.scores);
    runner.stage("filter", filter_inputs, [&](const fs::path& dir) {
        std::map<std::string, double> scores;
        if (!cfg.paths.scores.empty()) scores = read_scores(cfg.paths.scores);
        std::vector<ViewBundle> bundles;
        for (const auto& c : cameras) {
            ViewBundle b;
            b.camera_id = c.id;
            if (cfg.paths.scores.empty()) {
                b.score = 0.0;
            } else if (const auto it = scores.find(c.id); it != scores.end()) {
                b.score = it->second;
            }
            bundles.push_back(std::move(b));
        }
        const auto kept = rank_and_filter(bundles, cfg.fusion.keep_fraction);
        json ids = json::array();
        for (const auto& b : kept) ids.push_back(b.camera_id);
        const fs::path path = dir / "selected.json";
        std::ofstream(path) << json{{"selected", ids}}.dump(2) << "\n";
        return std::vector<fs::path>{path};
    });
    const fs::path selected_path = out / "filter" / "selected.json";

    // fuse
    runner.stage("fuse",
                 concat(concat(concat(concat({cfg.paths.cameras, selected_path}, initial), depths), sources),
                        mask_inputs),
                 [&](const fs::path& dir) {
                     json doc;
                     std::ifstream(selected_path) >> doc;
                     std::vector<std::pair<ViewBundle, CameraView>> pool;
                     for (const auto& id : doc.at("selected")) {
                         const std::string sid = id.get<std::string>();
                         const auto it = std::find_if(cameras.begin(), cameras.end(),
                                                      [&](const CameraView& c) { return c.id == sid; });
                         if (it == cameras.end()) throw ContractError("selected view '" + sid + "' has no camera");
                         const auto k = static_cast<std::size_t>(it - cameras.begin());
                         ViewBundle b;
                         b.camera_id = sid;
                         b.rgb = read_png(initial[k]);
                         b.depth = read_pfm(depths[k]);
                         pool.emplace_back(std::move(b), *it);
                     }
                     if (pool.empty()) throw ContractError("no views survived filtering");
                     parallel_for(n, workers, [&](std::size_t i) {
                         ViewBundle target;
                         target.camera_id = cameras[i].id;
                         target.rgb = read_png(sources[i]);
                         if (masks[i]) target.mask = read_mask_png(*masks[i]);
                         const auto [fused, coverage] =
                             fuse_views_with_coverage(target, cameras[i], pool, cfg.fusion);
                         write_png(fused, dir / (cameras[i].id + ".png"));
                         write_mask_png(coverage, dir / (cameras[i].id + ".coverage.png"));
                     });
                     return concat(view_files(dir, ".png"), view_files(dir, ".coverage.png"));
                 });
    const auto fused = view_files(out / "fuse", ".png");

    // mfg_edit
    runner.stage("mfg_edit", concat(concat({cfg.paths.cameras}, sources), fused), [&](const fs::path& dir) {
        return edit_views("mfg_edit", 2, dir, [&](std::size_t i) { return fused[i]; });
    });
    const auto targets = view_files(out / "mfg_edit", ".png");

    // weight
    std::vector<fs::path> attention_inputs;
    std::vector<std::size_t> attention_views;
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = cfg.paths.attention.empty() ? masks[i] : existing(cfg.paths.attention, cameras[i].id + ".attn.pfm");
        if (p) {
            attention_inputs.push_back(*p);
            attention_views.push_back(i);
        }
    }
    runner.stage("weight", concat({cfg.paths.scene, cfg.paths.cameras}, attention_inputs), [&](const fs::path& dir) {
        if (attention_views.empty()) throw ContractError("no attention maps or masks found for any camera");
        std::vector<RawAttention> raw;
        for (std::size_t k = 0; k < attention_views.size(); ++k) {
            const CameraView& cam = cameras[attention_views[k]];
            Tensor map;
            if (cfg.paths.attention.empty()) {
                const Mask m = read_mask_png(attention_inputs[k]);
                map = Tensor(m.height, m.width, 1);
                for (std::size_t p = 0; p < map.size(); ++p) map[p] = m.data[p] ? 1.0 : 0.0;
            } else {
                map = read_pfm(attention_inputs[k]);
                if (map.channels() != 1) throw FormatError(attention_inputs[k].string() + " must have one channel");
            }
            raw.push_back({cam.id, {std::move(map)}});
        }
        const int h = cameras[attention_views.front()].height, w = cameras[attention_views.front()].width;
        for (std::size_t i : attention_views) {
            if (cameras[i].height != h || cameras[i].width != w) {
                throw ContractError("attention weighting needs every camera at the same resolution");
            }
        }
        const AttentionStack stack = normalize_attention(raw, h, w);
        GaussianCloud cloud = load_ply(cfg.paths.scene);
        cloud.attention_weights = accumulate_attention(cloud, cameras, stack, cfg.optimize.render);
        cloud.frozen.reset();
        const fs::path ply = dir / "weighted.ply";
        save_ply(cloud, ply);
        return ply_with_sidecars(ply);
    });
    const fs::path weighted = out / "weight" / "weighted.ply";

    // trim
    runner.stage("trim", ply_with_sidecars(weighted), [&](const fs::path& dir) {
        GaussianCloud cloud = load_ply(weighted);
        if (!cloud.attention_weights) throw ContractError("weighted cloud has no attention weights");
        const ThresholdResult t = threshold_weights(*cloud.attention_weights, cfg.agt.w_thres);
        cloud.attention_weights = t.weights;
        cloud.frozen = t.frozen;
        const PruneResult pruned = prune_topk(cloud, t.weights, cfg.agt.k_percent);
        const fs::path ply = dir / "trimmed.ply";
        save_ply(pruned.cloud, ply);
        const fs::path report = dir / "pruned.json";
        std::size_t frozen_count = 0;
        for (bool f : *pruned.cloud.frozen) frozen_count += f;
        std::ofstream(report) << json{{"input_count", cloud.size()},
                                      {"pruned", pruned.pruned},
                                      {"threshold", pruned.threshold},
                                      {"frozen_count", frozen_count}}
                                     .dump(2)
                              << "\n";
        auto files = ply_with_sidecars(ply);
        files.push_back(report);
        return files;
    });
    const fs::path trimmed = out / "trim" / "trimmed.ply";

    // optimize
    runner.stage("optimize", concat(concat(ply_with_sidecars(trimmed), {cfg.paths.cameras}), targets),
                 [&](const fs::path& dir) {
                     const GaussianCloud cloud = load_ply(trimmed);
                     std::vector<Image> images;
                     for (const auto& p : targets) images.push_back(read_png(p));
                     const std::vector<bool> freeze = cloud.frozen ? *cloud.frozen : std::vector<bool>{};
                     const OptimizeResult result = optimize_scene(cloud, cameras, images, freeze, cfg.optimize);
                     const fs::path ply = dir / "edited.ply";
                     save_ply(result.cloud, ply);
                     write_loss_csv(result.history, dir / "loss.csv");
                     const fs::path top = out / "edited.ply";
                     save_ply(result.cloud, top);
                     auto files = ply_with_sidecars(ply);
                     files.push_back(dir / "loss.csv");
                     for (const auto& f : ply_with_sidecars(top)) files.push_back(f);
                     return files;
                 });
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
    PipelineResult result;
    try {
        config.validate();
        resolve_workers(config.workers);
    } catch (const Error& e) {
        result.exit_code = kExitValidation;
        result.message = std::string("invalid configuration: ") + e.what();
        return result;
    }
    try {
        Runner runner(config);
        try {
            run_stages(config, runner);
        } catch (const StageFailure& e) {
            result.exit_code = e.code;
            result.failed_stage = e.stage;
            result.message = "stage '" + e.stage + "' failed: " + e.what();
        }
        result.stages = runner.records();
    } catch (const std::exception& e) {
        result.exit_code = kExitStage;
        result.message = e.what();
    }
    return result;
}

}  // namespace gsedit

namespace gsedit {

void write_pipeline_fixture(const fs::path& dir, std::uint64_t seed) {
    fs::create_directories(dir / "masks");
    fs::create_directories(dir / "attention");

    SyntheticSpec background;
    background.count = 240;
    background.camera_count = 10;
    background.width = 40;
    background.height = 40;
    background.seed = seed;
    auto [cloud, cameras] = make_synthetic_scene(background);

    SyntheticSpec object;
    object.count = 40;
    object.extent = 0.35;
    object.camera_count = 1;
    object.colors = ColorScheme::Uniform;
    object.min_opacity = 0.8;
    object.max_opacity = 0.95;
    object.seed = derive_seed(seed, 7, 0);
    const GaussianCloud object_cloud = make_synthetic_scene(object).first;
    for (std::size_t i = 0; i < object_cloud.size(); ++i) cloud.append_row(object_cloud, i);

    save_ply(cloud, dir / "scene.ply");
    save_cameras(cameras, dir / "cameras.json");

    json scores = json::object();
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const RenderOutput r = render(object_cloud, cameras[v]);
        Mask mask(r.alpha.height(), r.alpha.width());
        Tensor attention(r.alpha.height(), r.alpha.width(), 1);
        for (int y = 0; y < mask.height; ++y) {
            for (int x = 0; x < mask.width; ++x) {
                mask.set(y, x, r.alpha(y, x) >= 0.5);
                attention(y, x) = r.alpha(y, x);
            }
        }
        write_mask_png(mask, dir / "masks" / (cameras[v].id + ".png"));
        write_pfm(attention, dir / "attention" / (cameras[v].id + ".attn.pfm"));
        scores[cameras[v].id] = static_cast<double>(derive_seed(seed, 11, v) % 1000) / 1000.0;
    }
    std::ofstream(dir / "scores.json") << scores.dump(2) << "\n";

    PipelineConfig cfg;
    json doc = cfg.to_json();
    doc["paths"] = {{"scene", "scene.ply"},         {"cameras", "cameras.json"}, {"images", ""},
                    {"depths", ""},                 {"masks", "masks"},          {"attention", "attention"},
                    {"scores", "scores.json"},      {"output", "output"}};
    doc["rng_seed"] = seed;
    doc["workers"] = 0;
    std::ofstream(dir / "config.json") << doc.dump(2) << "\n";
}

}  // namespace gsedit
