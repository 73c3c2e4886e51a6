#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsedit/fusion.hpp"
#include "gsedit/guidance.hpp"
#include "gsedit/optimize.hpp"
#include "gsedit/provider.hpp"
#include "gsedit/scene.hpp"

namespace gsedit {

struct PipelinePaths {
    std::filesystem::path scene;      ///< source Gaussian PLY
    std::filesystem::path cameras;    ///< camera JSON
    std::filesystem::path images;     ///< optional `<id>.png`; renders are used when empty
    std::filesystem::path depths;     ///< optional `<id>.depth.pfm`; renders are used when empty
    std::filesystem::path masks;      ///< optional `<id>.png` object masks
    std::filesystem::path attention;  ///< optional `<id>.attn.pfm`
    std::filesystem::path scores;     ///< optional JSON object {camera id: score}
    std::filesystem::path output;
};

struct ProviderSpec {
    MockKind kind = MockKind::TrueNoiseOracle;
    std::filesystem::path executable;  ///< external_process only
    std::string prompt;
    double constant = 0.0;           ///< constant_field
    AffineCoefficients affine;       ///< affine_of_conditioning
};

struct AgtConfig {
    double w_thres = 0.1;
    double k_percent = 0.15;
};

struct ScheduleConfig {
    std::size_t steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
};

struct PipelineConfig {
    PipelinePaths paths;
    GuidanceScales guidance;
    SamplerConfig sampler;
    ScheduleConfig schedule;
    FusionConfig fusion;
    AgtConfig agt;
    OptimizeConfig optimize;
    ProviderSpec provider;
    std::uint64_t rng_seed = 0;
    int workers = 0;  ///< 0 means one per logical core

    /// Relative paths are resolved against `base_dir`. Unknown keys are
    /// rejected.
    static PipelineConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;

    /// Throws ValidationError naming the first offending field.
    void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Worker count after applying the GSEDIT_WORKERS override and the
/// logical-core default.
int resolve_workers(int configured);

/// Runs fn(0..n-1) on up to `workers` threads. Exceptions are collected and
/// the one from the lowest index is rethrown after all workers stop.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Deterministic per-task seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt, std::uint64_t index);

/// Score sidecar: a JSON object mapping camera ids to numbers.
std::map<std::string, double> read_scores(const std::filesystem::path& path);

/// Renders every camera into `<dir>/<id>.png` and `<dir>/<id>.depth.pfm`.
void render_to_directory(const GaussianCloud& cloud, const std::vector<CameraView>& cameras,
                         const std::filesystem::path& dir, int workers, const RenderOptions& opts = {});

/// Runs the guided sampler on `source` with `fusion` as the fused-image
/// condition and returns the result clamped to [0, 1].
Image run_edit(const Image& source, const Image& fusion, const ProviderSpec& provider, const SamplerConfig& sampler,
               const GuidanceScales& scales, const std::filesystem::path& work_dir);

struct StageRecord {
    std::string name;
    std::string key;
    bool skipped = false;
    double seconds = 0.0;
    std::map<std::string, std::string> inputs;   ///< path -> sha256
    std::map<std::string, std::string> outputs;  ///< path relative to output dir -> sha256
};

struct PipelineResult {
    int exit_code = 0;  ///< 0 ok, 2 validation, 3 stage failure, 4 provider failure
    std::string message;
    std::string failed_stage;
    std::vector<StageRecord> stages;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitStage = 3;
inline constexpr int kExitProvider = 4;

/// Writes the bundled end-to-end fixture into `dir`: `scene.ply` (a random
/// background plus a compact object cluster), `cameras.json` (10 orbit
/// views), `masks/`, `attention/` (object coverage per view), `scores.json`
/// and a `config.json` wired to them with output `dir/output`.
void write_pipeline_fixture(const std::filesystem::path& dir, std::uint64_t seed = 0);

/// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

/// Runs render, initial_edit, filter, fuse, mfg_edit, weight, trim and
/// optimize, writing `<output>/<stage>/...`, `<output>/edited.ply` and
/// `<output>/manifest.json`. A stage whose key (config plus input hashes)
/// and output hashes match the existing manifest is skipped.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace gsedit
