#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "gsedit/tensor.hpp"

namespace gsedit {

enum class ImageCondition { None, Source, Fusion };
enum class TextCondition { None, Prompt };

const char* to_string(ImageCondition c);
const char* to_string(TextCondition c);

/// Stand-in for the diffusion model: predicts noise for a noisy tensor under
/// a choice of image and text conditioning. Payloads (source image, fused
/// image, prompt) are provider state supplied at construction.
class ScoreProvider {
public:
    virtual ~ScoreProvider() = default;

    virtual ScoreField predict(const ScoreField& z_t, int timestep, ImageCondition image, TextCondition text) = 0;

    /// Called by the sampler with the noise it injected into x0.
    virtual void on_noise_injected(const ScoreField& /*noise*/) {}
};

enum class MockKind { ConstantField, AffineOfConditioning, TrueNoiseOracle, ExternalProcess };

MockKind parse_mock_kind(const std::string& name);

using Conditioning = std::pair<ImageCondition, TextCondition>;

struct AffineCoefficients {
    double a = 1.0;
    double b = 0.0;
};

struct ProviderPayloads {
    Tensor source;
    Tensor fusion;
    std::string prompt;

    /// ConstantField: value for conditionings missing from `constants`.
    double constant = 0.0;
    std::map<Conditioning, double> constants;

    /// AffineOfConditioning: a * z_t + b, per conditioning.
    AffineCoefficients affine_default;
    std::map<Conditioning, AffineCoefficients> affine;

    /// ExternalProcess: executable invoked as `<executable> <request_dir>`.
    std::filesystem::path executable;
    std::filesystem::path work_dir;
};

/// External provider protocol. Each query writes into a fresh request
/// directory:
///   z_t.pfm    noisy tensor
///   meta.json  {"t", "image_cond", "text_cond", "prompt", "source_image", "fusion_image"}
/// runs the executable with the directory as its only argument and reads
/// back `eps.pfm`. A nonzero exit or a malformed response raises
/// ProviderError carrying the captured output.
class ExternalProcessProvider : public ScoreProvider {
public:
    ExternalProcessProvider(std::filesystem::path executable, std::filesystem::path work_dir, Tensor source,
                            Tensor fusion, std::string prompt);

    ScoreField predict(const ScoreField& z_t, int timestep, ImageCondition image, TextCondition text) override;

private:
    std::filesystem::path executable_;
    std::filesystem::path work_dir_;
    std::filesystem::path source_path_;
    std::filesystem::path fusion_path_;
    std::string prompt_;
    std::size_t request_counter_ = 0;
    std::mutex mutex_;
};

std::unique_ptr<ScoreProvider> make_mock_provider(MockKind kind, ProviderPayloads payloads);

}  // namespace gsedit
