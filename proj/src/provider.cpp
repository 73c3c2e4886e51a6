#include "gsedit/provider.hpp"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "gsedit/error.hpp"
#include "gsedit/image_io.hpp"

namespace gsedit {
namespace {

class ConstantFieldProvider : public ScoreProvider {
public:
    ConstantFieldProvider(double fallback, std::map<Conditioning, double> values)
        : fallback_(fallback), values_(std::move(values)) {}

    ScoreField predict(const ScoreField& z_t, int, ImageCondition image, TextCondition text) override {
        const auto it = values_.find({image, text});
        return ScoreField(z_t.height(), z_t.width(), z_t.channels(), it == values_.end() ? fallback_ : it->second);
    }

private:
    double fallback_;
    std::map<Conditioning, double> values_;
};

class AffineProvider : public ScoreProvider {
public:
    AffineProvider(AffineCoefficients fallback, std::map<Conditioning, AffineCoefficients> coefficients)
        : fallback_(fallback), coefficients_(std::move(coefficients)) {}

    ScoreField predict(const ScoreField& z_t, int, ImageCondition image, TextCondition text) override {
        const auto it = coefficients_.find({image, text});
        const AffineCoefficients c = it == coefficients_.end() ? fallback_ : it->second;
        ScoreField out = z_t;
        for (double& v : out.values()) v = c.a * v + c.b;
        return out;
    }

private:
    AffineCoefficients fallback_;
    std::map<Conditioning, AffineCoefficients> coefficients_;
};

/// Returns the noise the sampler injected, whatever the conditioning.
class TrueNoiseOracle : public ScoreProvider {
public:
    ScoreField predict(const ScoreField& z_t, int, ImageCondition, TextCondition) override {
        if (!noise_) throw ProviderError("true-noise oracle queried before any noise was injected");
        if (!noise_->same_shape(z_t)) throw ProviderError("true-noise oracle: injected noise has a different shape");
        return *noise_;
    }

    void on_noise_injected(const ScoreField& noise) override { noise_ = noise; }

private:
    std::optional<ScoreField> noise_;
};

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

std::string read_text(const std::filesystem::path& path, std::size_t limit = 4000) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    if (text.size() > limit) text = text.substr(text.size() - limit);
    return text;
}

}  // namespace

const char* to_string(ImageCondition c) {
    switch (c) {
        case ImageCondition::None: return "none";
        case ImageCondition::Source: return "source";
        case ImageCondition::Fusion: return "fusion";
    }
    return "none";
}

const char* to_string(TextCondition c) { return c == TextCondition::Prompt ? "prompt" : "none"; }

MockKind parse_mock_kind(const std::string& name) {
    if (name == "constant_field") return MockKind::ConstantField;
    if (name == "affine_of_conditioning") return MockKind::AffineOfConditioning;
    if (name == "true_noise_oracle") return MockKind::TrueNoiseOracle;
    if (name == "external_process") return MockKind::ExternalProcess;
    throw ValidationError("unknown provider kind '" + name +
                          "' (expected constant_field, affine_of_conditioning, true_noise_oracle or external_process)");
}

ExternalProcessProvider::ExternalProcessProvider(std::filesystem::path executable, std::filesystem::path work_dir,
                                                 Tensor source, Tensor fusion, std::string prompt)
    : executable_(std::move(executable)), work_dir_(std::move(work_dir)), prompt_(std::move(prompt)) {
    if (executable_.empty()) throw ValidationError("external provider needs an executable path");
    std::filesystem::create_directories(work_dir_);
    if (!source.empty()) {
        source_path_ = work_dir_ / "source.pfm";
        write_pfm(source, source_path_);
    }
    if (!fusion.empty()) {
        fusion_path_ = work_dir_ / "fusion.pfm";
        write_pfm(fusion, fusion_path_);
    }
}

ScoreField ExternalProcessProvider::predict(const ScoreField& z_t, int timestep, ImageCondition image,
                                            TextCondition text) {
    std::lock_guard lock(mutex_);
    char name[32];
    std::snprintf(name, sizeof(name), "request_%06zu", request_counter_++);
    const auto dir = work_dir_ / name;
    std::filesystem::create_directories(dir);
    write_pfm(z_t, dir / "z_t.pfm");
    const nlohmann::json meta = {{"t", timestep},
                                 {"image_cond", to_string(image)},
                                 {"text_cond", to_string(text)},
                                 {"prompt", prompt_},
                                 {"source_image", source_path_.string()},
                                 {"fusion_image", fusion_path_.string()}};
    {
        std::ofstream out(dir / "meta.json");
        out << meta.dump(2) << "\n";
        if (!out) throw ProviderError("cannot write request metadata in " + dir.string());
    }

    const auto log = dir / "provider.log";
    const std::string command =
        shell_quote(executable_.string()) + " " + shell_quote(dir.string()) + " > " + shell_quote(log.string()) + " 2>&1";
    const int status = std::system(command.c_str());
    const int code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status));
    if (code != 0) {
        throw ProviderError("external provider exited with status " + std::to_string(code) + " for " + dir.string() +
                            "\n" + read_text(log));
    }
    ScoreField eps;
    try {
        eps = read_pfm(dir / "eps.pfm");
    } catch (const Error& e) {
        throw ProviderError(std::string("external provider returned no usable eps.pfm: ") + e.what() + "\n" +
                            read_text(log));
    }
    if (!eps.same_shape(z_t)) {
        throw ProviderError("external provider returned shape " + std::to_string(eps.height()) + "x" +
                            std::to_string(eps.width()) + "x" + std::to_string(eps.channels()) + ", expected " +
                            std::to_string(z_t.height()) + "x" + std::to_string(z_t.width()) + "x" +
                            std::to_string(z_t.channels()));
    }
    return eps;
}

std::unique_ptr<ScoreProvider> make_mock_provider(MockKind kind, ProviderPayloads payloads) {
    switch (kind) {
        case MockKind::ConstantField:
            return std::make_unique<ConstantFieldProvider>(payloads.constant, std::move(payloads.constants));
        case MockKind::AffineOfConditioning:
            return std::make_unique<AffineProvider>(payloads.affine_default, std::move(payloads.affine));
        case MockKind::TrueNoiseOracle: return std::make_unique<TrueNoiseOracle>();
        case MockKind::ExternalProcess:
            return std::make_unique<ExternalProcessProvider>(std::move(payloads.executable),
                                                             std::move(payloads.work_dir), std::move(payloads.source),
                                                             std::move(payloads.fusion), std::move(payloads.prompt));
    }
    throw ValidationError("unsupported provider kind");
}

}  // namespace gsedit
