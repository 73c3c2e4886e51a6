#include "gsedit/ply_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "gsedit/error.hpp"

static_assert(std::endian::native == std::endian::little, "PLY and sidecar I/O assume a little-endian host");

namespace gsedit {
namespace {

constexpr std::array<char, 8> kWeightsMagic = {'G', 'S', 'W', 'T', 'S', '\0', '\0', '\1'};
constexpr std::array<char, 8> kFrozenMagic = {'G', 'S', 'F', 'R', 'Z', '\0', '\0', '\1'};

constexpr std::array<const char*, 14> kRequired = {
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1",
    "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"};
constexpr std::size_t kRequiredCount = 14;

PlyScalar parse_scalar(const std::string& name) {
    static const std::unordered_map<std::string, PlyScalar> table = {
        {"char", PlyScalar::Int8},     {"int8", PlyScalar::Int8},       {"uchar", PlyScalar::UInt8},
        {"uint8", PlyScalar::UInt8},   {"short", PlyScalar::Int16},     {"int16", PlyScalar::Int16},
        {"ushort", PlyScalar::UInt16}, {"uint16", PlyScalar::UInt16},   {"int", PlyScalar::Int32},
        {"int32", PlyScalar::Int32},   {"uint", PlyScalar::UInt32},     {"uint32", PlyScalar::UInt32},
        {"float", PlyScalar::Float32}, {"float32", PlyScalar::Float32}, {"double", PlyScalar::Float64},
        {"float64", PlyScalar::Float64}};
    const auto it = table.find(name);
    if (it == table.end()) throw FormatError("unsupported PLY scalar type '" + name + "'");
    return it->second;
}

const char* scalar_name(PlyScalar type) {
    switch (type) {
        case PlyScalar::Int8: return "char";
        case PlyScalar::UInt8: return "uchar";
        case PlyScalar::Int16: return "short";
        case PlyScalar::UInt16: return "ushort";
        case PlyScalar::Int32: return "int";
        case PlyScalar::UInt32: return "uint";
        case PlyScalar::Float32: return "float";
        case PlyScalar::Float64: return "double";
    }
    return "float";
}

template <typename T>
T read_as(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

double decode(PlyScalar type, const std::uint8_t* p) {
    switch (type) {
        case PlyScalar::Int8: return read_as<std::int8_t>(p);
        case PlyScalar::UInt8: return read_as<std::uint8_t>(p);
        case PlyScalar::Int16: return read_as<std::int16_t>(p);
        case PlyScalar::UInt16: return read_as<std::uint16_t>(p);
        case PlyScalar::Int32: return read_as<std::int32_t>(p);
        case PlyScalar::UInt32: return read_as<std::uint32_t>(p);
        case PlyScalar::Float32: return read_as<float>(p);
        case PlyScalar::Float64: return read_as<double>(p);
    }
    return 0.0;
}

struct ElementSpec {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    bool has_list = false;
};

std::vector<ElementSpec> parse_header(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line) || line != "ply") throw FormatError(path.string() + ": missing 'ply' magic line");
    std::vector<ElementSpec> elements;
    bool format_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "end_header") {
            if (!format_seen) throw FormatError(path.string() + ": header has no format line");
            return elements;
        }
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw FormatError(path.string() + ": only binary_little_endian PLY is supported, got '" + fmt + "'");
            }
            format_seen = true;
        } else if (keyword == "element") {
            ElementSpec e;
            ls >> e.name >> e.count;
            if (!ls) throw FormatError(path.string() + ": malformed element line");
            elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (elements.empty()) throw FormatError(path.string() + ": property before any element");
            std::string type;
            ls >> type;
            if (type == "list") {
                elements.back().has_list = true;
                continue;
            }
            PlyProperty prop;
            prop.type = parse_scalar(type);
            ls >> prop.name;
            elements.back().properties.push_back(std::move(prop));
        } else if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
            continue;
        } else {
            throw FormatError(path.string() + ": unexpected header keyword '" + keyword + "'");
        }
    }
    throw FormatError(path.string() + ": header is not terminated by end_header");
}

void write_framed(const std::filesystem::path& path, const std::array<char, 8>& magic, std::uint64_t count,
                  const void* payload, std::size_t payload_bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(magic.data(), magic.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    if (payload_bytes > 0) out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<char> read_framed(const std::filesystem::path& path, const std::array<char, 8>& magic,
                              std::size_t element_size, std::uint64_t& count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::array<char, 8> head{};
    in.read(head.data(), head.size());
    if (!in || head != magic) throw FormatError(path.string() + ": bad sidecar magic");
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in) throw FormatError(path.string() + ": truncated sidecar header");
    std::vector<char> payload(static_cast<std::size_t>(count) * element_size);
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!in) throw FormatError(path.string() + ": truncated sidecar payload");
    return payload;
}

}  // namespace

std::filesystem::path weights_sidecar_path(const std::filesystem::path& ply_path) {
    auto p = ply_path;
    return p.replace_extension(".weights.f32");
}

std::filesystem::path frozen_sidecar_path(const std::filesystem::path& ply_path) {
    auto p = ply_path;
    return p.replace_extension(".frozen.u8");
}

void write_weights_sidecar(const std::filesystem::path& path, const std::vector<double>& weights) {
    std::vector<float> values(weights.begin(), weights.end());
    write_framed(path, kWeightsMagic, values.size(), values.data(), values.size() * sizeof(float));
}

std::vector<double> read_weights_sidecar(const std::filesystem::path& path) {
    std::uint64_t count = 0;
    const auto payload = read_framed(path, kWeightsMagic, sizeof(float), count);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        float v;
        std::memcpy(&v, payload.data() + i * sizeof(float), sizeof(float));
        out[i] = v;
    }
    return out;
}

void write_frozen_sidecar(const std::filesystem::path& path, const std::vector<bool>& frozen) {
    std::vector<std::uint8_t> values(frozen.begin(), frozen.end());
    write_framed(path, kFrozenMagic, values.size(), values.data(), values.size());
}

std::vector<bool> read_frozen_sidecar(const std::filesystem::path& path) {
    std::uint64_t count = 0;
    const auto payload = read_framed(path, kFrozenMagic, 1, count);
    std::vector<bool> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = payload[i] != 0;
    return out;
}

GaussianCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const auto elements = parse_header(in, path);

    const ElementSpec* vertex = nullptr;
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            vertex = &e;
            break;
        }
        // Elements before the vertex block would have to be skipped by size.
        if (e.has_list) throw FormatError(path.string() + ": list element before vertex element");
        std::size_t stride = 0;
        for (const auto& p : e.properties) stride += ply_scalar_size(p.type);
        in.seekg(static_cast<std::streamoff>(stride * e.count), std::ios::cur);
    }
    if (vertex == nullptr) throw FormatError(path.string() + ": no vertex element");
    if (vertex->has_list) throw FormatError(path.string() + ": list properties on vertex element are not supported");

    std::array<std::ptrdiff_t, kRequiredCount> required_offset{};
    std::array<PlyScalar, kRequiredCount> required_type{};
    required_offset.fill(-1);
    GaussianCloud cloud;
    std::vector<std::pair<std::size_t, std::size_t>> opaque_spans;  // (offset, size)
    std::size_t stride = 0;
    for (const auto& prop : vertex->properties) {
        const std::size_t size = ply_scalar_size(prop.type);
        bool matched = false;
        for (std::size_t r = 0; r < kRequiredCount; ++r) {
            if (prop.name == kRequired[r]) {
                required_offset[r] = static_cast<std::ptrdiff_t>(stride);
                required_type[r] = prop.type;
                matched = true;
            }
        }
        if (!matched && prop.name != "nx" && prop.name != "ny" && prop.name != "nz") {
            cloud.extra.properties.push_back(prop);
            opaque_spans.emplace_back(stride, size);
        }
        stride += size;
    }
    for (std::size_t r = 0; r < kRequiredCount; ++r) {
        if (required_offset[r] < 0) {
            throw FormatError(path.string() + ": missing required vertex property '" + kRequired[r] + "'");
        }
    }

    const std::size_t n = vertex->count;
    std::vector<std::uint8_t> block(n * stride);
    in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block.size()));
    if (!in) throw FormatError(path.string() + ": vertex data truncated");

    cloud.positions.reserve(n);
    cloud.extra.bytes.reserve(n * cloud.extra.stride());
    std::array<double, kRequiredCount> v{};
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* row = block.data() + i * stride;
        for (std::size_t r = 0; r < kRequiredCount; ++r) {
            v[r] = decode(required_type[r], row + required_offset[r]);
            if (!std::isfinite(v[r])) {
                throw DataError(path.string() + ": non-finite value in property '" + kRequired[r] + "' at vertex " +
                                std::to_string(i));
            }
        }
        Eigen::Vector4d q(v[10], v[11], v[12], v[13]);
        const double norm = q.norm();
        if (!(norm > 0.0)) throw DataError(path.string() + ": zero-norm rotation at vertex " + std::to_string(i));
        if (std::abs(norm - 1.0) > 1e-6) q /= norm;
        cloud.positions.emplace_back(v[0], v[1], v[2]);
        cloud.colors.emplace_back(v[3], v[4], v[5]);
        cloud.opacity_logits.push_back(v[6]);
        cloud.log_scales.emplace_back(v[7], v[8], v[9]);
        cloud.rotations.push_back(q);
        for (const auto& [offset, size] : opaque_spans) {
            cloud.extra.bytes.insert(cloud.extra.bytes.end(), row + offset, row + offset + size);
        }
    }

    const auto wpath = weights_sidecar_path(path);
    if (std::filesystem::exists(wpath)) {
        auto w = read_weights_sidecar(wpath);
        if (w.size() != n) throw DataError(wpath.string() + ": count does not match vertex count");
        cloud.attention_weights = std::move(w);
    }
    const auto fpath = frozen_sidecar_path(path);
    if (std::filesystem::exists(fpath)) {
        auto f = read_frozen_sidecar(fpath);
        if (f.size() != n) throw DataError(fpath.string() + ": count does not match vertex count");
        cloud.frozen = std::move(f);
    }
    cloud.validate();
    return cloud;
}

void save_ply(const GaussianCloud& cloud, const std::filesystem::path& path) {
    const std::size_t n = cloud.size();
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
    for (const char* name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        header << "property float " << name << "\n";
    }
    for (const auto& p : cloud.extra.properties) header << "property " << scalar_name(p.type) << " " << p.name << "\n";
    for (const char* name : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        header << "property float " << name << "\n";
    }
    header << "end_header\n";

    const std::size_t extra_stride = cloud.extra.stride();
    const std::size_t stride = 17 * sizeof(float) + extra_stride;
    std::vector<std::uint8_t> block(n * stride);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t* row = block.data() + i * stride;
        const auto put = [&row](double value) {
            const float f = static_cast<float>(value);
            std::memcpy(row, &f, sizeof(float));
            row += sizeof(float);
        };
        put(cloud.positions[i].x());
        put(cloud.positions[i].y());
        put(cloud.positions[i].z());
        put(0.0);
        put(0.0);
        put(0.0);
        for (int c = 0; c < 3; ++c) put(cloud.colors[i][c]);
        if (extra_stride > 0) {
            std::memcpy(row, cloud.extra.bytes.data() + i * extra_stride, extra_stride);
            row += extra_stride;
        }
        put(cloud.opacity_logits[i]);
        for (int c = 0; c < 3; ++c) put(cloud.log_scales[i][c]);
        for (int c = 0; c < 4; ++c) put(cloud.rotations[i][c]);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const std::string text = header.str();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
    out.close();

    const auto wpath = weights_sidecar_path(path);
    if (cloud.attention_weights) {
        write_weights_sidecar(wpath, *cloud.attention_weights);
    } else {
        std::filesystem::remove(wpath);
    }
    const auto fpath = frozen_sidecar_path(path);
    if (cloud.frozen) {
        write_frozen_sidecar(fpath, *cloud.frozen);
    } else {
        std::filesystem::remove(fpath);
    }
}

}  // namespace gsedit
