#include "gsedit/camera_io.hpp"

#include <fstream>
#include <set>

#include <Eigen/SVD>

#include <Eigen/Dense>

#include "gsedit/error.hpp"

namespace gsedit {
namespace {

constexpr double kAcceptTolerance = 1e-4;
constexpr double kExactTolerance = 1e-6;

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

double number(const nlohmann::json& entry, const char* key, std::size_t index) {
    if (!entry.contains(key) || !entry[key].is_number()) {
        throw ValidationError("camera " + std::to_string(index) + ": missing numeric field '" + key + "'");
    }
    return entry[key].get<double>();
}

}  // namespace

std::vector<CameraView> cameras_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw ValidationError("camera file must contain a JSON array");
    std::vector<CameraView> cameras;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        if (!e.is_object() || !e.contains("id") || !e["id"].is_string()) {
            throw ValidationError("camera " + std::to_string(i) + ": missing string field 'id'");
        }
        CameraView cam;
        cam.id = e["id"].get<std::string>();
        if (!seen.insert(cam.id).second) throw ValidationError("duplicate camera id '" + cam.id + "'");
        if (!e.contains("width") || !e["width"].is_number_integer() || !e.contains("height") ||
            !e["height"].is_number_integer()) {
            throw ValidationError("camera '" + cam.id + "': width and height must be integers");
        }
        cam.width = e["width"].get<int>();
        cam.height = e["height"].get<int>();
        cam.fx = number(e, "fx", i);
        cam.fy = number(e, "fy", i);
        cam.cx = number(e, "cx", i);
        cam.cy = number(e, "cy", i);
        const auto& r = e.value("rotation", nlohmann::json());
        const auto& t = e.value("translation", nlohmann::json());
        if (!r.is_array() || r.size() != 9) throw ValidationError("camera '" + cam.id + "': rotation needs 9 numbers");
        if (!t.is_array() || t.size() != 3) {
            throw ValidationError("camera '" + cam.id + "': translation needs 3 numbers");
        }
        for (int k = 0; k < 9; ++k) cam.rotation(k / 3, k % 3) = r[static_cast<std::size_t>(k)].get<double>();
        for (int k = 0; k < 3; ++k) cam.translation[k] = t[static_cast<std::size_t>(k)].get<double>();
        cam.validate(kAcceptTolerance);
        const double ortho =
            (cam.rotation * cam.rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        if (ortho > kExactTolerance) cam.rotation = nearest_rotation(cam.rotation);
        cameras.push_back(std::move(cam));
    }
    return cameras;
}

std::vector<CameraView> load_cameras(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return cameras_from_json(doc);
}

nlohmann::json cameras_to_json(const std::vector<CameraView>& cameras) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& c : cameras) {
        nlohmann::json r = nlohmann::json::array();
        for (int k = 0; k < 9; ++k) r.push_back(c.rotation(k / 3, k % 3));
        doc.push_back({{"id", c.id},
                       {"width", c.width},
                       {"height", c.height},
                       {"fx", c.fx},
                       {"fy", c.fy},
                       {"cx", c.cx},
                       {"cy", c.cy},
                       {"rotation", r},
                       {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}});
    }
    return doc;
}

void save_cameras(const std::vector<CameraView>& cameras, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << cameras_to_json(cameras).dump(2) << "\n";
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace gsedit
