#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvgs/math.hpp"

namespace mvgs {

/// One optimizable primitive. Opacity and scale are stored unconstrained.
struct Gaussian3D {
    Vec3 mean;
    Vec3 log_scale;
    Quat rotation;  // (w, x, y, z)
    double opacity_logit = 0.0;
    Vec3 color;  // RGB, clamped only when rendered

    double opacity() const { return sigmoid(opacity_logit); }
    Vec3 scale() const { return {std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)}; }
    double max_scale() const;
};

/// Perspective coefficients of the homogeneous projection applied to camera
/// points as (x, y, z, 1) P^T = (x P0, y P1, z P2 + P3, z).
struct ProjectionCoeffs {
    double p0 = 0.0;
    double p1 = 0.0;
    double p2 = 0.0;
    double p3 = 0.0;
};

/// Pinhole camera. World points map to camera space as row vectors:
/// p_cam = p_world * rotation + translation. Camera looks down +z, image y
/// points down.
struct Camera {
    Mat3 rotation = Mat3::identity();
    Vec3 translation;
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double znear = 0.01;
    double zfar = 100.0;

    ProjectionCoeffs projection_coeffs() const;

    Vec3 world_to_camera(Vec3 p) const { return row_times(p, rotation) + translation; }
    Vec3 camera_to_world(Vec3 p) const { return row_times(p - translation, transpose(rotation)); }
    Vec3 center() const { return camera_to_world({}); }
    /// World-space direction of the optical axis.
    Vec3 forward() const { return {rotation(0, 2), rotation(1, 2), rotation(2, 2)}; }

    /// Unprojects pixel-plane coordinates at camera depth z into world space.
    Vec3 unproject(double px, double py, double z) const {
        return camera_to_world({(px - cx) * z / fx, (py - cy) * z / fy, z});
    }

    int pixel_count() const { return width * height; }

    /// Camera placed at `center` with the given world->camera rotation.
    static Camera from_center(const Mat3& rotation, Vec3 center);
    /// Camera at `eye` looking at `target`; `up` is the world up hint.
    static Camera look_at(Vec3 eye, Vec3 target, Vec3 up);

    /// Sets a symmetric pinhole with the principal point at the image center.
    void set_intrinsics(int w, int h, double fov_x_radians);

    /// Throws Error when focal lengths or clip planes are invalid.
    void validate() const;
};

/// Row-major RGB image with an optional depth channel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // width*height*3
    std::vector<double> depth;   // empty or width*height

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0.0) {}

    double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    int pixel_count() const { return width * height; }
};

/// Cameras paired with their ground-truth images.
struct SceneDataset {
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::string name;

    std::size_t size() const { return cameras.size(); }
    void validate() const;
};

struct SceneFile {
    std::vector<Gaussian3D> gaussians;
    std::vector<Camera> cameras;
    int renormalized_quaternions = 0;
};

SceneFile load_scene(const std::filesystem::path& path);
SceneFile parse_scene(const std::string& text);
void save_scene(const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cameras,
                const std::filesystem::path& path);
std::string format_scene(const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cameras);

enum class CameraLayout { orbit, random };

CameraLayout parse_camera_layout(const std::string& name);

struct SyntheticOptions {
    int width = 64;
    int height = 64;
    double fov_x_degrees = 50.0;
    double orbit_radius = 3.0;
};

struct SyntheticScene {
    std::vector<Gaussian3D> gaussians;
    std::vector<Camera> cameras;
};

/// Gaussians inside the unit ball and cameras on a radius-3 orbit (or random
/// directions on the radius-3 sphere), all aimed at the origin.
SyntheticScene make_synthetic(std::uint64_t seed, int n_gaussians, int n_cameras, CameraLayout layout,
                              const SyntheticOptions& options = {});

/// Binary P6, maxval 255, round(clamp(v,0,1)*255).
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// Text depth grid: "PF", then "width height", then one row of decimals per line.
void write_depth(const Image& image, const std::filesystem::path& path);
std::vector<double> read_depth(const std::filesystem::path& path, int& width, int& height);

}  // namespace mvgs
