#include "mvgs/scene.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mvgs/error.hpp"
#include "mvgs/rng.hpp"

namespace mvgs {

double Gaussian3D::max_scale() const {
    return std::exp(std::max(log_scale.x, std::max(log_scale.y, log_scale.z)));
}

ProjectionCoeffs Camera::projection_coeffs() const {
    return {2.0 * fx / width, 2.0 * fy / height, (zfar + znear) / (zfar - znear), -2.0 * zfar * znear / (zfar - znear)};
}

Camera Camera::from_center(const Mat3& rotation, Vec3 center) {
    Camera cam;
    cam.rotation = rotation;
    cam.translation = -row_times(center, rotation);
    return cam;
}

Camera Camera::look_at(Vec3 eye, Vec3 target, Vec3 up) {
    const Vec3 z = normalized(target - eye);
    Vec3 side = cross(z, up);
    if (norm(side) < 1e-9) side = cross(z, Vec3{1.0, 0.0, 0.0});
    const Vec3 x = normalized(side);
    const Vec3 y = cross(z, x);
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
        r(i, 0) = x[i];
        r(i, 1) = y[i];
        r(i, 2) = z[i];
    }
    return from_center(r, eye);
}

void Camera::set_intrinsics(int w, int h, double fov_x_radians) {
    width = w;
    height = h;
    fx = 0.5 * w / std::tan(0.5 * fov_x_radians);
    fy = fx;
    cx = 0.5 * w;
    cy = 0.5 * h;
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error("camera focal lengths must be positive");
    if (!(znear > 0.0) || !(znear < zfar)) throw Error("camera requires 0 < znear < zfar");
    if (width < 1 || height < 1) throw Error("camera image size must be positive");
}

void SceneDataset::validate() const {
    if (cameras.size() != images.size()) throw Error("dataset needs one image per camera");
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        cameras[i].validate();
        if (images[i].width != cameras[i].width || images[i].height != cameras[i].height)
            throw Error(fmt::format("image {} does not match its camera size", i));
        if (images[i].pixels.size() != static_cast<std::size_t>(images[i].pixel_count()) * 3)
            throw Error(fmt::format("image {} has the wrong pixel count", i));
    }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

double parse_number(const std::string& tok, int line, const char* field) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw ParseError(line, fmt::format("field '{}' is not a finite number: '{}'", field, tok));
    return v;
}

int parse_count(const std::vector<std::string>& f, const char* keyword, int line) {
    if (f.size() != 2 || f[0] != keyword) throw ParseError(line, fmt::format("expected '{} <count>'", keyword));
    const double v = parse_number(f[1], line, "count");
    if (v < 0 || v != std::floor(v)) throw ParseError(line, "count must be a non-negative integer");
    return static_cast<int>(v);
}

constexpr const char* kGaussianFields[14] = {"mean.x",  "mean.y",  "mean.z",  "log_scale.x", "log_scale.y",
                                             "log_scale.z", "quat.w", "quat.x", "quat.y", "quat.z",
                                             "opacity_logit", "r", "g", "b"};
constexpr const char* kCameraFields[20] = {"r00", "r01", "r02", "r10", "r11",   "r12",    "r20",   "r21",  "r22", "tx",
                                           "ty",  "tz",  "fx",  "fy",  "cx",    "cy",     "width", "height", "znear", "zfar"};

class LineReader {
  public:
    explicit LineReader(const std::string& text) : is_(text) {}

    // Returns the next non-blank line; false at end of input.
    bool next(std::string& line) {
        while (std::getline(is_, line)) {
            ++number_;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
        }
        return false;
    }
    int number() const { return number_; }

  private:
    std::istringstream is_;
    int number_ = 0;
};

}  // namespace

SceneFile parse_scene(const std::string& text) {
    LineReader reader(text);
    std::string line;
    if (!reader.next(line)) throw ParseError(1, "empty scene file");
    {
        const auto f = split_fields(line);
        if (f.size() != 2 || f[0] != "splatscene" || f[1] != "1")
            throw ParseError(reader.number(), "expected header 'splatscene 1'");
    }
    SceneFile out;
    if (!reader.next(line)) throw ParseError(reader.number() + 1, "missing 'gaussians' section");
    const int n_gauss = parse_count(split_fields(line), "gaussians", reader.number());
    out.gaussians.reserve(static_cast<std::size_t>(n_gauss));
    for (int i = 0; i < n_gauss; ++i) {
        if (!reader.next(line)) throw ParseError(reader.number() + 1, "unexpected end of gaussian records");
        const auto f = split_fields(line);
        if (f.size() != 14) throw ParseError(reader.number(), fmt::format("expected 14 fields, found {}", f.size()));
        double v[14];
        for (int k = 0; k < 14; ++k) v[k] = parse_number(f[static_cast<std::size_t>(k)], reader.number(), kGaussianFields[k]);
        Gaussian3D g;
        g.mean = {v[0], v[1], v[2]};
        g.log_scale = {v[3], v[4], v[5]};
        g.rotation = {v[6], v[7], v[8], v[9]};
        g.opacity_logit = v[10];
        g.color = {v[11], v[12], v[13]};
        const double qn = norm(g.rotation);
        if (!(qn > 0.0)) throw ParseError(reader.number(), "field 'quat' has zero norm");
        if (std::abs(qn - 1.0) > 1e-9) {
            g.rotation = normalized(g.rotation);
            ++out.renormalized_quaternions;
        }
        out.gaussians.push_back(g);
    }
    if (!reader.next(line)) throw ParseError(reader.number() + 1, "missing 'cameras' section");
    const int n_cams = parse_count(split_fields(line), "cameras", reader.number());
    for (int i = 0; i < n_cams; ++i) {
        if (!reader.next(line)) throw ParseError(reader.number() + 1, "unexpected end of camera records");
        const auto f = split_fields(line);
        if (f.size() != 20) throw ParseError(reader.number(), fmt::format("expected 20 fields, found {}", f.size()));
        double v[20];
        for (int k = 0; k < 20; ++k)
            v[k] = parse_number(f[static_cast<std::size_t>(k)], reader.number(), kCameraFields[k]);
        Camera c;
        for (std::size_t k = 0; k < 9; ++k) c.rotation.m[k] = v[k];
        c.translation = {v[9], v[10], v[11]};
        c.fx = v[12];
        c.fy = v[13];
        c.cx = v[14];
        c.cy = v[15];
        if (v[16] != std::floor(v[16]) || v[17] != std::floor(v[17]))
            throw ParseError(reader.number(), "field 'width'/'height' must be integers");
        c.width = static_cast<int>(v[16]);
        c.height = static_cast<int>(v[17]);
        c.znear = v[18];
        c.zfar = v[19];
        try {
            c.validate();
        } catch (const Error& e) {
            throw ParseError(reader.number(), e.what());
        }
        out.cameras.push_back(c);
    }
    if (reader.next(line)) throw ParseError(reader.number(), "trailing content after camera records");
    return out;
}

SceneFile load_scene(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open scene file '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scene(ss.str());
}

std::string format_scene(const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cameras) {
    std::string out = "splatscene 1\n";
    out += fmt::format("gaussians {}\n", gaussians.size());
    for (const auto& g : gaussians) {
        out += fmt::format("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} "
                           "{:.17g} {:.17g} {:.17g}\n",
                           g.mean.x, g.mean.y, g.mean.z, g.log_scale.x, g.log_scale.y, g.log_scale.z, g.rotation.w,
                           g.rotation.x, g.rotation.y, g.rotation.z, g.opacity_logit, g.color.x, g.color.y, g.color.z);
    }
    out += fmt::format("cameras {}\n", cameras.size());
    for (const auto& c : cameras) {
        for (double v : c.rotation.m) out += fmt::format("{:.17g} ", v);
        out += fmt::format("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {} {} {:.17g} {:.17g}\n",
                           c.translation.x, c.translation.y, c.translation.z, c.fx, c.fy, c.cx, c.cy, c.width,
                           c.height, c.znear, c.zfar);
    }
    return out;
}

void save_scene(const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cameras,
                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write scene file '{}'", path.string()));
    out << format_scene(gaussians, cameras);
    if (!out) throw Error(fmt::format("write failed for '{}'", path.string()));
}

CameraLayout parse_camera_layout(const std::string& name) {
    if (name == "orbit") return CameraLayout::orbit;
    if (name == "random") return CameraLayout::random;
    throw Error(fmt::format("unknown camera layout '{}' (expected orbit|random)", name));
}

SyntheticScene make_synthetic(std::uint64_t seed, int n_gaussians, int n_cameras, CameraLayout layout,
                              const SyntheticOptions& options) {
    if (n_gaussians < 1) throw Error("make_synthetic needs at least one gaussian");
    if (n_cameras < 2) throw Error("make_synthetic needs at least two cameras for multi-view training");
    Rng rng(seed);
    SyntheticScene scene;
    scene.gaussians.reserve(static_cast<std::size_t>(n_gaussians));
    for (int i = 0; i < n_gaussians; ++i) {
        Gaussian3D g;
        do {
            g.mean = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        } while (dot(g.mean, g.mean) > 1.0);
        g.log_scale = {std::log(rng.uniform(0.01, 0.15)), std::log(rng.uniform(0.01, 0.15)),
                       std::log(rng.uniform(0.01, 0.15))};
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        g.rotation = normalized(q);
        g.opacity_logit = logit(rng.uniform(0.3, 0.95));
        g.color = {rng.uniform(), rng.uniform(), rng.uniform()};
        scene.gaussians.push_back(g);
    }
    const double fov = options.fov_x_degrees * std::numbers::pi / 180.0;
    for (int k = 0; k < n_cameras; ++k) {
        Vec3 eye;
        if (layout == CameraLayout::orbit) {
            const double theta = 2.0 * std::numbers::pi * k / n_cameras;
            eye = {options.orbit_radius * std::cos(theta), 0.0, options.orbit_radius * std::sin(theta)};
        } else {
            Vec3 d;
            do {
                d = {rng.normal(), rng.normal(), rng.normal()};
            } while (norm(d) < 1e-6);
            eye = options.orbit_radius * normalized(d);
        }
        Camera cam = Camera::look_at(eye, {}, {0.0, 1.0, 0.0});
        cam.set_intrinsics(options.width, options.height, fov);
        cam.znear = 0.01;
        cam.zfar = 100.0;
        scene.cameras.push_back(cam);
    }
    return scene;
}

namespace {

void skip_ppm_space(std::istream& in) {
    for (;;) {
        const int c = in.peek();
        if (c == '#') {
            std::string dummy;
            std::getline(in, dummy);
        } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
            in.get();
        } else {
            return;
        }
    }
}

}  // namespace

void write_ppm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write image '{}'", path.string()));
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    std::vector<unsigned char> bytes(image.pixels.size());
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("write failed for '{}'", path.string()));
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open image '{}'", path.string()));
    std::string magic;
    in >> magic;
    if (magic != "P6") throw Error(fmt::format("'{}' is not a binary PPM (P6)", path.string()));
    int w = 0, h = 0, maxval = 0;
    skip_ppm_space(in);
    in >> w;
    skip_ppm_space(in);
    in >> h;
    skip_ppm_space(in);
    in >> maxval;
    if (!in || w < 1 || h < 1 || maxval != 255) throw Error(fmt::format("unsupported PPM header in '{}'", path.string()));
    in.get();
    Image img(w, h);
    std::vector<unsigned char> bytes(img.pixels.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw Error(fmt::format("truncated PPM data in '{}'", path.string()));
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
    return img;
}

void write_depth(const Image& image, const std::filesystem::path& path) {
    if (image.depth.size() != static_cast<std::size_t>(image.pixel_count()))
        throw Error("image has no depth channel to write");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write depth '{}'", path.string()));
    out << "PF\n" << image.width << ' ' << image.height << '\n';
    for (int y = 0; y < image.height; ++y) {
        std::string row;
        for (int x = 0; x < image.width; ++x) {
            if (x) row += ' ';
            row += fmt::format("{:.17g}", image.depth[static_cast<std::size_t>(y) * image.width + x]);
        }
        out << row << '\n';
    }
}

std::vector<double> read_depth(const std::filesystem::path& path, int& width, int& height) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open depth '{}'", path.string()));
    std::string magic;
    in >> magic >> width >> height;
    if (magic != "PF" || !in || width < 1 || height < 1)
        throw Error(fmt::format("bad depth header in '{}'", path.string()));
    std::vector<double> d(static_cast<std::size_t>(width) * height);
    for (auto& v : d) {
        std::string tok;
        if (!(in >> tok)) throw Error(fmt::format("truncated depth grid in '{}'", path.string()));
        v = parse_number(tok, 0, "depth");
    }
    return d;
}

}  // namespace mvgs
