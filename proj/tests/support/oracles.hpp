#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>
#include <vector>

#include "mvgs/rasterizer.hpp"
#include "mvgs/rng.hpp"
#include "mvgs/scene.hpp"

namespace oracle {

using LMat = std::array<std::array<long double, 3>, 3>;

// Rotation matrix of a (w, x, y, z) quaternion in extended precision.
inline LMat quat_matrix(const mvgs::Quat& q) {
    long double w = q[0], x = q[1], y = q[2], z = q[3];
    const long double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n, x /= n, y /= n, z /= n;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

inline LMat covariance(const mvgs::Gaussian3D& g) {
    const LMat r = quat_matrix(g.rotation);
    const long double s[3] = {std::exp(static_cast<long double>(g.log_scale.x)),
                              std::exp(static_cast<long double>(g.log_scale.y)),
                              std::exp(static_cast<long double>(g.log_scale.z))};
    LMat out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) out[i][j] += r[i][k] * s[k] * s[k] * r[j][k];
    return out;
}

// Dense (p, 1) [R | t]^T as a 4-vector product.
inline std::array<double, 3> camera_point(const mvgs::Vec3& p, const mvgs::Camera& cam) {
    const double h[4] = {p.x, p.y, p.z, 1.0};
    double rt[4][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rt[i][j] = cam.rotation(i, j);
    rt[3][0] = cam.translation.x;
    rt[3][1] = cam.translation.y;
    rt[3][2] = cam.translation.z;
    std::array<double, 3> out{};
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 4; ++i) out[j] += h[i] * rt[i][j];
    return out;
}

// Front-to-back blend over every visible gaussian sorted by depth, without
// tiles and without early termination.
struct Blend {
    std::array<double, 3> color{};
    double depth = 0.0;
    double transmittance = 1.0;
};

inline Blend reference_blend(double px, double py, const std::vector<mvgs::Gaussian3D>& gaussians,
                             const std::vector<mvgs::Projected2D>& projected, double alpha_min = 1.0 / 255.0) {
    std::vector<int> order;
    for (std::size_t i = 0; i < projected.size(); ++i)
        if (projected[i].visible) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return projected[a].depth < projected[b].depth; });
    Blend out;
    for (int i : order) {
        const mvgs::Projected2D& p = projected[i];
        const double dx = px - p.mean2d.x, dy = py - p.mean2d.y;
        const double q = p.cov2d_inv.xx * dx * dx + 2.0 * p.cov2d_inv.xy * dx * dy + p.cov2d_inv.yy * dy * dy;
        const double alpha = gaussians[i].opacity() * std::exp(-0.5 * q);
        if (alpha < alpha_min) continue;
        for (int c = 0; c < 3; ++c) out.color[c] += std::clamp(gaussians[i].color[c], 0.0, 1.0) * alpha * out.transmittance;
        out.depth += p.depth * alpha * out.transmittance;
        out.transmittance *= 1.0 - alpha;
    }
    return out;
}

// (slot, tile, gaussian) triples from testing every gaussian against every
// tile's pixel-center rectangle.
inline std::set<std::tuple<int, int, int>> brute_bins(const std::vector<std::vector<mvgs::Projected2D>>& projected,
                                                      const std::vector<mvgs::Camera>& cams, int tile_size) {
    std::set<std::tuple<int, int, int>> out;
    for (std::size_t s = 0; s < projected.size(); ++s) {
        const mvgs::Camera& cam = cams[s];
        const int tiles_x = (cam.width + tile_size - 1) / tile_size;
        const int tiles_y = (cam.height + tile_size - 1) / tile_size;
        for (std::size_t g = 0; g < projected[s].size(); ++g) {
            const mvgs::Projected2D& p = projected[s][g];
            if (!p.visible) continue;
            for (int ty = 0; ty < tiles_y; ++ty) {
                for (int tx = 0; tx < tiles_x; ++tx) {
                    const double x0 = tx * tile_size + 0.5, x1 = std::min((tx + 1) * tile_size, cam.width) - 0.5;
                    const double y0 = ty * tile_size + 0.5, y1 = std::min((ty + 1) * tile_size, cam.height) - 0.5;
                    const double qx = std::clamp(p.mean2d.x, x0, x1) - p.mean2d.x;
                    const double qy = std::clamp(p.mean2d.y, y0, y1) - p.mean2d.y;
                    if (qx * qx + qy * qy <= p.radius * p.radius)
                        out.insert({static_cast<int>(s), ty * tiles_x + tx, static_cast<int>(g)});
                }
            }
        }
    }
    return out;
}

// Windowed SSIM by direct double loops with a renormalized truncated gaussian.
inline double ssim_loops(const mvgs::Image& a, const mvgs::Image& b, int h, double sigma, double c1, double c2) {
    double total = 0.0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double wsum = 0.0, ma = 0.0, mb = 0.0;
                for (int dy = -h; dy <= h; ++dy)
                    for (int dx = -h; dx <= h; ++dx) {
                        const int u = x + dx, v = y + dy;
                        if (u < 0 || v < 0 || u >= a.width || v >= a.height) continue;
                        const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                        wsum += w;
                        ma += w * a.at(u, v, c);
                        mb += w * b.at(u, v, c);
                    }
                ma /= wsum;
                mb /= wsum;
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (int dy = -h; dy <= h; ++dy)
                    for (int dx = -h; dx <= h; ++dx) {
                        const int u = x + dx, v = y + dy;
                        if (u < 0 || v < 0 || u >= a.width || v >= a.height) continue;
                        const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) / wsum;
                        va += w * (a.at(u, v, c) - ma) * (a.at(u, v, c) - ma);
                        vb += w * (b.at(u, v, c) - mb) * (b.at(u, v, c) - mb);
                        cov += w * (a.at(u, v, c) - ma) * (b.at(u, v, c) - mb);
                    }
                total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
    }
    return total / (3.0 * a.width * a.height);
}

// Textbook scalar Adam.
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    long t = 0;
    double step(double x, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-15) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        return x - lr * mh / (std::sqrt(vh) + eps);
    }
};

inline mvgs::Image random_image(mvgs::Rng& rng, int w, int h) {
    mvgs::Image img(w, h);
    for (double& p : img.pixels) p = rng.uniform();
    return img;
}

inline mvgs::Image constant_image(int w, int h, double v) {
    mvgs::Image img(w, h);
    std::fill(img.pixels.begin(), img.pixels.end(), v);
    return img;
}

// Identity-pose camera at the origin looking down +z.
inline mvgs::Camera axis_camera(int w, int h, double fx) {
    mvgs::Camera cam;
    cam.fx = cam.fy = fx;
    cam.cx = w / 2.0;
    cam.cy = h / 2.0;
    cam.width = w;
    cam.height = h;
    return cam;
}

}  // namespace oracle
