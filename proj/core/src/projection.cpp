#include "mvgs/projection.hpp"

#include <cmath>

#include "mvgs/error.hpp"

namespace mvgs {

namespace {

// 2x2 general matrix, row-major.
struct Mat2 {
    double a, b, c, d;
};

Mat2 full(Sym2 s) { return {s.xx, s.xy, s.xy, s.yy}; }
Mat2 mul(Mat2 x, Mat2 y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
}

// Pixel-space Jacobian rows of the perspective map at a camera point.
std::array<Vec3, 2> pixel_jacobian(Vec3 p, const Camera& cam) {
    const double iz = 1.0 / p.z;
    const double iz2 = iz * iz;
    return {Vec3{cam.fx * iz, 0.0, -cam.fx * p.x * iz2}, Vec3{0.0, cam.fy * iz, -cam.fy * p.y * iz2}};
}

Mat3 scaled_rotation(const Gaussian3D& g, Mat3& rot, Vec3& s) {
    rot = rotation_from_unit_quat(normalized(g.rotation));
    s = g.scale();
    Mat3 m = rot;
    for (int i = 0; i < 3; ++i) {
        m(i, 0) *= s.x;
        m(i, 1) *= s.y;
        m(i, 2) *= s.z;
    }
    return m;
}

}  // namespace

Mat3 covariance3d(const Gaussian3D& g) {
    Mat3 rot;
    Vec3 s;
    const Mat3 m = scaled_rotation(g, rot, s);
    return m * transpose(m);
}

Vec2 ndc_to_pixel(Vec2 ndc, const Camera& cam) {
    return {(ndc.x + 1.0) * 0.5 * cam.width + (cam.cx - 0.5 * cam.width),
            (ndc.y + 1.0) * 0.5 * cam.height + (cam.cy - 0.5 * cam.height)};
}

Projected2D project(const Gaussian3D& g, const Camera& cam, const ProjectionSettings& settings) {
    Projected2D out;
    out.mean_cam = cam.world_to_camera(g.mean);
    out.depth = out.mean_cam.z;
    if (!(out.depth > cam.znear)) return out;

    const ProjectionCoeffs pc = cam.projection_coeffs();
    out.mean_ndc = {pc.p0 * out.mean_cam.x / out.depth, pc.p1 * out.mean_cam.y / out.depth};
    if (std::abs(out.mean_ndc.x) > settings.guard_band || std::abs(out.mean_ndc.y) > settings.guard_band) return out;
    out.mean2d = ndc_to_pixel(out.mean_ndc, cam);

    const Mat3 cov_cam = transpose(cam.rotation) * covariance3d(g) * cam.rotation;
    const auto j = pixel_jacobian(out.mean_cam, cam);
    const Vec3 t0 = row_times(j[0], cov_cam);
    const Vec3 t1 = row_times(j[1], cov_cam);
    out.cov2d = {dot(t0, j[0]) + settings.dilation, dot(t0, j[1]), dot(t1, j[1]) + settings.dilation};
    if (!(out.cov2d.det() > 0.0) || !(out.cov2d.xx > 0.0)) {
        out.degenerate = true;
        return out;
    }
    out.cov2d_inv = inverse(out.cov2d);
    out.radius = settings.radius_sigma * std::sqrt(max_eigenvalue(out.cov2d));
    out.visible = true;
    return out;
}

std::array<Vec3, 2> ndc_jacobian_world(Vec3 p_cam, const Camera& cam) {
    const ProjectionCoeffs pc = cam.projection_coeffs();
    const double iz = 1.0 / p_cam.z;
    const Vec3 row_x{pc.p0 * iz, 0.0, -pc.p0 * p_cam.x * iz * iz};
    const Vec3 row_y{0.0, pc.p1 * iz, -pc.p1 * p_cam.y * iz * iz};
    // d p_cam / d p_world = rotation^T, so each row maps through rotation.
    return {cam.rotation * row_x, cam.rotation * row_y};
}

Vec3 grad_ndc_to_world(Vec2 grad_ndc, Vec3 p_cam, Vec2 ndc, const Camera& cam) {
    if (!(p_cam.z > 0.0)) throw Error("grad_ndc_to_world: camera-space depth must be positive");
    const ProjectionCoeffs pc = cam.projection_coeffs();
    const double iz = 1.0 / p_cam.z;
    const Vec3 g_cam{grad_ndc.x * pc.p0 * iz, grad_ndc.y * pc.p1 * iz, -(grad_ndc.x * ndc.x + grad_ndc.y * ndc.y) * iz};
    return cam.rotation * g_cam;
}

Vec2 grad_world_to_ndc(Vec3 grad_world, Vec3 p_cam, const Camera& cam) {
    if (!(p_cam.z > 0.0)) throw Error("grad_world_to_ndc: camera-space depth must be positive");
    const auto rows = ndc_jacobian_world(p_cam, cam);
    // Solve (M M^T) g = M w for the 2x3 Jacobian M.
    const double a = dot(rows[0], rows[0]);
    const double b = dot(rows[0], rows[1]);
    const double d = dot(rows[1], rows[1]);
    const Vec2 rhs{dot(rows[0], grad_world), dot(rows[1], grad_world)};
    const double det = a * d - b * b;
    return {(d * rhs.x - b * rhs.y) / det, (a * rhs.y - b * rhs.x) / det};
}

ProjectionGrads project_backward(const Gaussian3D& g, const Camera& cam, const Projected2D& proj, Vec2 d_mean2d,
                                 Sym2 d_conic, double d_depth) {
    const Vec3 p = proj.mean_cam;
    const double iz = 1.0 / p.z;
    const double iz2 = iz * iz;
    const double iz3 = iz2 * iz;

    // conic = cov2d^-1  =>  dL/dcov2d = -A G A
    const Mat2 a = full(proj.cov2d_inv);
    const Mat2 gc = mul(mul(a, full(d_conic)), a);
    const Mat2 g_cov{-gc.a, -gc.b, -gc.c, -gc.d};

    Mat3 rot_q;
    Vec3 s;
    const Mat3 m = scaled_rotation(g, rot_q, s);
    const Mat3 cov_world = m * transpose(m);
    const Mat3 cov_cam = transpose(cam.rotation) * cov_world * cam.rotation;
    const auto j = pixel_jacobian(p, cam);
    const Vec3 t0 = row_times(j[0], cov_cam);
    const Vec3 t1 = row_times(j[1], cov_cam);

    // cov2d = J cov_cam J^T (+ dilation)
    Mat3 g_cov_cam;
    const double gm[2][2] = {{g_cov.a, g_cov.b}, {g_cov.c, g_cov.d}};
    for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
            double v = 0.0;
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) v += j[static_cast<std::size_t>(r)][k] * gm[r][c] * j[static_cast<std::size_t>(c)][l];
            g_cov_cam(k, l) = v;
        }
    const Vec3 g_j0 = 2.0 * (gm[0][0] * t0 + gm[0][1] * t1);
    const Vec3 g_j1 = 2.0 * (gm[1][0] * t0 + gm[1][1] * t1);

    Vec3 g_cam;
    // pixel mean
    g_cam.x += cam.fx * iz * d_mean2d.x;
    g_cam.y += cam.fy * iz * d_mean2d.y;
    g_cam.z += -cam.fx * p.x * iz2 * d_mean2d.x - cam.fy * p.y * iz2 * d_mean2d.y;
    // Jacobian entries
    g_cam.x += g_j0.z * (-cam.fx * iz2);
    g_cam.y += g_j1.z * (-cam.fy * iz2);
    g_cam.z += g_j0.x * (-cam.fx * iz2) + g_j0.z * (2.0 * cam.fx * p.x * iz3) + g_j1.y * (-cam.fy * iz2) +
               g_j1.z * (2.0 * cam.fy * p.y * iz3);
    g_cam.z += d_depth;

    ProjectionGrads out;
    out.d_mean = cam.rotation * g_cam;

    // cov_cam = R^T cov R ; cov = M M^T ; M = Rq S
    const Mat3 g_cov_world = cam.rotation * g_cov_cam * transpose(cam.rotation);
    const Mat3 g_m_half = g_cov_world * m;  // dL/dM = 2 * this for symmetric g_cov_world
    Mat3 g_rot;
    for (int k = 0; k < 3; ++k) {
        double ds = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double gmi = 2.0 * g_m_half(i, k);
            ds += gmi * rot_q(i, k);
            g_rot(i, k) = gmi * s[k];
        }
        out.d_log_scale[k] = ds * s[k];
    }

    const double qn = norm(g.rotation);
    const Quat q = normalized(g.rotation);
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    const auto& gr = g_rot;
    Quat gq;
    gq.w = 2.0 * (-z * gr(0, 1) + y * gr(0, 2) + z * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1));
    gq.x = 2.0 * (y * gr(0, 1) + z * gr(0, 2) + y * gr(1, 0) - 2.0 * x * gr(1, 1) - w * gr(1, 2) + z * gr(2, 0) +
                  w * gr(2, 1) - 2.0 * x * gr(2, 2));
    gq.y = 2.0 * (-2.0 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + z * gr(1, 2) - w * gr(2, 0) +
                  z * gr(2, 1) - 2.0 * y * gr(2, 2));
    gq.z = 2.0 * (-2.0 * z * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2.0 * z * gr(1, 1) +
                  y * gr(1, 2) + x * gr(2, 0) + y * gr(2, 1));
    // through q / |q|
    const double radial = gq.w * w + gq.x * x + gq.y * y + gq.z * z;
    out.d_quat = {(gq.w - radial * w) / qn, (gq.x - radial * x) / qn, (gq.y - radial * y) / qn,
                  (gq.z - radial * z) / qn};
    return out;
}

}  // namespace mvgs
