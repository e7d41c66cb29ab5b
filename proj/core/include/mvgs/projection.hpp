#pragma once

#include <array>

#include "mvgs/math.hpp"
#include "mvgs/scene.hpp"

namespace mvgs {

struct ProjectionSettings {
    double guard_band = 1.3;    // |ndc| limit for frustum culling
    double dilation = 0.3;      // pixel^2 added to the 2D covariance diagonal
    double radius_sigma = 3.0;  // screen extent in standard deviations
};

/// A gaussian splatted onto one camera's image plane.
struct Projected2D {
    Vec2 mean2d;    // pixels
    Vec2 mean_ndc;  // P0*x/z, P1*y/z
    Vec3 mean_cam;
    double depth = 0.0;  // camera-space z
    Sym2 cov2d;          // pixel^2, dilation included
    Sym2 cov2d_inv;
    double radius = 0.0;  // pixels
    bool visible = false;
    bool degenerate = false;  // culled because cov2d was not invertible
};

/// R S S^T R^T with R from the normalized quaternion and S = diag(exp(log_scale)).
Mat3 covariance3d(const Gaussian3D& g);

/// Pixel-space image of an NDC point: ((ndc+1)/2 * size) shifted by the
/// principal-point offset.
Vec2 ndc_to_pixel(Vec2 ndc, const Camera& cam);

Projected2D project(const Gaussian3D& g, const Camera& cam, const ProjectionSettings& settings = {});

/// Rows of d(mean_ndc)/d(mean_world).
std::array<Vec3, 2> ndc_jacobian_world(Vec3 p_cam, const Camera& cam);

/// World-space gradient of a loss given its gradient w.r.t. the NDC mean.
/// Throws when the camera-space depth is not positive.
Vec3 grad_ndc_to_world(Vec2 grad_ndc, Vec3 p_cam, Vec2 ndc, const Camera& cam);

/// Minimum-norm NDC gradient whose world pullback equals `grad_world` (when
/// the world gradient lies in the row space of the NDC Jacobian).
Vec2 grad_world_to_ndc(Vec3 grad_world, Vec3 p_cam, const Camera& cam);

struct ProjectionGrads {
    Vec3 d_mean;
    Vec3 d_log_scale;
    Quat d_quat;
};

/// Adjoint of project() for a visible gaussian. Inputs are loss gradients
/// w.r.t. the pixel mean, the conic (inverse 2D covariance, as a symmetric
/// matrix gradient) and the camera depth.
ProjectionGrads project_backward(const Gaussian3D& g, const Camera& cam, const Projected2D& proj, Vec2 d_mean2d,
                                 Sym2 d_conic, double d_depth);

}  // namespace mvgs
