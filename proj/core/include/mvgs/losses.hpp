#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvgs/gradients.hpp"
#include "mvgs/rasterizer.hpp"
#include "mvgs/scene.hpp"

namespace mvgs {

class ThreadPool;

struct SsimWindow {
    int half_width = 5;     // window is (2h+1)^2
    double sigma2d = 1.5;   // pixels
    double sigma3d = 0.066;  // world units; about 1.5 pixels at depth 3 with a 50 degree, 64 pixel camera
    double c1 = 1e-4;       // (0.01 L)^2
    double c2 = 9e-4;       // (0.03 L)^2
    int min_valid = 4;
};

enum class WindowKernel {
    planar2d,            // pixel-distance gaussian over every rendered pixel
    planar2d_same_view,  // pixel-distance gaussian restricted to the center's source view
    distance3d,          // world-distance gaussian between unprojected surface points
};

/// A W x H image assembled from one or more rendered views. Each position
/// holds at most one rendered pixel; source is its plan slot or -1.
struct MergedFrame {
    int width = 0;
    int height = 0;
    std::vector<double> rendered;  // width*height*3
    std::vector<double> target;
    std::vector<int> source;
    std::vector<Vec3> world;                // unprojected surface point
    std::vector<std::uint8_t> background;  // T_final above the background threshold

    int pixel_count() const { return width * height; }
    int valid_count() const;
};

/// Frame of one rendered plan slot (unrendered pixels become holes).
MergedFrame view_frame(const ViewRender& view, const Image& target, const Camera& cam, int slot,
                       double background_t = 0.999);

/// Merges every slot of a partial-rendering plan into one frame. Throws when
/// two slots render the same pixel position or image sizes differ.
MergedFrame merged_frame(const RenderPlan& plan, const RenderOutput& out, const std::vector<Image>& targets,
                         const std::vector<Camera>& cams, double background_t = 0.999);

/// Adds a frame-space color gradient into the per-slot buffers.
void scatter_grad(const MergedFrame& frame, const std::vector<double>& grad, PixelGrads& pixel_grads);

struct LossResult {
    double value = 0.0;
    std::vector<double> grad;  // same layout as the rendered buffer
    int sparse_windows = 0;    // windows skipped for having too few valid entries
};

LossResult l1_loss(const std::vector<double>& rendered, const std::vector<double>& target);
LossResult l2_loss(const std::vector<double>& rendered, const std::vector<double>& target);
/// Over the frame's rendered (non-hole) pixels.
LossResult l1_loss(const MergedFrame& frame);
LossResult l2_loss(const MergedFrame& frame);

/// Mean over rendered window centers and channels of 1 - SSIM.
LossResult dssim_loss(const MergedFrame& frame, const SsimWindow& win, WindowKernel kernel, ThreadPool* pool = nullptr);

/// Single-view D-SSIM of two full images.
LossResult dssim(const Image& rendered, const Image& target, const SsimWindow& win = {});
/// D-SSIM with world-distance windows; the frame must carry world points.
LossResult dssim3d(const MergedFrame& frame, const SsimWindow& win = {}, ThreadPool* pool = nullptr);

/// Normalized window weights of one center, indexed by window offset
/// (dy + h) * (2h + 1) + (dx + h); zero for invalid entries.
std::vector<double> window_weights(const MergedFrame& frame, int cx, int cy, const SsimWindow& win,
                                   WindowKernel kernel, int* valid = nullptr);

enum class LossMode { l1, l2, dssim, dssim3d, l1_dssim, l1_dssim3d, mix };

LossMode parse_loss_mode(const std::string& name);
const char* to_string(LossMode mode);

/// Training objective on one frame: (1 - lambda) l1 + lambda D-SSIM for the
/// mixed modes; mix blends all four terms.
LossResult frame_loss(LossMode mode, const MergedFrame& frame, const SsimWindow& win, double lambda,
                      ThreadPool* pool = nullptr);

double psnr(const Image& rendered, const Image& target);
double ssim(const Image& rendered, const Image& target, const SsimWindow& win = {});

}  // namespace mvgs
