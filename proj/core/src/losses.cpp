#include "mvgs/losses.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mvgs/error.hpp"
#include "mvgs/thread_pool.hpp"

namespace mvgs {

int MergedFrame::valid_count() const {
    int n = 0;
    for (int s : source) n += s >= 0 ? 1 : 0;
    return n;
}

namespace {

Vec3 surface_point(const ViewRender& view, const Camera& cam, std::size_t p, double background_t, bool& background) {
    const double t = view.transmittance[p];
    background = !view.rendered[p] || t > background_t;
    if (background) return {};
    const double z = view.depth[p] / (1.0 - t);
    const int x = static_cast<int>(p) % cam.width;
    const int y = static_cast<int>(p) / cam.width;
    return cam.unproject(x + 0.5, y + 0.5, z);
}

void check_target(const Image& target, int w, int h) {
    if (target.width != w || target.height != h) throw Error("target image does not match the rendered view");
}

}  // namespace

MergedFrame view_frame(const ViewRender& view, const Image& target, const Camera& cam, int slot, double background_t) {
    check_target(target, view.width, view.height);
    MergedFrame f;
    f.width = view.width;
    f.height = view.height;
    const auto n = static_cast<std::size_t>(f.pixel_count());
    f.rendered = view.color;
    f.target = target.pixels;
    f.source.assign(n, -1);
    f.world.assign(n, {});
    f.background.assign(n, 1);
    for (std::size_t p = 0; p < n; ++p) {
        if (!view.rendered[p]) continue;
        f.source[p] = slot;
        bool bg = true;
        f.world[p] = surface_point(view, cam, p, background_t, bg);
        f.background[p] = bg ? 1 : 0;
    }
    return f;
}

MergedFrame merged_frame(const RenderPlan& plan, const RenderOutput& out, const std::vector<Image>& targets,
                         const std::vector<Camera>& cams, double background_t) {
    if (plan.views.empty()) throw Error("merged_frame: empty plan");
    if (out.views.size() != plan.views.size()) throw Error("merged_frame: render output does not match the plan");
    MergedFrame f;
    f.width = out.views[0].width;
    f.height = out.views[0].height;
    const auto n = static_cast<std::size_t>(f.pixel_count());
    f.rendered.assign(n * 3, 0.0);
    f.target.assign(n * 3, 0.0);
    f.source.assign(n, -1);
    f.world.assign(n, {});
    f.background.assign(n, 1);
    for (std::size_t slot = 0; slot < plan.views.size(); ++slot) {
        const ViewRender& view = out.views[slot];
        if (view.width != f.width || view.height != f.height)
            throw Error("merged_frame: all views must share one image size");
        const auto v = static_cast<std::size_t>(plan.views[slot]);
        const Image& target = targets.at(v);
        check_target(target, view.width, view.height);
        for (std::size_t p = 0; p < n; ++p) {
            if (!view.rendered[p]) continue;
            if (f.source[p] >= 0)
                throw Error(fmt::format("merged_frame: pixel {} rendered by views {} and {}", p,
                                        plan.views[static_cast<std::size_t>(f.source[p])], plan.views[slot]));
            f.source[p] = static_cast<int>(slot);
            for (std::size_t c = 0; c < 3; ++c) {
                f.rendered[p * 3 + c] = view.color[p * 3 + c];
                f.target[p * 3 + c] = target.pixels[p * 3 + c];
            }
            bool bg = true;
            f.world[p] = surface_point(view, cams[v], p, background_t, bg);
            f.background[p] = bg ? 1 : 0;
        }
    }
    return f;
}

void scatter_grad(const MergedFrame& frame, const std::vector<double>& grad, PixelGrads& pixel_grads) {
    for (std::size_t p = 0; p < frame.source.size(); ++p) {
        const int s = frame.source[p];
        if (s < 0) continue;
        auto& dst = pixel_grads.d_color.at(static_cast<std::size_t>(s));
        for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] += grad[p * 3 + c];
    }
}

namespace {

void check_sizes(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw Error(fmt::format("loss inputs differ in size: {} vs {}", a.size(), b.size()));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

template <typename Term>
LossResult pointwise(const std::vector<double>& r, const std::vector<double>& t, const std::vector<int>* source,
                     Term term) {
    LossResult out;
    out.grad.assign(r.size(), 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < r.size(); ++i)
        if (!source || (*source)[i / 3] >= 0) ++count;
    if (count == 0) return out;
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (source && (*source)[i / 3] < 0) continue;
        double g = 0.0;
        out.value += term(r[i] - t[i], g);
        out.grad[i] = g * inv;
    }
    out.value *= inv;
    return out;
}

double l1_term(double d, double& g) {
    g = sign(d);
    return std::abs(d);
}

double l2_term(double d, double& g) {
    g = 2.0 * d;
    return d * d;
}

}  // namespace

LossResult l1_loss(const std::vector<double>& rendered, const std::vector<double>& target) {
    check_sizes(rendered, target);
    return pointwise(rendered, target, nullptr, l1_term);
}

LossResult l2_loss(const std::vector<double>& rendered, const std::vector<double>& target) {
    check_sizes(rendered, target);
    return pointwise(rendered, target, nullptr, l2_term);
}

LossResult l1_loss(const MergedFrame& frame) {
    check_sizes(frame.rendered, frame.target);
    return pointwise(frame.rendered, frame.target, &frame.source, l1_term);
}

LossResult l2_loss(const MergedFrame& frame) {
    check_sizes(frame.rendered, frame.target);
    return pointwise(frame.rendered, frame.target, &frame.source, l2_term);
}

std::vector<double> window_weights(const MergedFrame& frame, int cx, int cy, const SsimWindow& win,
                                   WindowKernel kernel, int* valid) {
    const int h = win.half_width;
    const int side = 2 * h + 1;
    std::vector<double> w(static_cast<std::size_t>(side * side), 0.0);
    const auto c = static_cast<std::size_t>(cy * frame.width + cx);
    const int src = frame.source[c];
    if (kernel == WindowKernel::distance3d && frame.background[c]) kernel = WindowKernel::planar2d_same_view;
    const double inv2d = 1.0 / (2.0 * win.sigma2d * win.sigma2d);
    const double inv3d = 1.0 / (2.0 * win.sigma3d * win.sigma3d);
    double sum = 0.0;
    int n = 0;
    for (int dy = -h; dy <= h; ++dy) {
        const int y = cy + dy;
        if (y < 0 || y >= frame.height) continue;
        for (int dx = -h; dx <= h; ++dx) {
            const int x = cx + dx;
            if (x < 0 || x >= frame.width) continue;
            const auto q = static_cast<std::size_t>(y * frame.width + x);
            if (frame.source[q] < 0) continue;
            double v = 0.0;
            switch (kernel) {
                case WindowKernel::planar2d: v = std::exp(-(dx * dx + dy * dy) * inv2d); break;
                case WindowKernel::planar2d_same_view:
                    if (frame.source[q] != src) continue;
                    v = std::exp(-(dx * dx + dy * dy) * inv2d);
                    break;
                case WindowKernel::distance3d: {
                    if (frame.background[q]) continue;
                    const Vec3 d = frame.world[q] - frame.world[c];
                    v = std::exp(-dot(d, d) * inv3d);
                    break;
                }
            }
            w[static_cast<std::size_t>((dy + h) * side + dx + h)] = v;
            sum += v;
            ++n;
        }
    }
    if (sum > 0.0)
        for (double& v : w) v /= sum;
    if (valid) *valid = n;
    return w;
}

LossResult dssim_loss(const MergedFrame& frame, const SsimWindow& win, WindowKernel kernel, ThreadPool* pool) {
    check_sizes(frame.rendered, frame.target);
    const int h = win.half_width;
    const int side = 2 * h + 1;
    if (frame.width < side || frame.height < side)
        throw Error(fmt::format("image {}x{} is smaller than the {}x{} SSIM window", frame.width, frame.height, side, side));
    if (kernel == WindowKernel::distance3d && frame.world.size() != frame.source.size())
        throw Error("dssim3d requires per-pixel depth (world points)");

    const auto n_pix = static_cast<std::size_t>(frame.pixel_count());
    const auto n_win = static_cast<std::size_t>(side * side);
    std::vector<double> weights(n_pix * n_win, 0.0);
    std::vector<double> coeff(n_pix * 9, 0.0);  // per channel: a, b, g of dS/dr_q = w_q (a + b r_q + g t_q)
    std::vector<double> ssim_sum(n_pix, 0.0);
    std::vector<std::uint8_t> active(n_pix, 0);
    std::vector<std::uint8_t> sparse(n_pix, 0);

    parallel_for(pool, n_pix, [&](std::size_t c) {
        if (frame.source[c] < 0) return;
        const int cx = static_cast<int>(c) % frame.width;
        const int cy = static_cast<int>(c) / frame.width;
        int valid = 0;
        const std::vector<double> w = window_weights(frame, cx, cy, win, kernel, &valid);
        if (valid < win.min_valid) {
            sparse[c] = 1;
            return;
        }
        active[c] = 1;
        std::copy(w.begin(), w.end(), weights.begin() + static_cast<std::ptrdiff_t>(c * n_win));
        for (std::size_t ch = 0; ch < 3; ++ch) {
            double mu1 = 0.0, mu2 = 0.0, e11 = 0.0, e22 = 0.0, e12 = 0.0;
            for (int dy = -h; dy <= h; ++dy)
                for (int dx = -h; dx <= h; ++dx) {
                    const double wq = w[static_cast<std::size_t>((dy + h) * side + dx + h)];
                    if (wq == 0.0) continue;
                    const auto q = static_cast<std::size_t>((cy + dy) * frame.width + cx + dx);
                    const double r = frame.rendered[q * 3 + ch];
                    const double t = frame.target[q * 3 + ch];
                    mu1 += wq * r;
                    mu2 += wq * t;
                    e11 += wq * r * r;
                    e22 += wq * t * t;
                    e12 += wq * r * t;
                }
            const double s11 = e11 - mu1 * mu1;
            const double s22 = e22 - mu2 * mu2;
            const double s12 = e12 - mu1 * mu2;
            const double a1 = 2.0 * mu1 * mu2 + win.c1;
            const double a2 = 2.0 * s12 + win.c2;
            const double b1 = mu1 * mu1 + mu2 * mu2 + win.c1;
            const double b2 = s11 + s22 + win.c2;
            const double s = a1 * a2 / (b1 * b2);
            ssim_sum[c] += s;
            const double ds_mu1 = 2.0 * mu2 * a2 / (b1 * b2) - 2.0 * mu1 * s / b1;
            const double ds_s11 = -s / b2;
            const double ds_s12 = 2.0 * a1 / (b1 * b2);
            coeff[c * 9 + ch * 3] = ds_mu1 - 2.0 * mu1 * ds_s11 - mu2 * ds_s12;
            coeff[c * 9 + ch * 3 + 1] = 2.0 * ds_s11;
            coeff[c * 9 + ch * 3 + 2] = ds_s12;
        }
    });

    LossResult out;
    out.grad.assign(n_pix * 3, 0.0);
    std::size_t centers = 0;
    double dssim_total = 0.0;
    for (std::size_t c = 0; c < n_pix; ++c) {
        if (frame.source[c] < 0) continue;
        ++centers;
        if (sparse[c]) ++out.sparse_windows;
        if (active[c]) dssim_total += 3.0 - ssim_sum[c];
    }
    if (centers == 0) return out;
    const double inv = 1.0 / (3.0 * static_cast<double>(centers));
    out.value = dssim_total * inv;

    parallel_for(pool, n_pix, [&](std::size_t q) {
        if (frame.source[q] < 0) return;
        const int qx = static_cast<int>(q) % frame.width;
        const int qy = static_cast<int>(q) / frame.width;
        for (int oy = -h; oy <= h; ++oy) {
            const int cy = qy - oy;
            if (cy < 0 || cy >= frame.height) continue;
            for (int ox = -h; ox <= h; ++ox) {
                const int cx = qx - ox;
                if (cx < 0 || cx >= frame.width) continue;
                const auto c = static_cast<std::size_t>(cy * frame.width + cx);
                if (!active[c]) continue;
                const double wq = weights[c * n_win + static_cast<std::size_t>((oy + h) * side + ox + h)];
                if (wq == 0.0) continue;
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    const double* k = &coeff[c * 9 + ch * 3];
                    const double ds = wq * (k[0] + k[1] * frame.rendered[q * 3 + ch] + k[2] * frame.target[q * 3 + ch]);
                    out.grad[q * 3 + ch] -= ds * inv;
                }
            }
        }
    });
    return out;
}

namespace {

MergedFrame frame_from_images(const Image& rendered, const Image& target) {
    if (rendered.width != target.width || rendered.height != target.height)
        throw Error("images differ in size");
    MergedFrame f;
    f.width = rendered.width;
    f.height = rendered.height;
    f.rendered = rendered.pixels;
    f.target = target.pixels;
    f.source.assign(static_cast<std::size_t>(f.pixel_count()), 0);
    f.world.assign(static_cast<std::size_t>(f.pixel_count()), {});
    f.background.assign(static_cast<std::size_t>(f.pixel_count()), 1);
    return f;
}

}  // namespace

LossResult dssim(const Image& rendered, const Image& target, const SsimWindow& win) {
    return dssim_loss(frame_from_images(rendered, target), win, WindowKernel::planar2d);
}

LossResult dssim3d(const MergedFrame& frame, const SsimWindow& win, ThreadPool* pool) {
    if (!(win.sigma3d > 0.0)) throw Error("dssim3d: sigma3d must be positive");
    return dssim_loss(frame, win, WindowKernel::distance3d, pool);
}

LossMode parse_loss_mode(const std::string& name) {
    if (name == "l1") return LossMode::l1;
    if (name == "l2") return LossMode::l2;
    if (name == "dssim") return LossMode::dssim;
    if (name == "dssim3d") return LossMode::dssim3d;
    if (name == "l1_dssim") return LossMode::l1_dssim;
    if (name == "l1_dssim3d") return LossMode::l1_dssim3d;
    if (name == "mix") return LossMode::mix;
    throw Error(fmt::format("unknown loss mode '{}'", name));
}

const char* to_string(LossMode mode) {
    switch (mode) {
        case LossMode::l1: return "l1";
        case LossMode::l2: return "l2";
        case LossMode::dssim: return "dssim";
        case LossMode::dssim3d: return "dssim3d";
        case LossMode::l1_dssim: return "l1_dssim";
        case LossMode::l1_dssim3d: return "l1_dssim3d";
        case LossMode::mix: return "mix";
    }
    return "?";
}

namespace {

void add_scaled(LossResult& dst, const LossResult& src, double k) {
    if (dst.grad.empty()) dst.grad.assign(src.grad.size(), 0.0);
    dst.value += k * src.value;
    for (std::size_t i = 0; i < src.grad.size(); ++i) dst.grad[i] += k * src.grad[i];
    dst.sparse_windows += src.sparse_windows;
}

}  // namespace

LossResult frame_loss(LossMode mode, const MergedFrame& frame, const SsimWindow& win, double lambda, ThreadPool* pool) {
    // per-view 2D windows, so merged frames never mix views in plain D-SSIM
    const WindowKernel planar = WindowKernel::planar2d_same_view;
    LossResult out;
    switch (mode) {
        case LossMode::l1: return l1_loss(frame);
        case LossMode::l2: return l2_loss(frame);
        case LossMode::dssim: return dssim_loss(frame, win, planar, pool);
        case LossMode::dssim3d: return dssim3d(frame, win, pool);
        case LossMode::l1_dssim:
            add_scaled(out, l1_loss(frame), 1.0 - lambda);
            add_scaled(out, dssim_loss(frame, win, planar, pool), lambda);
            return out;
        case LossMode::l1_dssim3d:
            add_scaled(out, l1_loss(frame), 1.0 - lambda);
            add_scaled(out, dssim3d(frame, win, pool), lambda);
            return out;
        case LossMode::mix:
            add_scaled(out, l1_loss(frame), 0.5 * (1.0 - lambda));
            add_scaled(out, l2_loss(frame), 0.5 * (1.0 - lambda));
            add_scaled(out, dssim_loss(frame, win, planar, pool), 0.5 * lambda);
            add_scaled(out, dssim3d(frame, win, pool), 0.5 * lambda);
            return out;
    }
    return out;
}

double psnr(const Image& rendered, const Image& target) {
    if (rendered.pixels.size() != target.pixels.size() || rendered.pixels.empty())
        throw Error("psnr: images differ in size");
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered.pixels.size(); ++i) {
        const double d = rendered.pixels[i] - target.pixels[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(rendered.pixels.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& rendered, const Image& target, const SsimWindow& win) {
    return 1.0 - dssim(rendered, target, win).value;
}

}  // namespace mvgs
