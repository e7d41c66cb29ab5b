#include "mvgs/rasterizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "blend_common.hpp"
#include "mvgs/error.hpp"
#include "mvgs/thread_pool.hpp"

namespace mvgs {

const char* to_string(RenderMode mode) {
    switch (mode) {
        case RenderMode::full: return "full";
        case RenderMode::naive_masked: return "naive_masked";
        case RenderMode::thread_efficient: return "thread_efficient";
    }
    return "?";
}

RenderMode parse_render_mode(const std::string& name) {
    if (name == "full") return RenderMode::full;
    if (name == "naive_masked") return RenderMode::naive_masked;
    if (name == "thread_efficient") return RenderMode::thread_efficient;
    throw Error(fmt::format("unknown render mode '{}'", name));
}

TileGrid tile_grid(const Camera& cam, int tile_size) {
    return {(cam.width + tile_size - 1) / tile_size, (cam.height + tile_size - 1) / tile_size, tile_size};
}

std::vector<int> tile_pixels(const Camera& cam, int tile_size, int tile) {
    const TileGrid grid = tile_grid(cam, tile_size);
    const int x0 = (tile % grid.tiles_x) * tile_size;
    const int y0 = (tile / grid.tiles_x) * tile_size;
    const int x1 = std::min(x0 + tile_size, cam.width);
    const int y1 = std::min(y0 + tile_size, cam.height);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>((x1 - x0) * (y1 - y0)));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) out.push_back(y * cam.width + x);
    return out;
}

int tile_of_pixel(const Camera& cam, int tile_size, int pixel) {
    const TileGrid grid = tile_grid(cam, tile_size);
    const int x = pixel % cam.width;
    const int y = pixel / cam.width;
    return (y / tile_size) * grid.tiles_x + x / tile_size;
}

const TileBin* Binning::find(int slot, int tile) const {
    const int i = bin_index[static_cast<std::size_t>(slot)][static_cast<std::size_t>(tile)];
    return i < 0 ? nullptr : &bins[static_cast<std::size_t>(i)];
}

namespace {

struct SortEntry {
    std::uint32_t key;  // tile << 16 | view
    double depth;
    int gaussian;
};

bool operator<(const SortEntry& a, const SortEntry& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.gaussian < b.gaussian;
}

}  // namespace

Binning bin_and_sort(const std::vector<std::vector<Projected2D>>& projected, const std::vector<Camera>& cams,
                     int tile_size, std::size_t max_entries) {
    if (tile_size != 8 && tile_size != 16 && tile_size != 32)
        throw Error(fmt::format("tile_size must be 8, 16 or 32, got {}", tile_size));
    if (projected.size() != cams.size()) throw Error("bin_and_sort: one camera per projected view required");
    if (projected.size() > 65536) throw Error("bin_and_sort: more than 65536 views");

    Binning out;
    out.bin_index.resize(projected.size());
    std::vector<SortEntry> entries;
    for (std::size_t slot = 0; slot < projected.size(); ++slot) {
        const Camera& cam = cams[slot];
        const TileGrid grid = tile_grid(cam, tile_size);
        if (grid.count() > 65536) throw Error("bin_and_sort: more than 65536 tiles per view");
        out.bin_index[slot].assign(static_cast<std::size_t>(grid.count()), -1);
        const auto& views = projected[slot];
        for (std::size_t gi = 0; gi < views.size(); ++gi) {
            const Projected2D& p = views[gi];
            if (!p.visible) continue;
            const double r = p.radius;
            const double mx = p.mean2d.x;
            const double my = p.mean2d.y;
            // pixel centers sit at integer + 0.5
            const double lo_x = std::ceil(mx - r - 0.5), hi_x = std::floor(mx + r - 0.5);
            const double lo_y = std::ceil(my - r - 0.5), hi_y = std::floor(my + r - 0.5);
            if (hi_x < 0 || hi_y < 0 || lo_x > cam.width - 1 || lo_y > cam.height - 1 || lo_x > hi_x || lo_y > hi_y)
                continue;
            const int px0 = static_cast<int>(std::max(lo_x, 0.0));
            const int px1 = static_cast<int>(std::min(hi_x, cam.width - 1.0));
            const int py0 = static_cast<int>(std::max(lo_y, 0.0));
            const int py1 = static_cast<int>(std::min(hi_y, cam.height - 1.0));
            for (int ty = py0 / tile_size; ty <= py1 / tile_size; ++ty) {
                for (int tx = px0 / tile_size; tx <= px1 / tile_size; ++tx) {
                    const double cx0 = tx * tile_size + 0.5;
                    const double cx1 = std::min((tx + 1) * tile_size, cam.width) - 0.5;
                    const double cy0 = ty * tile_size + 0.5;
                    const double cy1 = std::min((ty + 1) * tile_size, cam.height) - 0.5;
                    const double qx = std::clamp(mx, cx0, cx1) - mx;
                    const double qy = std::clamp(my, cy0, cy1) - my;
                    if (qx * qx + qy * qy > r * r) continue;
                    if (entries.size() >= max_entries)
                        throw Error(fmt::format("binning explosion: more than {} tile entries", max_entries));
                    const auto tile = static_cast<std::uint32_t>(ty * grid.tiles_x + tx);
                    entries.push_back({tile << 16 | static_cast<std::uint32_t>(slot), p.depth, static_cast<int>(gi)});
                }
            }
        }
    }
    std::sort(entries.begin(), entries.end());
    out.total_entries = entries.size();

    for (std::size_t i = 0; i < entries.size();) {
        const std::uint32_t key = entries[i].key;
        TileBin bin;
        const int tile = static_cast<int>(key >> 16);
        bin.view = static_cast<int>(key & 0xffffu);
        const TileGrid grid = tile_grid(cams[static_cast<std::size_t>(bin.view)], tile_size);
        bin.tx = tile % grid.tiles_x;
        bin.ty = tile / grid.tiles_x;
        for (; i < entries.size() && entries[i].key == key; ++i)
            bin.entries.push_back({entries[i].gaussian, entries[i].depth});
        out.bin_index[static_cast<std::size_t>(bin.view)][static_cast<std::size_t>(tile)] =
            static_cast<int>(out.bins.size());
        out.bins.push_back(std::move(bin));
    }
    return out;
}

std::size_t RenderPlan::pixel_count() const {
    std::size_t n = 0;
    for (const auto& view : pixel_sets)
        for (const auto& tile : view) n += tile.size();
    return n;
}

namespace {

int padded(std::size_t n, int warp) {
    const auto w = static_cast<std::size_t>(warp);
    return static_cast<int>((n + w - 1) / w * w);
}

void build_blocks(RenderPlan& plan, const std::vector<Camera>& cams, int warp) {
    plan.blocks.clear();
    plan.block_size = 0;
    const int ts = plan.tile_size;
    for (std::size_t slot = 0; slot < plan.views.size(); ++slot) {
        const Camera& cam = cams[static_cast<std::size_t>(plan.views[slot])];
        const TileGrid grid = tile_grid(cam, ts);
        for (int tile = 0; tile < grid.count(); ++tile) {
            const auto& pixels = plan.pixel_sets[slot][static_cast<std::size_t>(tile)];
            RenderBlock block;
            block.slot = static_cast<int>(slot);
            block.tile = tile;
            if (plan.mode == RenderMode::thread_efficient) {
                if (pixels.empty()) continue;
                block.lanes = pixels;
                block.lanes.resize(static_cast<std::size_t>(padded(pixels.size(), warp)), -1);
            } else {
                // one lane per tile position; lanes whose pixel is masked or off-image idle
                block.lanes.assign(static_cast<std::size_t>(ts * ts), -1);
                const int x0 = (tile % grid.tiles_x) * ts;
                const int y0 = (tile / grid.tiles_x) * ts;
                for (int p : pixels) {
                    const int lx = p % cam.width - x0;
                    const int ly = p / cam.width - y0;
                    block.lanes[static_cast<std::size_t>(ly * ts + lx)] = p;
                }
            }
            plan.block_size = std::max(plan.block_size, static_cast<int>(block.lanes.size()));
            plan.blocks.push_back(std::move(block));
        }
    }
}

std::vector<std::vector<std::vector<int>>> all_pixels(const std::vector<int>& views, const std::vector<Camera>& cams,
                                                      int tile_size) {
    std::vector<std::vector<std::vector<int>>> sets(views.size());
    for (std::size_t slot = 0; slot < views.size(); ++slot) {
        if (views[slot] < 0 || static_cast<std::size_t>(views[slot]) >= cams.size())
            throw Error(fmt::format("plan view {} out of range", views[slot]));
        const Camera& cam = cams[static_cast<std::size_t>(views[slot])];
        const int n = tile_grid(cam, tile_size).count();
        sets[slot].resize(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) sets[slot][static_cast<std::size_t>(t)] = tile_pixels(cam, tile_size, t);
    }
    return sets;
}

}  // namespace

RenderPlan make_full_plan(const std::vector<int>& views, const std::vector<Camera>& cams, int tile_size) {
    RenderPlan plan;
    plan.mode = RenderMode::full;
    plan.views = views;
    plan.tile_size = tile_size;
    plan.pixel_sets = all_pixels(views, cams, tile_size);
    build_blocks(plan, cams, 32);
    return plan;
}

RenderPlan make_partial_plan(RenderMode mode, const std::vector<int>& views,
                             std::vector<std::vector<std::vector<int>>> pixel_sets, const std::vector<Camera>& cams,
                             int tile_size, int warp) {
    RenderPlan plan;
    plan.mode = mode;
    plan.views = views;
    plan.tile_size = tile_size;
    plan.pixel_sets = std::move(pixel_sets);
    for (auto& view : plan.pixel_sets)
        for (auto& tile : view) std::sort(tile.begin(), tile.end());
    validate_plan(plan, cams);
    if (mode == RenderMode::full) plan.pixel_sets = all_pixels(views, cams, tile_size);
    build_blocks(plan, cams, warp);
    return plan;
}

RenderPlan with_mode(const RenderPlan& plan, RenderMode mode, const std::vector<Camera>& cams, int warp) {
    RenderPlan out = plan;
    out.mode = mode;
    if (mode == RenderMode::full) out.pixel_sets = all_pixels(plan.views, cams, plan.tile_size);
    build_blocks(out, cams, warp);
    return out;
}

void validate_plan(const RenderPlan& plan, const std::vector<Camera>& cams) {
    if (plan.tile_size != 8 && plan.tile_size != 16 && plan.tile_size != 32)
        throw Error(fmt::format("tile_size must be 8, 16 or 32, got {}", plan.tile_size));
    if (plan.pixel_sets.size() != plan.views.size()) throw Error("plan: one pixel-set list per view required");
    for (std::size_t slot = 0; slot < plan.views.size(); ++slot) {
        const int v = plan.views[slot];
        if (v < 0 || static_cast<std::size_t>(v) >= cams.size()) throw Error(fmt::format("plan view {} out of range", v));
        const Camera& cam = cams[static_cast<std::size_t>(v)];
        const int n_tiles = tile_grid(cam, plan.tile_size).count();
        if (plan.pixel_sets[slot].size() != static_cast<std::size_t>(n_tiles))
            throw Error(fmt::format("plan view {}: expected {} tiles, got {}", v, n_tiles, plan.pixel_sets[slot].size()));
        for (int t = 0; t < n_tiles; ++t) {
            const auto& pixels = plan.pixel_sets[slot][static_cast<std::size_t>(t)];
            for (std::size_t i = 0; i < pixels.size(); ++i) {
                const int p = pixels[i];
                if (p < 0 || p >= cam.pixel_count())
                    throw Error(fmt::format("plan view {}: pixel {} out of range", v, p));
                if (tile_of_pixel(cam, plan.tile_size, p) != t)
                    throw Error(fmt::format("plan view {}: pixel {} is not in tile {}", v, p, t));
                if (i > 0 && pixels[i - 1] >= p)
                    throw Error(fmt::format("plan view {}: pixel set of tile {} not strictly increasing", v, t));
            }
        }
    }
    for (const RenderBlock& b : plan.blocks) {
        if (b.slot < 0 || static_cast<std::size_t>(b.slot) >= plan.views.size()) throw Error("plan block slot out of range");
        const Camera& cam = cams[static_cast<std::size_t>(plan.views[static_cast<std::size_t>(b.slot)])];
        for (int p : b.lanes)
            if (p >= cam.pixel_count()) throw Error(fmt::format("plan block lane pixel {} out of range", p));
    }
}

BlendResult blend_pixel(double px, double py, const std::vector<TileBinEntry>& entries,
                        const std::vector<Gaussian3D>& gaussians, const std::vector<Projected2D>& projected,
                        const RenderSettings& settings) {
    BlendResult r;
    double t = 1.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto gi = static_cast<std::size_t>(entries[i].gaussian);
        const Projected2D& p = projected[gi];
        const Gaussian3D& g = gaussians[gi];
        const detail::SplatEval e = detail::eval_splat(p, g.opacity(), px, py);
        if (e.alpha < settings.alpha_min) continue;
        const double w = e.alpha * t;
        r.color.x += detail::clamp_unit(g.color.x) * w;
        r.color.y += detail::clamp_unit(g.color.y) * w;
        r.color.z += detail::clamp_unit(g.color.z) * w;
        r.depth += p.depth * w;
        t *= 1.0 - e.alpha;
        r.n_contrib = static_cast<int>(i) + 1;
        if (settings.early_termination && t < settings.t_min) break;
    }
    r.transmittance = t;
    return r;
}

Image ViewRender::to_image() const {
    Image img(width, height);
    img.pixels = color;
    img.depth = depth;
    return img;
}

RenderOutput render(const RenderPlan& plan, const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cams,
                    const RenderSettings& settings, ThreadPool* pool) {
    const auto start = std::chrono::steady_clock::now();
    validate_plan(plan, cams);
    const std::size_t n_slots = plan.views.size();
    const std::size_t n_g = gaussians.size();

    std::vector<Camera> slot_cams;
    slot_cams.reserve(n_slots);
    for (int v : plan.views) slot_cams.push_back(cams[static_cast<std::size_t>(v)]);

    RenderOutput out;
    out.mode = plan.mode;
    out.projected.assign(n_slots, std::vector<Projected2D>(n_g));
    parallel_for(pool, n_slots, [&](std::size_t slot) {
        for (std::size_t i = 0; i < n_g; ++i)
            out.projected[slot][i] = project(gaussians[i], slot_cams[slot], settings.projection);
    });
    for (const auto& view : out.projected)
        for (const auto& p : view) out.degenerate += p.degenerate ? 1 : 0;

    out.binning = bin_and_sort(out.projected, slot_cams, plan.tile_size, settings.max_entries);

    out.views.resize(n_slots);
    for (std::size_t slot = 0; slot < n_slots; ++slot) {
        ViewRender& v = out.views[slot];
        const Camera& cam = slot_cams[slot];
        v.width = cam.width;
        v.height = cam.height;
        const auto n = static_cast<std::size_t>(cam.pixel_count());
        v.color.assign(n * 3, 0.0);
        v.depth.assign(n, cam.zfar);
        v.transmittance.assign(n, 1.0);
        v.n_contrib.assign(n, 0);
        v.rendered.assign(n, 0);
    }

    out.blocks.resize(plan.blocks.size());
    static const std::vector<TileBinEntry> no_entries;
    parallel_for(pool, plan.blocks.size(), [&](std::size_t bi) {
        const RenderBlock& block = plan.blocks[bi];
        const auto slot = static_cast<std::size_t>(block.slot);
        const TileBin* bin = out.binning.find(block.slot, block.tile);
        const auto& entries = bin ? bin->entries : no_entries;
        const Camera& cam = slot_cams[slot];
        ViewRender& view = out.views[slot];
        BlockStats& stats = out.blocks[bi];
        stats.slot = block.slot;
        stats.tile = block.tile;
        stats.threads_launched = static_cast<long>(block.lanes.size());
        for (int p : block.lanes) {
            if (p < 0) continue;
            ++stats.threads_active;
            const auto pi = static_cast<std::size_t>(p);
            const BlendResult r = blend_pixel(p % cam.width + 0.5, p / cam.width + 0.5, entries, gaussians,
                                              out.projected[slot], settings);
            view.color[pi * 3] = r.color.x;
            view.color[pi * 3 + 1] = r.color.y;
            view.color[pi * 3 + 2] = r.color.z;
            view.depth[pi] = r.transmittance > settings.background_t ? cam.zfar : r.depth;
            view.transmittance[pi] = r.transmittance;
            view.n_contrib[pi] = r.n_contrib;
            view.rendered[pi] = 1;
        }
        stats.gaussians_fetched = static_cast<long>(entries.size());
        if (!block.lanes.empty())
            stats.fetch_rounds = (stats.gaussians_fetched + stats.threads_launched - 1) / stats.threads_launched;
    });

    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

OccupancyReport occupancy_report(const RenderOutput& output, int tile_size) {
    OccupancyReport r;
    r.mode = output.mode;
    r.views = static_cast<int>(output.views.size());
    r.tile_size = tile_size;
    for (const BlockStats& b : output.blocks) {
        r.threads_launched += b.threads_launched;
        r.threads_active += b.threads_active;
    }
    r.occupancy = r.threads_launched > 0 ? static_cast<double>(r.threads_active) / static_cast<double>(r.threads_launched)
                                         : 0.0;
    r.wall_ms = output.wall_ms;
    return r;
}

}  // namespace mvgs
