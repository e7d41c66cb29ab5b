#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mvgs/projection.hpp"
#include "mvgs/scene.hpp"

namespace mvgs {

class ThreadPool;

enum class RenderMode { full, naive_masked, thread_efficient };

const char* to_string(RenderMode mode);
RenderMode parse_render_mode(const std::string& name);

struct RenderSettings {
    int tile_size = 16;
    int warp = 32;
    double alpha_min = 1.0 / 255.0;
    double t_min = 1e-4;
    bool early_termination = true;
    std::size_t max_entries = 10'000'000;  // total (tile, view, gaussian) entries
    double background_t = 0.999;           // T_final above this is background
    ProjectionSettings projection;
};

struct TileGrid {
    int tiles_x = 0;
    int tiles_y = 0;
    int tile_size = 16;

    int count() const { return tiles_x * tiles_y; }
};

TileGrid tile_grid(const Camera& cam, int tile_size);
/// Linear pixel indices (y*width + x) of one tile, row-major.
std::vector<int> tile_pixels(const Camera& cam, int tile_size, int tile);
int tile_of_pixel(const Camera& cam, int tile_size, int pixel);

struct TileBinEntry {
    int gaussian = 0;
    double depth = 0.0;
};

struct TileBin {
    int tx = 0;
    int ty = 0;
    int view = 0;  // slot in the plan, i.e. position in RenderPlan::views
    std::vector<TileBinEntry> entries;
};

struct Binning {
    std::vector<TileBin> bins;               // ordered by (tile, view)
    std::vector<std::vector<int>> bin_index;  // [slot][tile] -> position in bins, -1 when empty
    std::size_t total_entries = 0;

    const TileBin* find(int slot, int tile) const;
};

/// Duplicates visible gaussians into every (tile, view) whose pixel-center
/// rectangle meets their radius disk, then sorts by (tile, view, depth, id).
/// projected and cams are indexed by plan slot.
Binning bin_and_sort(const std::vector<std::vector<Projected2D>>& projected, const std::vector<Camera>& cams,
                     int tile_size, std::size_t max_entries = 10'000'000);

/// One execution block: lane -> pixel index, -1 for idle lanes.
struct RenderBlock {
    int slot = 0;
    int tile = 0;
    std::vector<int> lanes;
};

struct RenderPlan {
    RenderMode mode = RenderMode::full;
    std::vector<int> views;
    int tile_size = 16;
    std::vector<std::vector<std::vector<int>>> pixel_sets;  // [slot][tile] -> sorted pixel indices
    std::vector<RenderBlock> blocks;
    int block_size = 0;  // largest lane count of any block

    std::size_t pixel_count() const;
};

RenderPlan make_full_plan(const std::vector<int>& views, const std::vector<Camera>& cams, int tile_size = 16);

/// Plan over given per-(view, tile) pixel subsets. Pixel sets are sorted
/// internally; mode full ignores them and renders every pixel.
RenderPlan make_partial_plan(RenderMode mode, const std::vector<int>& views,
                             std::vector<std::vector<std::vector<int>>> pixel_sets, const std::vector<Camera>& cams,
                             int tile_size = 16, int warp = 32);

RenderPlan with_mode(const RenderPlan& plan, RenderMode mode, const std::vector<Camera>& cams, int warp = 32);

/// Throws Error when the plan references a missing view, tile or pixel.
void validate_plan(const RenderPlan& plan, const std::vector<Camera>& cams);

struct BlendResult {
    Vec3 color;
    double depth = 0.0;  // sum of d_i alpha_i T_i
    double transmittance = 1.0;
    int n_contrib = 0;  // entries consumed up to and including the last contributor
};

/// Front-to-back blend of one pixel over a depth-sorted bin.
BlendResult blend_pixel(double px, double py, const std::vector<TileBinEntry>& entries,
                        const std::vector<Gaussian3D>& gaussians, const std::vector<Projected2D>& projected,
                        const RenderSettings& settings);

struct ViewRender {
    int width = 0;
    int height = 0;
    std::vector<double> color;         // width*height*3
    std::vector<double> depth;         // sentinel zfar for background
    std::vector<double> transmittance;  // 1 where not rendered
    std::vector<int> n_contrib;
    std::vector<std::uint8_t> rendered;

    Image to_image() const;
};

struct BlockStats {
    int slot = 0;
    int tile = 0;
    long threads_launched = 0;
    long threads_active = 0;
    long gaussians_fetched = 0;
    long fetch_rounds = 0;
};

struct RenderOutput {
    RenderMode mode = RenderMode::full;
    std::vector<ViewRender> views;  // per slot
    std::vector<BlockStats> blocks;
    std::vector<std::vector<Projected2D>> projected;  // [slot][gaussian]
    Binning binning;
    int degenerate = 0;
    double wall_ms = 0.0;
};

RenderOutput render(const RenderPlan& plan, const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cams,
                    const RenderSettings& settings = {}, ThreadPool* pool = nullptr);

struct OccupancyReport {
    RenderMode mode = RenderMode::full;
    int views = 0;
    int tile_size = 0;
    long threads_launched = 0;
    long threads_active = 0;
    double occupancy = 0.0;
    double wall_ms = 0.0;
};

OccupancyReport occupancy_report(const RenderOutput& output, int tile_size);

}  // namespace mvgs
